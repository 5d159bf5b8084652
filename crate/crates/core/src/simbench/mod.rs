//! Episode simulation, lambda sweeps, result files and the exhaustive oracle.

mod episode;
mod oracle;
mod scenario;
mod sweep;

use thiserror::Error;

use crate::belief::BeliefError;
use crate::mcts::SearchError;
use crate::model::ModelError;
use crate::planners::PlanError;

pub use episode::{run_episode, run_episode_traced, step, EpisodeMetrics, PeriodRecord};
pub use oracle::{
    expectimax_oracle, oracle_check, random_instance, OracleCase, OracleCheckSpec, OracleReport,
    OracleResult, ORACLE_MAX_HORIZON, ORACLE_MAX_POSITIONS,
};
pub use scenario::{InitialBelief, Scenario, ScenarioFile, DEFAULT_HORIZON};
pub use sweep::{
    derive_seed, planner_seed, run_planned_episode, run_sweep, select_lambda, write_csv, Algo,
    CsvRecord, PlannerSpec, SweepRow, SweepSpec,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("no lambda keeps average sensors within the budget {0}")]
    InfeasibleBudget(f64),
    #[error("oracle limited to n <= 5 and 1 <= horizon <= 4 (got n = {n}, horizon = {horizon})")]
    OracleTooLarge { n: usize, horizon: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
