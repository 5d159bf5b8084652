use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mcts::SearchConfig;
use crate::model::{CostParams, TransitionModel};
use crate::planners::{
    GammaGrid, IdGammaMctsPlanner, IdMctsPlanner, IdTgPlanner, PlanError, Planner, QMdpPlanner,
    SupportOverflow, DEFAULT_SUBSET_CAP,
};

use super::{run_episode, EpisodeMetrics, Scenario, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    IdTg,
    IdMcts,
    IdGammaMcts,
    QMdp,
}

impl Algo {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algo::IdTg => "id_tg",
            Algo::IdMcts => "id_mcts",
            Algo::IdGammaMcts => "id_gamma_mcts",
            Algo::QMdp => "q_mdp",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "id_tg" => Ok(Algo::IdTg),
            "id_mcts" => Ok(Algo::IdMcts),
            "id_gamma_mcts" => Ok(Algo::IdGammaMcts),
            "q_mdp" => Ok(Algo::QMdp),
            other => Err(SimError::InvalidScenario(format!(
                "unknown algorithm {other}"
            ))),
        }
    }
}

/// Planner choice plus everything needed to instantiate it for an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSpec {
    pub algo: Algo,
    /// Fixed coverage level for `id_tg`.
    pub gamma: f64,
    pub search: SearchConfig,
    pub grid: GammaGrid,
    pub subset_cap: usize,
    pub overflow: SupportOverflow,
}

impl PlannerSpec {
    pub fn new(algo: Algo) -> Self {
        Self {
            algo,
            gamma: 0.6,
            search: SearchConfig::default(),
            grid: GammaGrid::default(),
            subset_cap: DEFAULT_SUBSET_CAP,
            overflow: SupportOverflow::Fail,
        }
    }

    /// Fresh planner whose internal RNG is seeded with `seed`.
    pub fn build(
        &self,
        model: Arc<TransitionModel>,
        params: CostParams,
        seed: u64,
    ) -> Result<Box<dyn Planner>, PlanError> {
        let search = SearchConfig {
            seed,
            discount: params.discount(),
            ..self.search.clone()
        };
        Ok(match self.algo {
            Algo::IdTg => Box::new(IdTgPlanner::new(model, self.gamma)?),
            Algo::QMdp => Box::new(QMdpPlanner::new(model, params.lambda())),
            Algo::IdMcts => Box::new(IdMctsPlanner::new(
                model,
                params,
                search,
                self.subset_cap,
                self.overflow,
            )),
            Algo::IdGammaMcts => Box::new(IdGammaMctsPlanner::new(
                model,
                params,
                search,
                self.grid.clone(),
            )?),
        })
    }
}

/// Mixes `(master, lambda index, run index)` into an independent stream seed.
pub fn derive_seed(master: u64, lambda_index: u64, run: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ lambda_index) ^ run.rotate_left(32))
}

/// Planner stream for an episode whose environment stream is `episode_seed`.
pub fn planner_seed(episode_seed: u64) -> u64 {
    derive_seed(episode_seed, u64::MAX, 1)
}

/// Builds the planner and runs one episode from a single seed.
pub fn run_planned_episode(
    scenario: &Scenario,
    spec: &PlannerSpec,
    params: CostParams,
    seed: u64,
) -> Result<EpisodeMetrics, SimError> {
    let mut planner = spec.build(scenario.model.clone(), params, planner_seed(seed))?;
    run_episode(scenario, planner.as_mut(), params, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    pub runs_per_lambda: usize,
    pub budget: Option<f64>,
    pub planner: PlannerSpec,
    pub seed: u64,
    pub discount: f64,
}

impl SweepSpec {
    pub fn new(lambdas: Vec<f64>, planner: PlannerSpec, seed: u64) -> Self {
        Self {
            lambdas,
            runs_per_lambda: 10,
            budget: None,
            planner,
            seed,
            discount: 0.9,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.lambdas.is_empty() {
            return Err(SimError::InvalidSweep("no lambda values".into()));
        }
        if self.lambdas.windows(2).any(|w| w[0] > w[1]) {
            return Err(SimError::InvalidSweep(
                "lambdas must be sorted ascending".into(),
            ));
        }
        if self.runs_per_lambda == 0 {
            return Err(SimError::InvalidSweep(
                "runs per lambda must be >= 1".into(),
            ));
        }
        if let Some(b) = self.budget {
            if b.is_nan() || b <= 0.0 {
                return Err(SimError::InvalidSweep("budget must be positive".into()));
            }
        }
        for &l in &self.lambdas {
            CostParams::new(l, self.discount)?;
        }
        Ok(())
    }
}

/// Averages over the runs of one lambda.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub avg_sensors_awake: f64,
    pub avg_tracking_error: f64,
    pub gamma_mean: Option<f64>,
    pub avg_discounted_cost: f64,
    pub restarts: usize,
    pub runs: usize,
}

/// Runs every `(lambda, run)` episode in parallel and averages per lambda.
pub fn run_sweep(scenario: &Scenario, sweep: &SweepSpec) -> Result<Vec<SweepRow>, SimError> {
    sweep.validate()?;
    let runs = sweep.runs_per_lambda;
    let jobs: Vec<(usize, usize)> = (0..sweep.lambdas.len())
        .flat_map(|j| (0..runs).map(move |i| (j, i)))
        .collect();
    let results: Vec<EpisodeMetrics> = jobs
        .par_iter()
        .map(|&(j, i)| {
            let params = CostParams::new(sweep.lambdas[j], sweep.discount)?;
            let seed = derive_seed(sweep.seed, j as u64, i as u64);
            run_planned_episode(scenario, &sweep.planner, params, seed)
        })
        .collect::<Result<_, _>>()?;

    Ok(sweep
        .lambdas
        .iter()
        .zip(results.chunks(runs))
        .map(|(&lambda, episodes)| {
            let count = episodes.len() as f64;
            let mean =
                |f: &dyn Fn(&EpisodeMetrics) -> f64| episodes.iter().map(f).sum::<f64>() / count;
            let gammas: Vec<f64> = episodes.iter().filter_map(|m| m.gamma_mean()).collect();
            SweepRow {
                lambda,
                avg_sensors_awake: mean(&|m| m.avg_sensors_awake()),
                avg_tracking_error: mean(&|m| m.avg_tracking_error()),
                gamma_mean: (!gammas.is_empty())
                    .then(|| gammas.iter().sum::<f64>() / gammas.len() as f64),
                avg_discounted_cost: mean(&|m| m.total_discounted_cost),
                restarts: episodes.iter().map(|m| m.restarts).sum(),
                runs: episodes.len(),
            }
        })
        .collect())
}

/// Lowest-error lambda whose average sensor count fits the budget; ties to the smaller lambda.
pub fn select_lambda(rows: &[SweepRow], budget: f64) -> Result<f64, SimError> {
    let mut best: Option<&SweepRow> = None;
    for row in rows.iter().filter(|r| r.avg_sensors_awake <= budget) {
        best = match best {
            Some(b)
                if b.avg_tracking_error < row.avg_tracking_error
                    || (b.avg_tracking_error == row.avg_tracking_error
                        && b.lambda <= row.lambda) =>
            {
                Some(b)
            }
            _ => Some(row),
        };
    }
    best.map(|r| r.lambda)
        .ok_or(SimError::InfeasibleBudget(budget))
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub scenario: String,
    pub algo: String,
    pub lambda: f64,
    pub gamma_mean: Option<f64>,
    pub avg_sensors_awake: f64,
    pub avg_tracking_error: f64,
    pub runs: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl CsvRecord {
    pub fn from_row(scenario: &Scenario, algo: Algo, seed: u64, row: &SweepRow) -> Self {
        Self {
            scenario: scenario.name.clone(),
            algo: algo.to_string(),
            lambda: row.lambda,
            gamma_mean: row.gamma_mean,
            avg_sensors_awake: row.avg_sensors_awake,
            avg_tracking_error: row.avg_tracking_error,
            runs: row.runs,
            horizon: scenario.horizon,
            seed,
        }
    }
}

/// Writes `scenario,algo,lambda,gamma_mean,avg_sensors_awake,avg_tracking_error,runs,horizon,seed`.
pub fn write_csv<W: Write>(out: W, records: &[CsvRecord]) -> Result<(), SimError> {
    let mut writer = csv::Writer::from_writer(out);
    if records.is_empty() {
        writer.write_record([
            "scenario",
            "algo",
            "lambda",
            "gamma_mean",
            "avg_sensors_awake",
            "avg_tracking_error",
            "runs",
            "horizon",
            "seed",
        ])?;
    }
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}
