//! Belief-space sensor scheduling for tracking an intruder through a network
//! of sensors that can each be powered on or off every period.
//!
//! - [`model`]: intruder dynamics, sensor masks, observations and costs.
//! - [`belief`]: the controller's posterior over the intruder's position.
//! - [`mcts`]: a generic UCT search over generative models.
//! - [`planners`]: greedy, tree-search and threshold scheduling policies.
//! - [`simbench`]: episode simulation, lambda sweeps and an exhaustive oracle.

pub mod belief;
pub mod mcts;
pub mod model;
pub mod planners;
pub mod simbench;

pub use belief::{belief_update, predict, Belief, BeliefError};
pub use mcts::{SearchConfig, SearchError};
pub use model::{ActionMask, CostParams, ModelError, Observation, Topology, TransitionModel};
pub use planners::{Decision, GammaGrid, PlanError, Planner, SupportOverflow};
pub use simbench::{Algo, PlannerSpec, Scenario, SimError, SweepSpec};
