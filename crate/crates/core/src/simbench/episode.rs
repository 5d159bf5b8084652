use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{belief_update, predict, project_where, Belief, BeliefError};
use crate::model::{
    energy_cost, relaxed_cost, tracking_cost, ActionMask, CostParams, Observation, TransitionModel,
};
use crate::planners::{restart_wrap, Planner};

use super::{Scenario, SimError};

/// Moves the intruder one period and reports what the powered sensors see.
pub fn step<R: Rng + ?Sized>(
    state: usize,
    model: &TransitionModel,
    action: &ActionMask,
    rng: &mut R,
) -> (usize, Observation) {
    let next = model.sample_next(state, rng);
    (next, Observation::observe(action, next))
}

/// Per-episode accumulators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub periods: usize,
    pub sensors_on_total: usize,
    pub untracked_periods: usize,
    pub total_discounted_cost: f64,
    pub restarts: usize,
    pub model_mismatches: usize,
    pub gamma_sum: f64,
    pub gamma_decisions: usize,
}

impl EpisodeMetrics {
    pub fn avg_sensors_awake(&self) -> f64 {
        if self.periods == 0 {
            0.0
        } else {
            self.sensors_on_total as f64 / self.periods as f64
        }
    }

    pub fn avg_tracking_error(&self) -> f64 {
        if self.periods == 0 {
            0.0
        } else {
            self.untracked_periods as f64 / self.periods as f64
        }
    }

    pub fn gamma_mean(&self) -> Option<f64> {
        (self.gamma_decisions > 0).then(|| self.gamma_sum / self.gamma_decisions as f64)
    }
}

/// One period of an episode, for JSON logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub period: usize,
    pub state: usize,
    pub sensors_on: Vec<usize>,
    pub next_state: usize,
    pub observation: Observation,
    pub gamma: Option<f64>,
    pub restarted: bool,
    pub belief: Belief,
}

/// Runs one episode; the planner is wrapped with the scenario's restart rule.
pub fn run_episode(
    scenario: &Scenario,
    planner: &mut dyn Planner,
    params: CostParams,
    seed: u64,
) -> Result<EpisodeMetrics, SimError> {
    run(scenario, planner, params, seed, None)
}

/// Like [`run_episode`], also returning a per-period trace.
pub fn run_episode_traced(
    scenario: &Scenario,
    planner: &mut dyn Planner,
    params: CostParams,
    seed: u64,
) -> Result<(EpisodeMetrics, Vec<PeriodRecord>), SimError> {
    let mut trace = Vec::with_capacity(scenario.horizon);
    let metrics = run(scenario, planner, params, seed, Some(&mut trace))?;
    Ok((metrics, trace))
}

fn run(
    scenario: &Scenario,
    planner: &mut dyn Planner,
    params: CostParams,
    seed: u64,
    mut trace: Option<&mut Vec<PeriodRecord>>,
) -> Result<EpisodeMetrics, SimError> {
    scenario.validate()?;
    let model = &*scenario.model;
    let environment = scenario.environment();
    let mut planner = restart_wrap(
        planner,
        scenario.model.clone(),
        scenario.restart_threshold,
        scenario.restart_enabled,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut metrics = EpisodeMetrics::default();
    let mut belief = scenario.initial_belief();
    let mut state = scenario.start;
    let mut weight = 1.0;

    for period in 0..scenario.horizon {
        let decision = planner.next_action(&belief)?;
        let (next, obs) = step(state, environment, &decision.mask, &mut rng);

        metrics.periods += 1;
        metrics.sensors_on_total += energy_cost(&decision.mask) as usize;
        metrics.untracked_periods += tracking_cost(&decision.mask, next)? as usize;
        metrics.total_discounted_cost += weight * relaxed_cost(&decision.mask, next, &params)?;
        weight *= params.discount();
        if decision.restarted {
            metrics.restarts += 1;
        }
        if let Some(g) = decision.gamma {
            metrics.gamma_sum += g;
            metrics.gamma_decisions += 1;
        }

        let next_belief = if scenario.reveal_state {
            Belief::unit(model.num_states(), next)
        } else {
            match belief_update(&belief, model, &decision.mask, obs) {
                Ok(b) => b,
                Err(BeliefError::DegenerateProjection) => {
                    // The belief ruled out where the intruder actually went;
                    // fall back to the unconditioned prediction.
                    metrics.model_mismatches += 1;
                    let exit = model.exit_index();
                    let predicted = predict(&belief, model);
                    project_where(predicted.probs(), |i| i == exit).unwrap_or(predicted)
                }
                Err(e) => return Err(e.into()),
            }
        };
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(PeriodRecord {
                period,
                state,
                sensors_on: decision.mask.on_positions().collect(),
                next_state: next,
                observation: obs,
                gamma: decision.gamma,
                restarted: decision.restarted,
                belief: next_belief.clone(),
            });
        }
        if obs == Observation::Exited {
            break;
        }
        belief = next_belief;
        state = next;
    }
    Ok(metrics)
}
