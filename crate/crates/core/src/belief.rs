//! Exact Bayesian filter over intruder position.
//!
//! After each period the belief becomes a unit vector when the intruder is
//! seen or exits. On a miss, the one-step prediction `p * P` is conditioned on
//! the intruder not being at any powered position (nor at the exit, which is
//! always observed) and renormalized.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionMask, Observation, TransitionModel};

/// Probabilities must sum to 1 within this tolerance.
pub const NORM_TOL: f64 = 1e-9;

/// Entries below this are truncated to zero after normalization.
pub const PROB_FLOOR: f64 = 1e-12;

/// Default threshold for counting an entry as part of the support.
pub const SUPPORT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("belief has negative or non-finite entry at {0}")]
    InvalidEntry(usize),
    #[error("belief sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("no probability mass remains outside the zeroed set")]
    DegenerateProjection,
    #[error("tracked position {0} but its sensor was off")]
    InconsistentObservation(usize),
    #[error("belief has {got} entries, model has {expected} states")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Distribution over `n` positions plus the exit state (last entry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self, BeliefError> {
        if let Some(i) = probs.iter().position(|&p| !p.is_finite() || p < 0.0) {
            return Err(BeliefError::InvalidEntry(i));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() >= NORM_TOL {
            return Err(BeliefError::NotNormalized(sum));
        }
        Ok(Self { probs })
    }

    /// Point mass on `index` in a space of `num_states` states.
    pub fn unit(num_states: usize, index: usize) -> Self {
        let mut probs = vec![0.0; num_states];
        probs[index] = 1.0;
        Self { probs }
    }

    /// Uniform over the `num_states - 1` positions, nothing on exit.
    pub fn uniform_positions(num_states: usize) -> Self {
        let n = num_states - 1;
        let mut probs = vec![1.0 / n as f64; num_states];
        probs[n] = 0.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn exit_index(&self) -> usize {
        self.probs.len() - 1
    }

    /// Most probable state, ties to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// True when all mass sits on a single state.
    pub fn is_point_mass(&self) -> bool {
        self.probs.iter().filter(|&&p| p > 0.0).count() == 1
    }

    /// Positions (exit excluded) with probability strictly above `eps`.
    pub fn support(&self, eps: f64) -> impl Iterator<Item = usize> + '_ {
        let exit = self.exit_index();
        self.probs[..exit]
            .iter()
            .enumerate()
            .filter(move |(_, &p)| p > eps)
            .map(|(l, _)| l)
    }
}

/// Rescales `v` to sum to 1, truncating entries below [`PROB_FLOOR`].
fn normalize(mut v: Vec<f64>) -> Result<Belief, BeliefError> {
    let total: f64 = v.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(BeliefError::DegenerateProjection);
    }
    let mut truncated = false;
    for x in v.iter_mut() {
        *x /= total;
        if *x < PROB_FLOOR && *x != 0.0 {
            *x = 0.0;
            truncated = true;
        }
    }
    if truncated {
        let total: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= total);
    }
    Ok(Belief { probs: v })
}

/// Zeroes the entries for which `zeroed` holds and renormalizes the rest.
pub fn project_where<F: Fn(usize) -> bool>(v: &[f64], zeroed: F) -> Result<Belief, BeliefError> {
    let projected: Vec<f64> = v
        .iter()
        .enumerate()
        .map(|(i, &x)| if zeroed(i) { 0.0 } else { x })
        .collect();
    normalize(projected)
}

/// Zeroes the entries in `zero_set` and renormalizes the rest.
pub fn project_and_normalize(v: &[f64], zero_set: &[usize]) -> Result<Belief, BeliefError> {
    if let Some(i) = v.iter().position(|&x| x.is_nan() || x < 0.0) {
        return Err(BeliefError::InvalidEntry(i));
    }
    project_where(v, |i| zero_set.contains(&i))
}

/// One-step prediction `p * P`.
pub fn predict(p: &Belief, model: &TransitionModel) -> Belief {
    let mut out = vec![0.0; p.num_states()];
    for (i, &pi) in p.probs.iter().enumerate() {
        if pi > 0.0 {
            for &(j, w) in model.row_support(i) {
                out[j] += pi * w;
            }
        }
    }
    normalize(out).expect("prediction of a valid belief keeps its mass")
}

/// Conditions an already-predicted belief on a miss under `action`.
pub fn condition_on_miss(predicted: &Belief, action: &ActionMask) -> Result<Belief, BeliefError> {
    let exit = predicted.exit_index();
    project_where(&predicted.probs, |i| i == exit || action.is_on(i))
}

/// Posterior after taking `action` and receiving `obs`.
pub fn belief_update(
    p: &Belief,
    model: &TransitionModel,
    action: &ActionMask,
    obs: Observation,
) -> Result<Belief, BeliefError> {
    if p.num_states() != model.num_states() {
        return Err(BeliefError::DimensionMismatch {
            expected: model.num_states(),
            got: p.num_states(),
        });
    }
    match obs {
        Observation::Exited => Ok(Belief::unit(p.num_states(), model.exit_index())),
        Observation::Tracked(l) => {
            if !action.is_on(l) {
                return Err(BeliefError::InconsistentObservation(l));
            }
            Ok(Belief::unit(p.num_states(), l))
        }
        Observation::Miss => condition_on_miss(&predict(p, model), action),
    }
}

/// Number of positions (exit excluded) with probability strictly above `eps`.
pub fn support_size(p: &Belief, eps: f64) -> usize {
    p.support(eps).count()
}
