//! Sensor-scheduling policies.
//!
//! Every planner maps the controller's current belief to the set of sensors
//! to power for the next period:
//!
//! - [`IdTgPlanner`]: greedy top-γ coverage with a fixed γ.
//! - [`IdMctsPlanner`]: UCT over sensor subsets of the predicted support.
//! - [`IdGammaMctsPlanner`]: UCT over a small grid of coverage levels γ.
//! - [`QMdpPlanner`]: per-sensor threshold rule that is optimal when the
//!   intruder's position is revealed after every decision.
//!
//! [`RestartPlanner`] wraps any of them and powers the whole predicted support
//! once the belief has spread over too many positions.

mod search;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{predict, support_size, Belief, SUPPORT_EPS};
use crate::mcts::{search_with_rng, SearchConfig, SearchError, SearchResult};
use crate::model::{ActionMask, CostParams, TransitionModel};

pub use search::{ActionSpace, BeliefSearchProblem, NodeView};

/// Coverage comparisons allow this much round-off.
pub const GAMMA_TOL: f64 = 1e-12;

/// Default ceiling on the predicted support enumerated by [`IdMctsPlanner`].
pub const DEFAULT_SUBSET_CAP: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("predicted support of {support} positions exceeds the subset cap of {cap}; use the gamma planner instead")]
    ActionExplosion { support: usize, cap: usize },
    #[error("gamma grid is empty")]
    EmptyGrid,
    #[error("gamma grid must be strictly increasing within [0, 1]")]
    InvalidGrid,
    #[error("gamma {0} outside [0, 1]")]
    InvalidGamma(f64),
    #[error("restart threshold must be at least 1")]
    InvalidThreshold,
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// A planner's choice for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub mask: ActionMask,
    /// Coverage level behind the mask, for the γ-based planners.
    pub gamma: Option<f64>,
    /// Set when the restart override produced the mask.
    pub restarted: bool,
}

impl Decision {
    fn plain(mask: ActionMask) -> Self {
        Self {
            mask,
            gamma: None,
            restarted: false,
        }
    }
}

/// A policy evaluated on the belief.
pub trait Planner: Send {
    fn name(&self) -> &'static str;

    fn next_action(&mut self, belief: &Belief) -> Result<Decision, PlanError>;
}

impl<P: Planner + ?Sized> Planner for Box<P> {
    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn next_action(&mut self, belief: &Belief) -> Result<Decision, PlanError> {
        (**self).next_action(belief)
    }
}

impl<P: Planner + ?Sized> Planner for &mut P {
    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn next_action(&mut self, belief: &Belief) -> Result<Decision, PlanError> {
        (**self).next_action(belief)
    }
}

/// Discrete coverage levels the γ planner chooses among.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GammaGrid(Vec<f64>);

impl GammaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, PlanError> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v))
            || values.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(PlanError::InvalidGrid);
        }
        Ok(Self(values))
    }

    /// `{0, step, 2*step, ...}` strictly below 1.
    pub fn stepped(steps: usize) -> Self {
        Self((0..steps).map(|k| k as f64 / steps as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for GammaGrid {
    /// Twenty levels in steps of 0.05: `{0, 0.05, ..., 0.95}`.
    fn default() -> Self {
        Self::stepped(20)
    }
}

impl TryFrom<Vec<f64>> for GammaGrid {
    type Error = PlanError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<GammaGrid> for Vec<f64> {
    fn from(grid: GammaGrid) -> Self {
        grid.0
    }
}

/// Positions with positive mass, most probable first (ties to the lowest index),
/// with running cumulative mass.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPositions {
    order: Vec<usize>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RankedPositions {
    pub fn new(p: &Belief) -> Self {
        let mut order: Vec<usize> = p.support(0.0).collect();
        // Stable sort keeps equal probabilities in index order.
        order.sort_by(|&a, &b| p.prob(b).total_cmp(&p.prob(a)));
        let probs: Vec<f64> = order.iter().map(|&l| p.prob(l)).collect();
        let cumulative = probs
            .iter()
            .scan(0.0, |acc, &q| {
                *acc += q;
                Some(*acc)
            })
            .collect();
        Self {
            order,
            probs,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Number of top positions needed before their mass reaches `gamma`.
    pub fn count_for_gamma(&self, gamma: f64) -> usize {
        if gamma <= GAMMA_TOL {
            return 0;
        }
        self.cumulative
            .iter()
            .position(|&g| g >= gamma - GAMMA_TOL)
            .map_or(self.order.len(), |k| k + 1)
    }

    /// Number of positions whose probability exceeds `eps`.
    pub fn count_above(&self, eps: f64) -> usize {
        self.probs.iter().take_while(|&&q| q > eps).count()
    }
}

/// Most probable positions of `abv`, in selection order, until their mass reaches `gamma`.
///
/// Mass is accumulated from the top while it is still below `gamma`, so
/// `gamma = 0` selects nothing and `gamma = 1` selects every position with
/// positive mass.
pub fn top_gamma_selection(abv: &Belief, gamma: f64) -> Result<Vec<usize>, PlanError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(PlanError::InvalidGamma(gamma));
    }
    let ranked = RankedPositions::new(abv);
    let k = ranked.count_for_gamma(gamma);
    Ok(ranked.order[..k].to_vec())
}

/// Greedy rule: power the top-γ positions of the one-step prediction.
pub fn id_tg_action(
    p: &Belief,
    model: &TransitionModel,
    gamma: f64,
) -> Result<ActionMask, PlanError> {
    let selected = top_gamma_selection(&predict(p, model), gamma)?;
    Ok(ActionMask::with_on(model.n(), selected))
}

/// Per-sensor threshold rule: ON where the predicted probability exceeds `lambda`.
pub fn q_mdp_action(p: &Belief, model: &TransitionModel, lambda: f64) -> ActionMask {
    let predicted = predict(p, model);
    ActionMask::with_on(model.n(), predicted.support(lambda))
}

/// Mask covering every position the prediction gives positive mass.
pub fn full_support_mask(p: &Belief, model: &TransitionModel) -> ActionMask {
    ActionMask::with_on(model.n(), predict(p, model).support(0.0))
}

/// What [`id_mcts_action`] does when the root support exceeds its cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportOverflow {
    /// Refuse with [`PlanError::ActionExplosion`].
    #[default]
    Fail,
    /// Enumerate subsets of the `cap` most probable positions only.
    Truncate,
}

/// Result of one ID_MCTS decision.
#[derive(Debug, Clone)]
pub struct SubsetChoice {
    pub mask: ActionMask,
    pub search: SearchResult,
}

/// UCT over all subsets of the predicted support (at most `2^cap` actions).
pub fn id_mcts_action(
    p: &Belief,
    model: &TransitionModel,
    config: &SearchConfig,
    params: CostParams,
    cap: usize,
    overflow: SupportOverflow,
    rng: &mut ChaCha8Rng,
) -> Result<SubsetChoice, PlanError> {
    let problem = BeliefSearchProblem::new(model, params, ActionSpace::Subsets { cap });
    let root = problem.view(p);
    let support = root.support_width_unbounded();
    if support > cap && overflow == SupportOverflow::Fail {
        return Err(PlanError::ActionExplosion { support, cap });
    }
    let search = search_with_rng(p.clone(), &problem, config, rng)?;
    let mask = problem.mask(&root, search.action);
    Ok(SubsetChoice { mask, search })
}

/// Result of one ID_γ_MCTS decision.
#[derive(Debug, Clone)]
pub struct GammaChoice {
    pub gamma: f64,
    pub mask: ActionMask,
    pub search: SearchResult,
}

/// UCT over the γ grid; each γ expands to the top-γ mask at the node's belief.
pub fn id_gamma_mcts_action(
    p: &Belief,
    model: &TransitionModel,
    config: &SearchConfig,
    params: CostParams,
    grid: &GammaGrid,
    rng: &mut ChaCha8Rng,
) -> Result<GammaChoice, PlanError> {
    if grid.is_empty() {
        return Err(PlanError::EmptyGrid);
    }
    let problem = BeliefSearchProblem::new(model, params, ActionSpace::Gamma(grid.clone()));
    let search = search_with_rng(p.clone(), &problem, config, rng)?;
    let root = problem.view(p);
    Ok(GammaChoice {
        gamma: grid.values()[search.action],
        mask: problem.mask(&root, search.action),
        search,
    })
}

/// Fixed-γ greedy planner.
pub struct IdTgPlanner {
    model: Arc<TransitionModel>,
    gamma: f64,
}

impl IdTgPlanner {
    pub fn new(model: Arc<TransitionModel>, gamma: f64) -> Result<Self, PlanError> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(PlanError::InvalidGamma(gamma));
        }
        Ok(Self { model, gamma })
    }
}

impl Planner for IdTgPlanner {
    fn name(&self) -> &'static str {
        "id_tg"
    }

    fn next_action(&mut self, belief: &Belief) -> Result<Decision, PlanError> {
        let mask = id_tg_action(belief, &self.model, self.gamma)?;
        Ok(Decision {
            mask,
            gamma: Some(self.gamma),
            restarted: false,
        })
    }
}

pub struct QMdpPlanner {
    model: Arc<TransitionModel>,
    lambda: f64,
}

impl QMdpPlanner {
    pub fn new(model: Arc<TransitionModel>, lambda: f64) -> Self {
        Self { model, lambda }
    }
}

impl Planner for QMdpPlanner {
    fn name(&self) -> &'static str {
        "q_mdp"
    }

    fn next_action(&mut self, belief: &Belief) -> Result<Decision, PlanError> {
        Ok(Decision::plain(q_mdp_action(
            belief,
            &self.model,
            self.lambda,
        )))
    }
}

pub struct IdMctsPlanner {
    model: Arc<TransitionModel>,
    params: CostParams,
    config: SearchConfig,
    cap: usize,
    overflow: SupportOverflow,
    rng: ChaCha8Rng,
}

impl IdMctsPlanner {
    pub fn new(
        model: Arc<TransitionModel>,
        params: CostParams,
        config: SearchConfig,
        cap: usize,
        overflow: SupportOverflow,
    ) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self {
            model,
            params,
            config,
            cap,
            overflow,
            rng,
        }
    }
}

impl Planner for IdMctsPlanner {
    fn name(&self) -> &'static str {
        "id_mcts"
    }

    fn next_action(&mut self, belief: &Belief) -> Result<Decision, PlanError> {
        let choice = id_mcts_action(
            belief,
            &self.model,
            &self.config,
            self.params,
            self.cap,
            self.overflow,
            &mut self.rng,
        )?;
        Ok(Decision::plain(choice.mask))
    }
}

pub struct IdGammaMctsPlanner {
    model: Arc<TransitionModel>,
    params: CostParams,
    config: SearchConfig,
    grid: GammaGrid,
    rng: ChaCha8Rng,
}

impl IdGammaMctsPlanner {
    pub fn new(
        model: Arc<TransitionModel>,
        params: CostParams,
        config: SearchConfig,
        grid: GammaGrid,
    ) -> Result<Self, PlanError> {
        if grid.is_empty() {
            return Err(PlanError::EmptyGrid);
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            model,
            params,
            config,
            grid,
            rng,
        })
    }
}

impl Planner for IdGammaMctsPlanner {
    fn name(&self) -> &'static str {
        "id_gamma_mcts"
    }

    fn next_action(&mut self, belief: &Belief) -> Result<Decision, PlanError> {
        let choice = id_gamma_mcts_action(
            belief,
            &self.model,
            &self.config,
            self.params,
            &self.grid,
            &mut self.rng,
        )?;
        Ok(Decision {
            mask: choice.mask,
            gamma: Some(choice.gamma),
            restarted: false,
        })
    }
}

/// Powers the whole predicted support when the belief has spread over more
/// than `threshold` positions; otherwise defers to the inner planner.
pub struct RestartPlanner<P> {
    inner: P,
    model: Arc<TransitionModel>,
    threshold: usize,
    enabled: bool,
}

impl<P: Planner> RestartPlanner<P> {
    pub fn new(
        inner: P,
        model: Arc<TransitionModel>,
        threshold: usize,
        enabled: bool,
    ) -> Result<Self, PlanError> {
        if threshold == 0 {
            return Err(PlanError::InvalidThreshold);
        }
        Ok(Self {
            inner,
            model,
            threshold,
            enabled,
        })
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Planner> Planner for RestartPlanner<P> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn next_action(&mut self, belief: &Belief) -> Result<Decision, PlanError> {
        if self.enabled && support_size(belief, SUPPORT_EPS) > self.threshold {
            return Ok(Decision {
                mask: full_support_mask(belief, &self.model),
                gamma: None,
                restarted: true,
            });
        }
        self.inner.next_action(belief)
    }
}

/// Wraps `inner` with the restart override.
pub fn restart_wrap<P: Planner>(
    inner: P,
    model: Arc<TransitionModel>,
    threshold: usize,
    enabled: bool,
) -> Result<RestartPlanner<P>, PlanError> {
    RestartPlanner::new(inner, model, threshold, enabled)
}

#[cfg(test)]
mod tests;
