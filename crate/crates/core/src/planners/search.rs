use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::belief::{condition_on_miss, predict, project_where, Belief, SUPPORT_EPS};
use crate::mcts::{Determinization, GenerativeProblem, Transition};
use crate::model::{ActionMask, CostParams, Observation, TransitionModel};

use super::{GammaGrid, RankedPositions};

const UNRANKED: u32 = u32::MAX;

/// How a search action index maps to a sensor set at a given belief.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    /// Bitmask over the most probable predicted positions (at most `cap` of them).
    /// Bit `r` powers the position of rank `r`; index 0 is the empty set.
    Subsets { cap: usize },
    /// Action `a` powers the top positions covering `grid[a]` of the predicted mass.
    Gamma(GammaGrid),
}

/// Per-node cache: the one-step prediction and its ranking.
#[derive(Debug, Clone)]
pub struct NodeView {
    predicted: Belief,
    ranked: RankedPositions,
    rank_of: Vec<u32>,
    // Subsets: enumerated width. Gamma: ON count per grid value.
    widths: Vec<usize>,
}

impl NodeView {
    pub fn predicted(&self) -> &Belief {
        &self.predicted
    }

    pub fn ranked(&self) -> &RankedPositions {
        &self.ranked
    }

    /// Predicted support before any cap is applied.
    pub fn support_width_unbounded(&self) -> usize {
        self.ranked.count_above(SUPPORT_EPS)
    }
}

/// The tracking POMDP as seen by the tree search: the intruder moves by the
/// model, observations follow the chosen mask, and each stage costs
/// `miss + lambda * sensors_on`.
pub struct BeliefSearchProblem<'a> {
    model: &'a TransitionModel,
    params: CostParams,
    space: ActionSpace,
}

impl<'a> BeliefSearchProblem<'a> {
    pub fn new(model: &'a TransitionModel, params: CostParams, space: ActionSpace) -> Self {
        Self {
            model,
            params,
            space,
        }
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn view(&self, belief: &Belief) -> NodeView {
        let predicted = predict(belief, self.model);
        let ranked = RankedPositions::new(&predicted);
        let mut rank_of = vec![UNRANKED; self.model.n()];
        for (r, &l) in ranked.order().iter().enumerate() {
            rank_of[l] = r as u32;
        }
        let widths = match &self.space {
            ActionSpace::Subsets { cap } => vec![ranked.count_above(SUPPORT_EPS).min(*cap)],
            ActionSpace::Gamma(grid) => grid
                .values()
                .iter()
                .map(|&g| ranked.count_for_gamma(g))
                .collect(),
        };
        NodeView {
            predicted,
            ranked,
            rank_of,
            widths,
        }
    }

    fn is_on(&self, view: &NodeView, action: usize, position: usize) -> bool {
        let rank = view.rank_of[position];
        if rank == UNRANKED {
            return false;
        }
        let rank = rank as usize;
        match self.space {
            ActionSpace::Subsets { .. } => rank < view.widths[0] && (action >> rank) & 1 == 1,
            ActionSpace::Gamma(_) => rank < view.widths[action],
        }
    }

    fn sensors_on(&self, view: &NodeView, action: usize) -> usize {
        match self.space {
            ActionSpace::Subsets { .. } => action.count_ones() as usize,
            ActionSpace::Gamma(_) => view.widths[action],
        }
    }

    /// Sensor set that `action` denotes at this node.
    pub fn mask(&self, view: &NodeView, action: usize) -> ActionMask {
        let n = self.model.n();
        let order = view.ranked.order();
        match self.space {
            ActionSpace::Subsets { .. } => ActionMask::with_on(
                n,
                (0..view.widths[0])
                    .filter(|r| (action >> r) & 1 == 1)
                    .map(|r| order[r]),
            ),
            ActionSpace::Gamma(_) => {
                ActionMask::with_on(n, order[..view.widths[action]].iter().copied())
            }
        }
    }
}

impl GenerativeProblem for BeliefSearchProblem<'_> {
    type State = usize;
    type Belief = Belief;
    type Obs = Observation;
    type NodeData = NodeView;

    fn prepare(&self, belief: &Belief) -> NodeView {
        self.view(belief)
    }

    fn num_actions(&self, view: &NodeView) -> usize {
        match &self.space {
            ActionSpace::Subsets { .. } => 1usize << view.widths[0],
            ActionSpace::Gamma(grid) => grid.len(),
        }
    }

    fn root_state(&self, belief: &Belief, mode: Determinization, rng: &mut ChaCha8Rng) -> usize {
        match mode {
            Determinization::ArgMax => belief.argmax(),
            Determinization::Sample => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, &p) in belief.probs().iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i;
                    }
                }
                belief.argmax()
            }
        }
    }

    fn simulate(
        &self,
        view: &NodeView,
        state: &usize,
        action: usize,
        rng: &mut ChaCha8Rng,
    ) -> Transition<usize, Observation> {
        let next = self.model.sample_next(*state, rng);
        let energy = self.params.lambda() * self.sensors_on(view, action) as f64;
        if next == self.model.exit_index() {
            return Transition {
                next_state: next,
                obs: Observation::Exited,
                cost: energy,
                terminal: true,
            };
        }
        let (obs, miss) = if self.is_on(view, action, next) {
            (Observation::Tracked(next), 0.0)
        } else {
            (Observation::Miss, 1.0)
        };
        Transition {
            next_state: next,
            obs,
            cost: miss + energy,
            terminal: false,
        }
    }

    /// Threshold rule on the belief: power every position whose predicted
    /// probability exceeds `lambda`, then filter on what those sensors saw.
    fn rollout(
        &self,
        belief: &Belief,
        mut state: usize,
        stages: usize,
        discount: f64,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let lambda = self.params.lambda();
        let n = self.model.n();
        let exit = self.model.exit_index();
        let mut belief = belief.clone();
        let mut total = 0.0;
        let mut weight = 1.0;
        for _ in 0..stages {
            let predicted = predict(&belief, self.model);
            let mask = ActionMask::with_on(n, predicted.support(lambda));
            let energy = lambda * mask.count_on() as f64;
            let next = self.model.sample_next(state, rng);
            if next == exit {
                total += weight * energy;
                break;
            }
            let seen = mask.is_on(next);
            total += weight * (energy + if seen { 0.0 } else { 1.0 });
            belief = if seen {
                Belief::unit(n + 1, next)
            } else {
                miss_belief(self.model, &predicted, &mask)
            };
            state = next;
            weight *= discount;
        }
        total
    }

    fn child_belief(
        &self,
        _belief: &Belief,
        view: &NodeView,
        action: usize,
        obs: &Observation,
    ) -> Belief {
        let size = self.model.num_states();
        match *obs {
            Observation::Tracked(l) => Belief::unit(size, l),
            Observation::Exited => Belief::unit(size, self.model.exit_index()),
            Observation::Miss => miss_belief(self.model, &view.predicted, &self.mask(view, action)),
        }
    }
}

/// Miss update that degrades gracefully when the sampled miss contradicts the
/// prediction: drop only the exit, else keep the prediction.
fn miss_belief(model: &TransitionModel, predicted: &Belief, mask: &ActionMask) -> Belief {
    condition_on_miss(predicted, mask)
        .or_else(|_| {
            let exit = model.exit_index();
            project_where(predicted.probs(), |i| i == exit)
        })
        .unwrap_or_else(|_| predicted.clone())
}
