//! Finite-horizon UCT over a generative belief model, minimizing discounted cost.
//!
//! Each iteration fixes a root state (the belief's mode by default), then walks
//! down the tree: pick an action by UCT, sample the successor state and
//! observation from the problem, move to the child keyed by `(action, obs)`,
//! and recurse until `max_depth` stages have been simulated. On the way back up
//! every visited `(node, action)` pair folds `cost + discount * future` into its
//! running mean.
//!
//! By default the tree grows one node per iteration and a fresh node is valued
//! by a rollout of the problem's default policy. `future` is that rollout value
//! while the child still has untried actions, and the mean of its most-visited
//! action afterwards. Passing raw sampled returns up instead ([`Backup::Sample`])
//! lets the forced first try of every action leak into ancestors' means.
//!
//! Action selection is the cost-minimizing mirror of UCB1:
//!
//! ```text
//! argmin_j  mean_j - c * sqrt(ln N / N_j)
//! ```
//!
//! with untried actions taken first in index order.

use std::collections::HashMap;
use std::hash::Hash;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("node has no actions to choose from")]
    EmptyActionSet,
    #[error("invalid search config: {0}")]
    InvalidConfig(&'static str),
}

/// How the hidden state is fixed at the start of each simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Determinization {
    /// Most probable state of the root belief, ties to the lowest index.
    #[default]
    ArgMax,
    /// Fresh draw from the root belief every iteration.
    Sample,
}

/// How far the tree grows per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    /// Every stage down to `max_depth` gets a tree node.
    Full,
    /// One new node per iteration; below it the problem's default policy
    /// plays out the remaining stages without statistics.
    #[default]
    Rollout,
}

/// What a node passes up to its parent after a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backup {
    /// The sampled discounted return of this simulation.
    Sample,
    /// Creation rollout until every action has been tried, then the mean of
    /// the most-visited action.
    #[default]
    Robust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub iterations: usize,
    pub max_depth: usize,
    pub uct_c: f64,
    pub discount: f64,
    pub seed: u64,
    #[serde(default)]
    pub determinization: Determinization,
    #[serde(default)]
    pub expansion: Expansion,
    #[serde(default)]
    pub backup: Backup,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            max_depth: 15,
            uct_c: 2.0,
            discount: 0.9,
            seed: 0,
            determinization: Determinization::ArgMax,
            expansion: Expansion::Rollout,
            backup: Backup::Robust,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.iterations == 0 {
            return Err(SearchError::InvalidConfig("iterations must be >= 1"));
        }
        if self.max_depth == 0 {
            return Err(SearchError::InvalidConfig("max_depth must be >= 1"));
        }
        if self.uct_c.is_nan() || self.uct_c <= 0.0 {
            return Err(SearchError::InvalidConfig("uct_c must be positive"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(SearchError::InvalidConfig("discount must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Outcome of one simulated stage.
#[derive(Debug, Clone)]
pub struct Transition<S, O> {
    pub next_state: S,
    pub obs: O,
    pub cost: f64,
    /// No further costs accrue after this stage.
    pub terminal: bool,
}

/// A simulator the tree search can plan against.
///
/// Actions are indices `0..num_actions(node)` whose meaning may depend on the
/// node's belief. `NodeData` is derived once per tree node and cached.
pub trait GenerativeProblem {
    type State: Clone;
    type Belief: Clone;
    type Obs: Clone + Eq + Hash;
    type NodeData;

    fn prepare(&self, belief: &Self::Belief) -> Self::NodeData;

    fn num_actions(&self, data: &Self::NodeData) -> usize;

    fn root_state(
        &self,
        belief: &Self::Belief,
        mode: Determinization,
        rng: &mut ChaCha8Rng,
    ) -> Self::State;

    fn simulate(
        &self,
        data: &Self::NodeData,
        state: &Self::State,
        action: usize,
        rng: &mut ChaCha8Rng,
    ) -> Transition<Self::State, Self::Obs>;

    fn child_belief(
        &self,
        belief: &Self::Belief,
        data: &Self::NodeData,
        action: usize,
        obs: &Self::Obs,
    ) -> Self::Belief;

    /// Discounted cost of the default policy over `stages` stages, starting
    /// from a fresh node's belief and hidden state.
    fn rollout(
        &self,
        belief: &Self::Belief,
        state: Self::State,
        stages: usize,
        discount: f64,
        rng: &mut ChaCha8Rng,
    ) -> f64;
}

/// Visit count and running mean cost of one action at one node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub visits: u64,
    pub mean_cost: f64,
}

impl ActionStats {
    /// Incremental mean; the count is bumped before dividing.
    pub fn record(&mut self, cost: f64) {
        self.visits += 1;
        self.mean_cost += (cost - self.mean_cost) / self.visits as f64;
    }
}

/// UCT choice over a full statistics table: first untried action, else
/// `argmin mean - c * sqrt(ln N / N_j)` with ties to the lowest index.
pub fn uct_select(stats: &[ActionStats], uct_c: f64) -> Result<usize, SearchError> {
    if stats.is_empty() {
        return Err(SearchError::EmptyActionSet);
    }
    if let Some(untried) = stats.iter().position(|s| s.visits == 0) {
        return Ok(untried);
    }
    let total: u64 = stats.iter().map(|s| s.visits).sum();
    let log_total = (total as f64).ln();
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (j, s) in stats.iter().enumerate() {
        let score = s.mean_cost - uct_c * (log_total / s.visits as f64).sqrt();
        if score < best_score {
            best_score = score;
            best = j;
        }
    }
    Ok(best)
}

/// Index of the lowest mean cost among visited actions, ties to the lowest index.
pub fn best_action(stats: &[ActionStats]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, s) in stats.iter().enumerate() {
        if s.visits == 0 {
            continue;
        }
        if best.is_none_or(|b| s.mean_cost < stats[b].mean_cost) {
            best = Some(j);
        }
    }
    best
}

pub type NodeId = usize;

pub struct SearchNode<P: GenerativeProblem> {
    pub belief: P::Belief,
    pub data: P::NodeData,
    pub depth: usize,
    num_actions: usize,
    // Untried-first means tried actions always form a prefix, so the table
    // only grows as far as the search has reached.
    stats: Vec<ActionStats>,
    children: HashMap<(usize, P::Obs), NodeId>,
    // Default-policy return sampled when the node was created.
    rollout_value: Option<f64>,
}

impl<P: GenerativeProblem> SearchNode<P> {
    fn new(problem: &P, belief: P::Belief, depth: usize) -> Self {
        let data = problem.prepare(&belief);
        let num_actions = problem.num_actions(&data);
        Self {
            belief,
            data,
            depth,
            num_actions,
            stats: Vec::new(),
            children: HashMap::new(),
            rollout_value: None,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Statistics of action `a`; untouched actions report zero visits.
    pub fn stats(&self, a: usize) -> ActionStats {
        self.stats.get(a).copied().unwrap_or_default()
    }

    /// Statistics for every action, including untried ones.
    pub fn all_stats(&self) -> Vec<ActionStats> {
        (0..self.num_actions).map(|a| self.stats(a)).collect()
    }

    pub fn total_visits(&self) -> u64 {
        self.stats.iter().map(|s| s.visits).sum()
    }

    pub fn num_children(&self) -> usize {
        self.children.len()
    }

    pub fn select(&self, uct_c: f64) -> Result<usize, SearchError> {
        if self.num_actions == 0 {
            return Err(SearchError::EmptyActionSet);
        }
        if self.stats.len() < self.num_actions {
            return Ok(self.stats.len());
        }
        uct_select(&self.stats, uct_c)
    }

    /// Statistics of the most-visited action, ties to the lowest index.
    pub fn most_visited(&self) -> Option<ActionStats> {
        self.stats.iter().rev().max_by_key(|s| s.visits).copied()
    }

    pub fn update_stats(&mut self, action: usize, cost: f64) {
        if action >= self.stats.len() {
            self.stats.resize(action + 1, ActionStats::default());
        }
        self.stats[action].record(cost);
    }
}

/// What a search returns: the chosen root action and the root statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub action: usize,
    pub root_actions: usize,
    pub root_stats: Vec<ActionStats>,
    pub nodes: usize,
}

impl SearchResult {
    pub fn chosen_stats(&self) -> ActionStats {
        self.root_stats[self.action]
    }
}

/// Tree arena for one decision.
pub struct SearchTree<'a, P: GenerativeProblem> {
    problem: &'a P,
    config: &'a SearchConfig,
    nodes: Vec<SearchNode<P>>,
}

impl<'a, P: GenerativeProblem> SearchTree<'a, P> {
    pub fn new(problem: &'a P, config: &'a SearchConfig, root_belief: P::Belief) -> Self {
        let root = SearchNode::new(problem, root_belief, 0);
        Self {
            problem,
            config,
            nodes: vec![root],
        }
    }

    pub fn root(&self) -> &SearchNode<P> {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &SearchNode<P> {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Runs one simulation from the root and returns its discounted cost.
    pub fn iterate(&mut self, rng: &mut ChaCha8Rng) -> Result<f64, SearchError> {
        let state =
            self.problem
                .root_state(&self.nodes[0].belief, self.config.determinization, rng);
        self.simulate(0, state, rng)
    }

    fn simulate(
        &mut self,
        id: NodeId,
        state: P::State,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, SearchError> {
        let depth = self.nodes[id].depth;
        if depth >= self.config.max_depth {
            return Ok(0.0);
        }
        let action = self.nodes[id].select(self.config.uct_c)?;
        let step = self
            .problem
            .simulate(&self.nodes[id].data, &state, action, rng);
        let mut total = step.cost;
        if !step.terminal && depth + 1 < self.config.max_depth {
            let future = match self.child(id, action, &step.obs) {
                (child, false) if self.config.expansion == Expansion::Rollout => {
                    let value = self.problem.rollout(
                        &self.nodes[child].belief,
                        step.next_state,
                        self.config.max_depth - depth - 1,
                        self.config.discount,
                        rng,
                    );
                    self.nodes[child].rollout_value = Some(value);
                    value
                }
                (child, _) => self.simulate(child, step.next_state, rng)?,
            };
            total += self.config.discount * future;
        }
        let node = &mut self.nodes[id];
        node.update_stats(action, total);
        Ok(match self.config.backup {
            Backup::Sample => total,
            Backup::Robust if node.stats.len() < node.num_actions => {
                node.rollout_value.unwrap_or(total)
            }
            Backup::Robust => node.most_visited().map_or(total, |s| s.mean_cost),
        })
    }

    /// Child node for `(action, obs)` and whether it already existed.
    fn child(&mut self, id: NodeId, action: usize, obs: &P::Obs) -> (NodeId, bool) {
        if let Some(&c) = self.nodes[id].children.get(&(action, obs.clone())) {
            return (c, true);
        }
        let parent = &self.nodes[id];
        let belief = self
            .problem
            .child_belief(&parent.belief, &parent.data, action, obs);
        let node = SearchNode::new(self.problem, belief, parent.depth + 1);
        let child = self.nodes.len();
        self.nodes.push(node);
        self.nodes[id].children.insert((action, obs.clone()), child);
        (child, false)
    }

    pub fn result(&self) -> Result<SearchResult, SearchError> {
        let root = self.root();
        let root_stats = root.all_stats();
        let action = best_action(&root_stats).ok_or(SearchError::EmptyActionSet)?;
        Ok(SearchResult {
            action,
            root_actions: root.num_actions,
            root_stats,
            nodes: self.nodes.len(),
        })
    }
}

/// Full search with an RNG seeded from `config.seed`.
pub fn search<P: GenerativeProblem>(
    root_belief: P::Belief,
    problem: &P,
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    search_with_rng(root_belief, problem, config, &mut rng)
}

/// Full search drawing randomness from a caller-owned stream.
pub fn search_with_rng<P: GenerativeProblem>(
    root_belief: P::Belief,
    problem: &P,
    config: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let mut tree = SearchTree::new(problem, config, root_belief);
    if tree.root().num_actions() == 0 {
        return Err(SearchError::EmptyActionSet);
    }
    for _ in 0..config.iterations {
        tree.iterate(rng)?;
    }
    tree.result()
}
