//! Exhaustive expectimax over belief trees, for validating the tree search on
//! tiny instances.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::belief::{condition_on_miss, predict, Belief};
use crate::mcts::{search, SearchConfig};
use crate::model::{ActionMask, CostParams, TransitionModel};
use crate::planners::{ActionSpace, BeliefSearchProblem};

use super::SimError;

pub const ORACLE_MAX_POSITIONS: usize = 5;
pub const ORACLE_MAX_HORIZON: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub action: ActionMask,
    pub value: f64,
}

struct Expectimax<'a> {
    model: &'a TransitionModel,
    params: CostParams,
    memo: HashMap<(Vec<u64>, usize), (u32, f64)>,
}

impl Expectimax<'_> {
    /// Optimal `(action bits, value)` for `belief` with `stages` periods to go.
    ///
    /// Only subsets of the predicted support are enumerated: a sensor where the
    /// intruder cannot be never lowers cost, and dropping it lowers the index.
    fn solve(&mut self, belief: &Belief, stages: usize) -> (u32, f64) {
        if stages == 0 {
            return (0, 0.0);
        }
        let key = (belief.probs().iter().map(|p| p.to_bits()).collect(), stages);
        if let Some(&hit) = self.memo.get(&key) {
            return hit;
        }
        let n = self.model.n();
        let exit = self.model.exit_index();
        let predicted = predict(belief, self.model);
        let support: u32 = predicted.support(0.0).fold(0, |bits, l| bits | (1 << l));

        let mut best = (0u32, f64::INFINITY);
        for bits in 0..(1u32 << n) {
            if bits & !support != 0 {
                continue;
            }
            let mask = ActionMask::from_bits((0..n).map(|l| bits >> l & 1 == 1).collect());
            let energy = self.params.lambda() * bits.count_ones() as f64;
            let alpha = self.params.discount();

            let mut value = predicted.prob(exit) * energy;
            let mut miss_mass = 0.0;
            for l in 0..n {
                let q = predicted.prob(l);
                if q == 0.0 {
                    continue;
                }
                if mask.is_on(l) {
                    let future = self.solve(&Belief::unit(n + 1, l), stages - 1).1;
                    value += q * (energy + alpha * future);
                } else {
                    miss_mass += q;
                }
            }
            if miss_mass > 0.0 {
                let after_miss =
                    condition_on_miss(&predicted, &mask).expect("miss branch has positive mass");
                let future = self.solve(&after_miss, stages - 1).1;
                value += miss_mass * (1.0 + energy + alpha * future);
            }
            if value < best.1 {
                best = (bits, value);
            }
        }
        self.memo.insert(key, best);
        best
    }
}

/// Exact minimum expected discounted cost over `horizon` periods from `belief`,
/// and the lowest-indexed optimal first action.
pub fn expectimax_oracle(
    model: &TransitionModel,
    belief: &Belief,
    params: CostParams,
    horizon: usize,
) -> Result<OracleResult, SimError> {
    let n = model.n();
    if n > ORACLE_MAX_POSITIONS || horizon > ORACLE_MAX_HORIZON || horizon == 0 {
        return Err(SimError::OracleTooLarge { n, horizon });
    }
    let mut solver = Expectimax {
        model,
        params,
        memo: HashMap::new(),
    };
    let (bits, value) = solver.solve(belief, horizon);
    Ok(OracleResult {
        action: ActionMask::from_bits((0..n).map(|l| bits >> l & 1 == 1).collect()),
        value,
    })
}

/// Settings for comparing the tree search with [`expectimax_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheckSpec {
    pub seed: u64,
    pub instances: usize,
    pub positions: usize,
    pub horizon: usize,
    /// Instance `i` uses `lambdas[i % lambdas.len()]`.
    pub lambdas: Vec<f64>,
    pub iterations: usize,
    pub uct_c: f64,
    /// Minimum number of matching root actions.
    pub required_matches: usize,
    /// Maximum relative error of the chosen action's estimate.
    pub value_tolerance: f64,
}

impl Default for OracleCheckSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 10,
            positions: 4,
            horizon: 3,
            lambdas: vec![0.2, 0.5],
            iterations: 50_000,
            uct_c: 2.0,
            required_matches: 9,
            value_tolerance: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub instance: usize,
    pub lambda: f64,
    pub oracle_action: Vec<usize>,
    pub oracle_value: f64,
    pub search_action: Vec<usize>,
    /// Mean discounted cost of the chosen root action.
    pub search_value: f64,
}

impl OracleCase {
    pub fn matches(&self) -> bool {
        self.oracle_action == self.search_action
    }

    pub fn relative_error(&self) -> f64 {
        (self.search_value - self.oracle_value).abs() / self.oracle_value.abs().max(1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub cases: Vec<OracleCase>,
    pub required_matches: usize,
    pub value_tolerance: f64,
}

impl OracleReport {
    pub fn matches(&self) -> usize {
        self.cases.iter().filter(|c| c.matches()).count()
    }

    /// Largest relative value error among cases whose action matches.
    pub fn worst_relative_error(&self) -> f64 {
        self.cases
            .iter()
            .filter(|c| c.matches())
            .map(OracleCase::relative_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.matches() >= self.required_matches
            && self.worst_relative_error() <= self.value_tolerance
    }
}

/// Random instance: each position moves to 2 or 3 random positions with
/// random weights; the start position is uniform.
pub fn random_instance(positions: usize, seed: u64) -> (TransitionModel, Belief) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![vec![0.0; positions + 1]; positions + 1];
    for row in rows.iter_mut().take(positions) {
        let width = rng.gen_range(2..=3.min(positions));
        let mut targets: Vec<usize> = (0..positions).collect();
        for k in 0..width {
            let j = rng.gen_range(k..positions);
            targets.swap(k, j);
        }
        let weights: Vec<f64> = (0..width).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (&t, w) in targets[..width].iter().zip(weights) {
            row[t] = w / total;
        }
    }
    rows[positions][positions] = 1.0;
    let model = TransitionModel::from_rows(rows).expect("rows are stochastic");
    let start = rng.gen_range(0..positions);
    (model, Belief::unit(positions + 1, start))
}

/// Runs the tree search and the oracle on each random instance.
pub fn oracle_check(spec: &OracleCheckSpec) -> Result<OracleReport, SimError> {
    if spec.lambdas.is_empty() {
        return Err(SimError::InvalidSweep("no lambda values".into()));
    }
    let cases = (0..spec.instances)
        .into_par_iter()
        .map(|i| {
            let instance_seed = super::derive_seed(spec.seed, 0, i as u64);
            let (model, belief) = random_instance(spec.positions, instance_seed);
            let lambda = spec.lambdas[i % spec.lambdas.len()];
            let params = CostParams::with_lambda(lambda)?;
            let oracle = expectimax_oracle(&model, &belief, params, spec.horizon)?;

            let config = SearchConfig {
                iterations: spec.iterations,
                max_depth: spec.horizon,
                uct_c: spec.uct_c,
                discount: params.discount(),
                seed: super::derive_seed(spec.seed, 1, i as u64),
                ..SearchConfig::default()
            };
            let problem = BeliefSearchProblem::new(
                &model,
                params,
                ActionSpace::Subsets {
                    cap: spec.positions,
                },
            );
            let result = search(belief.clone(), &problem, &config)?;
            let mask = problem.mask(&problem.view(&belief), result.action);
            Ok(OracleCase {
                instance: i,
                lambda,
                oracle_action: oracle.action.on_positions().collect(),
                oracle_value: oracle.value,
                search_action: mask.on_positions().collect(),
                search_value: result.chosen_stats().mean_cost,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(OracleReport {
        cases,
        required_matches: spec.required_matches,
        value_tolerance: spec.value_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_line_model;

    fn params(lambda: f64) -> CostParams {
        CostParams::with_lambda(lambda).unwrap()
    }

    #[test]
    fn deterministic_single_stage() {
        // 0 -> 1 with certainty: power exactly position 1, cost lambda.
        let m = TransitionModel::from_rows(vec![
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let r = expectimax_oracle(&m, &Belief::unit(4, 0), params(0.4), 1).unwrap();
        assert_eq!(r.action, ActionMask::with_on(3, [1]));
        assert!((r.value - 0.4).abs() < 1e-12);
    }

    #[test]
    fn free_energy_powers_full_support() {
        let m = build_line_model(5, 1, 0.0, None).unwrap();
        for h in 1..=3 {
            let r = expectimax_oracle(&m, &Belief::unit(6, 2), params(0.0), h).unwrap();
            assert_eq!(r.value, 0.0);
            assert_eq!(r.action, ActionMask::with_on(5, [1, 2, 3]));
        }
    }

    #[test]
    fn uniform_rows_closed_form() {
        // Every row uniform over three positions: the prediction is always
        // uniform, each stage costs sum_l min(1/3, lambda) = 1 at lambda = 0.5,
        // so two stages cost 1 + 0.9.
        let third = 1.0 / 3.0;
        let m = TransitionModel::from_rows(vec![
            vec![third, third, third, 0.0],
            vec![third, third, third, 0.0],
            vec![third, third, third, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let r = expectimax_oracle(&m, &Belief::unit(4, 1), params(0.5), 2).unwrap();
        assert!((r.value - 1.9).abs() < 1e-12);
        assert_eq!(r.action, ActionMask::all_off(3));
    }

    #[test]
    fn three_state_chain_two_stages() {
        // Hand enumeration from the middle of a 3-chain at lambda = 0.2:
        // powering all three costs 0.6 + 0.9 * (0.4 + 0.6 + 0.4) / 3 = 1.02,
        // the cheapest of the eight first actions.
        let m = build_line_model(3, 1, 0.0, None).unwrap();
        let r = expectimax_oracle(&m, &Belief::unit(4, 1), params(0.2), 2).unwrap();
        assert!((r.value - 1.02).abs() < 1e-12, "{}", r.value);
        assert_eq!(r.action, ActionMask::all_on(3));

        // At lambda = 0.5 every stage costs 1 whatever is powered; all-off wins the tie.
        let r = expectimax_oracle(&m, &Belief::unit(4, 1), params(0.5), 2).unwrap();
        assert!((r.value - 1.9).abs() < 1e-12, "{}", r.value);
        assert_eq!(r.action, ActionMask::all_off(3));
    }

    #[test]
    fn size_guard() {
        let m = build_line_model(7, 1, 0.0, None).unwrap();
        assert!(matches!(
            expectimax_oracle(&m, &Belief::unit(8, 3), params(0.3), 2),
            Err(SimError::OracleTooLarge { .. })
        ));
        let m = build_line_model(5, 1, 0.0, None).unwrap();
        assert!(expectimax_oracle(&m, &Belief::unit(6, 3), params(0.3), 5).is_err());
    }

    #[test]
    fn random_instances_are_valid_and_seeded() {
        let (m, b) = random_instance(4, 11);
        assert_eq!(m.n(), 4);
        assert!(b.is_point_mass());
        for l in 0..4 {
            let width = m.row_support(l).len();
            assert!((2..=3).contains(&width));
        }
        assert_eq!(random_instance(4, 11), (m, b));
    }

    #[test]
    fn small_oracle_check_runs() {
        let spec = OracleCheckSpec {
            instances: 2,
            iterations: 2_000,
            ..OracleCheckSpec::default()
        };
        let report = oracle_check(&spec).unwrap();
        assert_eq!(report.cases.len(), 2);
        assert_eq!(report.cases[1].lambda, 0.5);
        for case in &report.cases {
            assert!(case.search_value >= 0.0 && case.oracle_value >= 0.0);
        }
    }
}
