use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{build_grid_model, build_line_model};

fn belief(probs: &[f64]) -> Belief {
    Belief::new(probs.to_vec()).unwrap()
}

fn line41() -> Arc<TransitionModel> {
    Arc::new(build_line_model(41, 3, 0.0, None).unwrap())
}

/// Row `i` moves to `i` itself, so the prediction equals the belief.
fn identity(n: usize) -> TransitionModel {
    let rows = (0..=n)
        .map(|i| (0..=n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    TransitionModel::from_rows(rows).unwrap()
}

fn params(lambda: f64) -> CostParams {
    CostParams::with_lambda(lambda).unwrap()
}

#[test]
fn top_gamma_examples() {
    let b = belief(&[0.1, 0.5, 0.4, 0.0]);
    assert_eq!(top_gamma_selection(&b, 0.0).unwrap(), Vec::<usize>::new());
    assert_eq!(top_gamma_selection(&b, 0.5).unwrap(), vec![1]);
    assert_eq!(top_gamma_selection(&b, 0.6).unwrap(), vec![1, 2]);
    assert_eq!(top_gamma_selection(&b, 0.9).unwrap(), vec![1, 2]);
    assert_eq!(top_gamma_selection(&b, 1.0).unwrap(), vec![1, 2, 0]);
    assert!(top_gamma_selection(&b, 1.1).is_err());
    assert!(top_gamma_selection(&b, -0.1).is_err());
}

#[test]
fn top_gamma_worked_example() {
    let b = belief(&[0.3, 0.3, 0.2, 0.2, 0.0]);
    assert_eq!(top_gamma_selection(&b, 0.6).unwrap(), vec![0, 1]);
    assert_eq!(top_gamma_selection(&b, 0.61).unwrap(), vec![0, 1, 2]);
    assert_eq!(top_gamma_selection(&b, 0.3).unwrap(), vec![0]);
}

#[test]
fn top_gamma_never_selects_zero_mass() {
    let b = belief(&[0.0, 1.0, 0.0, 0.0]);
    assert_eq!(top_gamma_selection(&b, 1.0).unwrap(), vec![1]);
}

#[test]
fn id_tg_on_line_covers_centre_first() {
    let m = line41();
    let p = Belief::unit(42, 20);
    let mask = id_tg_action(&p, &m, 1.0).unwrap();
    assert_eq!(
        mask.on_positions().collect::<Vec<_>>(),
        (17..=23).collect::<Vec<_>>()
    );
    let mask = id_tg_action(&p, &m, 0.6).unwrap();
    // Seven equiprobable moves: ceil(0.6 * 7) = 5, lowest indices on ties.
    assert_eq!(
        mask.on_positions().collect::<Vec<_>>(),
        vec![17, 18, 19, 20, 21]
    );
    assert_eq!(id_tg_action(&p, &m, 0.0).unwrap().count_on(), 0);
}

#[test]
fn q_mdp_examples() {
    let m = identity(3);
    // Dyadic masses keep the threshold comparisons exact.
    let p = belief(&[0.5, 0.25, 0.125, 0.125]);
    assert_eq!(
        q_mdp_action(&p, &m, 0.0).on_positions().collect::<Vec<_>>(),
        vec![0, 1, 2]
    );
    assert_eq!(
        q_mdp_action(&p, &m, 0.2).on_positions().collect::<Vec<_>>(),
        vec![0, 1]
    );
    // Strict threshold: 0.25 is not above 0.25.
    assert_eq!(
        q_mdp_action(&p, &m, 0.25)
            .on_positions()
            .collect::<Vec<_>>(),
        vec![0]
    );
    assert_eq!(q_mdp_action(&p, &m, 1.0).count_on(), 0);
}

#[test]
fn q_mdp_planner_matches_rule() {
    let m = line41();
    let mut planner = QMdpPlanner::new(m.clone(), 0.1);
    let d = planner.next_action(&Belief::unit(42, 20)).unwrap();
    assert_eq!(d.mask.count_on(), 7);
    assert_eq!(d.gamma, None);
    let mut planner = QMdpPlanner::new(m, 0.5);
    assert_eq!(
        planner
            .next_action(&Belief::unit(42, 20))
            .unwrap()
            .mask
            .count_on(),
        0
    );
}

struct Fixed;

impl Planner for Fixed {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn next_action(&mut self, belief: &Belief) -> Result<Decision, PlanError> {
        Ok(Decision::plain(ActionMask::all_off(
            belief.num_states() - 1,
        )))
    }
}

fn spread(n: usize, width: usize) -> Belief {
    let mut probs = vec![0.0; n + 1];
    for p in probs.iter_mut().take(width) {
        *p = 1.0 / width as f64;
    }
    Belief::new(probs).unwrap()
}

#[test]
fn restart_boundary() {
    let m = line41();
    let mut planner = RestartPlanner::new(Fixed, m.clone(), 14, true).unwrap();
    let d = planner.next_action(&spread(41, 15)).unwrap();
    assert!(d.restarted);
    // Support {0..14} spreads by up to 3 each side, clipped at 0.
    assert_eq!(
        d.mask.on_positions().collect::<Vec<_>>(),
        (0..=17).collect::<Vec<_>>()
    );
    let d = planner.next_action(&spread(41, 14)).unwrap();
    assert!(!d.restarted);
    assert_eq!(d.mask.count_on(), 0);

    let mut disabled = RestartPlanner::new(Fixed, m.clone(), 14, false).unwrap();
    assert!(!disabled.next_action(&spread(41, 30)).unwrap().restarted);
    assert!(matches!(
        RestartPlanner::new(Fixed, m, 0, true),
        Err(PlanError::InvalidThreshold)
    ));
}

#[test]
fn restart_wraps_borrowed_planner() {
    let mut inner = Fixed;
    let mut wrapped = restart_wrap(&mut inner, line41(), 3, true).unwrap();
    assert!(wrapped.next_action(&spread(41, 4)).unwrap().restarted);
    assert_eq!(wrapped.inner().name(), "fixed");
}

#[test]
fn gamma_grid_validation() {
    assert_eq!(GammaGrid::default().len(), 20);
    assert_eq!(GammaGrid::default().values()[0], 0.0);
    assert!((GammaGrid::default().values()[19] - 0.95).abs() < 1e-12);
    assert!(GammaGrid::new(vec![0.5, 0.5]).is_err());
    assert!(GammaGrid::new(vec![0.2, 1.2]).is_err());
    let grid: GammaGrid = serde_json::from_str("[0.25, 0.5, 1.0]").unwrap();
    assert_eq!(grid.len(), 3);
    assert!(serde_json::from_str::<GammaGrid>("[0.5, 0.25]").is_err());
}

#[test]
fn gamma_search_root_has_grid_actions() {
    let m = line41();
    let config = SearchConfig {
        iterations: 200,
        ..SearchConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let choice = id_gamma_mcts_action(
        &Belief::unit(42, 20),
        &m,
        &config,
        params(0.3),
        &GammaGrid::default(),
        &mut rng,
    )
    .unwrap();
    assert_eq!(choice.search.root_actions, 20);
    assert!(GammaGrid::default().values().contains(&choice.gamma));
    let expected = id_tg_action(&Belief::unit(42, 20), &m, choice.gamma).unwrap();
    assert_eq!(choice.mask, expected);
}

#[test]
fn gamma_search_free_energy_picks_max_coverage() {
    let m = line41();
    let config = SearchConfig {
        iterations: 500,
        ..SearchConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = GammaGrid::default();
    let choice = id_gamma_mcts_action(
        &Belief::unit(42, 20),
        &m,
        &config,
        params(0.0),
        &grid,
        &mut rng,
    )
    .unwrap();
    assert_eq!(choice.mask.count_on(), 7);
}

#[test]
fn subset_search_single_support() {
    // Deterministic move to position 2.
    let mut rows = vec![vec![0.0; 5]; 5];
    rows[0][2] = 1.0;
    rows[1][2] = 1.0;
    rows[2][2] = 1.0;
    rows[3][2] = 1.0;
    rows[4][4] = 1.0;
    let m = TransitionModel::from_rows(rows).unwrap();
    let config = SearchConfig {
        iterations: 100,
        ..SearchConfig::default()
    };
    for (lambda, expect) in [
        (0.0, vec![2]),
        (0.5, vec![2]),
        (0.99, vec![2]),
        (1.0, vec![]),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let choice = id_mcts_action(
            &Belief::unit(5, 0),
            &m,
            &config,
            params(lambda),
            DEFAULT_SUBSET_CAP,
            SupportOverflow::Fail,
            &mut rng,
        )
        .unwrap();
        assert_eq!(choice.search.root_actions, 2);
        assert_eq!(
            choice.mask.on_positions().collect::<Vec<_>>(),
            expect,
            "lambda {lambda}"
        );
    }
}

#[test]
fn subset_search_on_line_has_128_actions() {
    let m = line41();
    let config = SearchConfig {
        iterations: 300,
        ..SearchConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let choice = id_mcts_action(
        &Belief::unit(42, 20),
        &m,
        &config,
        params(0.3),
        DEFAULT_SUBSET_CAP,
        SupportOverflow::Fail,
        &mut rng,
    )
    .unwrap();
    assert_eq!(choice.search.root_actions, 128);
    assert!(choice.mask.on_positions().all(|l| (17..=23).contains(&l)));
}

#[test]
fn subset_search_cap_overflow() {
    let m = build_grid_model(16, 16, 0.0, 2017).unwrap();
    let wide = spread(256, 13);
    let config = SearchConfig {
        iterations: 50,
        ..SearchConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let err = id_mcts_action(
        &wide,
        &m,
        &config,
        params(0.5),
        12,
        SupportOverflow::Fail,
        &mut rng,
    )
    .unwrap_err();
    assert!(matches!(err, PlanError::ActionExplosion { cap: 12, .. }));

    let choice = id_mcts_action(
        &wide,
        &m,
        &config,
        params(0.5),
        12,
        SupportOverflow::Truncate,
        &mut rng,
    )
    .unwrap();
    assert_eq!(choice.search.root_actions, 1 << 12);
}

#[test]
fn planners_are_reproducible() {
    let m = line41();
    let config = SearchConfig {
        iterations: 200,
        seed: 9,
        ..SearchConfig::default()
    };
    let run = || {
        let mut p =
            IdGammaMctsPlanner::new(m.clone(), params(0.4), config.clone(), GammaGrid::default())
                .unwrap();
        (0..3)
            .map(|_| p.next_action(&Belief::unit(42, 20)).unwrap().mask)
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

fn arb_belief(n: usize) -> impl Strategy<Value = Belief> {
    proptest::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |mut w| {
        let total: f64 = w.iter().sum();
        if total < 1e-3 {
            return None;
        }
        w.iter_mut().for_each(|x| *x /= total);
        w.push(0.0);
        Belief::new(w).ok()
    })
}

proptest! {
    #[test]
    fn top_gamma_covers_and_is_minimal(b in arb_belief(8), gamma in 0.0f64..=1.0) {
        let sel = top_gamma_selection(&b, gamma).unwrap();
        let mass: f64 = sel.iter().map(|&l| b.prob(l)).sum();
        prop_assert!(mass >= gamma - 1e-9 || sel.len() == b.support(0.0).count());
        if let Some((_, head)) = sel.split_last() {
            let before: f64 = head.iter().map(|&l| b.prob(l)).sum();
            prop_assert!(before < gamma);
        }
        for w in sel.windows(2) {
            prop_assert!(b.prob(w[0]) >= b.prob(w[1]));
        }
    }

    #[test]
    fn top_gamma_is_monotone(b in arb_belief(8), g1 in 0.0f64..=1.0, g2 in 0.0f64..=1.0) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let small = top_gamma_selection(&b, lo).unwrap();
        let large = top_gamma_selection(&b, hi).unwrap();
        prop_assert!(small.len() <= large.len());
        prop_assert_eq!(&large[..small.len()], &small[..]);
    }

    #[test]
    fn q_mdp_shrinks_with_lambda(b in arb_belief(8), l1 in 0.0f64..=1.0, l2 in 0.0f64..=1.0) {
        let m = identity(8);
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let a_lo = q_mdp_action(&b, &m, lo);
        let a_hi = q_mdp_action(&b, &m, hi);
        prop_assert!(a_hi.on_positions().all(|l| a_lo.is_on(l)));
    }
}

/// Beliefs reached from the centre of line41 after `k` consecutive misses.
fn spread_beliefs(m: &TransitionModel, count: usize) -> Vec<Belief> {
    let mut b = Belief::unit(42, 20);
    let mut out = Vec::new();
    for _ in 0..count {
        out.push(b.clone());
        b = crate::belief::predict(&b, m);
    }
    out
}

#[test]
fn gamma_search_powers_nothing_at_full_price() {
    // At lambda = 1 each sensor costs at least the miss it prevents.
    let m = line41();
    for (k, b) in spread_beliefs(&m, 10).iter().enumerate() {
        for seed in 0..3 {
            let config = SearchConfig {
                seed,
                ..SearchConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let choice =
                id_gamma_mcts_action(b, &m, &config, params(1.0), &GammaGrid::default(), &mut rng)
                    .unwrap();
            assert_eq!(choice.mask.count_on(), 0, "after {k} misses, seed {seed}");
        }
    }
}

#[test]
fn gamma_search_covers_point_mass_when_free() {
    let m = line41();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let choice = id_gamma_mcts_action(
            &Belief::unit(42, 20),
            &m,
            &SearchConfig::default(),
            params(0.0),
            &GammaGrid::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(choice.mask.count_on(), 7, "seed {seed}");
    }
}
