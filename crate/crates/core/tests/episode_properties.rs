//! Episode metrics agree with their own traces, for every planner family.

use idtrack_core::simbench::{run_episode, run_episode_traced, Algo, PlannerSpec, Scenario};
use idtrack_core::{CostParams, Observation, SearchConfig};
use proptest::prelude::*;

fn algo() -> impl Strategy<Value = Algo> {
    prop_oneof![Just(Algo::IdTg), Just(Algo::QMdp), Just(Algo::IdGammaMcts),]
}

fn spec(algo: Algo) -> PlannerSpec {
    PlannerSpec {
        search: SearchConfig {
            iterations: 60,
            ..SearchConfig::default()
        },
        ..PlannerSpec::new(algo)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_match_trace(
        algo in algo(),
        grid in any::<bool>(),
        lambda in 0.0..=1.0f64,
        seed in any::<u64>(),
        restart in any::<bool>(),
    ) {
        let scenario = Scenario::preset(if grid { "grid8" } else { "line41" })
            .unwrap()
            .with_restart(restart);
        let params = CostParams::with_lambda(lambda).unwrap();
        let n = scenario.n();
        let mut planner = spec(algo).build(scenario.model.clone(), params, seed).unwrap();
        let (metrics, trace) = run_episode_traced(&scenario, planner.as_mut(), params, seed).unwrap();

        prop_assert_eq!(metrics.periods, trace.len());
        prop_assert!(trace.len() <= scenario.horizon);
        let sensors: usize = trace.iter().map(|r| r.sensors_on.len()).sum();
        prop_assert_eq!(metrics.sensors_on_total, sensors);
        let misses = trace.iter().filter(|r| r.observation == Observation::Miss).count();
        prop_assert_eq!(metrics.untracked_periods, misses);
        prop_assert_eq!(metrics.restarts, trace.iter().filter(|r| r.restarted).count());
        prop_assert!(restart || metrics.restarts == 0);

        let mut weight = 1.0;
        let mut cost = 0.0;
        for (i, r) in trace.iter().enumerate() {
            prop_assert_eq!(r.period, i);
            if i > 0 {
                prop_assert_eq!(r.state, trace[i - 1].next_state);
            }
            let miss = f64::from(u8::from(r.observation == Observation::Miss));
            cost += weight * (miss + lambda * r.sensors_on.len() as f64);
            weight *= params.discount();
            let sum: f64 = r.belief.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            if let Observation::Tracked(l) = r.observation {
                prop_assert_eq!(l, r.next_state);
                prop_assert!(r.sensors_on.contains(&l));
            }
            prop_assert_eq!(r.observation == Observation::Exited, r.next_state == n);
        }
        prop_assert!((metrics.total_discounted_cost - cost).abs() < 1e-9);
        // Only the final period may report an exit.
        let exits = trace.iter().filter(|r| r.observation == Observation::Exited).count();
        prop_assert!(exits == 0 || (exits == 1 && trace.last().unwrap().observation == Observation::Exited));
        prop_assert!((0.0..=1.0).contains(&metrics.avg_tracking_error()));

        // Same seed, same metrics, with or without tracing.
        let mut again = spec(algo).build(scenario.model.clone(), params, seed).unwrap();
        prop_assert_eq!(run_episode(&scenario, again.as_mut(), params, seed).unwrap(), metrics);
    }
}
