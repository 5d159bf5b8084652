//! Shared fixtures for the planning benchmarks.

use std::sync::Arc;

use idtrack_core::simbench::Scenario;
use idtrack_core::{predict, Belief, TransitionModel};

/// A preset's model together with a belief spread by a few unobserved moves.
pub struct Fixture {
    pub model: Arc<TransitionModel>,
    pub belief: Belief,
}

impl Fixture {
    pub fn new(preset: &str, spread_steps: usize) -> Self {
        let scenario = Scenario::preset(preset).expect("known preset");
        let mut belief = scenario.initial_belief();
        for _ in 0..spread_steps {
            belief = predict(&belief, &scenario.model);
        }
        Self {
            model: scenario.model,
            belief,
        }
    }
}
