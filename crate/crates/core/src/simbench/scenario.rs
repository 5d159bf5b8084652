use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::model::{Topology, TransitionModel};

use super::SimError;

/// Controller's belief at period 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialBelief {
    /// The start position is known.
    #[default]
    Known,
    /// Uniform over all positions; the intruder still starts at `start`.
    Uniform,
}

/// Everything needed to simulate one tracking episode.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: Arc<TransitionModel>,
    pub start: usize,
    pub horizon: usize,
    pub restart_threshold: usize,
    pub restart_enabled: bool,
    pub initial: InitialBelief,
    /// Hand the planner the true position after every period
    /// (observation-after-control).
    pub reveal_state: bool,
    /// Intruder dynamics when they differ from the controller's model.
    pub environment: Option<Arc<TransitionModel>>,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        model: TransitionModel,
        start: usize,
        horizon: usize,
        restart_threshold: usize,
    ) -> Result<Self, SimError> {
        let scenario = Self {
            name: name.into(),
            model: Arc::new(model),
            start,
            horizon,
            restart_threshold,
            restart_enabled: true,
            initial: InitialBelief::Known,
            reveal_state: false,
            environment: None,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.start >= self.model.n() {
            return Err(SimError::InvalidScenario(format!(
                "start {} outside {} positions",
                self.start,
                self.model.n()
            )));
        }
        if let Some(env) = &self.environment {
            if env.n() != self.model.n() {
                return Err(SimError::InvalidScenario(
                    "environment model size differs from the controller's".into(),
                ));
            }
        }
        if self.horizon == 0 {
            return Err(SimError::InvalidScenario("horizon must be >= 1".into()));
        }
        if self.restart_threshold == 0 {
            return Err(SimError::InvalidScenario(
                "restart threshold must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    /// Model the intruder actually moves by.
    pub fn environment(&self) -> &TransitionModel {
        self.environment.as_deref().unwrap_or(&self.model)
    }

    pub fn initial_belief(&self) -> Belief {
        match self.initial {
            InitialBelief::Known => Belief::unit(self.model.num_states(), self.start),
            InitialBelief::Uniform => Belief::uniform_positions(self.model.num_states()),
        }
    }

    pub fn with_restart(mut self, enabled: bool) -> Self {
        self.restart_enabled = enabled;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_reveal_state(mut self, reveal: bool) -> Self {
        self.reveal_state = reveal;
        self
    }

    /// One of the built-in settings: `line41`, `grid8`, `grid16`.
    pub fn preset(name: &str) -> Result<Self, SimError> {
        ScenarioFile::preset(name)?.into_scenario()
    }

    /// A preset name, or else a path to a scenario JSON file.
    pub fn load(spec: &str) -> Result<Self, SimError> {
        match ScenarioFile::preset(spec) {
            Ok(file) => file.into_scenario(),
            Err(_) => ScenarioFile::read(spec)?.into_scenario(),
        }
    }
}

pub const DEFAULT_HORIZON: usize = 30;
const GRID_PRESET_SEED: u64 = 2017;

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

fn default_true() -> bool {
    true
}

/// On-disk scenario description.
///
/// ```json
/// {"topology": {"kind": "line", "n": 41, "max_step": 3}, "exit_prob": 0.0, "seed": 7}
/// ```
///
/// Missing optional fields default to: start at the centre, horizon 30,
/// restart threshold 14 on lines and 20 on grids, restart enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub topology: Topology,
    #[serde(default)]
    pub exit_prob: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart_threshold: Option<usize>,
    #[serde(default = "default_true")]
    pub restart_enabled: bool,
    #[serde(default)]
    pub initial_belief: InitialBelief,
}

impl ScenarioFile {
    fn new(name: &str, topology: Topology, seed: u64, restart_threshold: usize) -> Self {
        Self {
            topology,
            exit_prob: 0.0,
            seed,
            name: Some(name.to_string()),
            start: None,
            horizon: DEFAULT_HORIZON,
            restart_threshold: Some(restart_threshold),
            restart_enabled: true,
            initial_belief: InitialBelief::Known,
        }
    }

    pub fn preset(name: &str) -> Result<Self, SimError> {
        match name {
            "line41" => Ok(Self::new(
                name,
                Topology::Line {
                    n: 41,
                    max_step: 3,
                    kernel: None,
                },
                0,
                14,
            )),
            "grid8" => Ok(Self::new(
                name,
                Topology::Grid { rows: 8, cols: 8 },
                GRID_PRESET_SEED,
                20,
            )),
            "grid16" => Ok(Self::new(
                name,
                Topology::Grid { rows: 16, cols: 16 },
                GRID_PRESET_SEED,
                20,
            )),
            other => Err(SimError::InvalidScenario(format!("unknown preset {other}"))),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn into_scenario(self) -> Result<Scenario, SimError> {
        let model = self.topology.build(self.exit_prob, self.seed)?;
        let default_threshold = match self.topology {
            Topology::Line { .. } => 14,
            Topology::Grid { .. } => 20,
        };
        let name = self.name.clone().unwrap_or_else(|| match &self.topology {
            Topology::Line { n, .. } => format!("line{n}"),
            Topology::Grid { rows, cols } => format!("grid{rows}x{cols}"),
        });
        let mut scenario = Scenario::new(
            name,
            model,
            self.start.unwrap_or_else(|| self.topology.center()),
            self.horizon,
            self.restart_threshold.unwrap_or(default_threshold),
        )?;
        scenario.restart_enabled = self.restart_enabled;
        scenario.initial = self.initial_belief;
        Ok(scenario)
    }
}
