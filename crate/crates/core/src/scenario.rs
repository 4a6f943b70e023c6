//! Scenario files: a map, a start pose, a scripted action list and optional
//! parameter overrides, written as TOML.
//!
//! ```toml
//! map = "fig6.map"            # relative to the scenario file
//! start = { x = 5, y = 5, heading = 6 }
//! actions = ["TurnCCW", "Right", "Stay"]
//! seed = 0                    # optional
//! mode = "deterministic"      # optional
//!
//! [params]                    # optional
//! gamma = 0.95
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ParamOverrides;
use crate::engine::{parse_actions, EngineError, StepMode};
use crate::gridworld::{Heading, Pose};
use crate::planner::Action;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid start heading {0}; expected an index 0..8")]
    Heading(u8),
    #[error(transparent)]
    Action(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub x: usize,
    pub y: usize,
    pub heading: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub map: PathBuf,
    pub start: StartPose,
    #[serde(default)]
    pub actions: Vec<String>,
    #[serde(default)]
    pub params: ParamOverrides,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: StepMode,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.start_pose()?;
        scenario.actions()?;
        Ok(scenario)
    }

    /// Loads a scenario and resolves its map path against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_owned(), source })?;
        let mut scenario = Self::parse(&text)?;
        if scenario.map.is_relative() {
            if let Some(dir) = path.parent() {
                scenario.map = dir.join(&scenario.map);
            }
        }
        Ok(scenario)
    }

    pub fn start_pose(&self) -> Result<Pose, ScenarioError> {
        let heading = Heading::new(self.start.heading).ok_or(ScenarioError::Heading(self.start.heading))?;
        Ok(Pose::new(self.start.x, self.start.y, heading))
    }

    pub fn actions(&self) -> Result<Vec<Action>, ScenarioError> {
        Ok(parse_actions(&self.actions)?)
    }
}
