//! Goal-desire estimation for an agent moving on an occupancy grid.
//!
//! Every goal gets its own MDP hypothesis ("the agent wants goal i"),
//! solved offline by value iteration. Online, each action is scored against
//! every hypothesis and the scores drive an HMM whose hidden states are the
//! agent's desires.

pub mod config;
pub mod engine;
pub mod gridworld;
pub mod intent;
pub mod pathing;
pub mod planner;
pub mod protocol;
pub mod scenario;
pub mod tables;
pub mod trace;

pub use config::{ModelConfig, ParamOverrides};
pub use engine::{precompute, run_actions, Session, StepMode, StepRecord};
pub use gridworld::{compute_visibility, parse_map, Cell, GridMap, Heading, MapError, Pose, VisibilityField};
pub use intent::{DesireFilter, DesireState, FilterKind, HmmParams, ObservationVector};
pub use pathing::{modified_astar, path_orientation, Path, PathOrientation};
pub use planner::{Action, Planner, PlannerParams, RewardFloor, RewardTable, TransitionRow, ValueTable};
pub use scenario::Scenario;
pub use trace::{Trace, TraceHeader};
