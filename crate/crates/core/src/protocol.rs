//! Live-session message protocol, independent of the transport.
//!
//! Every message is a JSON object with a `kind` field. On connect the server
//! sends `hello` then `init`. For each accepted `action` it replies with
//! exactly one `state` followed by one `estimate`. A `reset` returns the
//! agent to its start pose and the desires to their initial distribution,
//! answered by a fresh `init`. Malformed input yields an `error` and the
//! session carries on; a client `hello` with a foreign version yields a fatal
//! `error` and the connection is closed.
//!
//! Client → server:
//!
//! ```json
//! {"kind":"hello","version":"intentgrid/1"}
//! {"kind":"action","action":"Up"}
//! {"kind":"reset"}
//! ```

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::engine::{Overlay, Session, StepRecord};
use crate::gridworld::{Cell, Pose};
use crate::planner::Action;

pub const PROTOCOL_VERSION: &str = "intentgrid/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    Hello { version: String },
    Action { action: String },
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum ServerMessage {
    Hello {
        version: String,
        map_hash: String,
    },
    Init {
        width: usize,
        height: usize,
        /// Canonical map rows: `#` occupied, `.` free, digits are goals.
        rows: Vec<String>,
        goals: Vec<Cell>,
        /// Labels of the desire states in estimate order.
        states: Vec<String>,
        pose: Pose,
        probabilities: Vec<f64>,
        overlay: Overlay,
        config: ModelConfig,
    },
    State {
        step: usize,
        pose: Pose,
        intended: Action,
        realized: Action,
        overlay: Overlay,
    },
    Estimate {
        step: usize,
        probabilities: Vec<f64>,
        phi: f64,
        observation: Vec<f64>,
        consistent: Vec<bool>,
        most_likely: String,
    },
    Error {
        message: String,
        fatal: bool,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

/// Outcome of handling one client message.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Reply {
    pub messages: Vec<ServerMessage>,
    /// The step accepted by this message, if any.
    pub record: Option<StepRecord>,
    pub reset: bool,
    pub close: bool,
}

/// Protocol state machine around one engine [`Session`].
#[derive(Debug)]
pub struct ProtocolSession {
    session: Session,
}

impl ProtocolSession {
    pub fn new(session: Session) -> Self {
        Self { session }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Messages sent as soon as the connection opens.
    pub fn open(&self) -> Vec<ServerMessage> {
        vec![
            ServerMessage::Hello { version: PROTOCOL_VERSION.into(), map_hash: self.session.map().hash() },
            self.init(),
        ]
    }

    fn init(&self) -> ServerMessage {
        let map = self.session.map();
        let k = map.goal_count();
        ServerMessage::Init {
            width: map.width(),
            height: map.height(),
            rows: map.rows(),
            goals: map.goals().to_vec(),
            states: crate::intent::DesireState::all(k).iter().map(ToString::to_string).collect(),
            pose: self.session.pose(),
            probabilities: self.session.estimate().to_vec(),
            overlay: self.session.overlay(),
            config: self.session.config(),
        }
    }

    fn error(message: impl Into<String>, fatal: bool) -> Reply {
        Reply {
            messages: vec![ServerMessage::Error { message: message.into(), fatal }],
            close: fatal,
            ..Reply::default()
        }
    }

    /// Handles one raw text frame.
    pub fn handle_text(&mut self, text: &str) -> Reply {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => Self::error(format!("malformed message: {e}"), false),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Reply {
        match msg {
            ClientMessage::Hello { version } if version == PROTOCOL_VERSION => Reply::default(),
            ClientMessage::Hello { version } => {
                Self::error(format!("protocol version mismatch: client {version}, server {PROTOCOL_VERSION}"), true)
            }
            ClientMessage::Reset => {
                self.session.reset();
                Reply { messages: vec![self.init()], reset: true, ..Reply::default() }
            }
            ClientMessage::Action { action } => {
                let action: Action = match action.parse() {
                    Ok(a) => a,
                    Err(e) => return Self::error(e.to_string(), false),
                };
                let record = match self.session.step(action) {
                    Ok(r) => r.clone(),
                    Err(e) => return Self::error(e.to_string(), false),
                };
                let k = self.session.map().goal_count();
                let most_likely = record
                    .best_path
                    .last()
                    .map(ToString::to_string)
                    .unwrap_or_else(|| crate::intent::DesireState::from_index(k, k).to_string());
                let messages = vec![
                    ServerMessage::State {
                        step: record.step,
                        pose: record.pose_after,
                        intended: record.intended,
                        realized: record.realized,
                        overlay: self.session.overlay(),
                    },
                    ServerMessage::Estimate {
                        step: record.step,
                        probabilities: record.estimate.clone(),
                        phi: record.phi,
                        observation: record.observation.clone(),
                        consistent: record.consistent.clone(),
                        most_likely,
                    },
                ];
                Reply { messages, record: Some(record), ..Reply::default() }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StepMode;
    use crate::gridworld::{parse_map, Heading};
    use crate::intent::HmmParams;
    use crate::planner::{Planner, PlannerParams};
    use std::sync::Arc;

    fn proto() -> ProtocolSession {
        let map = parse_map("....1\n.....\n.#...\n2....").unwrap();
        let planner = Arc::new(Planner::solve(&map, &PlannerParams::default()).unwrap());
        let session =
            Session::new(planner, HmmParams::default(), Pose::new(2, 1, Heading::NORTH), StepMode::Deterministic, 0)
                .unwrap();
        ProtocolSession::new(session)
    }

    #[test]
    fn handshake_carries_grid_and_pose() {
        let p = proto();
        let open = p.open();
        assert!(matches!(&open[0], ServerMessage::Hello { version, .. } if version == PROTOCOL_VERSION));
        match &open[1] {
            ServerMessage::Init { rows, pose, probabilities, states, .. } => {
                assert_eq!(rows.len(), 4);
                assert_eq!(*pose, Pose::new(2, 1, Heading::NORTH));
                assert_eq!(probabilities, &vec![0.0, 0.0, 1.0, 0.0]);
                assert_eq!(states, &["G1", "G2", "G?", "Gx"]);
            }
            other => panic!("expected init, got {other:?}"),
        }
    }

    #[test]
    fn action_yields_state_then_estimate() {
        let mut p = proto();
        let reply = p.handle_text(r#"{"kind":"action","action":"Up"}"#);
        assert_eq!(reply.messages.len(), 2);
        match (&reply.messages[0], &reply.messages[1]) {
            (ServerMessage::State { pose, step: 1, .. }, ServerMessage::Estimate { probabilities, step: 1, .. }) => {
                assert_eq!(pose.y, 0);
                assert_eq!(probabilities.len(), 4);
                assert!((probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            other => panic!("unexpected reply {other:?}"),
        }
    }

    #[test]
    fn malformed_input_is_not_fatal() {
        let mut p = proto();
        for bad in ["nonsense", r#"{"kind":"action","action":"Fly"}"#, r#"{"kind":"dance"}"#] {
            let reply = p.handle_text(bad);
            assert!(!reply.close);
            assert!(matches!(&reply.messages[0], ServerMessage::Error { fatal: false, .. }));
        }
        assert_eq!(p.handle_text(r#"{"kind":"action","action":"R"}"#).messages.len(), 2);
    }

    #[test]
    fn version_mismatch_closes() {
        let mut p = proto();
        assert!(p.handle_text(r#"{"kind":"hello","version":"intentgrid/1"}"#).messages.is_empty());
        let reply = p.handle_text(r#"{"kind":"hello","version":"intentgrid/0"}"#);
        assert!(reply.close);
        assert!(matches!(&reply.messages[0], ServerMessage::Error { fatal: true, .. }));
    }

    #[test]
    fn reset_restores_start() {
        let mut p = proto();
        p.handle_text(r#"{"kind":"action","action":"Up"}"#);
        let reply = p.handle_text(r#"{"kind":"reset"}"#);
        assert!(reply.reset);
        match &reply.messages[0] {
            ServerMessage::Init { pose, probabilities, .. } => {
                assert_eq!(*pose, Pose::new(2, 1, Heading::NORTH));
                assert_eq!(probabilities, &vec![0.0, 0.0, 1.0, 0.0]);
            }
            other => panic!("expected init, got {other:?}"),
        }
        assert!(p.session().history().is_empty());
    }
}
