//! Wire messages on the `/trial` socket. Every message is one JSON text frame
//! with a `type` tag; field names are part of the versioned schema.

use hapdrive_core::experiment::Condition;
use hapdrive_core::vehicle::CarState;
use serde::{Deserialize, Serialize};

/// WebSocket subprotocol; bump on any schema change.
pub const SUBPROTOCOL: &str = "hapdrive-trial.v1";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl From<CarState<f64>> for Pose {
    fn from(s: CarState<f64>) -> Self {
        Self {
            x: s.x,
            y: s.y,
            phi: s.phi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PauseReason {
    Requested,
    StaleInput,
    ClientDisconnected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "phase", content = "reason")]
pub enum Phase {
    Waiting,
    Running,
    Paused(PauseReason),
    Finished,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    /// Increments on every reset; ticks restart at zero.
    pub session: u32,
    pub tick: usize,
    /// s
    pub time: f64,
    pub lead: Pose,
    pub rear: Pose,
    /// Normalized `[-1, 1]`.
    pub handle_position: f64,
    /// N, positive pushes the handle left.
    pub feedback_force: f64,
    pub condition: Condition,
    #[serde(flatten)]
    pub phase: Phase,
    /// Layout is `place_obstacles(track, obstacle_seed)`; positions are at `/layout`.
    pub obstacle_seed: u64,
    /// Fraction of the trial distance covered.
    pub lap_progress: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputFrame {
    /// Client clock, ms; informational only.
    pub client_time: f64,
    /// Normalized handle target in `[-1, 1]`.
    pub target: f64,
    #[serde(default)]
    pub token: Option<String>,
}

impl InputFrame {
    pub fn is_valid(&self) -> bool {
        (-1.0..=1.0).contains(&self.target)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    Start,
    Pause,
    Reset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlFrame {
    pub action: ControlAction,
    #[serde(default)]
    pub token: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndFrame {
    pub session: u32,
    pub tick: usize,
    pub reason: String,
    pub times_off_road: Option<usize>,
    pub steering_jerk: Option<f64>,
    pub max_feedback_force: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ServerMessage {
    State(StateFrame),
    End(EndFrame),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ClientMessage {
    Input(InputFrame),
    Control(ControlFrame),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_use_the_documented_names() {
        let m: ClientMessage = serde_json::from_str(
            r#"{"type":"input","client_time":12.5,"target":-0.25,"token":"t"}"#,
        )
        .unwrap();
        assert_eq!(
            m,
            ClientMessage::Input(InputFrame {
                client_time: 12.5,
                target: -0.25,
                token: Some("t".into())
            })
        );
        let c: ClientMessage =
            serde_json::from_str(r#"{"type":"control","action":"reset"}"#).unwrap();
        assert!(matches!(
            c,
            ClientMessage::Control(ControlFrame {
                action: ControlAction::Reset,
                ..
            })
        ));
        let f = StateFrame {
            session: 0,
            tick: 4,
            time: 0.02,
            lead: Pose {
                x: 1.0,
                y: 0.0,
                phi: 0.0,
            },
            rear: Pose {
                x: 0.0,
                y: 0.0,
                phi: 0.0,
            },
            handle_position: 0.0,
            feedback_force: -7.0,
            condition: Condition::new(10.0, 500.0).unwrap(),
            phase: Phase::Paused(PauseReason::StaleInput),
            obstacle_seed: 3,
            lap_progress: 0.1,
        };
        let v: serde_json::Value = serde_json::to_value(ServerMessage::State(f.clone())).unwrap();
        assert_eq!(v["type"], "state");
        assert_eq!(v["phase"], "paused");
        assert_eq!(v["reason"], "stale_input");
        assert_eq!(v["condition"]["Kp"], 500.0);
        let back: ServerMessage = serde_json::from_value(v).unwrap();
        assert_eq!(back, ServerMessage::State(f));
    }

    #[test]
    fn input_range() {
        let f = |target| InputFrame {
            client_time: 0.0,
            target,
            token: None,
        };
        assert!(f(1.0).is_valid() && f(-1.0).is_valid() && f(0.0).is_valid());
        assert!(!f(1.01).is_valid() && !f(f64::NAN).is_valid());
    }
}
