//! Live teleoperation: runs one trial at 200 Hz wall-clock, streams state to a
//! browser cockpit over a WebSocket and latches the operator's handle input.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, InputFrame, ServerMessage, StateFrame, SUBPROTOCOL};
pub use server::{serve_trial, ServerConfig, ServerHandle, Stats};
pub use session::{record_live_trial, Session, SessionConfig, TeleopError};
