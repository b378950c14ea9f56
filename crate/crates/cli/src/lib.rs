//! Command-line front end: simulation, analysis, validation and the live
//! game service.

pub mod protocol;
pub mod serve;

pub use protocol::{Envelope, MessageType, ProtocolError};
pub use serve::{serve_game, ServeOutcome};
