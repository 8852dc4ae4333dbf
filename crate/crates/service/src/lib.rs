//! Websocket service, replay harness and CLI plumbing for chatlearn.

pub mod config;
pub mod dispatch;
pub mod protocol;
pub mod replay;
pub mod server;

pub use dispatch::{Dispatcher, Joined, Outbound, Role};
pub use protocol::{FrameType, ProtocolError, WireFrame};
pub use replay::{replay, ReplayError, ReplayOutput, Step, TranscriptScript};
