//! Pulse sequences, protocol simulation and the studies built on them.

mod calibrate;
mod engine;
mod envelope;
mod protocol;
mod t1study;

pub use calibrate::*;
pub use engine::*;
pub use envelope::*;
pub use protocol::*;
pub use t1study::*;
