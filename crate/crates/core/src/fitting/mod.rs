//! Nonlinear least squares and the model library.

mod guess;
mod lm;
mod models;
mod roundtrip;

pub use guess::*;
pub use lm::*;
pub use models::*;
pub use roundtrip::*;
