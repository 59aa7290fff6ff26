//! Optical spin dynamics of chromium ensembles in silicon carbide: a
//! four-level Lindblad model, ensemble spectra, pulse protocols, photon
//! counting and the curve fits used to analyze them.

pub mod detection;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod fitting;
pub mod linalg;
pub mod params;
pub mod quadrature;
pub mod sequences;
pub mod spin;
pub mod suite;

pub use error::{Error, Result};
