//! Phenomenological echo envelope and spin-lattice rate models.

use std::f64::consts::PI;

use super::protocol::EchoTau;
use crate::error::Result;
use crate::params::{DefectParams, T1Model};

/// e^{−(t/T2)^n}·∏(1 − K_a sin²(π ω_a τ)) for free evolution `t_us`.
pub fn echo_envelope(t_us: f64, p: &DefectParams, tau: EchoTau) -> f64 {
    let t = t_us.max(0.0);
    let tau_us = match tau {
        EchoTau::Half => 0.5 * t,
        EchoTau::Full => t,
    };
    let mut f = (-(t / p.t2_us).powf(p.echo_n)).exp();
    for c in &p.eseem_components {
        let s = (PI * c.frequency_khz * 1e-3 * tau_us).sin();
        f *= 1.0 - c.amplitude * s * s;
    }
    f
}

/// 1/T1 in 1/s.
pub fn t1_rate_model(temperature_k: f64, model: &T1Model) -> Result<f64> {
    model.rate_per_s(temperature_k)
}
