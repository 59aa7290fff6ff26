//! Spin-lattice relaxation versus temperature: per-temperature inversion
//! recovery fits, then Orbach and Raman fits of the rates.

use serde::{Deserialize, Serialize};

use super::engine::run_protocol;
use super::protocol::{ProtocolId, ProtocolSpec, SweepGrid};
use crate::error::{Error, Result};
use crate::fitting::{compare_models, fit_with_guesses, FitData, FitModel, FitResult, ModelId, Ranked};
use crate::params::{RunConfig, CONSTANTS};

/// Study settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1StudySettings {
    pub temperatures_k: Vec<f64>,
    /// Wait grid spans this many model T1 at each temperature.
    pub span_t1: f64,
    pub points: usize,
    /// Repetitions per sweep point.
    pub repetitions: u64,
    pub shot_noise: bool,
    /// Fixed Raman exponents tried.
    pub raman_exponents: Vec<f64>,
}

impl Default for T1StudySettings {
    fn default() -> Self {
        T1StudySettings {
            temperatures_k: (0..6).map(|i| 15.0 + 3.0 * i as f64).collect(),
            span_t1: 5.0,
            points: 25,
            repetitions: 100_000,
            shot_noise: true,
            raman_exponents: vec![3.0, 5.0, 7.0, 9.0],
        }
    }
}

/// T1 at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Point {
    pub temperature_k: f64,
    /// T1 of the generating model.
    pub model_t1_us: f64,
    pub t1_us: f64,
    pub t1_sigma_us: f64,
    pub fit: FitResult,
}

/// Per-temperature T1 values and the rate-model fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Study {
    pub points: Vec<T1Point>,
    /// Orbach first, then Raman in the order of `raman_exponents`.
    pub rate_fits: Vec<FitResult>,
    pub ranking: Vec<Ranked>,
}

impl T1Study {
    pub fn orbach(&self) -> &FitResult {
        &self.rate_fits[0]
    }

    /// Raman fit with exponent `n`, if it was tried.
    pub fn raman(&self, n: f64) -> Option<&FitResult> {
        self.rate_fits[1..].iter().find(|f| f.values[2] == n)
    }
}

/// Run the inversion-recovery sweep at `temperature_k` and fit an exponential
/// to the π − 2π difference.
pub fn t1_point(cfg: &RunConfig, temperature_k: f64, s: &T1StudySettings, seed: u64) -> Result<T1Point> {
    let mut c = cfg.clone();
    c.temperature_k = temperature_k;
    c.detection.repetitions = s.repetitions;
    c.detection.shot_noise = s.shot_noise;
    c.detection.rng_seed = seed;
    let t1 = c.defect.t1_model.t1_us(temperature_k)?;
    let mut spec = ProtocolSpec::new(ProtocolId::T1Inversion).with_sweep(SweepGrid::linear(0.0, s.span_t1 * t1, s.points));
    spec.settings = cfg.protocol.settings.clone();
    c.protocol = spec;
    let r = run_protocol(&c)?;
    let y = if s.shot_noise { r.sampled_counts.clone() } else { r.mean_counts.clone() };
    let data = FitData::new(r.values.clone(), y, r.sigma.clone())?;
    let fit = fit_with_guesses(&FitModel::new(ModelId::ExpDecay), &data, &[data.y[0], t1, 0.0])?;
    Ok(T1Point {
        temperature_k,
        model_t1_us: t1,
        t1_us: fit.values[1],
        t1_sigma_us: fit.errors[1],
        fit,
    })
}

/// Fit Orbach and fixed-exponent Raman models to rates 1/T1 (1/s) weighted
/// by the propagated T1 errors, and rank them.
pub fn fit_rate_models(points: &[T1Point], raman_exponents: &[f64]) -> Result<(Vec<FitResult>, Vec<Ranked>)> {
    let x: Vec<f64> = points.iter().map(|p| p.temperature_k).collect();
    let rate: Vec<f64> = points.iter().map(|p| 1e6 / p.t1_us).collect();
    let sigma: Vec<f64> = points.iter().map(|p| 1e6 * p.t1_sigma_us / (p.t1_us * p.t1_us)).collect();
    if rate.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Data("non-positive T1 in the temperature series".into()));
    }
    let data = FitData::new(x, rate.clone(), sigma)?;
    let mut fits = Vec::new();
    // Orbach start from the two end points
    let (t0, t1) = (data.x[0], data.x[data.len() - 1]);
    let (r0, r1) = (rate[0], rate[rate.len() - 1]);
    let e = CONSTANTS.boltzmann_mev * (r1 / r0).ln() / (1.0 / t0 - 1.0 / t1);
    let a = r0 * (e / (CONSTANTS.boltzmann_mev * t0)).exp();
    fits.push(fit_with_guesses(&FitModel::new(ModelId::Orbach), &data, &[a, e])?);
    for &n in raman_exponents {
        let dt = 0.2 * t0;
        let a = r0 / ((t0 - dt) / crate::params::RAMAN_REFERENCE_K).powf(n);
        fits.push(fit_with_guesses(&FitModel::new(ModelId::Raman), &data, &[a, dt, n])?);
    }
    let ranking = compare_models(&fits)?;
    Ok((fits, ranking))
}

/// Full study at every temperature of `s`.
pub fn t1_temperature_study(cfg: &RunConfig, s: &T1StudySettings, seed: u64) -> Result<T1Study> {
    let points = s
        .temperatures_k
        .iter()
        .enumerate()
        .map(|(i, &t)| t1_point(cfg, t, s, crate::detection::derive_seed(seed, 0x71, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let (rate_fits, ranking) = fit_rate_models(&points, &s.raman_exponents)?;
    Ok(T1Study {
        points,
        rate_fits,
        ranking,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_study_recovers_t1() {
        let cfg = RunConfig::default();
        let s = T1StudySettings {
            shot_noise: false,
            ..Default::default()
        };
        let st = t1_temperature_study(&cfg, &s, 1).unwrap();
        for p in &st.points {
            assert!((p.t1_us / p.model_t1_us - 1.0).abs() < 1e-3, "{} {}", p.t1_us, p.model_t1_us);
        }
        let raman9 = st.raman(9.0).unwrap();
        assert!(raman9.reduced_chi2 < st.orbach().reduced_chi2);
        assert!((raman9.values[1] - 3.2).abs() < 0.05, "{:?}", raman9.values);
    }
}
