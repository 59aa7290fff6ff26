//! Protocol analyses and the one-time calibrations of the pump rate and the
//! Rabi amplitude spread.

use serde::{Deserialize, Serialize};

use super::engine::{run_protocol, SweepResult};
use super::protocol::{polarizing_sideband, ProtocolId, ProtocolSpec};
use crate::dynamics::{build_generator, propagate_segment, Dephasing, DriveSet, QuantumState, Rates, GM, GP};
use crate::ensemble::local_pump_rates;
use crate::error::{Error, Result};
use crate::fitting::{fit_with_guesses, FitData, FitModel, FitResult, ModelId};
use crate::params::RunConfig;
use crate::spin::ground_levels;

pub const RABI_DECAY_TARGET_US: f64 = 4.76;
pub const POLARIZATION_RISE_TARGET_US: f64 = 1270.0;

/// Damped-cosine fit of a Rabi sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiAnalysis {
    pub fit: FitResult,
    /// 100·(max − min)/max of the fitted oscillation, 100·2|A|/(C + |A|).
    pub contrast_percent: f64,
    pub decay_us: f64,
    pub frequency_mhz: f64,
}

fn observable(r: &SweepResult, noisy: bool) -> Result<FitData> {
    let y = if noisy { r.sampled_counts.clone() } else { r.mean_counts.clone() };
    FitData::new(r.values.clone(), y, r.sigma.clone())
}

/// Fit `rabi_damped_cosine` to a Rabi sweep.
pub fn analyze_rabi(r: &SweepResult, noisy: bool, rabi_guess_mhz: f64) -> Result<RabiAnalysis> {
    let data = observable(r, noisy)?;
    let n = data.len() as f64;
    let mean = data.y.iter().sum::<f64>() / n;
    let span = data.x.iter().cloned().fold(0.0, f64::max);
    let theta0 = [data.y[0] - mean, 0.5 * span.max(1e-3), rabi_guess_mhz, mean];
    let fit = fit_with_guesses(&FitModel::new(ModelId::RabiDampedCosine), &data, &theta0)?;
    let (a, c) = (fit.values[0].abs(), fit.values[3]);
    if !(c + a > 0.0) {
        return Err(Error::Numerical("Rabi fit has no positive maximum".into()));
    }
    Ok(RabiAnalysis {
        contrast_percent: 100.0 * 2.0 * a / (c + a),
        decay_us: fit.values[1].abs(),
        frequency_mhz: fit.values[2].abs(),
        fit,
    })
}

/// Saturating-exponential fit of the polarization contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationAnalysis {
    pub fit: FitResult,
    pub pump_times_us: Vec<f64>,
    pub contrast_percent: Vec<f64>,
    pub contrast_sigma: Vec<f64>,
    pub rise_us: f64,
    /// Fitted asymptotic contrast (percent).
    pub plateau_percent: f64,
}

/// Contrast 100·(S_π − S_noπ)/S_π versus pump time, fitted with `exp_rise`.
pub fn analyze_polarization(r: &SweepResult, noisy: bool) -> Result<PolarizationAnalysis> {
    let (c, s) = r.contrast_percent("no_pi", "pi", noisy)?;
    let data = FitData::new(r.values.clone(), c.clone(), s.iter().map(|v| v.max(1e-6)).collect())?;
    let top = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = r.values.iter().cloned().fold(0.0, f64::max);
    let fit = fit_with_guesses(&FitModel::new(ModelId::ExpRise), &data, &[top, 0.25 * span, 0.0])?;
    Ok(PolarizationAnalysis {
        rise_us: fit.values[1].abs(),
        plateau_percent: fit.values[0] + fit.values[2],
        pump_times_us: r.values.clone(),
        contrast_percent: c,
        contrast_sigma: s,
        fit,
    })
}

/// Outcome of a calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub parameter: String,
    pub value: f64,
    pub target: f64,
    pub achieved: f64,
    pub evaluations: usize,
}

/// Root of a monotone function by the Illinois variant of regula falsi.
/// The bracket [lo, hi] is widened by `widen` until the signs differ.
fn illinois(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    widen: impl Fn(f64, f64) -> (f64, f64),
    tol: f64,
    max_evals: usize,
) -> Result<(f64, usize)> {
    let mut evals = 2;
    let mut flo = f(lo)?;
    let mut fhi = f(hi)?;
    while flo.signum() == fhi.signum() {
        if evals >= max_evals {
            return Err(Error::Numerical(format!(
                "calibration target not bracketed in [{lo}, {hi}]"
            )));
        }
        let (a, b) = widen(lo, hi);
        if flo.abs() < fhi.abs() {
            lo = a;
            flo = f(lo)?;
        } else {
            hi = b;
            fhi = f(hi)?;
        }
        evals += 1;
    }
    let mut side = 0;
    loop {
        let x = (lo * fhi - hi * flo) / (fhi - flo);
        let fx = f(x)?;
        evals += 1;
        if fx.abs() < tol || evals >= max_evals {
            if fx.abs() >= tol {
                return Err(Error::Numerical(format!(
                    "calibration did not converge in {evals} evaluations (residual {fx:.3e})"
                )));
            }
            return Ok((x, evals));
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
}

fn noiseless(cfg: &RunConfig, id: ProtocolId) -> RunConfig {
    let mut c = cfg.clone();
    c.detection.shot_noise = false;
    let mut spec = ProtocolSpec::new(id);
    spec.settings = cfg.protocol.settings.clone();
    c.protocol = spec;
    c
}

/// Rabi analysis of the noiseless default sweep under `cfg`.
pub fn rabi_decay(cfg: &RunConfig) -> Result<RabiAnalysis> {
    let c = noiseless(cfg, ProtocolId::Rabi);
    analyze_rabi(&run_protocol(&c)?, false, c.defect.rabi_freq_mhz)
}

/// Polarization analysis of the noiseless default sweep under `cfg`.
pub fn polarization_rise(cfg: &RunConfig) -> Result<PolarizationAnalysis> {
    let c = noiseless(cfg, ProtocolId::PolarizationBuildup);
    analyze_polarization(&run_protocol(&c)?, false)
}

/// Amplitude spread σ_Ω/Ω for which the fitted Rabi decay equals `target_us`
/// (within 0.5%).
pub fn calibrate_amplitude_spread(cfg: &RunConfig, target_us: f64) -> Result<Calibration> {
    let mut achieved = f64::NAN;
    let f = |s: f64| -> Result<f64> {
        let mut c = cfg.clone();
        c.defect.rabi_amplitude_spread = s.max(0.0);
        let d = rabi_decay(&c)?.decay_us;
        achieved = d;
        Ok(d / target_us - 1.0)
    };
    let (value, evaluations) = illinois(f, 0.0, 0.05, |lo, hi| (lo, 2.0 * hi), 5e-3, 20)?;
    let mut c = cfg.clone();
    c.defect.rabi_amplitude_spread = value.max(0.0);
    achieved = rabi_decay(&c).map(|r| r.decay_us).unwrap_or(achieved);
    Ok(Calibration {
        parameter: "rabi_amplitude_spread".into(),
        value: value.max(0.0),
        target: target_us,
        achieved,
        evaluations: evaluations + 1,
    })
}

/// Pump rate for which the fitted polarization rise time equals `target_us`
/// (within 0.5%). Searched in log W.
pub fn calibrate_pump_rate(cfg: &RunConfig, target_us: f64) -> Result<Calibration> {
    let w0 = cfg.defect.pump_rate_per_us;
    let f = |lw: f64| -> Result<f64> {
        let mut c = cfg.clone();
        c.defect.pump_rate_per_us = lw.exp();
        Ok((polarization_rise(&c)?.rise_us / target_us).ln())
    };
    let (lw, evaluations) = illinois(
        f,
        (0.5 * w0).ln(),
        (2.0 * w0).ln(),
        |lo, hi| (lo - 1.0, hi + 1.0),
        5e-3,
        20,
    )?;
    let mut c = cfg.clone();
    c.defect.pump_rate_per_us = lw.exp();
    let achieved = polarization_rise(&c)?.rise_us;
    Ok(Calibration {
        parameter: "pump_rate_per_us".into(),
        value: lw.exp(),
        target: target_us,
        achieved,
        evaluations: evaluations + 1,
    })
}

/// Fraction of the ground population left in the unpumped sublevel(s) of the
/// laser-resonant class after pumping for `pump_us` from thermal equilibrium.
/// With a resolved sideband that is ms = +1; otherwise the ±1 pair.
pub fn ground_polarization(cfg: &RunConfig, pump_us: f64) -> Result<f64> {
    let p = &cfg.defect;
    let rates = Rates::new(p, cfg.temperature_k, Dephasing::None)?;
    let levels = ground_levels(p, cfg.field_gauss, cfg.zeeman_convention);
    let sb = polarizing_sideband(&levels, p.homog_fwhm_mhz);
    let w = p.pump_rate_per_us;
    let pump = local_pump_rates(0.0, &levels.ground(), w, sb.map(|s| (s, w)), p.homog_fwhm_mhz);
    let g = build_generator(&rates, &DriveSet::pump(pump, pump_us), &[0.0; 3])?;
    let mut s = propagate_segment(&QuantumState::thermal(), &g, pump_us);
    // let the excited state empty before reading the ground populations
    let dark = build_generator(&rates, &DriveSet::dark(1.0), &[0.0; 3])?;
    s = propagate_segment(&s, &dark, 20.0 * p.optical_lifetime_us);
    let pop = s.populations();
    let ground = pop[0] + pop[1] + pop[2];
    let kept = if sb.is_some() { pop[GP] } else { pop[GM] + pop[GP] };
    Ok(kept / ground)
}
