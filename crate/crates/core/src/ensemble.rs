//! Inhomogeneous ensembles: PLE lineshape, spectral hole recovery, ODMR and
//! the two-tone/microwave recovery map.
//!
//! Continuous-wave signals are steady-state emission rates Γ·ρ_ee summed over
//! optical classes. A class is a homogeneous packet whose g0 transition sits
//! δ away from the primary laser. Only the class group near the primary tone
//! is simulated: the primary tone pumps ms = 0 and the sideband pumps ±1
//! (see [`local_pump_rates`]). Classes where the primary meets ±1 sit a
//! zero-field splitting away and only add a constant background.

use serde::Serialize;
use std::f64::consts::PI;

use crate::dynamics::{
    build_generator, lorentzian_unit, steady_state_or_propagate, Dephasing, DriveSet, MwDrive,
    QuantumState, Rates, Transition,
};
use crate::error::{Error, Result};
use crate::params::{DefectParams, RunConfig, ZeemanConvention};
use crate::quadrature::{gauss_legendre, lorentz_mapped_nodes, Node, SpinDistribution};
use crate::spin::{ground_levels, LevelDiagram};

/// Ensemble description used by the spectra.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSpec {
    pub fwhm_ms0_ghz: f64,
    pub fwhm_ms1_ghz: f64,
    /// Separation of the two PLE manifolds (MHz).
    pub splitting_mhz: f64,
    pub spin_fwhm_lorentz: f64,
    pub spin_fwhm_gauss: f64,
    pub optical_nodes: usize,
    pub monte_carlo: bool,
    pub monte_carlo_samples: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn from_params(p: &DefectParams) -> Self {
        let d = SpinDistribution::from_params(p);
        EnsembleSpec {
            fwhm_ms0_ghz: p.inhom_fwhm_ms0_ghz,
            fwhm_ms1_ghz: p.inhom_fwhm_ms1_ghz,
            splitting_mhz: p.zero_field_splitting_mhz,
            spin_fwhm_lorentz: d.fwhm_lorentz,
            spin_fwhm_gauss: d.fwhm_gauss,
            optical_nodes: 64,
            monte_carlo: false,
            monte_carlo_samples: 512,
            seed: crate::params::DEFAULT_SEED,
        }
    }

    pub fn from_config(cfg: &RunConfig) -> Self {
        EnsembleSpec {
            optical_nodes: cfg.ensemble.optical_nodes,
            monte_carlo: cfg.ensemble.monte_carlo,
            monte_carlo_samples: cfg.ensemble.monte_carlo_samples,
            seed: cfg.ensemble.monte_carlo_seed,
            ..Self::from_params(&cfg.defect)
        }
    }

    pub fn spin(&self) -> SpinDistribution {
        SpinDistribution {
            fwhm_lorentz: self.spin_fwhm_lorentz,
            fwhm_gauss: self.spin_fwhm_gauss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_ms0_ghz > 0.0 && self.fwhm_ms1_ghz > 0.0 && self.spin().fwhm() > 0.0) {
            return Err(Error::Config("ensemble widths must be positive".into()));
        }
        let n = if self.monte_carlo {
            self.monte_carlo_samples
        } else {
            self.optical_nodes
        };
        if n < 16 {
            return Err(Error::Config(format!(
                "ensemble needs at least 16 nodes, got {n}"
            )));
        }
        Ok(())
    }
}

/// Signal versus a frequency axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Spectrum {
    fn noiseless(axis: Vec<f64>, values: Vec<f64>) -> Self {
        let sigma = vec![0.0; values.len()];
        Spectrum {
            axis,
            values,
            sigma,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("axis,value,sigma\n");
        for i in 0..self.axis.len() {
            s.push_str(&format!(
                "{},{},{}\n",
                self.axis[i], self.values[i], self.sigma[i]
            ));
        }
        s
    }

    /// Axis value of the largest signal.
    pub fn argmax(&self) -> f64 {
        let mut best = 0;
        for i in 1..self.values.len() {
            if self.values[i] > self.values[best] {
                best = i;
            }
        }
        self.axis[best]
    }
}

fn check_axis(axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::Domain("empty frequency grid".into()));
    }
    if axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(
            "frequency grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn gaussian_density(x: f64, fwhm: f64) -> f64 {
    let s = fwhm / (8.0 * 2f64.ln()).sqrt();
    (-(x * x) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
}

/// PLE lineshape in GHz around the ms = 0 line: two Gaussians, the ms = ±1
/// manifold `splitting` below with twice the weight. Integrates to one.
pub fn ple_spectrum(p: &DefectParams, e: &EnsembleSpec, laser_ghz: &[f64]) -> Result<Spectrum> {
    check_axis(laser_ghz)?;
    e.validate()?;
    let _ = p;
    let d = e.splitting_mhz * 1e-3;
    let span = 5.0 * (e.fwhm_ms0_ghz.max(e.fwhm_ms1_ghz) + d);
    if laser_ghz.iter().any(|x| x.abs() > span) {
        return Err(Error::Domain(format!("PLE grid exceeds ±{span:.1} GHz")));
    }
    let values = laser_ghz
        .iter()
        .map(|&x| {
            gaussian_density(x, e.fwhm_ms0_ghz) / 3.0
                + 2.0 * gaussian_density(x + d, e.fwhm_ms1_ghz) / 3.0
        })
        .collect();
    Ok(Spectrum::noiseless(laser_ghz.to_vec(), values))
}

/// (6.87 + 3.34)/2: plain mean of the two manifold widths.
pub fn arithmetic_mean_ple_fwhm(p: &DefectParams) -> f64 {
    0.5 * (p.inhom_fwhm_ms0_ghz + p.inhom_fwhm_ms1_ghz)
}

/// Mean width weighted by manifold intensity (1 : 2).
pub fn intensity_weighted_ple_fwhm(p: &DefectParams) -> f64 {
    (p.inhom_fwhm_ms0_ghz + 2.0 * p.inhom_fwhm_ms1_ghz) / 3.0
}

/// Fraction of the inhomogeneous line inside one spectral hole.
pub fn addressed_fraction(hole_fwhm_mhz: f64, inhom_fwhm_ghz: f64) -> Result<f64> {
    if !(hole_fwhm_mhz > 0.0 && inhom_fwhm_ghz > 0.0) {
        return Err(Error::Domain("widths must be positive".into()));
    }
    Ok(hole_fwhm_mhz / (inhom_fwhm_ghz * 1e3))
}

/// 1/(π·T_opt) in kHz.
pub fn lifetime_limited_linewidth(t_opt_us: f64) -> Result<f64> {
    if !(t_opt_us > 0.0) {
        return Err(Error::Domain("optical lifetime must be positive".into()));
    }
    Ok(1e3 / (PI * t_opt_us))
}

/// Two laser tones and an optional microwave acting on one optical class.
struct Tones {
    rate: f64,
    primary: bool,
    sideband: Option<(f64, f64)>,
    homog: f64,
}

impl Tones {
    fn pump(&self, delta: f64, f: &[f64; 3]) -> [f64; 3] {
        local_pump_rates(
            delta,
            f,
            if self.primary { self.rate } else { 0.0 },
            self.sideband,
            self.homog,
        )
    }
}

/// Pump rate out of each ground sublevel for a class at detuning `delta`
/// from the primary tone. The primary tone acts on ms = 0 and the sideband
/// (offset below the primary, rate) on ms = ±1; `f` are the ground levels.
pub fn local_pump_rates(
    delta: f64,
    f: &[f64; 3],
    primary_rate: f64,
    sideband: Option<(f64, f64)>,
    homog: f64,
) -> [f64; 3] {
    let mut r = [
        primary_rate * lorentzian_unit(delta + f[0], homog),
        0.0,
        0.0,
    ];
    if let Some((s, rate)) = sideband {
        for i in 1..3 {
            r[i] = rate * lorentzian_unit(delta - s + f[i], homog);
        }
    }
    r
}

/// Σ_classes w·Γ·ρ_ee for the given class nodes.
fn class_emission(
    rates: &Rates,
    tones: &Tones,
    f: &[f64; 3],
    mw: Option<MwDrive>,
    nodes: &[Node],
) -> Result<f64> {
    let mut s = 0.0;
    for n in nodes {
        let d = DriveSet {
            pump_per_us: tones.pump(n.x, f),
            mw,
            extra_mixing_per_us: 0.0,
            duration_us: 0.0,
        };
        let g = build_generator(rates, &d, &[0.0; 3])?;
        let ss = steady_state_or_propagate(&g, &QuantumState::thermal(), 1e9);
        s += n.w * ss.excited() * rates.gamma_opt;
    }
    Ok(s)
}

/// Class nodes for Lorentzian features at the given detunings. The axis is
/// cut at midpoints between neighbouring features and each piece gets its own
/// tan-mapped Gauss–Legendre rule of `n` nodes centered on its feature.
/// Weights count homogeneous packets.
fn feature_nodes(n: usize, features: &[f64], homog: f64) -> Vec<Node> {
    let mut c: Vec<f64> = features.to_vec();
    c.sort_by(f64::total_cmp);
    c.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let hw = 0.5 * homog;
    let (t, w) = gauss_legendre(n);
    let mut nodes = Vec::with_capacity(n * c.len());
    for k in 0..c.len() {
        let th0 = if k == 0 {
            -0.5 * PI
        } else {
            ((0.5 * (c[k - 1] + c[k]) - c[k]) / hw).atan()
        };
        let th1 = if k + 1 == c.len() {
            0.5 * PI
        } else {
            ((0.5 * (c[k] + c[k + 1]) - c[k]) / hw).atan()
        };
        let half = 0.5 * (th1 - th0);
        for (ti, wi) in t.iter().zip(&w) {
            let th = th0 + half * (ti + 1.0);
            let cs = th.cos();
            // dδ = hw sec²θ dθ over π·hw packets
            nodes.push(Node {
                x: c[k] + hw * th.tan(),
                w: wi * half / (PI * cs * cs),
            });
        }
    }
    nodes
}

fn shifted(levels: &LevelDiagram, x: f64) -> [f64; 3] {
    [levels.f_zero, levels.f_minus + x, levels.f_plus + x]
}

/// Hole recovery versus sideband offset (MHz) under weak burning.
///
/// Both tones pump at `burn_saturation` times the total ground relaxation
/// rate. The result is averaged over the spin-detuning distribution, which
/// moves the ±1 levels.
pub fn hole_recovery_scan(
    p: &DefectParams,
    sideband_mhz: &[f64],
    field_gauss: f64,
    convention: ZeemanConvention,
    temperature_k: f64,
    burn_saturation: f64,
    optical_nodes: usize,
) -> Result<Spectrum> {
    check_axis(sideband_mhz)?;
    let rates = Rates::new(p, temperature_k, Dephasing::Homogeneous)?;
    let relax = 3.0 * rates.pair_relaxation();
    if !(relax > 0.0) {
        return Err(Error::Domain("hole recovery needs finite T1".into()));
    }
    let w = burn_saturation * relax;
    let levels = ground_levels(p, field_gauss, convention);
    let dist = SpinDistribution::from_params(p);
    let spin = dist.grid_nodes(0.5 * dist.fwhm(), 2.0 * dist.fwhm());
    let mut values = Vec::with_capacity(sideband_mhz.len());
    for &s in sideband_mhz {
        let tones = Tones {
            rate: w,
            primary: true,
            sideband: Some((s, w)),
            homog: p.homog_fwhm_mhz,
        };
        let mut v = 0.0;
        for sn in &spin {
            let f = shifted(&levels, sn.x);
            // the sideband meets the ±1 lines at δ = s − f
            let nodes = feature_nodes(optical_nodes, &[0.0, s - f[1], s - f[2]], p.homog_fwhm_mhz);
            v += sn.w * class_emission(&rates, &tones, &f, None, &nodes)?;
        }
        values.push(v);
    }
    Ok(Spectrum::noiseless(sideband_mhz.to_vec(), values))
}

/// Hole scan from a run configuration.
pub fn hole_recovery_scan_with(cfg: &RunConfig, sideband_mhz: &[f64]) -> Result<Spectrum> {
    hole_recovery_scan(
        &cfg.defect,
        sideband_mhz,
        cfg.field_gauss,
        cfg.zeeman_convention,
        cfg.temperature_k,
        cfg.protocol.settings.burn_saturation,
        cfg.ensemble.optical_nodes,
    )
}

/// Emission of one spin versus its microwave detuning, under a saturated
/// primary-only burn, averaged over optical classes.
fn odmr_response(
    rates: &Rates,
    p: &DefectParams,
    levels: &LevelDiagram,
    transition: Transition,
    rabi_mhz: f64,
    detuning_mhz: f64,
    optical: &[Node],
) -> Result<f64> {
    let tones = Tones {
        rate: p.pump_rate_per_us,
        primary: true,
        sideband: None,
        homog: p.homog_fwhm_mhz,
    };
    let mw = MwDrive {
        transition,
        rabi_mhz,
        detuning_mhz,
        phase_rad: 0.0,
    };
    class_emission(rates, &tones, &levels.ground(), Some(mw), optical)
}

/// ODMR spectrum versus microwave frequency (MHz).
pub fn odmr_scan(
    p: &DefectParams,
    mw_mhz: &[f64],
    field_gauss: f64,
    convention: ZeemanConvention,
    temperature_k: f64,
    rabi_mhz: f64,
) -> Result<Spectrum> {
    check_axis(mw_mhz)?;
    let rates = Rates::new(p, temperature_k, Dephasing::Homogeneous)?;
    let levels = ground_levels(p, field_gauss, convention);
    let optical = lorentz_mapped_nodes(24, 0.0, 0.5 * p.homog_fwhm_mhz);
    let dist = SpinDistribution::from_params(p);
    // the single-spin response is far narrower than the spin distribution
    let scale = 0.02;
    let det_nodes = lorentz_mapped_nodes(96, 0.0, scale);
    let lines = [
        (Transition::ZeroMinus, levels.f_minus),
        (Transition::ZeroPlus, levels.f_plus),
    ];
    let mut floor = 0.0;
    let mut responses = Vec::new();
    for (k, (tr, f_t)) in lines.iter().enumerate() {
        let far = odmr_response(&rates, p, &levels, *tr, rabi_mhz, 1e4, &optical)?;
        if k == 0 {
            floor = far;
        }
        let mut r = Vec::with_capacity(det_nodes.len());
        for n in &det_nodes {
            let v = odmr_response(&rates, p, &levels, *tr, rabi_mhz, n.x, &optical)? - far;
            // ∫ dΔ = Σ w·π·scale
            r.push((n.x, n.w * PI * scale * v));
        }
        responses.push((*f_t, r));
    }
    let values = mw_mhz
        .iter()
        .map(|&f| {
            floor
                + responses
                    .iter()
                    .map(|(f_t, r)| {
                        r.iter()
                            .map(|(d, c)| c * dist.density(d + f - f_t))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
        })
        .collect();
    Ok(Spectrum::noiseless(mw_mhz.to_vec(), values))
}

/// ODMR scan from a run configuration.
pub fn odmr_scan_with(cfg: &RunConfig, mw_mhz: &[f64]) -> Result<Spectrum> {
    odmr_scan(
        &cfg.defect,
        mw_mhz,
        cfg.field_gauss,
        cfg.zeeman_convention,
        cfg.temperature_k,
        cfg.protocol.settings.odmr_rabi_mhz,
    )
}

/// Emission over a (sideband offset × microwave frequency) grid, both MHz.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryMap {
    pub sideband_mhz: Vec<f64>,
    pub mw_mhz: Vec<f64>,
    /// values[i][j] at sideband i, microwave j.
    pub values: Vec<Vec<f64>>,
}

impl RecoveryMap {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sideband_mhz,mw_mhz,value\n");
        for (i, sb) in self.sideband_mhz.iter().enumerate() {
            for (j, mw) in self.mw_mhz.iter().enumerate() {
                s.push_str(&format!("{sb},{mw},{}\n", self.values[i][j]));
            }
        }
        s
    }
}

/// Primary burn on ms = 0, a sideband and a microwave tone driving the
/// nearer of the two spin transitions. Recovery needs all three sublevels
/// addressed.
pub fn simultaneous_recovery_map(
    p: &DefectParams,
    sideband_mhz: &[f64],
    mw_mhz: &[f64],
    field_gauss: f64,
    convention: ZeemanConvention,
    temperature_k: f64,
    rabi_mhz: f64,
) -> Result<RecoveryMap> {
    check_axis(sideband_mhz)?;
    check_axis(mw_mhz)?;
    if !(field_gauss.abs() > 0.0) {
        return Err(Error::Domain(
            "the recovery map needs a nonzero field".into(),
        ));
    }
    let rates = Rates::new(p, temperature_k, Dephasing::Homogeneous)?;
    let levels = ground_levels(p, field_gauss, convention);
    let f = levels.ground();
    let w = p.pump_rate_per_us;
    let mut values = Vec::with_capacity(sideband_mhz.len());
    for &s in sideband_mhz {
        let tones = Tones {
            rate: w,
            primary: true,
            sideband: Some((s, w)),
            homog: p.homog_fwhm_mhz,
        };
        let nodes = feature_nodes(24, &[0.0, s - f[1], s - f[2]], p.homog_fwhm_mhz);
        let mut row = Vec::with_capacity(mw_mhz.len());
        for &m in mw_mhz {
            let (tr, ft) = if (m - f[1]).abs() < (m - f[2]).abs() {
                (Transition::ZeroMinus, f[1])
            } else {
                (Transition::ZeroPlus, f[2])
            };
            let mw = MwDrive {
                transition: tr,
                rabi_mhz,
                detuning_mhz: ft - m,
                phase_rad: 0.0,
            };
            row.push(class_emission(&rates, &tones, &f, Some(mw), &nodes)?);
        }
        values.push(row);
    }
    Ok(RecoveryMap {
        sideband_mhz: sideband_mhz.to_vec(),
        mw_mhz: mw_mhz.to_vec(),
        values,
    })
}
