//! Physical constants, defect parameters and run configuration.
//!
//! Units follow the field names: frequencies in MHz unless the name says GHz
//! or kHz, times in μs unless the name says ns or s, fields in gauss and
//! temperatures in kelvin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequences::ProtocolSpec;

/// Master seed used when neither the config nor the command line gives one.
pub const DEFAULT_SEED: u64 = 0x00C0_FFEE_2026;

/// Reference constants. Never fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// μB/h in GHz/T.
    pub bohr_magneton_over_h: f64,
    /// k_B/h in Hz/K.
    pub boltzmann_over_h: f64,
    /// k_B in meV/K.
    pub boltzmann_mev: f64,
    /// ¹³C gyromagnetic ratio magnitude in MHz/T.
    pub gamma_c13: f64,
    /// ²⁹Si gyromagnetic ratio magnitude in MHz/T.
    pub gamma_si29: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    bohr_magneton_over_h: 13.996_244_936,
    boltzmann_over_h: 2.083_661_912e10,
    boltzmann_mev: 8.617_333_262e-2,
    gamma_c13: 10.7084,
    gamma_si29: 8.4655,
};

impl PhysicalConstants {
    /// μB/h in MHz per gauss.
    pub fn bohr_mhz_per_gauss(&self) -> f64 {
        // GHz/T -> MHz/G: ×1e3 (GHz→MHz) ×1e-4 (T→G)
        self.bohr_magneton_over_h * 0.1
    }
}

/// One nuclear modulation component of the echo envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EseemComponent {
    /// Modulation depth K_a in [0, 1].
    pub amplitude: f64,
    /// Modulation frequency ω_a in kHz.
    pub frequency_khz: f64,
}

/// Temperature dependence of the spin-lattice rate 1/T1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum T1Model {
    /// 1/T1 = A·exp(−E/k_B T).
    Orbach {
        prefactor_per_s: f64,
        activation_mev: f64,
    },
    /// 1/T1 = A·((T − ΔT)/10 K)^n; A is the rate at T − ΔT = 10 K.
    Raman {
        prefactor_per_s: f64,
        offset_k: f64,
        exponent: f64,
    },
}

/// Reference temperature offset for the Raman prefactor.
pub const RAMAN_REFERENCE_K: f64 = 10.0;

impl T1Model {
    /// Relaxation rate 1/T1 in 1/s.
    pub fn rate_per_s(&self, temperature_k: f64) -> Result<f64> {
        if !(temperature_k > 0.0) {
            return Err(Error::Domain(format!(
                "temperature must be positive, got {temperature_k}"
            )));
        }
        match *self {
            T1Model::Orbach {
                prefactor_per_s,
                activation_mev,
            } => Ok(prefactor_per_s
                * (-activation_mev / (CONSTANTS.boltzmann_mev * temperature_k)).exp()),
            T1Model::Raman {
                prefactor_per_s,
                offset_k,
                exponent,
            } => {
                if temperature_k <= offset_k {
                    return Err(Error::Domain(format!(
                        "raman rate needs T > ΔT (T = {temperature_k} K, ΔT = {offset_k} K)"
                    )));
                }
                Ok(prefactor_per_s
                    * ((temperature_k - offset_k) / RAMAN_REFERENCE_K).powf(exponent))
            }
        }
    }

    /// T1 in μs (infinite when the rate vanishes).
    pub fn t1_us(&self, temperature_k: f64) -> Result<f64> {
        let rate = self.rate_per_s(temperature_k)?;
        Ok(if rate > 0.0 {
            1e6 / rate
        } else {
            f64::INFINITY
        })
    }

    /// Raman model scaled so that T1(temperature) equals `t1_s`.
    pub fn raman_with_t1(t1_s: f64, temperature_k: f64, offset_k: f64, exponent: f64) -> Self {
        let shape = ((temperature_k - offset_k) / RAMAN_REFERENCE_K).powf(exponent);
        T1Model::Raman {
            prefactor_per_s: 1.0 / (t1_s * shape),
            offset_k,
            exponent,
        }
    }

    /// Orbach model scaled so that T1(temperature) equals `t1_s`.
    pub fn orbach_with_t1(t1_s: f64, temperature_k: f64, activation_mev: f64) -> Self {
        let shape = (-activation_mev / (CONSTANTS.boltzmann_mev * temperature_k)).exp();
        T1Model::Orbach {
            prefactor_per_s: 1.0 / (t1_s * shape),
            activation_mev,
        }
    }
}

/// Every defect and model parameter the simulator uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectParams {
    /// Crystal-field splitting D (MHz).
    pub zero_field_splitting_mhz: f64,
    pub g_parallel: f64,
    /// Excited-state lifetime T_opt (μs).
    pub optical_lifetime_us: f64,
    /// Decay probabilities from |e⟩ into (|g0⟩, |g−⟩, |g+⟩).
    pub branching: [f64; 3],
    pub inhom_fwhm_ms0_ghz: f64,
    pub inhom_fwhm_ms1_ghz: f64,
    pub homog_fwhm_mhz: f64,
    pub odmr_fwhm_mhz: f64,
    pub t2_star_ns: f64,
    pub t2_us: f64,
    pub echo_n: f64,
    pub eseem_components: Vec<EseemComponent>,
    pub t1_model: T1Model,
    pub rabi_freq_mhz: f64,
    /// Peak optical pump rate for a resonant tone (1/μs).
    pub pump_rate_per_us: f64,
    /// Relative Gaussian spread of the microwave Rabi amplitude, σ_Ω/Ω.
    pub rabi_amplitude_spread: f64,
    /// Ground-sublevel mixing during readout probes, in units of the probe pump rate.
    pub probe_backaction: f64,
}

impl Default for DefectParams {
    fn default() -> Self {
        default_params()
    }
}

/// Default optical lifetime.
const T_OPT_US: f64 = 156.3;

/// Parameters with measured values where available and documented assumptions elsewhere.
pub fn default_params() -> DefectParams {
    DefectParams {
        zero_field_splitting_mhz: 1063.11,
        g_parallel: 2.0,
        optical_lifetime_us: T_OPT_US,
        branching: [1.0 / 3.0; 3],
        inhom_fwhm_ms0_ghz: 6.87,
        inhom_fwhm_ms1_ghz: 3.34,
        homog_fwhm_mhz: 15.5,
        odmr_fwhm_mhz: 1.32,
        t2_star_ns: 307.0,
        t2_us: 81.0,
        echo_n: 1.9,
        eseem_components: vec![
            EseemComponent {
                amplitude: 0.2,
                frequency_khz: 87.5,
            },
            EseemComponent {
                amplitude: 0.15,
                frequency_khz: 68.0,
            },
        ],
        t1_model: T1Model::raman_with_t1(1.6, 15.0, 3.2, 9.0),
        rabi_freq_mhz: 1.0,
        // calibrated: polarization rise 1.27 ms
        pump_rate_per_us: 8.5e-3,
        // calibrated: Rabi envelope decay 4.76 μs
        rabi_amplitude_spread: 0.0142,
        // set by hand for a Rabi contrast near 63%
        probe_backaction: 1.3,
    }
}

/// Source of each default value.
pub fn provenance() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "zero_field_splitting_mhz",
            "measured: zero-field ODMR line center",
        ),
        ("g_parallel", "assumed: free-electron-like g, never stated"),
        ("optical_lifetime_us", "measured: transient PLE decay"),
        (
            "branching",
            "assumed: equal decay into the three ground sublevels",
        ),
        (
            "inhom_fwhm_ms0_ghz",
            "measured: two-Gaussian PLE fit, ms = 0 line",
        ),
        (
            "inhom_fwhm_ms1_ghz",
            "measured: two-Gaussian PLE fit, ms = ±1 line",
        ),
        (
            "homog_fwhm_mhz",
            "derived: half the measured 31 MHz weak-burn hole width",
        ),
        ("odmr_fwhm_mhz", "measured: ODMR Lorentzian width"),
        (
            "t2_star_ns",
            "measured: Ramsey envelope (fitted value, not the rounded headline)",
        ),
        ("t2_us", "measured: Hahn-echo envelope"),
        ("echo_n", "measured: Hahn-echo stretch exponent"),
        (
            "eseem_components.frequency_khz",
            "measured: echo modulation frequencies",
        ),
        (
            "eseem_components.amplitude",
            "assumed: modulation depths not reported",
        ),
        (
            "t1_model",
            "measured: T1 = 1.6 s at 15 K with Raman ΔT = 3.2 K, n = 9",
        ),
        ("rabi_freq_mhz", "assumed: drive strength not reported"),
        (
            "pump_rate_per_us",
            "calibrated: polarization contrast rise time 1.27 ms",
        ),
        (
            "rabi_amplitude_spread",
            "calibrated: Rabi envelope decay 4.76 us",
        ),
        (
            "probe_backaction",
            "assumed: probe-induced spin reset, set by hand for ~63 % Rabi contrast",
        ),
    ]
}

/// Sign convention for the Zeeman term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZeemanConvention {
    /// f(±1) = D ± g·μB·B/h; the ±1 lines are 2·g·μB·B/h apart.
    #[default]
    Separation,
    /// f(±1) = D ± g·μB·B/(2h); the ±1 lines are g·μB·B/h apart.
    Shift,
}

/// Photon-detection settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSettings {
    pub collection_efficiency: f64,
    pub dark_rate_cps: f64,
    pub gate_window_us: f64,
    pub repetitions: u64,
    pub rng_seed: u64,
    /// Emitters per homogeneous packet at the laser frequency.
    pub addressed_emitters: f64,
    /// Add Poisson noise to the counts.
    pub shot_noise: bool,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        DetectionSettings {
            collection_efficiency: 0.01,
            dark_rate_cps: 7500.0,
            gate_window_us: 155.0,
            repetitions: 1000,
            rng_seed: DEFAULT_SEED,
            addressed_emitters: 2000.0,
            shot_noise: true,
        }
    }
}

/// Quadrature settings for ensemble averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSettings {
    /// Optical-detuning classes per spectral feature.
    pub optical_nodes: usize,
    /// Optical-detuning classes inside pulse protocols.
    pub protocol_optical_nodes: usize,
    /// Spin-detuning grid spacing in units of odmr_fwhm.
    pub spin_step_fwhm: f64,
    /// Spin-detuning grid half range in units of odmr_fwhm.
    pub spin_range_fwhm: f64,
    /// Gauss–Hermite nodes for the Rabi amplitude spread.
    pub amplitude_nodes: usize,
    /// Draw classes by Monte Carlo instead of quadrature.
    pub monte_carlo: bool,
    pub monte_carlo_samples: usize,
    pub monte_carlo_seed: u64,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        EnsembleSettings {
            optical_nodes: 64,
            protocol_optical_nodes: 32,
            spin_step_fwhm: 0.06,
            spin_range_fwhm: 5.0,
            amplitude_nodes: 5,
            monte_carlo: false,
            monte_carlo_samples: 512,
            monte_carlo_seed: DEFAULT_SEED,
        }
    }
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub defect: DefectParams,
    pub field_gauss: f64,
    pub temperature_k: f64,
    pub zeeman_convention: ZeemanConvention,
    pub detection: DetectionSettings,
    pub ensemble: EnsembleSettings,
    pub protocol: ProtocolSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            defect: default_params(),
            field_gauss: 158.0,
            temperature_k: 15.0,
            zeeman_convention: ZeemanConvention::Separation,
            detection: DetectionSettings::default(),
            ensemble: EnsembleSettings::default(),
            protocol: ProtocolSpec::default(),
        }
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            path,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            path,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

impl DefectParams {
    /// Check every invariant; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        self.validate_at("defect")
    }

    fn validate_at(&self, prefix: &str) -> Result<()> {
        let p = |f: &str| format!("{prefix}.{f}");
        positive(
            &p("zero_field_splitting_mhz"),
            self.zero_field_splitting_mhz,
        )?;
        positive(&p("g_parallel"), self.g_parallel)?;
        positive(&p("optical_lifetime_us"), self.optical_lifetime_us)?;
        for (i, b) in self.branching.iter().enumerate() {
            if !(0.0..=1.0).contains(b) {
                return Err(Error::validation(
                    format!("{prefix}.branching[{i}]"),
                    format!("must lie in [0, 1], got {b}"),
                ));
            }
        }
        let sum: f64 = self.branching.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(
                p("branching"),
                format!("branching sums to {}", fmt_sum(sum)),
            ));
        }
        positive(&p("inhom_fwhm_ms0_ghz"), self.inhom_fwhm_ms0_ghz)?;
        positive(&p("inhom_fwhm_ms1_ghz"), self.inhom_fwhm_ms1_ghz)?;
        positive(&p("homog_fwhm_mhz"), self.homog_fwhm_mhz)?;
        positive(&p("odmr_fwhm_mhz"), self.odmr_fwhm_mhz)?;
        positive(&p("t2_star_ns"), self.t2_star_ns)?;
        positive(&p("t2_us"), self.t2_us)?;
        positive(&p("echo_n"), self.echo_n)?;
        for (i, c) in self.eseem_components.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.amplitude) {
                return Err(Error::validation(
                    format!("{prefix}.eseem_components[{i}].amplitude"),
                    format!("must lie in [0, 1], got {}", c.amplitude),
                ));
            }
            non_negative(
                &format!("{prefix}.eseem_components[{i}].frequency_khz"),
                c.frequency_khz,
            )?;
        }
        match self.t1_model {
            T1Model::Orbach {
                prefactor_per_s,
                activation_mev,
            } => {
                positive(&p("t1_model.prefactor_per_s"), prefactor_per_s)?;
                non_negative(&p("t1_model.activation_mev"), activation_mev)?;
            }
            T1Model::Raman {
                prefactor_per_s,
                offset_k,
                exponent,
            } => {
                positive(&p("t1_model.prefactor_per_s"), prefactor_per_s)?;
                non_negative(&p("t1_model.offset_k"), offset_k)?;
                positive(&p("t1_model.exponent"), exponent)?;
            }
        }
        positive(&p("rabi_freq_mhz"), self.rabi_freq_mhz)?;
        positive(&p("pump_rate_per_us"), self.pump_rate_per_us)?;
        non_negative(&p("rabi_amplitude_spread"), self.rabi_amplitude_spread)?;
        non_negative(&p("probe_backaction"), self.probe_backaction)?;
        Ok(())
    }

    /// Optical decay rate Γ = 1/T_opt (1/μs).
    pub fn gamma_opt(&self) -> f64 {
        1.0 / self.optical_lifetime_us
    }

    /// T2* in μs.
    pub fn t2_star_us(&self) -> f64 {
        self.t2_star_ns * 1e-3
    }
}

fn fmt_sum(sum: f64) -> String {
    // 0.5 + 0.5 + 0.1 prints as 1.1 rather than 1.1000000000000001
    let r = (sum * 1e9).round() / 1e9;
    format!("{r}")
}

impl DetectionSettings {
    pub fn validate(&self) -> Result<()> {
        let c = self.collection_efficiency;
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::validation(
                "detection.collection_efficiency",
                format!("must lie in (0, 1], got {c}"),
            ));
        }
        non_negative("detection.dark_rate_cps", self.dark_rate_cps)?;
        positive("detection.gate_window_us", self.gate_window_us)?;
        if self.repetitions < 1 {
            return Err(Error::validation(
                "detection.repetitions",
                "must be at least 1",
            ));
        }
        positive("detection.addressed_emitters", self.addressed_emitters)?;
        Ok(())
    }
}

impl EnsembleSettings {
    pub fn validate(&self) -> Result<()> {
        if self.optical_nodes < 16 {
            return Err(Error::validation(
                "ensemble.optical_nodes",
                "must be at least 16",
            ));
        }
        if self.protocol_optical_nodes < 16 {
            return Err(Error::validation(
                "ensemble.protocol_optical_nodes",
                "must be at least 16",
            ));
        }
        positive("ensemble.spin_step_fwhm", self.spin_step_fwhm)?;
        positive("ensemble.spin_range_fwhm", self.spin_range_fwhm)?;
        if self.spin_range_fwhm / self.spin_step_fwhm < 8.0 {
            return Err(Error::validation(
                "ensemble.spin_step_fwhm",
                "grid must contain at least 16 spin nodes",
            ));
        }
        if self.amplitude_nodes < 1 {
            return Err(Error::validation(
                "ensemble.amplitude_nodes",
                "must be at least 1",
            ));
        }
        if self.monte_carlo && self.monte_carlo_samples < 16 {
            return Err(Error::validation(
                "ensemble.monte_carlo_samples",
                "must be at least 16",
            ));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.defect.validate()?;
        if !self.field_gauss.is_finite() {
            return Err(Error::validation("field_gauss", "must be finite"));
        }
        positive("temperature_k", self.temperature_k)?;
        self.detection.validate()?;
        self.ensemble.validate()?;
        self.protocol.validate()?;
        Ok(())
    }

    /// Canonical JSON text of the resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let compact = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(compact.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse and validate a JSON configuration. Empty input yields the defaults.
pub fn load_config(text: &str) -> Result<RunConfig> {
    if text.trim().is_empty() {
        return Ok(RunConfig::default());
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "CHROMSPIN_CONFIG";
