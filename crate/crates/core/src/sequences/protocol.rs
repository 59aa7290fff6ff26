//! Protocol catalog and pulse-sequence construction.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::dynamics::Transition;
use crate::error::{Error, Result};
use crate::params::RunConfig;
use crate::spin::{ground_levels, LevelDiagram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolId {
    #[default]
    Rabi,
    Ramsey,
    HahnEcho,
    T1Inversion,
    PolarizationBuildup,
    PleScan,
    OdmrScan,
    HoleScan,
    OpticalLifetime,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 9] = [
        ProtocolId::Rabi,
        ProtocolId::Ramsey,
        ProtocolId::HahnEcho,
        ProtocolId::T1Inversion,
        ProtocolId::PolarizationBuildup,
        ProtocolId::PleScan,
        ProtocolId::OdmrScan,
        ProtocolId::HoleScan,
        ProtocolId::OpticalLifetime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolId::Rabi => "rabi",
            ProtocolId::Ramsey => "ramsey",
            ProtocolId::HahnEcho => "hahn_echo",
            ProtocolId::T1Inversion => "t1_inversion",
            ProtocolId::PolarizationBuildup => "polarization_buildup",
            ProtocolId::PleScan => "ple_scan",
            ProtocolId::OdmrScan => "odmr_scan",
            ProtocolId::HoleScan => "hole_scan",
            ProtocolId::OpticalLifetime => "optical_lifetime",
        }
    }

    /// Continuous-wave spectra are evaluated as steady states, not pulse sequences.
    pub fn is_continuous_wave(self) -> bool {
        matches!(
            self,
            ProtocolId::PleScan | ProtocolId::OdmrScan | ProtocolId::HoleScan
        )
    }

    /// Sweep variable name and unit.
    pub fn sweep_label(self) -> &'static str {
        match self {
            ProtocolId::Rabi => "pulse_length_us",
            ProtocolId::Ramsey => "free_evolution_us",
            ProtocolId::HahnEcho => "free_evolution_us",
            ProtocolId::T1Inversion => "wait_us",
            ProtocolId::PolarizationBuildup => "pump_time_us",
            ProtocolId::PleScan => "laser_detuning_ghz",
            ProtocolId::OdmrScan => "mw_frequency_mhz",
            ProtocolId::HoleScan => "sideband_offset_mhz",
            ProtocolId::OpticalLifetime => "delay_us",
        }
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProtocolId::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol id '{s}'")))
    }
}

/// Sweep values, either listed or as an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepGrid {
    Values {
        values: Vec<f64>,
    },
    Linear {
        start: f64,
        stop: f64,
        points: usize,
    },
}

impl SweepGrid {
    pub fn linear(start: f64, stop: f64, points: usize) -> Self {
        SweepGrid::Linear {
            start,
            stop,
            points,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            SweepGrid::Values { values } => values.clone(),
            SweepGrid::Linear {
                start,
                stop,
                points,
            } => match *points {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.values();
        if v.is_empty() {
            return Err(Error::validation("protocol.sweep", "grid is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation(
                "protocol.sweep",
                "grid values must be finite",
            ));
        }
        let inc = v.windows(2).all(|w| w[1] > w[0]);
        let dec = v.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(Error::validation(
                "protocol.sweep",
                "grid must be strictly monotone",
            ));
        }
        Ok(())
    }
}

/// How the echo-envelope argument τ relates to the free evolution t.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EchoTau {
    /// τ = t/2, one half-period of the echo.
    #[default]
    Half,
    /// τ = t.
    Full,
}

/// Fixed settings of a protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSettings {
    pub pump_us: f64,
    /// Dark interval after the pump so its emission has decayed before readout.
    pub settle_us: f64,
    pub probe_us: f64,
    pub mw_transition: Transition,
    pub ramsey_detuning_mhz: f64,
    pub hard_pulse_rabi_mhz: f64,
    pub echo_tau: EchoTau,
    /// Resonant excitation before the lifetime histogram.
    pub excitation_us: f64,
    /// Histogram bin width of the lifetime protocol.
    pub lifetime_bin_us: f64,
    /// Burn and sideband rates of the hole scan in units of the ground relaxation rate.
    pub burn_saturation: f64,
    /// Microwave Rabi frequency of the ODMR scan.
    pub odmr_rabi_mhz: f64,
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        ProtocolSettings {
            pump_us: 5000.0,
            settle_us: 1000.0,
            probe_us: 50.0,
            mw_transition: Transition::ZeroPlus,
            ramsey_detuning_mhz: 5.0,
            hard_pulse_rabi_mhz: 20.0,
            echo_tau: EchoTau::Half,
            excitation_us: 100.0,
            lifetime_bin_us: 10.0,
            burn_saturation: 0.2,
            odmr_rabi_mhz: 1e-4,
        }
    }
}

/// Protocol id, sweep grid and fixed settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSpec {
    pub id: ProtocolId,
    /// Defaults to the protocol's canonical grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
    pub settings: ProtocolSettings,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            id: ProtocolId::Rabi,
            sweep: None,
            settings: ProtocolSettings::default(),
        }
    }
}

impl ProtocolSpec {
    pub fn new(id: ProtocolId) -> Self {
        ProtocolSpec {
            id,
            ..Default::default()
        }
    }

    pub fn with_sweep(mut self, grid: SweepGrid) -> Self {
        self.sweep = Some(grid);
        self
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        self.sweep
            .clone()
            .unwrap_or_else(|| default_grid(self.id))
            .values()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.sweep {
            g.validate()?;
        }
        let s = &self.settings;
        let pos = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(
                    format!("protocol.settings.{path}"),
                    format!("must be positive, got {v}"),
                ))
            }
        };
        pos("pump_us", s.pump_us)?;
        pos("probe_us", s.probe_us)?;
        if !(s.settle_us.is_finite() && s.settle_us >= 0.0) {
            return Err(Error::validation(
                "protocol.settings.settle_us",
                format!("must be non-negative, got {}", s.settle_us),
            ));
        }
        pos("hard_pulse_rabi_mhz", s.hard_pulse_rabi_mhz)?;
        pos("excitation_us", s.excitation_us)?;
        pos("lifetime_bin_us", s.lifetime_bin_us)?;
        pos("burn_saturation", s.burn_saturation)?;
        pos("odmr_rabi_mhz", s.odmr_rabi_mhz)?;
        if !s.ramsey_detuning_mhz.is_finite() {
            return Err(Error::validation(
                "protocol.settings.ramsey_detuning_mhz",
                "must be finite",
            ));
        }
        let needs_non_negative = !matches!(
            self.id,
            ProtocolId::PleScan | ProtocolId::OdmrScan | ProtocolId::HoleScan
        );
        if needs_non_negative && self.sweep_values().iter().any(|v| *v < 0.0) {
            return Err(Error::validation(
                "protocol.sweep",
                "durations must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Canonical sweep grid of each protocol.
pub fn default_grid(id: ProtocolId) -> SweepGrid {
    match id {
        ProtocolId::Rabi => SweepGrid::linear(0.0, 10.0, 101),
        ProtocolId::Ramsey => SweepGrid::linear(0.0, 1.5, 151),
        ProtocolId::HahnEcho => SweepGrid::linear(1.0, 200.0, 200),
        ProtocolId::T1Inversion => SweepGrid::linear(0.0, 6.0e6, 25),
        ProtocolId::PolarizationBuildup => SweepGrid::linear(0.0, 8000.0, 41),
        ProtocolId::PleScan => SweepGrid::linear(-25.0, 20.0, 181),
        ProtocolId::OdmrScan => SweepGrid::linear(1053.11, 1073.11, 201),
        ProtocolId::HoleScan => SweepGrid::linear(963.0, 1163.0, 101),
        ProtocolId::OpticalLifetime => SweepGrid::linear(0.0, 790.0, 80),
    }
}

/// One piecewise-constant control interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    /// Primary tone resonant with the ms = 0 optical line of the class at zero
    /// detuning; optional sideband `sideband_offset_mhz` below the primary.
    Laser {
        primary: bool,
        sideband_offset_mhz: Option<f64>,
        duration_us: f64,
        readout: bool,
    },
    Mw {
        transition: Transition,
        rabi_mhz: f64,
        detuning_mhz: f64,
        phase_rad: f64,
        duration_us: f64,
    },
    /// Free evolution in a frame detuned by `frame_detuning_mhz`.
    Wait {
        duration_us: f64,
        frame_detuning_mhz: f64,
    },
    /// Photon collection window after the preceding segment.
    Gate { window_us: f64 },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match *self {
            Segment::Laser { duration_us, .. } => duration_us,
            Segment::Mw { duration_us, .. } => duration_us,
            Segment::Wait { duration_us, .. } => duration_us,
            Segment::Gate { window_us } => window_us,
        }
    }

    pub fn is_optical(&self) -> bool {
        matches!(self, Segment::Laser { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
}

impl PulseSequence {
    pub fn validate(&self) -> Result<()> {
        let mut gates = 0;
        let mut prev_gate = false;
        for (i, s) in self.segments.iter().enumerate() {
            let d = s.duration();
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::Config(format!(
                    "segment {i} has invalid duration {d}"
                )));
            }
            match s {
                Segment::Gate { window_us } => {
                    if !(*window_us > 0.0) {
                        return Err(Error::Config(format!(
                            "gate {i} must have a positive window"
                        )));
                    }
                    if prev_gate {
                        return Err(Error::Config(format!(
                            "gate {i} overlaps the previous gate"
                        )));
                    }
                    gates += 1;
                    prev_gate = true;
                }
                Segment::Laser {
                    readout: true,
                    duration_us,
                    ..
                } if !(*duration_us > 0.0) => {
                    return Err(Error::Config(format!("readout probe {i} must be positive")));
                }
                _ => prev_gate = false,
            }
        }
        if gates == 0 {
            return Err(Error::Config("sequence has no readout gate".into()));
        }
        Ok(())
    }

    pub fn mw_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::Mw { .. }))
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration()).sum()
    }
}

/// Sequences for each sweep point. Two-trace protocols also carry a reference
/// trace (echo: − outer pulse; T1: 2π pulse; polarization: no π pulse).
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltProtocol {
    pub id: ProtocolId,
    pub values: Vec<f64>,
    pub primary: Vec<PulseSequence>,
    pub reference: Option<Vec<PulseSequence>>,
    pub primary_label: &'static str,
    pub reference_label: Option<&'static str>,
}

/// Sideband offset that pumps the ms = −1 sublevel, when it is resolved from ms = +1.
pub fn polarizing_sideband(levels: &LevelDiagram, homog_fwhm_mhz: f64) -> Option<f64> {
    if levels.separation().abs() > 10.0 * homog_fwhm_mhz {
        Some(levels.f_minus)
    } else {
        None
    }
}

fn polarize(levels: &LevelDiagram, cfg: &RunConfig, duration_us: f64) -> Segment {
    Segment::Laser {
        primary: true,
        sideband_offset_mhz: polarizing_sideband(levels, cfg.defect.homog_fwhm_mhz),
        duration_us,
        readout: false,
    }
}

fn probe(cfg: &RunConfig) -> Segment {
    Segment::Laser {
        primary: true,
        sideband_offset_mhz: None,
        duration_us: cfg.protocol.settings.probe_us,
        readout: true,
    }
}

fn gate(cfg: &RunConfig) -> Segment {
    Segment::Gate {
        window_us: cfg.detection.gate_window_us,
    }
}

fn mw(transition: Transition, rabi: f64, detuning: f64, phase: f64, duration: f64) -> Segment {
    Segment::Mw {
        transition,
        rabi_mhz: rabi,
        detuning_mhz: detuning,
        phase_rad: phase,
        duration_us: duration,
    }
}

fn wait(duration: f64, frame: f64) -> Segment {
    Segment::Wait {
        duration_us: duration,
        frame_detuning_mhz: frame,
    }
}

/// Build the canonical sequences of a pulsed protocol.
pub fn build_protocol(spec: &ProtocolSpec, cfg: &RunConfig) -> Result<BuiltProtocol> {
    if spec.id.is_continuous_wave() {
        return Err(Error::Domain(format!(
            "{} is a continuous-wave protocol without pulse sequences",
            spec.id
        )));
    }
    spec.validate()?;
    let values = spec.sweep_values();
    let s = &spec.settings;
    let p = &cfg.defect;
    let levels = ground_levels(p, cfg.field_gauss, cfg.zeeman_convention);
    let tr = s.mw_transition;
    let hard = s.hard_pulse_rabi_mhz;
    let half_pi = 1.0 / (4.0 * hard);
    let seq = |segments: Vec<Segment>| PulseSequence { segments };

    let mut reference = None;
    let mut labels = ("signal", None);
    let primary: Vec<PulseSequence> = match spec.id {
        ProtocolId::Rabi => values
            .iter()
            .map(|&tau| {
                seq(vec![
                    polarize(&levels, cfg, s.pump_us),
                    wait(s.settle_us, 0.0),
                    mw(tr, p.rabi_freq_mhz, 0.0, 0.0, tau),
                    probe(cfg),
                    gate(cfg),
                ])
            })
            .collect(),
        ProtocolId::Ramsey => {
            let dr = s.ramsey_detuning_mhz;
            values
                .iter()
                .map(|&t| {
                    seq(vec![
                        polarize(&levels, cfg, s.pump_us),
                        wait(s.settle_us, 0.0),
                        mw(tr, hard, dr, 0.0, half_pi),
                        wait(t, dr),
                        mw(tr, hard, dr, 0.0, half_pi),
                        probe(cfg),
                        gate(cfg),
                    ])
                })
                .collect()
        }
        ProtocolId::HahnEcho => {
            let echo = |t: f64, outer: f64| {
                seq(vec![
                    polarize(&levels, cfg, s.pump_us),
                    wait(s.settle_us, 0.0),
                    mw(tr, hard, 0.0, outer, half_pi),
                    wait(0.5 * t, 0.0),
                    mw(tr, hard, 0.0, 0.5 * PI, 2.0 * half_pi),
                    wait(0.5 * t, 0.0),
                    mw(tr, hard, 0.0, 0.0, half_pi),
                    probe(cfg),
                    gate(cfg),
                ])
            };
            reference = Some(values.iter().map(|&t| echo(t, PI)).collect());
            labels = ("plus_x", Some("minus_x"));
            values.iter().map(|&t| echo(t, 0.0)).collect()
        }
        ProtocolId::T1Inversion => {
            let inv = |t: f64, turns: f64| {
                seq(vec![
                    polarize(&levels, cfg, s.pump_us),
                    wait(s.settle_us, 0.0),
                    mw(tr, hard, 0.0, 0.0, turns / (2.0 * hard)),
                    wait(t, 0.0),
                    probe(cfg),
                    gate(cfg),
                ])
            };
            reference = Some(values.iter().map(|&t| inv(t, 2.0)).collect());
            labels = ("pi", Some("two_pi"));
            values.iter().map(|&t| inv(t, 1.0)).collect()
        }
        ProtocolId::PolarizationBuildup => {
            let pi_len = 1.0 / (2.0 * p.rabi_freq_mhz);
            let build = |t: f64, rabi: f64| {
                seq(vec![
                    polarize(&levels, cfg, t),
                    wait(s.settle_us, 0.0),
                    mw(tr, rabi, 0.0, 0.0, pi_len),
                    probe(cfg),
                    gate(cfg),
                ])
            };
            reference = Some(values.iter().map(|&t| build(t, 0.0)).collect());
            labels = ("pi", Some("no_pi"));
            values.iter().map(|&t| build(t, p.rabi_freq_mhz)).collect()
        }
        ProtocolId::OpticalLifetime => values
            .iter()
            .map(|&t| {
                seq(vec![
                    Segment::Laser {
                        primary: true,
                        sideband_offset_mhz: None,
                        duration_us: s.excitation_us,
                        readout: false,
                    },
                    wait(t, 0.0),
                    Segment::Gate {
                        window_us: s.lifetime_bin_us,
                    },
                ])
            })
            .collect(),
        ProtocolId::PleScan | ProtocolId::OdmrScan | ProtocolId::HoleScan => unreachable!(),
    };
    for sq in primary.iter().chain(reference.iter().flatten()) {
        sq.validate()?;
    }
    Ok(BuiltProtocol {
        id: spec.id,
        values,
        primary,
        reference,
        primary_label: labels.0,
        reference_label: labels.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_for(id: ProtocolId) -> RunConfig {
        RunConfig {
            protocol: ProtocolSpec::new(id),
            ..RunConfig::default()
        }
    }

    #[test]
    fn rabi_has_one_mw_segment_of_length_tau() {
        let cfg = cfg_for(ProtocolId::Rabi);
        let b = build_protocol(&cfg.protocol, &cfg).unwrap();
        assert_eq!(b.values.len(), 101);
        for (tau, s) in b.values.iter().zip(&b.primary) {
            let mws: Vec<_> = s.mw_segments().collect();
            assert_eq!(mws.len(), 1);
            assert!((mws[0].duration() - tau).abs() < 1e-15);
        }
    }

    #[test]
    fn ramsey_segments_are_detuned() {
        let cfg = cfg_for(ProtocolId::Ramsey);
        let b = build_protocol(&cfg.protocol, &cfg).unwrap();
        for s in &b.primary {
            for m in s.mw_segments() {
                match m {
                    Segment::Mw { detuning_mhz, .. } => assert_eq!(*detuning_mhz, 5.0),
                    _ => unreachable!(),
                }
            }
        }
    }

    #[test]
    fn hahn_phases() {
        let cfg = cfg_for(ProtocolId::HahnEcho);
        let b = build_protocol(&cfg.protocol, &cfg).unwrap();
        let phases = |s: &PulseSequence| -> Vec<f64> {
            s.mw_segments()
                .map(|m| match m {
                    Segment::Mw { phase_rad, .. } => *phase_rad,
                    _ => unreachable!(),
                })
                .collect()
        };
        let plus = phases(&b.primary[3]);
        let minus = phases(&b.reference.as_ref().unwrap()[3]);
        assert_eq!(plus, vec![0.0, 0.5 * PI, 0.0]);
        assert_eq!(minus, vec![PI, 0.5 * PI, 0.0]);
    }

    #[test]
    fn polarizing_sideband_depends_on_field() {
        let p = crate::params::default_params();
        let l0 = ground_levels(&p, 0.0, Default::default());
        assert_eq!(polarizing_sideband(&l0, p.homog_fwhm_mhz), None);
        let l = ground_levels(&p, 158.0, Default::default());
        assert_eq!(polarizing_sideband(&l, p.homog_fwhm_mhz), Some(l.f_minus));
    }

    #[test]
    fn sequence_validation() {
        let ok = PulseSequence {
            segments: vec![
                Segment::Wait {
                    duration_us: 1.0,
                    frame_detuning_mhz: 0.0,
                },
                Segment::Gate { window_us: 1.0 },
            ],
        };
        ok.validate().unwrap();
        let no_gate = PulseSequence {
            segments: vec![Segment::Wait {
                duration_us: 1.0,
                frame_detuning_mhz: 0.0,
            }],
        };
        assert!(no_gate.validate().is_err());
        let overlap = PulseSequence {
            segments: vec![
                Segment::Gate { window_us: 1.0 },
                Segment::Gate { window_us: 1.0 },
            ],
        };
        assert!(overlap.validate().is_err());
        let neg = PulseSequence {
            segments: vec![
                Segment::Wait {
                    duration_us: -1.0,
                    frame_detuning_mhz: 0.0,
                },
                Segment::Gate { window_us: 1.0 },
            ],
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn grids() {
        assert!(SweepGrid::linear(0.0, 1.0, 5).validate().is_ok());
        assert!(SweepGrid::Values {
            values: vec![1.0, 1.0]
        }
        .validate()
        .is_err());
        assert!(SweepGrid::Values {
            values: vec![3.0, 2.0, 1.0]
        }
        .validate()
        .is_ok());
        assert!(SweepGrid::Values { values: vec![] }.validate().is_err());
        assert!("nope".parse::<ProtocolId>().is_err());
        for id in ProtocolId::ALL {
            assert_eq!(id.as_str().parse::<ProtocolId>().unwrap(), id);
            default_grid(id).validate().unwrap();
        }
    }

    #[test]
    fn continuous_wave_has_no_sequences() {
        let cfg = cfg_for(ProtocolId::HoleScan);
        assert!(build_protocol(&cfg.protocol, &cfg).is_err());
    }
}
