//! Runs pulse sequences over the optical and spin ensembles and converts the
//! emission into counts.
//!
//! Each sequence is split into optical blocks (laser segments) and dark blocks
//! (microwave pulses and waits). A dark block is averaged over the spin
//! classes into a single 16×16 map; optical blocks are propagated per optical
//! class. This is exact for sequences with one dark block between optical
//! blocks, which covers every protocol here.

use std::collections::HashMap;

use serde::Serialize;

use super::envelope::echo_envelope;
use super::protocol::{build_protocol, BuiltProtocol, ProtocolId, PulseSequence, Segment};
use crate::detection::{dark_subtract, derive_seed, expected_counts, poissonize, GateTrace};
use crate::dynamics::{
    build_generator, lorentzian_unit, Dephasing, DriveSet, Generator, MwDrive, Rates, Transition, E,
};
use crate::ensemble;
use crate::error::{Error, Result};
use crate::linalg::{Super, Vec16, C};
use crate::params::RunConfig;
use crate::quadrature::{amplitude_nodes, lorentz_mapped_nodes, Node, SpinDistribution};
use crate::spin::ground_levels;

/// One recorded trace of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub label: String,
    /// Noiseless, dark-free expected counts.
    pub mean_counts: Vec<f64>,
    /// Dark-subtracted sampled counts.
    pub sampled_counts: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Counts versus the sweep variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub protocol: ProtocolId,
    pub sweep_label: String,
    pub values: Vec<f64>,
    /// Observable: the single trace, or primary minus reference.
    pub mean_counts: Vec<f64>,
    pub sampled_counts: Vec<f64>,
    pub sigma: Vec<f64>,
    pub traces: Vec<Trace>,
    pub seed: u64,
    pub config_hash: String,
}

impl SweepResult {
    /// CSV with the observable columns first, then per-trace columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep_value,mean_counts,sampled_counts,sigma");
        let extra = self.traces.len() > 1;
        if extra {
            for t in &self.traces {
                out.push_str(&format!(",{0}_mean,{0}_sampled,{0}_sigma", t.label));
            }
        }
        out.push('\n');
        for i in 0..self.values.len() {
            out.push_str(&format!(
                "{},{},{},{}",
                self.values[i], self.mean_counts[i], self.sampled_counts[i], self.sigma[i]
            ));
            if extra {
                for t in &self.traces {
                    out.push_str(&format!(
                        ",{},{},{}",
                        t.mean_counts[i], t.sampled_counts[i], t.sigma[i]
                    ));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn trace(&self, label: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.label == label)
    }

    /// Dip contrast (percent) of `signal` against `reference` with propagated σ.
    pub fn contrast_percent(
        &self,
        signal: &str,
        reference: &str,
        noisy: bool,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = self
            .trace(signal)
            .ok_or_else(|| Error::Data(format!("no trace '{signal}'")))?;
        let r = self
            .trace(reference)
            .ok_or_else(|| Error::Data(format!("no trace '{reference}'")))?;
        let pick = |t: &Trace| {
            if noisy {
                t.sampled_counts.clone()
            } else {
                t.mean_counts.clone()
            }
        };
        let (sv, rv) = (pick(s), pick(r));
        let mut c = Vec::with_capacity(sv.len());
        let mut e = Vec::with_capacity(sv.len());
        for i in 0..sv.len() {
            c.push(crate::detection::contrast(
                sv[i],
                rv[i],
                Default::default(),
            )?);
            e.push(crate::detection::contrast_sigma(
                sv[i], s.sigma[i], rv[i], r.sigma[i],
            ));
        }
        Ok((c, e))
    }
}

/// How the dark blocks of a protocol are averaged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    /// Average microwave segments over spin detuning and amplitude classes.
    pub spin_ensemble: bool,
    pub dephasing: Dephasing,
    /// Simpson intervals across the gate (even).
    pub gate_steps: usize,
}

impl EngineOptions {
    pub fn for_protocol(id: ProtocolId) -> Self {
        let (spin_ensemble, dephasing) = match id {
            ProtocolId::Rabi | ProtocolId::Ramsey | ProtocolId::PolarizationBuildup => {
                (true, Dephasing::Homogeneous)
            }
            _ => (false, Dephasing::None),
        };
        EngineOptions {
            spin_ensemble,
            dephasing,
            gate_steps: 64,
        }
    }
}

fn quantize(d: f64) -> i64 {
    (d * 1e9).round() as i64
}

/// Propagator cache for one ensemble class. Requests for a longer duration of
/// an already seen generator are served by extending the last propagator.
#[derive(Default)]
struct PropCache {
    exact: HashMap<(u64, i64), Super>,
    last: HashMap<u64, (i64, Super)>,
}

impl PropCache {
    fn clear(&mut self) {
        self.exact.clear();
        self.last.clear();
    }

    fn get(
        &mut self,
        sig: u64,
        dur: f64,
        gen: &dyn Fn() -> Result<Generator>,
    ) -> Result<Option<Super>> {
        let k = quantize(dur);
        if k <= 0 {
            return Ok(None);
        }
        if let Some(p) = self.exact.get(&(sig, k)) {
            return Ok(Some(*p));
        }
        if let Some((k0, p0)) = self.last.get(&sig).copied() {
            if k0 == k {
                return Ok(Some(p0));
            }
            if k0 < k {
                let step = k - k0;
                let ps = match self.exact.get(&(sig, step)) {
                    Some(p) => *p,
                    None => {
                        let p = gen()?.propagator(step as f64 * 1e-9);
                        self.exact.insert((sig, step), p);
                        p
                    }
                };
                let p = ps * p0;
                self.last.insert(sig, (k, p));
                return Ok(Some(p));
            }
        }
        let p = gen()?.propagator(k as f64 * 1e-9);
        self.exact.insert((sig, k), p);
        self.last.insert(sig, (k, p));
        Ok(Some(p))
    }
}

fn hash_bits(parts: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        h ^= *p;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        h ^= h >> 29;
    }
    h
}

enum Block<'a> {
    Optical(&'a [Segment]),
    Dark(&'a [Segment]),
}

struct Job<'a> {
    blocks: Vec<Block<'a>>,
    gate_us: f64,
    transition: Transition,
}

fn split(seq: &PulseSequence) -> Result<Job<'_>> {
    seq.validate()?;
    let segs = &seq.segments;
    let (last, body) = segs.split_last().expect("validated sequence is non-empty");
    let gate_us = match last {
        Segment::Gate { window_us } => *window_us,
        _ => {
            return Err(Error::Config(
                "sequence must end with its readout gate".into(),
            ))
        }
    };
    if body.iter().any(|s| matches!(s, Segment::Gate { .. })) {
        return Err(Error::Config(
            "only a single trailing gate is supported".into(),
        ));
    }
    let transition = body
        .iter()
        .find_map(|s| match s {
            Segment::Mw { transition, .. } => Some(*transition),
            _ => None,
        })
        .unwrap_or_default();
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=body.len() {
        if i == body.len() || body[i].is_optical() != body[start].is_optical() {
            let part = &body[start..i];
            blocks.push(if part[0].is_optical() {
                Block::Optical(part)
            } else {
                Block::Dark(part)
            });
            start = i;
        }
    }
    Ok(Job {
        blocks,
        gate_us,
        transition,
    })
}

/// Spin class: detuning offset (MHz), relative amplitude and weight.
#[derive(Debug, Clone, Copy)]
struct SpinClass {
    detuning: f64,
    amplitude: f64,
    weight: f64,
}

fn spin_classes(cfg: &RunConfig) -> Vec<Vec<SpinClass>> {
    let p = &cfg.defect;
    let dist = SpinDistribution::from_params(p);
    let det: Vec<Node> = if cfg.ensemble.monte_carlo {
        dist.sample_nodes(
            cfg.ensemble.monte_carlo_samples,
            cfg.ensemble.monte_carlo_seed,
        )
    } else {
        let f = dist.fwhm();
        dist.grid_nodes(
            cfg.ensemble.spin_step_fwhm * f,
            cfg.ensemble.spin_range_fwhm * f,
        )
    };
    let amp = amplitude_nodes(p.rabi_amplitude_spread, cfg.ensemble.amplitude_nodes);
    det.iter()
        .map(|d| {
            amp.iter()
                .map(|a| SpinClass {
                    detuning: d.x,
                    amplitude: a.x,
                    weight: d.w * a.w,
                })
                .collect()
        })
        .collect()
}

fn dark_drive(seg: &Segment, class: &SpinClass, transition: Transition) -> DriveSet {
    match *seg {
        Segment::Mw {
            transition,
            rabi_mhz,
            detuning_mhz,
            phase_rad,
            duration_us,
        } => DriveSet::mw(
            MwDrive {
                transition,
                rabi_mhz: rabi_mhz * class.amplitude,
                detuning_mhz: detuning_mhz + class.detuning,
                phase_rad,
            },
            duration_us,
        ),
        Segment::Wait {
            duration_us,
            frame_detuning_mhz,
        } => DriveSet::mw(
            MwDrive {
                transition,
                rabi_mhz: 0.0,
                detuning_mhz: frame_detuning_mhz + class.detuning,
                phase_rad: 0.0,
            },
            duration_us,
        ),
        _ => unreachable!("dark blocks hold microwave and wait segments only"),
    }
}

fn dark_signature(seg: &Segment, transition: Transition) -> u64 {
    match *seg {
        Segment::Mw {
            transition,
            rabi_mhz,
            detuning_mhz,
            phase_rad,
            ..
        } => hash_bits(&[
            1,
            transition as u64,
            rabi_mhz.to_bits(),
            detuning_mhz.to_bits(),
            phase_rad.to_bits(),
        ]),
        Segment::Wait {
            frame_detuning_mhz, ..
        } => hash_bits(&[2, transition as u64, frame_detuning_mhz.to_bits()]),
        _ => unreachable!(),
    }
}

fn block_is_driven(block: &[Segment]) -> bool {
    block
        .iter()
        .any(|s| matches!(s, Segment::Mw { rabi_mhz, .. } if *rabi_mhz != 0.0))
}

fn block_map(
    block: &[Segment],
    class: &SpinClass,
    transition: Transition,
    rates: &Rates,
    cache: &mut PropCache,
) -> Result<Option<Super>> {
    let mut m: Option<Super> = None;
    for seg in block {
        // waits ignore the amplitude class so they are shared across it
        let sig = match seg {
            Segment::Mw { .. } => hash_bits(&[
                dark_signature(seg, transition),
                class.amplitude.to_bits(),
                class.detuning.to_bits(),
            ]),
            _ => hash_bits(&[dark_signature(seg, transition), class.detuning.to_bits()]),
        };
        let d = dark_drive(seg, class, transition);
        let p = cache.get(sig, seg.duration(), &|| {
            build_generator(rates, &d, &[0.0; 3])
        })?;
        if let Some(p) = p {
            m = Some(match m {
                None => p,
                Some(prev) => p * prev,
            });
        }
    }
    Ok(m)
}

/// Expected counts for every sequence of every trace.
pub fn simulate_expected(
    cfg: &RunConfig,
    traces: &[&[PulseSequence]],
    opts: &EngineOptions,
) -> Result<Vec<Vec<f64>>> {
    let p = &cfg.defect;
    let rates = Rates::new(p, cfg.temperature_k, opts.dephasing)?;
    let levels = ground_levels(p, cfg.field_gauss, cfg.zeeman_convention);
    let f = levels.ground();

    let jobs: Vec<Job> = traces
        .iter()
        .flat_map(|t| t.iter())
        .map(split)
        .collect::<Result<_>>()?;

    // dark-block maps averaged over spin classes
    let ideal = vec![vec![SpinClass {
        detuning: 0.0,
        amplitude: 1.0,
        weight: 1.0,
    }]];
    let mut maps: Vec<Vec<Option<Super>>> = jobs
        .iter()
        .map(|j| j.blocks.iter().map(|_| None).collect())
        .collect();
    let classes = if opts.spin_ensemble {
        spin_classes(cfg)
    } else {
        ideal.clone()
    };
    let mut cache = PropCache::default();
    for (pass, class_set) in [(true, &classes), (false, &ideal)] {
        for group in class_set.iter() {
            cache.clear();
            for class in group {
                for (ji, job) in jobs.iter().enumerate() {
                    for (bi, block) in job.blocks.iter().enumerate() {
                        let Block::Dark(segs) = block else { continue };
                        let driven = opts.spin_ensemble && block_is_driven(segs);
                        if driven != pass {
                            continue;
                        }
                        let m = block_map(segs, class, job.transition, &rates, &mut cache)?
                            .unwrap_or_else(Super::identity);
                        let w = C::new(class.weight, 0.0);
                        let slot = maps[ji][bi].get_or_insert_with(Super::zeros);
                        *slot += m * w;
                    }
                }
            }
        }
    }

    // optical classes
    let half = 0.5 * p.homog_fwhm_mhz;
    let optical = lorentz_mapped_nodes(cfg.ensemble.protocol_optical_nodes, 0.0, half);
    let w_pump = p.pump_rate_per_us;
    let rho0 = crate::dynamics::QuantumState::thermal().to_vec();
    let mut acc: Vec<Vec16> = vec![Vec16::zeros(); jobs.len()];
    for node in &optical {
        cache.clear();
        let delta = node.x;
        for (ji, job) in jobs.iter().enumerate() {
            let mut rho = rho0;
            for (bi, block) in job.blocks.iter().enumerate() {
                match block {
                    Block::Dark(_) => {
                        if let Some(m) = &maps[ji][bi] {
                            rho = m * rho;
                        }
                    }
                    Block::Optical(segs) => {
                        for seg in segs.iter() {
                            let Segment::Laser {
                                primary,
                                sideband_offset_mhz,
                                duration_us,
                                readout,
                            } = *seg
                            else {
                                unreachable!()
                            };
                            let pump = ensemble::local_pump_rates(
                                delta,
                                &f,
                                if primary { w_pump } else { 0.0 },
                                sideband_offset_mhz.map(|s| (s, w_pump)),
                                p.homog_fwhm_mhz,
                            );
                            let mix = if readout && primary {
                                p.probe_backaction
                                    * w_pump
                                    * lorentzian_unit(delta, p.homog_fwhm_mhz)
                            } else {
                                0.0
                            };
                            let sig = hash_bits(&[
                                3,
                                primary as u64,
                                sideband_offset_mhz.map_or(u64::MAX, f64::to_bits),
                                readout as u64,
                            ]);
                            let d = DriveSet {
                                pump_per_us: pump,
                                mw: None,
                                extra_mixing_per_us: mix,
                                duration_us,
                            };
                            if let Some(prop) = cache
                                .get(sig, duration_us, &|| build_generator(&rates, &d, &[0.0; 3]))?
                            {
                                rho = prop * rho;
                            }
                        }
                    }
                }
            }
            acc[ji] += rho * C::new(node.w, 0.0);
        }
    }

    // gate: free decay of the class-summed state
    let dark = build_generator(&rates, &DriveSet::dark(1.0), &[0.0; 3])?;
    let det = &cfg.detection;
    let scale = C::new(det.addressed_emitters, 0.0);
    let mut gate_props: HashMap<i64, Super> = HashMap::new();
    let mut flat = Vec::with_capacity(jobs.len());
    for (ji, job) in jobs.iter().enumerate() {
        let n = opts.gate_steps.max(2) + opts.gate_steps % 2;
        let h = job.gate_us / n as f64;
        let step = *gate_props
            .entry(quantize(h))
            .or_insert_with(|| dark.propagator(h));
        let mut v = acc[ji] * scale;
        let mut excited = Vec::with_capacity(n + 1);
        for k in 0..=n {
            if k > 0 {
                v = step * v;
            }
            excited.push(v[crate::linalg::vec_index(E, E)].re);
        }
        let tr = GateTrace { dt_us: h, excited };
        flat.push(expected_counts(
            &tr,
            p.optical_lifetime_us,
            det.collection_efficiency,
            job.gate_us,
            det.repetitions,
        )?);
    }
    let mut out = Vec::new();
    let mut it = flat.into_iter();
    for t in traces {
        out.push(it.by_ref().take(t.len()).collect());
    }
    Ok(out)
}

/// Turn expected counts into a trace with optional Poisson noise.
fn sample_trace(
    label: &str,
    expected: &[f64],
    gates: &[f64],
    cfg: &RunConfig,
    stream: u64,
) -> Trace {
    let det = &cfg.detection;
    let mut t = Trace {
        label: label.to_string(),
        mean_counts: expected.to_vec(),
        sampled_counts: Vec::with_capacity(expected.len()),
        sigma: Vec::with_capacity(expected.len()),
    };
    for (k, (&lam, &gate)) in expected.iter().zip(gates).enumerate() {
        if det.shot_noise {
            let seed = derive_seed(det.rng_seed, stream, k as u64);
            let rec = poissonize(lam, det.dark_rate_cps, gate, det.repetitions, seed);
            let net = dark_subtract(&rec);
            t.sampled_counts.push(net.net);
            t.sigma.push(net.sigma.max(1.0));
        } else {
            let dark =
                crate::detection::dark_contribution(det.dark_rate_cps, gate, det.repetitions);
            t.sampled_counts.push(lam);
            t.sigma.push((lam.max(0.0) + dark).sqrt().max(1.0));
        }
    }
    t
}

fn gates_of(seqs: &[PulseSequence]) -> Vec<f64> {
    seqs.iter()
        .map(|s| match s.segments.last() {
            Some(Segment::Gate { window_us }) => *window_us,
            _ => 0.0,
        })
        .collect()
}

/// Simulate a protocol and record counts versus the sweep variable.
pub fn run_protocol(cfg: &RunConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let spec = &cfg.protocol;
    if spec.id.is_continuous_wave() {
        return run_spectrum(cfg);
    }
    let built = build_protocol(spec, cfg)?;
    run_built(cfg, &built)
}

/// Simulate already built sequences.
pub fn run_built(cfg: &RunConfig, built: &BuiltProtocol) -> Result<SweepResult> {
    let opts = EngineOptions::for_protocol(built.id);
    let mut sets: Vec<&[PulseSequence]> = vec![&built.primary];
    if let Some(r) = &built.reference {
        sets.push(r);
    }
    let mut expected = simulate_expected(cfg, &sets, &opts)?;

    if built.id == ProtocolId::HahnEcho {
        let (plus, minus) = (&expected[0], &expected[1]);
        let mut new_plus = Vec::with_capacity(plus.len());
        let mut new_minus = Vec::with_capacity(plus.len());
        for (i, t) in built.values.iter().enumerate() {
            let env = echo_envelope(*t, &cfg.defect, spec_tau(cfg));
            let mid = 0.5 * (plus[i] + minus[i]);
            let half = 0.5 * (plus[i] - minus[i]) * env;
            new_plus.push(mid + half);
            new_minus.push(mid - half);
        }
        expected = vec![new_plus, new_minus];
    }

    let mut traces = vec![sample_trace(
        built.primary_label,
        &expected[0],
        &gates_of(&built.primary),
        cfg,
        0,
    )];
    if let (Some(r), Some(label)) = (&built.reference, built.reference_label) {
        traces.push(sample_trace(label, &expected[1], &gates_of(r), cfg, 1));
    }
    let (mean, sampled, sigma) = if traces.len() == 2 {
        let (a, b) = (&traces[0], &traces[1]);
        let n = a.mean_counts.len();
        (
            (0..n)
                .map(|i| a.mean_counts[i] - b.mean_counts[i])
                .collect(),
            (0..n)
                .map(|i| a.sampled_counts[i] - b.sampled_counts[i])
                .collect(),
            (0..n).map(|i| a.sigma[i].hypot(b.sigma[i])).collect(),
        )
    } else {
        let a = &traces[0];
        (
            a.mean_counts.clone(),
            a.sampled_counts.clone(),
            a.sigma.clone(),
        )
    };
    Ok(SweepResult {
        protocol: built.id,
        sweep_label: built.id.sweep_label().to_string(),
        values: built.values.clone(),
        mean_counts: mean,
        sampled_counts: sampled,
        sigma,
        traces,
        seed: cfg.detection.rng_seed,
        config_hash: cfg.hash(),
    })
}

fn spec_tau(cfg: &RunConfig) -> super::protocol::EchoTau {
    cfg.protocol.settings.echo_tau
}

fn run_spectrum(cfg: &RunConfig) -> Result<SweepResult> {
    let spec = &cfg.protocol;
    let grid = spec.sweep_values();
    let s = match spec.id {
        ProtocolId::PleScan => ensemble::ple_spectrum(
            &cfg.defect,
            &ensemble::EnsembleSpec::from_config(cfg),
            &grid,
        )?,
        ProtocolId::HoleScan => ensemble::hole_recovery_scan_with(cfg, &grid)?,
        ProtocolId::OdmrScan => ensemble::odmr_scan_with(cfg, &grid)?,
        _ => unreachable!(),
    };
    // spectra are per-packet photon rates (1/μs) collected over the gate
    let det = &cfg.detection;
    let scale = det.collection_efficiency
        * det.addressed_emitters
        * det.gate_window_us
        * det.repetitions as f64;
    let expected: Vec<f64> = s.values.iter().map(|v| v * scale).collect();
    let gates = vec![det.gate_window_us; expected.len()];
    let trace = sample_trace("signal", &expected, &gates, cfg, 0);
    Ok(SweepResult {
        protocol: spec.id,
        sweep_label: spec.id.sweep_label().to_string(),
        values: s.axis.clone(),
        mean_counts: trace.mean_counts.clone(),
        sampled_counts: trace.sampled_counts.clone(),
        sigma: trace.sigma.clone(),
        traces: vec![trace],
        seed: det.rng_seed,
        config_hash: cfg.hash(),
    })
}
