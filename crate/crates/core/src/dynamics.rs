//! Four-level Lindblad dynamics of a single defect.
//!
//! Basis order is {|g0⟩, |g−⟩, |g+⟩, |e⟩}. Optical excitation is an
//! incoherent pump; microwaves drive one ground transition coherently in the
//! rotating frame.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, expm, unvectorize, vec_index, vectorize, Super, C};
use crate::params::DefectParams;

pub const G0: usize = 0;
pub const GM: usize = 1;
pub const GP: usize = 2;
pub const E: usize = 3;

/// Density matrix over {|g0⟩, |g−⟩, |g+⟩, |e⟩}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumState {
    pub rho: Matrix4<C>,
}

impl QuantumState {
    pub fn from_populations(p: [f64; 4]) -> Self {
        let mut rho = Matrix4::zeros();
        for (i, v) in p.iter().enumerate() {
            rho[(i, i)] = C::new(*v, 0.0);
        }
        QuantumState { rho }
    }

    pub fn basis(i: usize) -> Self {
        let mut p = [0.0; 4];
        p[i] = 1.0;
        Self::from_populations(p)
    }

    /// Equal ground populations, empty excited state.
    pub fn thermal() -> Self {
        Self::from_populations([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0])
    }

    pub fn populations(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.rho[(i, i)].re)
    }

    pub fn excited(&self) -> f64 {
        self.rho[(E, E)].re
    }

    pub fn trace(&self) -> C {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.rho)
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::max_abs(&(self.rho - self.rho.adjoint()))
    }

    /// Check the density-matrix invariants with tolerance `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let h = self.hermiticity_error();
        if h >= tol {
            return Err(Error::Numerical(format!("state not Hermitian ({h:.2e})")));
        }
        let t = (self.trace() - C::new(1.0, 0.0)).norm();
        if t >= tol {
            return Err(Error::Numerical(format!("trace deviates by {t:.2e}")));
        }
        let m = self.min_eigenvalue();
        if m < -tol {
            return Err(Error::Numerical(format!("negative eigenvalue {m:.2e}")));
        }
        Ok(())
    }

    pub fn to_vec(&self) -> linalg::Vec16 {
        vectorize(&self.rho)
    }

    pub fn from_vec(v: &linalg::Vec16) -> Self {
        QuantumState {
            rho: linalg::hermitize(&unvectorize(v)),
        }
    }
}

/// Microwave transition driven from |g0⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    ZeroMinus,
    #[default]
    ZeroPlus,
}

impl Transition {
    pub fn target(self) -> usize {
        match self {
            Transition::ZeroMinus => GM,
            Transition::ZeroPlus => GP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwDrive {
    pub transition: Transition,
    pub rabi_mhz: f64,
    /// Spin transition frequency minus the frame frequency (MHz).
    pub detuning_mhz: f64,
    pub phase_rad: f64,
}

/// Controls held constant over one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSet {
    /// Resonant pump rate out of each ground sublevel (1/μs).
    pub pump_per_us: [f64; 3],
    pub mw: Option<MwDrive>,
    /// Extra mixing rate between every ordered ground pair (1/μs).
    pub extra_mixing_per_us: f64,
    pub duration_us: f64,
}

impl DriveSet {
    pub fn dark(duration_us: f64) -> Self {
        DriveSet {
            pump_per_us: [0.0; 3],
            mw: None,
            extra_mixing_per_us: 0.0,
            duration_us,
        }
    }

    pub fn pump(pump_per_us: [f64; 3], duration_us: f64) -> Self {
        DriveSet {
            pump_per_us,
            ..Self::dark(duration_us)
        }
    }

    pub fn mw(mw: MwDrive, duration_us: f64) -> Self {
        DriveSet {
            mw: Some(mw),
            ..Self::dark(duration_us)
        }
    }
}

/// Which ground-coherence dephasing the generator includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dephasing {
    /// Total free-evolution coherence decay 1/T2*.
    #[default]
    Inhomogeneous,
    /// Total coherence decay 1/T2 (per member of an explicitly averaged ensemble).
    Homogeneous,
    /// Only the decay implied by T1.
    None,
}

/// Incoherent rates entering the Liouvillian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// 1/T_opt (1/μs).
    pub gamma_opt: f64,
    pub branching: [f64; 3],
    pub homog_fwhm_mhz: f64,
    /// T1 in μs; infinite disables ground thermalization.
    pub t1_us: f64,
    /// Pure-dephasing rate of ground coherences (1/μs).
    pub dephasing_per_us: f64,
}

impl Rates {
    /// Rates at a temperature, T1 from the defect's T1 model.
    pub fn new(p: &DefectParams, temperature_k: f64, dephasing: Dephasing) -> Result<Self> {
        let t1_us = p.t1_model.t1_us(temperature_k)?;
        Self::with_t1(p, t1_us, dephasing)
    }

    pub fn with_t1(p: &DefectParams, t1_us: f64, dephasing: Dephasing) -> Result<Self> {
        let relax = if t1_us.is_finite() {
            2.0 / (3.0 * t1_us)
        } else {
            0.0
        };
        let target = match dephasing {
            Dephasing::Inhomogeneous => 1.0 / p.t2_star_us(),
            Dephasing::Homogeneous => 1.0 / p.t2_us,
            Dephasing::None => relax,
        };
        let dephasing_per_us = target - relax;
        if dephasing_per_us < -1e-15 {
            return Err(Error::Config(format!(
                "coherence time shorter than allowed by T1: pure dephasing rate {dephasing_per_us:.3e}/μs"
            )));
        }
        Ok(Rates {
            gamma_opt: p.gamma_opt(),
            branching: p.branching,
            homog_fwhm_mhz: p.homog_fwhm_mhz,
            t1_us,
            dephasing_per_us: dephasing_per_us.max(0.0),
        })
    }

    /// Thermalization rate between one ordered ground pair (1/μs).
    pub fn pair_relaxation(&self) -> f64 {
        if self.t1_us.is_finite() {
            1.0 / (3.0 * self.t1_us)
        } else {
            0.0
        }
    }
}

/// Unit-peak Lorentzian with the given FWHM.
pub fn lorentzian_unit(detuning: f64, fwhm: f64) -> f64 {
    let x = 2.0 * detuning / fwhm;
    1.0 / (1.0 + x * x)
}

/// Liouvillian on column-stacked vec(ρ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub matrix: Super,
}

impl Generator {
    /// Largest |d tr ρ / dt| coefficient; zero for a trace-preserving generator.
    pub fn trace_row_norm(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for col in 0..16 {
            let mut s = C::new(0.0, 0.0);
            for i in 0..4 {
                s += self.matrix[(vec_index(i, i), col)];
            }
            worst = worst.max(s.norm());
        }
        worst
    }

    pub fn propagator(&self, t: f64) -> Super {
        expm(&(self.matrix * C::new(t, 0.0)))
    }
}

fn add_jump(m: &mut Super, to: usize, from: usize, rate: f64) {
    if rate == 0.0 {
        return;
    }
    // L ρ L† with L = sqrt(rate)|to⟩⟨from|
    m[(vec_index(to, to), vec_index(from, from))] += C::new(rate, 0.0);
    // −½{L†L, ρ} with L†L = rate|from⟩⟨from|
    let h = C::new(0.5 * rate, 0.0);
    for j in 0..4 {
        m[(vec_index(from, j), vec_index(from, j))] -= h;
        m[(vec_index(j, from), vec_index(j, from))] -= h;
    }
}

fn add_hamiltonian(m: &mut Super, h: &Matrix4<C>) {
    let mi = C::new(0.0, -1.0);
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                let hik = h[(i, k)];
                if hik != C::new(0.0, 0.0) {
                    m[(vec_index(i, j), vec_index(k, j))] += mi * hik;
                }
                let hkj = h[(k, j)];
                if hkj != C::new(0.0, 0.0) {
                    m[(vec_index(i, j), vec_index(i, k))] -= mi * hkj;
                }
            }
        }
    }
}

/// Rotating-frame microwave Hamiltonian in angular units (rad/μs).
pub fn mw_hamiltonian(mw: &MwDrive) -> Matrix4<C> {
    let t = mw.transition.target();
    let mut h = Matrix4::zeros();
    let w = 2.0 * PI;
    h[(t, t)] = C::new(w * mw.detuning_mhz, 0.0);
    let coupling = C::from_polar(w * 0.5 * mw.rabi_mhz, mw.phase_rad);
    h[(G0, t)] = coupling;
    h[(t, G0)] = coupling.conj();
    h
}

/// Assemble the Liouvillian for one constant-control segment.
/// `optical_detunings` are the laser detunings from each ground sublevel's transition (MHz).
pub fn build_generator(
    rates: &Rates,
    d: &DriveSet,
    optical_detunings: &[f64; 3],
) -> Result<Generator> {
    if d.pump_per_us.iter().any(|w| !(*w >= 0.0)) || !(d.extra_mixing_per_us >= 0.0) {
        return Err(Error::Config(
            "pump and mixing rates must be non-negative".into(),
        ));
    }
    let mut m = Super::zeros();
    if let Some(mw) = &d.mw {
        add_hamiltonian(&mut m, &mw_hamiltonian(mw));
    }
    for i in 0..3 {
        let r = d.pump_per_us[i] * lorentzian_unit(optical_detunings[i], rates.homog_fwhm_mhz);
        add_jump(&mut m, E, i, r);
    }
    for j in 0..3 {
        add_jump(&mut m, j, E, rates.branching[j] * rates.gamma_opt);
    }
    let mix = rates.pair_relaxation() + d.extra_mixing_per_us;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                add_jump(&mut m, j, i, mix);
            }
        }
    }
    for i in 0..3 {
        add_jump(&mut m, i, i, rates.dephasing_per_us);
    }
    Ok(Generator { matrix: m })
}

/// vec(ρ') = expm(G t) vec(ρ), re-Hermitized.
pub fn propagate_segment(s: &QuantumState, g: &Generator, t: f64) -> QuantumState {
    if t == 0.0 {
        return *s;
    }
    let v = g.propagator(t) * s.to_vec();
    QuantumState::from_vec(&v)
}

/// States at segment boundaries plus a uniformly sampled excited population.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub boundary_times: Vec<f64>,
    pub states: Vec<QuantumState>,
    pub sample_times: Vec<f64>,
    pub excited: Vec<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &QuantumState {
        self.states.last().expect("trajectory has an initial state")
    }
}

/// Apply the segments in order. When `sample_dt` is given, ρ_ee is recorded
/// at every multiple of it from t = 0 through the end.
pub fn evolve_sequence(
    s0: &QuantumState,
    segments: &[DriveSet],
    rates: &Rates,
    optical_detunings: &[f64; 3],
    sample_dt: Option<f64>,
) -> Result<Trajectory> {
    if segments.is_empty() {
        return Err(Error::Config("segment list is empty".into()));
    }
    if let Some(dt) = sample_dt {
        if !(dt > 0.0) {
            return Err(Error::Config("sample spacing must be positive".into()));
        }
    }
    let mut traj = Trajectory {
        boundary_times: vec![0.0],
        states: vec![*s0],
        sample_times: Vec::new(),
        excited: Vec::new(),
    };
    let mut state = *s0;
    let mut t0 = 0.0;
    let mut next_sample = 0.0;
    for seg in segments {
        if !(seg.duration_us >= 0.0) {
            return Err(Error::Config(
                "segment duration must be non-negative".into(),
            ));
        }
        let g = build_generator(rates, seg, optical_detunings)?;
        let t1 = t0 + seg.duration_us;
        if let Some(dt) = sample_dt {
            let mut cur = state;
            let mut tc = t0;
            let step = g.propagator(dt);
            let mut first = true;
            while next_sample <= t1 + 1e-12 * t1.max(1.0) {
                if first {
                    cur = propagate_segment(&cur, &g, next_sample - tc);
                    first = false;
                } else {
                    cur = QuantumState::from_vec(&(step * cur.to_vec()));
                }
                tc = next_sample;
                traj.sample_times.push(next_sample);
                traj.excited.push(cur.excited());
                next_sample = traj.sample_times.len() as f64 * dt;
            }
        }
        state = propagate_segment(&state, &g, seg.duration_us);
        t0 = t1;
        traj.boundary_times.push(t0);
        traj.states.push(state);
    }
    Ok(traj)
}

/// Unique steady state with unit trace.
pub fn steady_state(g: &Generator) -> Result<QuantumState> {
    let mut a = g.matrix;
    let r0 = vec_index(0, 0);
    for col in 0..16 {
        a[(r0, col)] = C::new(0.0, 0.0);
    }
    for i in 0..4 {
        a[(r0, vec_index(i, i))] = C::new(1.0, 0.0);
    }
    let scale = linalg::max_abs(&a).max(1e-300);
    let lu = a.full_piv_lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..16).map(|i| u[(i, i)].norm()).collect();
    let small = pivots.iter().filter(|p| **p <= 1e-12 * scale).count();
    if small > 0 {
        return Err(Error::DegenerateSteadyState {
            dimension: small + 1,
        });
    }
    let mut rhs = linalg::Vec16::zeros();
    rhs[r0] = C::new(1.0, 0.0);
    let v = lu
        .solve(&rhs)
        .ok_or(Error::DegenerateSteadyState { dimension: 2 })?;
    Ok(QuantumState::from_vec(&v))
}

/// Steady state, or long-time propagation from `s0` when it is not unique.
pub fn steady_state_or_propagate(g: &Generator, s0: &QuantumState, t_long: f64) -> QuantumState {
    match steady_state(g) {
        Ok(s) => s,
        Err(_) => propagate_segment(s0, g, t_long),
    }
}
