//! Noiseless round-trip fits of every library model from perturbed starts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::guess::fit_with_guesses;
use super::lm::{jacobian_check, FitData};
use super::models::{FitModel, Model, ModelId};
use crate::detection::derive_seed;
use crate::error::Result;

/// Parameters must come back within this relative error.
pub const ROUNDTRIP_TOLERANCE: f64 = 1e-6;

/// Reference parameters and sample points for one model.
pub fn roundtrip_case(id: ModelId) -> (FitModel, Vec<f64>, Vec<f64>) {
    let grid = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    let m = FitModel::new(id);
    match id {
        ModelId::GaussianTwoPeak => (m, grid(-15.0, 15.0, 121), vec![0.0485, 0.5, 6.87, 0.187, 3.34, 1.063, 0.01]),
        ModelId::Lorentzian => (m, grid(1000.0, 1125.0, 126), vec![-50.0, 1062.7, 31.0, 1000.0]),
        ModelId::LorentzianPair => (m, grid(1050.0, 1075.0, 251), vec![-30.0, 1060.5, -25.0, 1065.5, 1.32, 500.0]),
        ModelId::ExpDecay => (m, grid(0.0, 800.0, 81), vec![1000.0, 156.3, 20.0]),
        ModelId::RabiDampedCosine => (m, grid(0.0, 10.0, 201), vec![-60.0, 4.76, 1.5, 130.0]),
        ModelId::RamseyModel => (m, grid(0.0, 1.5, 151), vec![50.0, 0.307, 5.0, 0.4, 100.0]),
        ModelId::EseemModel => (m, grid(0.0, 240.0, 121), vec![1000.0, 81.0, 1.9, 0.2, 87.5, 0.15, 68.0, 50.0]),
        ModelId::Orbach => (m, grid(15.0, 30.0, 6), vec![1e6, 20.0]),
        ModelId::Raman => (m, grid(15.0, 30.0, 6), vec![0.6, 3.2, 9.0]),
        ModelId::ExpRise => (m, grid(0.0, 6000.0, 61), vec![64.0, 1270.0, 2.0]),
        ModelId::Constant => (m, grid(0.0, 10.0, 11), vec![5.0]),
        ModelId::Linear => (m, grid(-5.0, 5.0, 11), vec![1.5, -0.3]),
    }
}

/// Outcome of the round trip for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub model: String,
    pub trials: usize,
    pub successes: usize,
    /// Worst forward vs central Jacobian deviation at the reference point.
    pub jacobian_deviation: f64,
}

impl RoundTrip {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials.max(1) as f64
    }
}

fn wrap_phase(p: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let w = p.rem_euclid(tau);
    if w > std::f64::consts::PI {
        w - tau
    } else {
        w
    }
}

/// Representative of parameter sets that give the same curve (width signs,
/// line order, amplitude sign and phase, frequency sign).
fn canonical(id: ModelId, th: &[f64]) -> Vec<f64> {
    let mut t = th.to_vec();
    match id {
        ModelId::RamseyModel => {
            if t[2] < 0.0 {
                t[2] = -t[2];
                t[3] = -t[3];
            }
            if t[0] < 0.0 {
                t[0] = -t[0];
                t[3] += std::f64::consts::PI;
            }
            t[3] = wrap_phase(t[3]);
        }
        ModelId::RabiDampedCosine => t[2] = t[2].abs(),
        ModelId::GaussianTwoPeak => {
            t[2] = t[2].abs();
            t[4] = t[4].abs();
        }
        ModelId::Lorentzian => t[2] = t[2].abs(),
        ModelId::EseemModel => {
            t[1] = t[1].abs();
            let last = t.len() - 1;
            let mut comps: Vec<(f64, f64)> = t[3..last].chunks(2).map(|c| (c[0], c[1].abs())).collect();
            comps.sort_by(|a, b| b.1.total_cmp(&a.1));
            for (i, (k, w)) in comps.into_iter().enumerate() {
                t[3 + 2 * i] = k;
                t[4 + 2 * i] = w;
            }
        }
        ModelId::LorentzianPair => {
            t[4] = t[4].abs();
            if t[1] > t[3] {
                t.swap(0, 2);
                t.swap(1, 3);
            }
        }
        _ => {}
    }
    t
}

/// Fit noiseless data from `trials` starts, each free parameter scaled by a
/// log-uniform factor in [0.5, 2].
pub fn roundtrip(id: ModelId, trials: usize, seed: u64) -> Result<RoundTrip> {
    let (model, x, truth) = roundtrip_case(id);
    let y = x.iter().map(|&v| model.eval(v, &truth)).collect::<Result<Vec<_>>>()?;
    let data = FitData::unweighted(x.clone(), y)?;
    let fixed = model.fixed();
    let want = canonical(id, &truth);
    let mut successes = 0;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, id as u64, trial as u64));
        let theta0: Vec<f64> = truth
            .iter()
            .zip(&fixed)
            .map(|(&v, &f)| if f { v } else { v * rng.random_range(0.5f64.ln()..2f64.ln()).exp() })
            .collect();
        if let Ok(r) = fit_with_guesses(&model, &data, &theta0) {
            let got = canonical(id, &r.values);
            if got
                .iter()
                .zip(&want)
                .all(|(g, w)| (g - w).abs() <= ROUNDTRIP_TOLERANCE * w.abs())
            {
                successes += 1;
            }
        }
    }
    let jac_x: Vec<f64> = if id == ModelId::EseemModel {
        // three periods of the slower modulation
        (0..300).map(|i| i as f64 * 0.3).collect()
    } else {
        x
    };
    Ok(RoundTrip {
        model: id.as_str().into(),
        trials,
        successes,
        jacobian_deviation: jacobian_check(&model, &jac_x, &truth)?,
    })
}

/// Round trip of every library model.
pub fn roundtrip_suite(trials: usize, seed: u64) -> Result<Vec<RoundTrip>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = ModelId::ALL
            .iter()
            .map(|&id| s.spawn(move || roundtrip(id, trials, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("round-trip worker panicked"))
            .collect()
    })
}
