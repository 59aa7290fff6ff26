//! Photon counting: gated integration of the emission, dark counts, Poisson
//! shot noise and contrast.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::simpson;

/// Counts collected over `repetitions` shots of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub expected_counts: f64,
    pub sampled_counts: u64,
    pub dark_contribution: f64,
    pub repetitions: u64,
    pub gate_window_us: f64,
}

/// Dark-subtracted counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetCounts {
    pub net: f64,
    pub sigma: f64,
}

/// Excited population sampled uniformly across a gate that starts when the
/// probe laser turns off.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTrace {
    pub dt_us: f64,
    pub excited: Vec<f64>,
}

impl GateTrace {
    pub fn span(&self) -> f64 {
        self.dt_us * (self.excited.len().saturating_sub(1)) as f64
    }
}

/// η·Γ·∫_gate ρ_ee dt·repetitions, with Γ = 1/T_opt.
pub fn expected_counts(
    trace: &GateTrace,
    optical_lifetime_us: f64,
    collection_efficiency: f64,
    gate_window_us: f64,
    repetitions: u64,
) -> Result<f64> {
    let n = trace.excited.len();
    if n < 3 || n % 2 == 0 {
        return Err(Error::Domain(
            "gate trace needs an odd number (≥ 3) of samples".into(),
        ));
    }
    if gate_window_us > trace.span() * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "gate of {gate_window_us} μs extends beyond the {:.3} μs trajectory",
            trace.span()
        )));
    }
    let steps = (gate_window_us / trace.dt_us).round() as usize;
    if steps % 2 == 1 || (steps as f64 * trace.dt_us - gate_window_us).abs() > 1e-9 * gate_window_us
    {
        return Err(Error::Domain(
            "gate window must be an even number of sample steps".into(),
        ));
    }
    let integral = simpson(&trace.excited[..=steps], trace.dt_us);
    Ok(collection_efficiency * integral / optical_lifetime_us * repetitions as f64)
}

/// Dark counts accumulated in the gate over all repetitions.
pub fn dark_contribution(dark_rate_cps: f64, gate_window_us: f64, repetitions: u64) -> f64 {
    dark_rate_cps * gate_window_us * 1e-6 * repetitions as f64
}

/// Draw Poisson counts for the signal plus dark background.
pub fn poissonize(
    expected: f64,
    dark_rate_cps: f64,
    gate_window_us: f64,
    repetitions: u64,
    seed: u64,
) -> CountRecord {
    let dark = dark_contribution(dark_rate_cps, gate_window_us, repetitions);
    let lambda = expected.max(0.0) + dark;
    let sampled = if lambda > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Poisson::new(lambda).expect("positive finite rate");
        d.sample(&mut rng) as u64
    } else {
        0
    };
    CountRecord {
        expected_counts: expected,
        sampled_counts: sampled,
        dark_contribution: dark,
        repetitions,
        gate_window_us,
    }
}

pub fn dark_subtract(r: &CountRecord) -> NetCounts {
    let s = r.sampled_counts as f64;
    NetCounts {
        net: s - r.dark_contribution,
        sigma: s.sqrt(),
    }
}

/// Sign convention of a contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContrastOrientation {
    /// Signal darker than the reference: 100·(ref − sig)/ref.
    #[default]
    Dip,
    /// Signal brighter than the reference: 100·(sig − ref)/ref.
    Peak,
}

pub fn contrast(signal: f64, reference: f64, orientation: ContrastOrientation) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(Error::Domain(format!(
            "contrast reference must be positive, got {reference}"
        )));
    }
    Ok(match orientation {
        ContrastOrientation::Dip => 100.0 * (reference - signal) / reference,
        ContrastOrientation::Peak => 100.0 * (signal - reference) / reference,
    })
}

/// Standard deviation of a dip contrast from Poisson errors of both inputs.
pub fn contrast_sigma(signal: f64, sigma_signal: f64, reference: f64, sigma_reference: f64) -> f64 {
    let ds = 100.0 / reference;
    let dr = 100.0 * signal / (reference * reference);
    ((ds * sigma_signal).powi(2) + (dr * sigma_reference).powi(2)).sqrt()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for (stream, index) under a master seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)).wrapping_add(index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn decay_trace(rho0: f64, t_opt: f64, span: f64, steps: usize) -> GateTrace {
        let dt = span / steps as f64;
        GateTrace {
            dt_us: dt,
            excited: (0..=steps)
                .map(|i| rho0 * (-(i as f64) * dt / t_opt).exp())
                .collect(),
        }
    }

    #[test]
    fn closed_form_gate_integral() {
        let tr = decay_trace(0.1, 156.3, 155.0, 200);
        let c = expected_counts(&tr, 156.3, 1.0, 155.0, 1).unwrap();
        let oracle = 0.1 * (1.0 - (-155.0f64 / 156.3).exp());
        assert_relative_eq!(c, oracle, max_relative = 1e-9);
        assert!((c - 0.0629).abs() < 1e-4);
    }

    #[test]
    fn zero_population_gives_zero() {
        let tr = GateTrace {
            dt_us: 1.0,
            excited: vec![0.0; 11],
        };
        assert_eq!(expected_counts(&tr, 156.3, 0.5, 10.0, 7).unwrap(), 0.0);
    }

    #[test]
    fn linear_in_repetitions_and_efficiency() {
        let tr = decay_trace(0.3, 156.3, 155.0, 100);
        let a = expected_counts(&tr, 156.3, 0.2, 155.0, 10).unwrap();
        let b = expected_counts(&tr, 156.3, 0.2, 155.0, 20).unwrap();
        let c = expected_counts(&tr, 156.3, 0.4, 155.0, 10).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-14);
        assert_relative_eq!(c, 2.0 * a, max_relative = 1e-14);
    }

    #[test]
    fn gate_outside_trajectory() {
        let tr = decay_trace(0.3, 156.3, 100.0, 100);
        assert!(expected_counts(&tr, 156.3, 1.0, 155.0, 1).is_err());
    }

    #[test]
    fn poisson_examples() {
        let r = poissonize(0.0, 0.0, 155.0, 1000, 3);
        assert_eq!(r.sampled_counts, 0);
        assert_relative_eq!(
            dark_contribution(7500.0, 155.0, 1000),
            1162.5,
            max_relative = 1e-12
        );
        let r = poissonize(10.0, 7500.0, 155.0, 1000, 3);
        assert_eq!(r, poissonize(10.0, 7500.0, 155.0, 1000, 3));
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|k| poissonize(100.0, 0.0, 1.0, 1, derive_seed(1, 0, k)).sampled_counts as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 100.0).abs() < 3.0 * (100.0f64 / n as f64).sqrt() + 0.1);
        assert!((mean - 100.0).abs() < 1.0);
    }

    #[test]
    fn dark_subtraction() {
        let r = CountRecord {
            expected_counts: 0.0,
            sampled_counts: 1162,
            dark_contribution: 1162.5,
            repetitions: 1000,
            gate_window_us: 155.0,
        };
        let n = dark_subtract(&r);
        assert_relative_eq!(n.net, -0.5);
        assert!((n.sigma - 34.1).abs() < 0.015);
        let r0 = CountRecord {
            dark_contribution: 0.0,
            sampled_counts: 17,
            ..r
        };
        assert_eq!(dark_subtract(&r0).net, 17.0);
    }

    #[test]
    fn contrast_examples() {
        assert_eq!(contrast(5.0, 5.0, ContrastOrientation::Dip).unwrap(), 0.0);
        assert_relative_eq!(
            contrast(0.37, 1.0, ContrastOrientation::Dip).unwrap(),
            63.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            contrast(21.0, 100.0, ContrastOrientation::Dip).unwrap(),
            79.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(contrast(1.5, 1.0, ContrastOrientation::Peak).unwrap(), 50.0);
        assert!(contrast(1.0, 0.0, ContrastOrientation::Dip).is_err());
    }

    #[test]
    fn relative_noise_scales_with_repetitions() {
        // per-shot expectation λ₁; relative σ of net counts ∝ 1/sqrt(reps)
        let per_shot = 2.0;
        let mut rel = Vec::new();
        for reps in [10u64, 100, 1000, 10000] {
            let n = 4000;
            let vals: Vec<f64> = (0..n)
                .map(|k| {
                    let r = poissonize(
                        per_shot * reps as f64,
                        0.0,
                        1.0,
                        reps,
                        derive_seed(9, reps, k),
                    );
                    dark_subtract(&r).net
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            rel.push(var.sqrt() / mean * (reps as f64).sqrt());
        }
        for r in &rel {
            assert!((r / (1.0 / per_shot.sqrt()) - 1.0).abs() < 0.06, "{rel:?}");
        }
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for s in 0..4 {
            for i in 0..1000 {
                assert!(seen.insert(derive_seed(42, s, i)));
            }
        }
        assert_ne!(derive_seed(1, 0, 0), derive_seed(2, 0, 0));
    }
}
