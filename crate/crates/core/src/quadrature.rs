//! Quadrature rules and detuning distributions used for ensemble averages.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Normal};
use std::f64::consts::PI;

use crate::params::DefectParams;

/// Golub–Welsch: nodes and weights from a symmetric tridiagonal Jacobi matrix.
fn golub_welsch(offdiag: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = offdiag.len() + 1;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for (k, b) in offdiag.iter().enumerate() {
        j[(k, k + 1)] = *b;
        j[(k + 1, k)] = *b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&off, 2.0)
}

/// Nodes and weights for expectations over a standard normal variable.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![1.0]);
    }
    // probabilists' Hermite recurrence
    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    golub_welsch(&off, 1.0)
}

/// A weighted sample point of a distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub x: f64,
    pub w: f64,
}

/// Nodes for ∫ f(δ) dδ over optical class detuning, mapped with
/// δ = center + hwhm·tan θ. Weights count homogeneous packets: a class
/// contributes w per unit-peak Lorentzian of half-width `hwhm`, so
/// Σ w·L(δ − center) = 1.
pub fn lorentz_mapped_nodes(n: usize, center: f64, hwhm: f64) -> Vec<Node> {
    let (t, w) = gauss_legendre(n);
    t.iter()
        .zip(w.iter())
        .map(|(ti, wi)| {
            let theta = 0.5 * PI * ti;
            let c = theta.cos();
            Node {
                x: center + hwhm * theta.tan(),
                // dδ = hwhm sec²θ dθ, dθ = (π/2) dt, divided by ∫L = π·hwhm
                w: 0.5 * wi / (c * c),
            }
        })
        .collect()
}

/// Voigt FWHM by the Olivero–Longbothum approximation.
pub fn voigt_fwhm(fwhm_l: f64, fwhm_g: f64) -> f64 {
    0.5346 * fwhm_l + (0.2166 * fwhm_l * fwhm_l + fwhm_g * fwhm_g).sqrt()
}

/// Normalized Voigt density: Lorentzian (FWHM `fwhm_l`) convolved with a
/// Gaussian (FWHM `fwhm_g`).
pub fn voigt_density(x: f64, fwhm_l: f64, fwhm_g: f64) -> f64 {
    let g = 0.5 * fwhm_l;
    let cauchy = |y: f64| g / (PI * (y * y + g * g));
    if fwhm_g <= 0.0 {
        return cauchy(x);
    }
    if fwhm_l <= 0.0 {
        let s = fwhm_g / (8.0 * 2f64.ln()).sqrt();
        return (-(x * x) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
    }
    let s = fwhm_g / (8.0 * 2f64.ln()).sqrt();
    let (z, w) = gh64();
    z.iter()
        .zip(w.iter())
        .map(|(zi, wi)| wi * cauchy(x - s * zi))
        .sum()
}

fn gh64() -> &'static (Vec<f64>, Vec<f64>) {
    static CELL: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    CELL.get_or_init(|| gauss_hermite_normal(64))
}

/// Inhomogeneous distribution of the spin transition frequency.
///
/// A Voigt profile whose Lorentzian part is 1/(π·T2*) and whose Gaussian part
/// makes the total FWHM equal to `odmr_fwhm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinDistribution {
    pub fwhm_lorentz: f64,
    pub fwhm_gauss: f64,
}

impl SpinDistribution {
    pub fn from_params(p: &DefectParams) -> Self {
        let target = p.odmr_fwhm_mhz;
        let fl = (1.0 / (PI * p.t2_star_us())).min(target);
        let a = target - 0.5346 * fl;
        let fg2 = a * a - 0.2166 * fl * fl;
        SpinDistribution {
            fwhm_lorentz: fl,
            fwhm_gauss: if fg2 > 0.0 { fg2.sqrt() } else { 0.0 },
        }
    }

    pub fn lorentzian(fwhm: f64) -> Self {
        SpinDistribution {
            fwhm_lorentz: fwhm,
            fwhm_gauss: 0.0,
        }
    }

    pub fn fwhm(&self) -> f64 {
        voigt_fwhm(self.fwhm_lorentz, self.fwhm_gauss)
    }

    pub fn density(&self, x: f64) -> f64 {
        voigt_density(x, self.fwhm_lorentz, self.fwhm_gauss)
    }

    /// Uniform grid k·step for |x| ≤ range, weights renormalized to one.
    pub fn grid_nodes(&self, step: f64, range: f64) -> Vec<Node> {
        let k = (range / step).floor() as i64;
        let mut nodes: Vec<Node> = (-k..=k)
            .map(|i| {
                let x = i as f64 * step;
                Node {
                    x,
                    w: step * self.density(x),
                }
            })
            .collect();
        normalize(&mut nodes);
        nodes
    }

    /// Equal-weight Monte Carlo draws.
    pub fn sample_nodes(&self, n: usize, seed: u64) -> Vec<Node> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cauchy = Cauchy::new(0.0, 0.5 * self.fwhm_lorentz.max(1e-300)).expect("positive scale");
        let sigma = self.fwhm_gauss / (8.0 * 2f64.ln()).sqrt();
        let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
        (0..n)
            .map(|_| {
                let l = if self.fwhm_lorentz > 0.0 {
                    cauchy.sample(&mut rng)
                } else {
                    0.0
                };
                let g = if sigma > 0.0 {
                    normal.sample(&mut rng)
                } else {
                    0.0
                };
                Node {
                    x: l + g,
                    w: 1.0 / n as f64,
                }
            })
            .collect()
    }
}

pub fn normalize(nodes: &mut [Node]) {
    let s: f64 = nodes.iter().map(|n| n.w).sum();
    for n in nodes.iter_mut() {
        n.w /= s;
    }
}

/// Gauss–Hermite nodes for a relative amplitude 1 + spread·z, z ~ N(0, 1).
pub fn amplitude_nodes(spread: f64, n: usize) -> Vec<Node> {
    if spread == 0.0 || n == 1 {
        return vec![Node { x: 1.0, w: 1.0 }];
    }
    let (z, w) = gauss_hermite_normal(n);
    z.iter()
        .zip(w.iter())
        .map(|(zi, wi)| Node {
            x: (1.0 + spread * zi).max(0.0),
            w: *wi,
        })
        .collect()
}

/// Composite Simpson integral of uniformly spaced samples (odd count).
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    assert!(
        n >= 3 && n % 2 == 1,
        "simpson needs an odd number of samples ≥ 3"
    );
    let mut s = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_params;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-13);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(i, 2.0 / 15.0, max_relative = 1e-12);
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite_normal(6);
        let m = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert_relative_eq!(m(0), 1.0, max_relative = 1e-13);
        assert!(m(1).abs() < 1e-13);
        assert_relative_eq!(m(2), 1.0, max_relative = 1e-12);
        assert_relative_eq!(m(4), 3.0, max_relative = 1e-12);
        assert_relative_eq!(m(10), 945.0, max_relative = 1e-10);
    }

    #[test]
    fn mapped_nodes_count_packets() {
        let nodes = lorentz_mapped_nodes(32, 3.0, 7.75);
        let s: f64 = nodes
            .iter()
            .map(|n| n.w * crate::dynamics::lorentzian_unit(n.x - 3.0, 15.5))
            .sum();
        assert_relative_eq!(s, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn voigt_normalized_and_fwhm() {
        let d = SpinDistribution::from_params(&default_params());
        assert_relative_eq!(d.fwhm_lorentz, 1.0 / (PI * 0.307), max_relative = 1e-12);
        assert!((d.fwhm_gauss - 0.594).abs() < 0.005);
        assert_relative_eq!(d.fwhm(), 1.32, max_relative = 1e-12);
        // numerical FWHM of the density
        let peak = d.density(0.0);
        let mut lo = 0.0;
        let mut hi = 5.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if d.density(mid) > 0.5 * peak {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((2.0 * lo - 1.32).abs() / 1.32 < 0.01);
        let h = 0.01;
        let total: f64 = (-20000..=20000).map(|k| h * d.density(k as f64 * h)).sum();
        // Lorentzian tails beyond ±200 MHz hold ~0.16 % of the weight
        assert!((total - 1.0).abs() < 3e-3);
    }

    #[test]
    fn narrow_odmr_falls_back_to_lorentzian() {
        let mut p = default_params();
        p.odmr_fwhm_mhz = 0.5;
        let d = SpinDistribution::from_params(&p);
        assert_eq!(d.fwhm_gauss, 0.0);
        assert_eq!(d.fwhm_lorentz, 0.5);
    }

    #[test]
    fn grid_and_monte_carlo_nodes() {
        let d = SpinDistribution::from_params(&default_params());
        let g = d.grid_nodes(0.1, 6.0);
        assert_eq!(g.len(), 121);
        assert_relative_eq!(
            g.iter().map(|n| n.w).sum::<f64>(),
            1.0,
            max_relative = 1e-12
        );
        let a = d.sample_nodes(100, 7);
        let b = d.sample_nodes(100, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn simpson_exact_for_cubics() {
        let h = 0.25;
        let v: Vec<f64> = (0..9).map(|i| (i as f64 * h).powi(3)).collect();
        assert_relative_eq!(simpson(&v, h), 2f64.powi(4) / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn amplitude_nodes_mean_one() {
        let n = amplitude_nodes(0.03, 5);
        let m: f64 = n.iter().map(|n| n.w * n.x).sum();
        assert_relative_eq!(m, 1.0, max_relative = 1e-13);
        assert_eq!(amplitude_nodes(0.0, 5).len(), 1);
    }
}
