//! Data-driven starting points and multi-start fitting.

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::lm::{fit, FitData, FitResult};
use super::models::{FitModel, Model, ModelId};
use crate::error::{Error, Result};
use crate::params::CONSTANTS;
use crate::sequences::EchoTau;

/// Linear least squares on the given columns; returns coefficients and the residual sum of squares.
fn linear_lsq(cols: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = y.len();
    let k = cols.len();
    // normal equations on unit-norm columns; small k keeps this cheap
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if norms.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let a = DMatrix::from_fn(k, k, |i, j| {
        (0..n).map(|r| cols[i][r] * cols[j][r]).sum::<f64>() / (norms[i] * norms[j])
    });
    let b = DVector::from_fn(k, |i, _| (0..n).map(|r| cols[i][r] * y[r]).sum::<f64>() / norms[i]);
    let z = a.cholesky()?.solve(&b);
    let c: Vec<f64> = (0..k).map(|i| z[i] / norms[i]).collect();
    let ssr = (0..n)
        .map(|r| {
            let f: f64 = (0..k).map(|i| c[i] * cols[i][r]).sum();
            (y[r] - f).powi(2)
        })
        .sum::<f64>();
    ssr.is_finite().then_some((c, ssr))
}

fn span(x: &[f64]) -> (f64, f64) {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn sorted(data: &FitData) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|a, b| data.x[*a].total_cmp(&data.x[*b]));
    (idx.iter().map(|&i| data.x[i]).collect(), idx.iter().map(|&i| data.y[i]).collect())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn logspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
}

/// Frequency (1/x units) of the strongest Fourier component of `y − mean`,
/// from a zero-padded FFT with parabolic peak interpolation. Assumes roughly
/// uniform sampling.
pub fn fft_peak_frequency(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 4 {
        return None;
    }
    let (lo, hi) = span(x);
    let dx = (hi - lo) / (n - 1) as f64;
    if !(dx > 0.0) {
        return None;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let m = (16 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = (0..m)
        .map(|i| Complex::new(if i < n { y[i] - mean } else { 0.0 }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let mag: Vec<f64> = buf[..m / 2].iter().map(|c| c.norm()).collect();
    // skip the lobe around zero frequency
    let start = (m / n).max(1);
    let k = (start..m / 2 - 1).max_by(|a, b| mag[*a].total_cmp(&mag[*b]))?;
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let den = a - 2.0 * b + c;
    let off = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
    Some((k as f64 + off) / (m as f64 * dx))
}

/// Log-linear decay constant: regress ln|y − baseline| on x over points that
/// keep the sign of the first deviation and stay above 5% of it.
fn log_linear_tau(x: &[f64], y: &[f64], baseline: f64) -> Option<f64> {
    let d0 = y[0] - baseline;
    if d0 == 0.0 {
        return None;
    }
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| (v - baseline) / d0 > 0.05)
        .map(|(&xi, &v)| (xi, ((v - baseline) / d0).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (c, _) = linear_lsq(&[vec![1.0; xs.len()], xs], &ys)?;
    (c[1] < 0.0).then(|| -1.0 / c[1])
}

/// Best τ on a log grid for y ≈ a·basis(x/τ) + c, solving (a, c) linearly.
fn scan_tau(x: &[f64], y: &[f64], basis: impl Fn(f64) -> f64) -> Option<(f64, Vec<f64>)> {
    let (lo, hi) = span(x);
    let w = (hi - lo).max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for tau in logspace(w / 100.0, w * 10.0, 61) {
        let col: Vec<f64> = x.iter().map(|&xi| basis((xi - lo) / tau)).collect();
        if let Some((c, ssr)) = linear_lsq(&[col, vec![1.0; x.len()]], y) {
            if best.as_ref().map_or(true, |b| ssr < b.0) {
                best = Some((ssr, tau, c));
            }
        }
    }
    best.map(|b| (b.1, b.2))
}

/// Half-maximum width of the peak at index `k` of the deviation `d`.
fn half_width(x: &[f64], d: &[f64], k: usize) -> f64 {
    let half = 0.5 * d[k].abs();
    let same = |v: f64| v * d[k].signum() > half;
    let mut l = k;
    while l > 0 && same(d[l - 1]) {
        l -= 1;
    }
    let mut r = k;
    while r + 1 < d.len() && same(d[r + 1]) {
        r += 1;
    }
    let dx = (x[x.len() - 1] - x[0]) / (x.len() - 1).max(1) as f64;
    (x[r] - x[l]).max(dx)
}

fn argmax_abs(d: &[f64]) -> usize {
    (0..d.len()).max_by(|a, b| d[*a].abs().total_cmp(&d[*b].abs())).unwrap_or(0)
}

/// Candidate starting points derived from the data. Fixed parameters keep
/// their value from `theta0`.
pub fn initial_guesses(model: &FitModel, data: &FitData, theta0: &[f64]) -> Vec<Vec<f64>> {
    let (x, y) = sorted(data);
    let n = x.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    if n < 2 || theta0.len() != model.param_count() {
        return out;
    }
    let (lo, hi) = span(&x);
    let w = hi - lo;
    let fixed = model.fixed();
    match model.id {
        ModelId::Constant => {
            let m = y.iter().sum::<f64>() / n as f64;
            out.push(vec![m]);
        }
        ModelId::Linear => {
            if let Some((c, _)) = linear_lsq(&[vec![1.0; n], x.clone()], &y) {
                out.push(c);
            }
        }
        ModelId::ExpDecay => {
            let tail = (n / 10).max(1);
            let base = y[n - tail..].iter().sum::<f64>() / tail as f64;
            if let Some(tau) = log_linear_tau(&x, &y, base) {
                let e0 = (-lo / tau).exp();
                out.push(vec![(y[0] - base) / e0.max(1e-300), tau, base]);
            }
            if let Some((tau, c)) = scan_tau(&x, &y, |u| (-u).exp()) {
                out.push(vec![c[0] * (lo / tau).exp(), tau, c[1]]);
            }
        }
        ModelId::ExpRise => {
            let tail = (n / 10).max(1);
            let plateau = y[n - tail..].iter().sum::<f64>() / tail as f64;
            let rev: Vec<f64> = y.iter().map(|v| 2.0 * plateau - v).collect();
            if let Some(tau) = log_linear_tau(&x, &rev, plateau) {
                let amp = (plateau - y[0]) / (-lo / tau).exp().max(1e-300);
                out.push(vec![amp, tau, plateau - amp]);
            }
            if let Some((tau, c)) = scan_tau(&x, &y, |u| (-u).exp()) {
                // y = a·e^{−(x−lo)/τ} + c  ⇒  amplitude −a·e^{lo/τ}, offset c − amplitude
                let amp = -c[0] * (lo / tau).exp();
                out.push(vec![amp, tau, c[1] - amp]);
            }
        }
        ModelId::Lorentzian => {
            let base = median(&y);
            let d: Vec<f64> = y.iter().map(|v| v - base).collect();
            let k = argmax_abs(&d);
            out.push(vec![d[k], x[k], half_width(&x, &d, k), base]);
        }
        ModelId::LorentzianPair => {
            let base = median(&y);
            let d: Vec<f64> = y.iter().map(|v| v - base).collect();
            let k1 = argmax_abs(&d);
            let fw = half_width(&x, &d, k1);
            let one = FitModel::new(ModelId::Lorentzian);
            let rest: Vec<f64> = x
                .iter()
                .zip(&d)
                .map(|(&xi, &di)| di - one.eval(xi, &[d[k1], x[k1], fw, 0.0]).unwrap_or(0.0))
                .collect();
            let k2 = argmax_abs(&rest);
            let (a, b) = if x[k1] <= x[k2] { (k1, k2) } else { (k2, k1) };
            let amp = |k: usize| if k == k1 { d[k1] } else { rest[k2] };
            out.push(vec![amp(a), x[a], amp(b), x[b], fw, base]);
        }
        ModelId::GaussianTwoPeak => {
            let base = y[0].min(y[n - 1]);
            let d: Vec<f64> = y.iter().map(|v| v - base).collect();
            let k = argmax_abs(&d);
            let fw = half_width(&x, &d, k);
            let sep = theta0[5];
            // the dominant peak may be either line
            out.push(vec![0.5 * d[k], x[k], fw, 0.5 * d[k], fw, sep, base]);
            out.push(vec![0.5 * d[k], x[k] + sep, fw, 0.5 * d[k], fw, sep, base]);
            out.push(vec![0.25 * d[k], x[k] + sep, 2.0 * fw, d[k], 0.5 * fw, sep, base]);
        }
        ModelId::RabiDampedCosine | ModelId::RamseyModel => {
            let Some(f) = fft_peak_frequency(&x, &y) else {
                return out;
            };
            let ramsey = model.id == ModelId::RamseyModel;
            let mut best: Option<(f64, Vec<f64>)> = None;
            for tau in logspace(w / 50.0, w * 10.0, 41) {
                let env: Vec<f64> = x.iter().map(|&t| (-(t - lo) / tau).exp()).collect();
                let mut cols = vec![x
                    .iter()
                    .zip(&env)
                    .map(|(&t, e)| e * (2.0 * std::f64::consts::PI * f * t).cos())
                    .collect::<Vec<_>>()];
                if ramsey {
                    cols.push(
                        x.iter()
                            .zip(&env)
                            .map(|(&t, e)| e * (2.0 * std::f64::consts::PI * f * t).sin())
                            .collect(),
                    );
                }
                cols.push(vec![1.0; n]);
                if let Some((c, ssr)) = linear_lsq(&cols, &y) {
                    let scale = (lo / tau).exp();
                    let th = if ramsey {
                        let amp = c[0].hypot(c[1]) * scale;
                        vec![amp, tau, f, (-c[1]).atan2(c[0]), c[2]]
                    } else {
                        vec![c[0] * scale, tau, f, c[1]]
                    };
                    if best.as_ref().map_or(true, |b| ssr < b.0) {
                        best = Some((ssr, th));
                    }
                }
            }
            if let Some(b) = best {
                out.push(b.1);
            }
        }
        ModelId::Orbach => {
            let pts: Vec<(f64, f64)> = x
                .iter()
                .zip(&y)
                .filter(|(&t, &v)| t > 0.0 && v > 0.0)
                .map(|(&t, &v)| (-1.0 / (CONSTANTS.boltzmann_mev * t), v.ln()))
                .collect();
            if pts.len() >= 2 {
                let u: Vec<f64> = pts.iter().map(|p| p.0).collect();
                let l: Vec<f64> = pts.iter().map(|p| p.1).collect();
                if let Some((c, _)) = linear_lsq(&[vec![1.0; u.len()], u], &l) {
                    out.push(vec![c[0].exp(), c[1]]);
                }
            }
        }
        ModelId::Raman => {
            let tmin = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let offsets: Vec<f64> = if fixed[1] {
                vec![theta0[1]]
            } else {
                (0..10).map(|i| 0.09 * i as f64 * tmin).collect()
            };
            let mut best: Option<(f64, Vec<f64>)> = None;
            for dt in offsets {
                let pts: Vec<(f64, f64)> = x
                    .iter()
                    .zip(&y)
                    .filter(|(&t, &v)| t > dt && v > 0.0)
                    .map(|(&t, &v)| (((t - dt) / crate::params::RAMAN_REFERENCE_K).ln(), v.ln()))
                    .collect();
                if pts.len() < 2 {
                    continue;
                }
                let u: Vec<f64> = pts.iter().map(|p| p.0).collect();
                let l: Vec<f64> = pts.iter().map(|p| p.1).collect();
                let fit_lin = if fixed[2] {
                    let r: Vec<f64> = u.iter().zip(&l).map(|(a, b)| b - theta0[2] * a).collect();
                    linear_lsq(&[vec![1.0; r.len()]], &r).map(|(c, s)| (vec![c[0], theta0[2]], s))
                } else {
                    linear_lsq(&[vec![1.0; u.len()], u], &l)
                };
                if let Some((c, ssr)) = fit_lin {
                    if best.as_ref().map_or(true, |b| ssr < b.0) {
                        best = Some((ssr, vec![c[0].exp(), dt, c[1]]));
                    }
                }
            }
            if let Some(b) = best {
                out.push(b.1);
            }
        }
        ModelId::EseemModel => {
            if let Some(g) = eseem_guess(model, &x, &y, theta0) {
                out.push(g);
            }
        }
    }
    for g in out.iter_mut() {
        for (i, v) in g.iter_mut().enumerate() {
            if fixed[i] {
                *v = theta0[i];
            }
        }
    }
    out.retain(|g| g.iter().all(|v| v.is_finite()));
    out
}

/// Staged ESEEM start: fit the bare envelope, then pick modulation
/// frequencies one at a time by scanning with the amplitudes solved linearly.
fn eseem_guess(model: &FitModel, x: &[f64], y: &[f64], theta0: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    let comps = model.eseem_components;
    let tail = (n / 10).max(1);
    let base = y[n - tail..].iter().sum::<f64>() / tail as f64;
    let amp0 = y[0] - base;
    let t2_0 = log_linear_tau(x, y, base).unwrap_or((x[n - 1] - x[0]) / 3.0).max(1e-9);
    let bare = FitModel::eseem(0, model.echo_tau);
    let data = FitData::unweighted(x.to_vec(), y.to_vec()).ok()?;
    let env_fit = fit(&bare, &data, &[amp0, t2_0, theta0[2].clamp(0.5, 4.0), base]).ok()?;
    let (t2, p) = (env_fit.values[1], env_fit.values[2]);
    if comps == 0 {
        return Some(env_fit.values);
    }

    // first order in K: y ≈ α·env + Σ β_k·env·sin²(πω_k τ) + γ
    let env: Vec<f64> = x.iter().map(|&t| (-(t / t2).abs().powf(p)).exp()).collect();
    let tau: Vec<f64> = x
        .iter()
        .map(|&t| match model.echo_tau {
            EchoTau::Half => 0.5 * t,
            EchoTau::Full => t,
        })
        .collect();
    if n < 2 * comps + 3 {
        return None;
    }
    let (tlo, thi) = span(&tau);
    let tspan = (thi - tlo).max(1e-12);
    let dtau = tspan / (n - 1) as f64;
    // ω in kHz; sin²(πωτ) has period 1/ω in τ
    let w_max = 0.5 / dtau * 1e3;
    let w_min = 1.0 / tspan * 1e3;
    let coarse = 0.1 / tspan * 1e3;
    let fine = 0.005 / tspan * 1e3;
    let basis = |w: f64| -> Vec<f64> {
        tau.iter()
            .zip(&env)
            .map(|(t, e)| e * (std::f64::consts::PI * w * 1e-3 * t).sin().powi(2))
            .collect()
    };
    let score = |ws: &[f64]| -> Option<(Vec<f64>, f64)> {
        let mut cols = vec![env.clone()];
        cols.extend(ws.iter().map(|&w| basis(w)));
        cols.push(vec![1.0; n]);
        linear_lsq(&cols, y)
    };
    // best frequency for one slot with the others held, over a grid
    let best_in = |ws: &[f64], slot: usize, grid: &mut dyn Iterator<Item = f64>| -> Option<f64> {
        let mut best = (f64::INFINITY, None);
        let mut trial = ws.to_vec();
        if slot == trial.len() {
            trial.push(0.0);
        }
        for w in grid {
            trial[slot] = w;
            if let Some((_, ssr)) = score(&trial) {
                if ssr < best.0 {
                    best = (ssr, Some(w));
                }
            }
        }
        best.1
    };
    let scan = |ws: &mut Vec<f64>, slot: usize| -> Option<()> {
        let steps = ((w_max - w_min) / coarse).floor().min(5000.0) as usize;
        let w0 = best_in(ws, slot, &mut (0..=steps).map(|i| w_min + coarse * i as f64))?;
        let w1 = best_in(ws, slot, &mut (-20..=20).map(|i| w0 + fine * i as f64))?;
        if slot < ws.len() {
            ws[slot] = w1;
        } else {
            ws.push(w1);
        }
        Some(())
    };
    let mut ws: Vec<f64> = Vec::new();
    for k in 0..comps {
        scan(&mut ws, k)?;
    }
    for _ in 0..2 {
        for k in 0..comps {
            scan(&mut ws, k)?;
        }
    }
    let (cf, _) = score(&ws)?;
    let alpha = cf[0];
    let mut g = vec![alpha, t2, p];
    for k in 0..comps {
        g.push((-cf[k + 1] / alpha).clamp(1e-3, 0.9));
        g.push(ws[k]);
    }
    g.push(cf[comps + 1]);
    Some(g)
}

/// Fit from `theta0` and from each data-driven guess; keep the lowest χ².
pub fn fit_with_guesses(model: &FitModel, data: &FitData, theta0: &[f64]) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut first_err: Option<Error> = None;
    let mut starts = vec![theta0.to_vec()];
    starts.extend(initial_guesses(model, data, theta0));
    for s in starts {
        match fit(model, data, &s) {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.chi2 < b.chi2) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::Numerical("no starting point".into())))
}

/// Starting point guessed from the data alone (first candidate).
pub fn guess(model: &FitModel, data: &FitData, theta0: &[f64]) -> Option<Vec<f64>> {
    initial_guesses(model, data, theta0).into_iter().next()
}

/// One row of a model ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    /// Position of the fit in the input list.
    pub index: usize,
    pub model: String,
    pub reduced_chi2: f64,
    /// Reduced χ² minus the best one.
    pub delta: f64,
}

/// Rank fits of the same data by reduced χ², ascending; ties keep input order.
pub fn compare_models(fits: &[FitResult]) -> Result<Vec<Ranked>> {
    let Some(first) = fits.first() else {
        return Err(Error::Data("no fits to compare".into()));
    };
    for f in fits {
        if f.data_fingerprint != first.data_fingerprint {
            return Err(Error::Data(format!(
                "fits use different data ({} vs {})",
                first.model, f.model
            )));
        }
    }
    let mut idx: Vec<usize> = (0..fits.len()).collect();
    idx.sort_by(|a, b| fits[*a].reduced_chi2.total_cmp(&fits[*b].reduced_chi2));
    let best = fits[idx[0]].reduced_chi2;
    Ok(idx
        .into_iter()
        .map(|i| Ranked {
            index: i,
            model: fits[i].model.clone(),
            reduced_chi2: fits[i].reduced_chi2,
            delta: fits[i].reduced_chi2 - best,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synth(m: &FitModel, x: &[f64], th: &[f64]) -> FitData {
        let y = x.iter().map(|&v| m.eval(v, th).unwrap()).collect();
        FitData::unweighted(x.to_vec(), y).unwrap()
    }

    #[test]
    fn fft_finds_frequency() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = x.iter().map(|t| (2.0 * std::f64::consts::PI * 5.0 * t).cos()).collect();
        assert!((fft_peak_frequency(&x, &y).unwrap() - 5.0).abs() < 0.05);
    }

    #[test]
    fn two_peak_recovers_free_separation() {
        let m = FitModel::new(ModelId::GaussianTwoPeak).with_free(5);
        let x: Vec<f64> = (0..121).map(|i| -15.0 + 0.25 * i as f64).collect();
        let th = [0.0485, 0.0, 6.87, 0.187, 3.34, 1.063, 0.0];
        let mut d = synth(&m, &x, &th);
        for (i, y) in d.y.iter_mut().enumerate() {
            *y += 1e-4 * ((i as f64) * 1.7).sin();
        }
        d.sigma = vec![1e-4; d.len()];
        let r = fit_with_guesses(&m, &d, &[0.05, 0.5, 5.0, 0.1, 4.0, 1.2, 0.0]).unwrap();
        assert!((r.values[5] - 1.063).abs() < 2.0 * r.errors[5].max(1e-6), "{:?}", r.values);
    }

    #[test]
    fn ranking_rules() {
        let x: Vec<f64> = (0..6).map(|i| 15.0 + 3.0 * i as f64).collect();
        let raman = FitModel::new(ModelId::Raman);
        let d = synth(&raman, &x, &[0.6, 3.2, 9.0]);
        let r = fit_with_guesses(&raman, &d, &[1.0, 3.2, 9.0]).unwrap();
        let one = compare_models(std::slice::from_ref(&r)).unwrap();
        assert_eq!(one.len(), 1);
        let two = compare_models(&[r.clone(), r.clone()]).unwrap();
        assert_eq!((two[0].index, two[1].index), (0, 1));
        assert_eq!(two[1].delta, 0.0);
        let mut other = r.clone();
        other.data_fingerprint = "x".into();
        assert!(compare_models(&[r, other]).is_err());
    }

    #[test]
    fn eseem_guess_finds_both_lines() {
        let m = FitModel::new(ModelId::EseemModel);
        let t: Vec<f64> = (0..121).map(|i| 2.0 * i as f64).collect();
        let th = [1000.0, 81.0, 1.9, 0.2, 87.5, 0.15, 68.0, 50.0];
        let d = synth(&m, &t, &th);
        let r = fit_with_guesses(&m, &d, &[500.0, 160.0, 1.0, 0.1, 150.0, 0.3, 40.0, 0.0]).unwrap();
        let mut w = [r.values[4], r.values[6]];
        w.sort_by(f64::total_cmp);
        assert_relative_eq!(w[1], 87.5, max_relative = 1e-6);
        assert_relative_eq!(w[0], 68.0, max_relative = 1e-6);
    }
}
