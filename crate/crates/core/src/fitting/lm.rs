//! Levenberg–Marquardt on σ-weighted residuals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::models::Model;
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const INITIAL_DAMPING: f64 = 1e-3;
pub const RELATIVE_TOLERANCE: f64 = 1e-10;
const MAX_DAMPING: f64 = 1e10;
/// Accepted steps must also be this small, relative to each parameter.
const STEP_TOLERANCE: f64 = 1e-10;
/// Normal matrices with a larger condition number are treated as singular.
const MAX_CONDITION: f64 = 1e14;

/// Points (x, y) with standard deviations σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FitData {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let d = FitData { x, y, sigma };
        d.validate()?;
        Ok(d)
    }

    /// Unit σ for every point.
    pub fn unweighted(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        Self::new(x, y, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() || self.x.len() != self.sigma.len() {
            return Err(Error::Data(format!(
                "column lengths differ: x {}, y {}, sigma {}",
                self.x.len(),
                self.y.len(),
                self.sigma.len()
            )));
        }
        if self.x.is_empty() {
            return Err(Error::Data("no data rows".into()));
        }
        for i in 0..self.x.len() {
            if !(self.x[i].is_finite() && self.y[i].is_finite()) {
                return Err(Error::Data(format!("row {}: non-finite value", i + 1)));
            }
            if !(self.sigma[i] > 0.0 && self.sigma[i].is_finite()) {
                return Err(Error::Data(format!("row {}: sigma must be positive, got {}", i + 1, self.sigma[i])));
            }
        }
        Ok(())
    }

    /// Parse `x,y[,sigma]` CSV with a header row. Without a sigma column
    /// σ = √max(y, 1) is used and the flag is set.
    pub fn from_csv(text: &str) -> Result<(Self, bool)> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| Error::Data(format!("header: {e}")))?.clone();
        let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
        let (Some(ix), Some(iy)) = (col("x"), col("y")) else {
            if header.is_empty() {
                return Err(Error::Data("no data rows".into()));
            }
            return Err(Error::Data("header must name columns x and y".into()));
        };
        let is = col("sigma");
        let (mut x, mut y, mut sigma) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("row {}: {e}", i + 1)))?;
            let field = |k: usize, name: &str| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Data(format!("row {}: missing {name}", i + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("row {}: {name}: {e}", i + 1)))
            };
            x.push(field(ix, "x")?);
            let yv = field(iy, "y")?;
            y.push(yv);
            sigma.push(match is {
                Some(k) => field(k, "sigma")?,
                None => yv.max(1.0).sqrt(),
            });
        }
        Ok((Self::new(x, y, sigma)?, is.is_none()))
    }

    /// Order-sensitive hash of every value, used to check fits share data.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for col in [&self.x, &self.y, &self.sigma] {
            for v in col.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
            h.update(b"|");
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Fitted parameters and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub param_names: Vec<String>,
    pub values: Vec<f64>,
    /// 1σ errors, zero for fixed parameters.
    pub errors: Vec<f64>,
    pub fixed: Vec<bool>,
    /// Full covariance; rows and columns of fixed parameters are zero.
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub converged: bool,
    /// χ² after each accepted step, starting at θ0.
    pub chi2_history: Vec<f64>,
    pub n_points: usize,
    pub data_fingerprint: String,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.param_names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        self.param_names.iter().position(|n| n == name).map(|i| self.errors[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }
}

/// Weighted residuals (y − f)/σ; domain errors name the row.
fn residuals(model: &dyn Model, data: &FitData, theta: &[f64]) -> Result<DVector<f64>> {
    let mut r = DVector::zeros(data.len());
    for i in 0..data.len() {
        let f = model
            .eval(data.x[i], theta)
            .map_err(|e| Error::Domain(format!("row {}: {}", i + 1, detail(&e))))?;
        r[i] = (data.y[i] - f) / data.sigma[i];
    }
    Ok(r)
}

fn detail(e: &Error) -> String {
    match e {
        Error::Domain(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Forward-difference step: a power of two near sqrt(eps)·max(|θ|, 1).
pub fn fd_step(theta: f64) -> f64 {
    let h = f64::EPSILON.sqrt() * theta.abs().max(1.0);
    2f64.powi(h.log2().round() as i32)
}

/// Jacobian of the weighted residuals with respect to the free parameters.
fn jacobian(model: &dyn Model, data: &FitData, theta: &[f64], free: &[usize], r0: &DVector<f64>) -> Result<DMatrix<f64>> {
    let mut j = DMatrix::zeros(data.len(), free.len());
    let mut t = theta.to_vec();
    for (c, &k) in free.iter().enumerate() {
        let h = fd_step(theta[k]);
        t[k] = theta[k] + h;
        let r1 = residuals(model, data, &t)?;
        t[k] = theta[k];
        for i in 0..data.len() {
            j[(i, c)] = (r1[i] - r0[i]) / h;
        }
    }
    Ok(j)
}

/// Central differences with step eps^(1/3)·max(|θ|, 1), used for the final polish.
fn central_jacobian(model: &dyn Model, data: &FitData, theta: &[f64], free: &[usize]) -> Result<DMatrix<f64>> {
    let mut j = DMatrix::zeros(data.len(), free.len());
    let mut t = theta.to_vec();
    for (c, &k) in free.iter().enumerate() {
        let h = f64::EPSILON.cbrt() * theta[k].abs().max(1.0);
        t[k] = theta[k] + h;
        let rp = residuals(model, data, &t)?;
        t[k] = theta[k] - h;
        let rm = residuals(model, data, &t)?;
        t[k] = theta[k];
        for i in 0..data.len() {
            j[(i, c)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Condition number of the normal matrix after scaling it to unit diagonal,
/// so that parameter units do not matter.
fn condition_number(a: &DMatrix<f64>) -> f64 {
    let d: Vec<f64> = (0..a.nrows()).map(|i| a[(i, i)]).collect();
    if d.iter().any(|v| !(*v > 0.0)) {
        return f64::INFINITY;
    }
    let s = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] / (d[i] * d[j]).sqrt());
    let sv = s.svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Fit `model` to `data` from `theta0`.
///
/// Non-convergence is not an error: the best point found is returned with
/// `converged = false`.
pub fn fit(model: &dyn Model, data: &FitData, theta0: &[f64]) -> Result<FitResult> {
    data.validate()?;
    let names = model.param_names();
    if theta0.len() != names.len() {
        return Err(Error::Domain(format!(
            "{} takes {} parameters, got {}",
            model.name(),
            names.len(),
            theta0.len()
        )));
    }
    if theta0.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("initial parameters must be finite".into()));
    }
    let fixed = model.fixed();
    let free: Vec<usize> = (0..names.len()).filter(|i| !fixed[*i]).collect();
    let k = free.len();
    if k == 0 {
        return Err(Error::Domain("model has no free parameters".into()));
    }
    let n = data.len();
    if n < k + 1 {
        return Err(Error::Data(format!("{n} points cannot constrain {k} free parameters (need ≥ {})", k + 1)));
    }

    let mut theta = theta0.to_vec();
    let mut r = residuals(model, data, &theta)?;
    let mut chi2 = r.norm_squared();
    let mut history = vec![chi2];
    let mut lambda = INITIAL_DAMPING;
    let mut iterations = 0;
    let mut converged = false;
    let mut j = jacobian(model, data, &theta, &free, &r)?;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let a = j.transpose() * &j;
        let g = -(j.transpose() * &r);
        let mut m = a.clone();
        for d in 0..k {
            let scale = if a[(d, d)] > 0.0 { a[(d, d)] } else { 1.0 };
            m[(d, d)] += lambda * scale;
        }
        let step = m.lu().solve(&g);
        let mut accepted = false;
        if let Some(delta) = step {
            let mut trial = theta.clone();
            for (c, &p) in free.iter().enumerate() {
                trial[p] += delta[c];
            }
            if let Ok(rt) = residuals(model, data, &trial) {
                let chi2_t = rt.norm_squared();
                if chi2_t.is_finite() && chi2_t <= chi2 {
                    let rel = if chi2 > 0.0 { (chi2 - chi2_t) / chi2 } else { 0.0 };
                    let settled = free
                        .iter()
                        .enumerate()
                        .all(|(c, &p)| delta[c].abs() <= STEP_TOLERANCE * trial[p].abs());
                    theta = trial;
                    r = rt;
                    chi2 = chi2_t;
                    history.push(chi2);
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    if (rel < RELATIVE_TOLERANCE && settled) || chi2 == 0.0 {
                        converged = true;
                        break;
                    }
                    j = jacobian(model, data, &theta, &free, &r)?;
                }
            }
        }
        if !accepted {
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                // no descent direction left at machine precision
                converged = true;
                break;
            }
        }
    }

    if converged {
        // Gauss–Newton polish: near the minimum χ² comparisons are lost in
        // rounding, the gradient is not
        for _ in 0..10 {
            let Ok(j) = central_jacobian(model, data, &theta, &free) else {
                break;
            };
            let Some(delta) = (j.transpose() * &j).lu().solve(&-(j.transpose() * &r)) else {
                break;
            };
            let mut trial = theta.clone();
            for (c, &p) in free.iter().enumerate() {
                trial[p] += delta[c];
            }
            let Ok(rt) = residuals(model, data, &trial) else {
                break;
            };
            let chi2_t = rt.norm_squared();
            if !(chi2_t <= chi2 * (1.0 + 1e-12)) {
                break;
            }
            let done = free
                .iter()
                .enumerate()
                .all(|(c, &p)| delta[c].abs() <= 1e-14 * trial[p].abs().max(f64::MIN_POSITIVE));
            theta = trial;
            r = rt;
            chi2 = chi2_t;
            if done {
                break;
            }
        }
    }

    let j = jacobian(model, data, &theta, &free, &r)?;
    let a = j.transpose() * &j;
    let cond = condition_number(&a);
    if !(cond < MAX_CONDITION) {
        return Err(Error::SingularNormalMatrix { condition: cond });
    }
    // invert in the unit-diagonal scaling
    let dsq: Vec<f64> = (0..k).map(|i| a[(i, i)].sqrt()).collect();
    let scaled = DMatrix::from_fn(k, k, |i, j| a[(i, j)] / (dsq[i] * dsq[j]));
    let inv_s = scaled
        .try_inverse()
        .ok_or(Error::SingularNormalMatrix { condition: cond })?;
    let inv = DMatrix::from_fn(k, k, |i, j| inv_s[(i, j)] / (dsq[i] * dsq[j]));
    let dof = n - k;
    let reduced = chi2 / dof as f64;
    let p = names.len();
    let mut cov = vec![vec![0.0; p]; p];
    for (a_i, &pi) in free.iter().enumerate() {
        for (b_i, &pj) in free.iter().enumerate() {
            let v = 0.5 * (inv[(a_i, b_i)] + inv[(b_i, a_i)]);
            cov[pi][pj] = v * reduced;
        }
    }
    let errors = (0..p).map(|i| cov[i][i].max(0.0).sqrt()).collect();
    Ok(FitResult {
        model: model.name(),
        param_names: names,
        values: theta,
        errors,
        fixed,
        covariance: cov,
        chi2,
        reduced_chi2: reduced,
        dof,
        iterations,
        converged,
        chi2_history: history,
        n_points: n,
        data_fingerprint: data.fingerprint(),
    })
}

/// Max relative deviation between forward- and central-difference Jacobians
/// of the model values, normalized per parameter column.
pub fn jacobian_check(model: &dyn Model, x: &[f64], theta: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut t = theta.to_vec();
    for k in 0..theta.len() {
        let h = fd_step(theta[k]);
        let mut fwd = Vec::with_capacity(x.len());
        let mut cen = Vec::with_capacity(x.len());
        for &xi in x {
            let f0 = model.eval(xi, theta)?;
            t[k] = theta[k] + h;
            let fp = model.eval(xi, &t)?;
            let hc = h;
            t[k] = theta[k] + hc;
            let fcp = model.eval(xi, &t)?;
            t[k] = theta[k] - hc;
            let fcm = model.eval(xi, &t)?;
            t[k] = theta[k];
            fwd.push((fp - f0) / h);
            cen.push((fcp - fcm) / (2.0 * hc));
        }
        let scale = cen.iter().chain(fwd.iter()).map(|v| v.abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            continue;
        }
        for i in 0..x.len() {
            worst = worst.max((fwd[i] - cen[i]).abs() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    #[test]
    fn csv_input() {
        let (d, defaulted) = FitData::from_csv("x,y,sigma\n0,1,0.5\n1,2,0.5\n").unwrap();
        assert!(!defaulted);
        assert_eq!(d.y, vec![1.0, 2.0]);
        let (d, defaulted) = FitData::from_csv("x,y\n0,0.25\n1,16\n").unwrap();
        assert!(defaulted);
        assert_eq!(d.sigma, vec![1.0, 4.0]);
        let e = FitData::from_csv("x,y,sigma\n").unwrap_err();
        assert!(e.to_string().contains("no data rows"));
        assert!(FitData::from_csv("").unwrap_err().to_string().contains("no data rows"));
        let e = FitData::from_csv("x,y\n0,1\n1,abc\n").unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");
    }

    use super::super::models::{FitModel, ModelId};
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn synth(model: &FitModel, x: &[f64], theta: &[f64]) -> FitData {
        let y = x.iter().map(|&xi| model.eval(xi, theta).unwrap()).collect();
        FitData::new(x.to_vec(), y, vec![1.0; x.len()]).unwrap()
    }

    #[test]
    fn exp_decay_roundtrip() {
        let m = FitModel::new(ModelId::ExpDecay);
        let x: Vec<f64> = (0..80).map(|i| 10.0 * i as f64).collect();
        let truth = [1000.0, 156.3, 5.0];
        let d = synth(&m, &x, &truth);
        let r = fit(&m, &d, &[600.0, 300.0, 0.0]).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.values[1], 156.3, max_relative = 1e-6);
    }

    #[test]
    fn constant_model_gives_mean() {
        let m = FitModel::new(ModelId::Constant);
        let y = vec![1.0, 2.0, 3.0, 6.0];
        let d = FitData::new(vec![0.0, 1.0, 2.0, 3.0], y, vec![2.0; 4]).unwrap();
        let r = fit(&m, &d, &[0.0]).unwrap();
        assert_relative_eq!(r.values[0], 3.0, max_relative = 1e-9);
        // Σ(y − 3)²/σ² / (n − 1) = 14/4/3
        assert_relative_eq!(r.reduced_chi2, 14.0 / 4.0 / 3.0, max_relative = 1e-9);
        assert_relative_eq!(r.errors[0], (r.reduced_chi2 * 4.0 / 4.0).sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn too_few_points_and_bad_sigma() {
        let m = FitModel::new(ModelId::ExpDecay);
        let d = FitData::unweighted(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.2]).unwrap();
        assert!(matches!(fit(&m, &d, &[1.0, 1.0, 0.0]), Err(Error::Data(_))));
        assert!(FitData::new(vec![0.0], vec![1.0], vec![0.0]).is_err());
        let e = FitData::new(vec![], vec![], vec![]).unwrap_err();
        assert!(e.to_string().contains("no data rows"));
    }

    #[test]
    fn singular_normal_matrix_is_reported() {
        // amplitude and offset are indistinguishable when tau is huge and x = 0 only
        let m = FitModel::new(ModelId::ExpDecay).with_fixed(1);
        let d = FitData::unweighted(vec![0.0; 5], vec![1.0; 5]).unwrap();
        match fit(&m, &d, &[0.5, 1.0, 0.5]) {
            Err(Error::SingularNormalMatrix { condition }) => assert!(condition > 1e14),
            other => panic!("expected singular matrix, got {other:?}"),
        }
    }

    #[test]
    fn domain_errors_carry_rows() {
        let m = FitModel::new(ModelId::Raman);
        let d = FitData::unweighted(vec![15.0, 2.0, 20.0, 25.0], vec![1.0, 1.0, 2.0, 3.0]).unwrap();
        let e = fit(&m, &d, &[1.0, 3.2, 9.0]).unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");
    }

    #[test]
    fn sigma_scaling_invariance() {
        let m = FitModel::new(ModelId::ExpDecay);
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 20.0).collect();
        let mut d = synth(&m, &x, &[100.0, 156.3, 2.0]);
        for (i, y) in d.y.iter_mut().enumerate() {
            *y += if i % 2 == 0 { 0.7 } else { -0.6 };
        }
        let a = fit(&m, &d, &[50.0, 100.0, 0.0]).unwrap();
        let mut d3 = d.clone();
        d3.sigma.iter_mut().for_each(|s| *s *= 3.0);
        let b = fit(&m, &d3, &[50.0, 100.0, 0.0]).unwrap();
        for i in 0..3 {
            assert_relative_eq!(a.values[i], b.values[i], max_relative = 1e-9);
            assert_relative_eq!(a.errors[i], b.errors[i], max_relative = 1e-6);
        }
        assert_relative_eq!(b.reduced_chi2, a.reduced_chi2 / 9.0, max_relative = 1e-9);
    }

    #[test]
    fn jacobian_checks() {
        let lin = FitModel::new(ModelId::Linear);
        let x: Vec<f64> = (0..20).map(|i| i as f64 - 7.0).collect();
        assert!(jacobian_check(&lin, &x, &[0.3, -2.5]).unwrap() < 1e-10);
        let e = FitModel::new(ModelId::ExpDecay);
        assert!(jacobian_check(&e, &x.iter().map(|v| v + 7.0).collect::<Vec<_>>(), &[3.0, 4.0, 1.0]).unwrap() < 1e-5);
        let es = FitModel::new(ModelId::EseemModel);
        // three periods of the slower modulation in t (τ = t/2)
        let t: Vec<f64> = (0..300).map(|i| i as f64 * 0.3).collect();
        let th = [1.0, 81.0, 1.9, 0.2, 87.5, 0.15, 68.0, 0.1];
        assert!(jacobian_check(&es, &t, &th).unwrap() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn chi2_never_increases(seed in 0u64..1000, tau in 20.0f64..400.0) {
            let m = FitModel::new(ModelId::ExpDecay);
            let x: Vec<f64> = (0..50).map(|i| i as f64 * 10.0).collect();
            let mut d = synth(&m, &x, &[100.0, tau, 3.0]);
            for (i, y) in d.y.iter_mut().enumerate() {
                *y += ((seed as f64 + i as f64) * 12.9898).sin();
            }
            let r = fit(&m, &d, &[30.0, 2.0 * tau, 0.0]).unwrap();
            for w in r.chi2_history.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }
}
