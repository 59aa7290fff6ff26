//! Fit model library.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::{CONSTANTS, RAMAN_REFERENCE_K};
use crate::sequences::EchoTau;

/// A model y(x; θ) with named parameters, some of which may be held fixed.
pub trait Model {
    fn name(&self) -> String;
    fn param_names(&self) -> Vec<String>;
    fn eval(&self, x: f64, theta: &[f64]) -> Result<f64>;
    /// Parameters held at their starting value.
    fn fixed(&self) -> Vec<bool> {
        vec![false; self.param_names().len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    GaussianTwoPeak,
    Lorentzian,
    LorentzianPair,
    ExpDecay,
    RabiDampedCosine,
    RamseyModel,
    EseemModel,
    Orbach,
    Raman,
    ExpRise,
    Constant,
    Linear,
}

impl ModelId {
    pub const ALL: [ModelId; 12] = [
        ModelId::GaussianTwoPeak,
        ModelId::Lorentzian,
        ModelId::LorentzianPair,
        ModelId::ExpDecay,
        ModelId::RabiDampedCosine,
        ModelId::RamseyModel,
        ModelId::EseemModel,
        ModelId::Orbach,
        ModelId::Raman,
        ModelId::ExpRise,
        ModelId::Constant,
        ModelId::Linear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::GaussianTwoPeak => "gaussian_two_peak",
            ModelId::Lorentzian => "lorentzian",
            ModelId::LorentzianPair => "lorentzian_pair",
            ModelId::ExpDecay => "exp_decay",
            ModelId::RabiDampedCosine => "rabi_damped_cosine",
            ModelId::RamseyModel => "ramsey_model",
            ModelId::EseemModel => "eseem_model",
            ModelId::Orbach => "orbach",
            ModelId::Raman => "raman",
            ModelId::ExpRise => "exp_rise",
            ModelId::Constant => "constant",
            ModelId::Linear => "linear",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = ModelId::ALL.iter().map(|m| m.as_str()).collect();
                Error::Config(format!("unknown model '{s}' (known: {})", known.join(", ")))
            })
    }
}

/// A library model with its fixed-parameter mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitModel {
    pub id: ModelId,
    pub fixed: Vec<bool>,
    /// Number of modulation components of the ESEEM model.
    pub eseem_components: usize,
    pub echo_tau: EchoTau,
}

impl FitModel {
    /// Library defaults: the two-peak separation and the Raman exponent are fixed.
    pub fn new(id: ModelId) -> Self {
        let mut m = FitModel {
            id,
            fixed: Vec::new(),
            eseem_components: 2,
            echo_tau: EchoTau::Half,
        };
        m.reset_mask();
        m
    }

    pub fn eseem(components: usize, echo_tau: EchoTau) -> Self {
        let mut m = FitModel {
            id: ModelId::EseemModel,
            fixed: Vec::new(),
            eseem_components: components,
            echo_tau,
        };
        m.reset_mask();
        m
    }

    fn reset_mask(&mut self) {
        let n = self.param_count();
        self.fixed = vec![false; n];
        match self.id {
            ModelId::GaussianTwoPeak => self.fixed[5] = true,
            ModelId::Raman => self.fixed[2] = true,
            _ => {}
        }
    }

    pub fn with_free(mut self, index: usize) -> Self {
        self.fixed[index] = false;
        self
    }

    pub fn with_fixed(mut self, index: usize) -> Self {
        self.fixed[index] = true;
        self
    }

    /// Neutral starting point: ones, except the fixed library values
    /// (two-peak separation 1.063, Raman exponent 9).
    pub fn default_start(&self) -> Vec<f64> {
        let mut t = vec![1.0; self.param_count()];
        match self.id {
            ModelId::GaussianTwoPeak => t[5] = 1.063,
            ModelId::Raman => t[2] = 9.0,
            _ => {}
        }
        t
    }

    pub fn param_count(&self) -> usize {
        self.param_names().len()
    }

    pub fn free_count(&self) -> usize {
        self.fixed.iter().filter(|f| !**f).count()
    }

    /// Parameter units, aligned with `param_names`.
    pub fn param_units(&self) -> Vec<&'static str> {
        match self.id {
            ModelId::GaussianTwoPeak => vec!["y", "x", "x", "y", "x", "x", "y"],
            ModelId::Lorentzian => vec!["y", "x", "x", "y"],
            ModelId::LorentzianPair => vec!["y", "x", "y", "x", "x", "y"],
            ModelId::ExpDecay | ModelId::ExpRise => vec!["y", "x", "y"],
            ModelId::RabiDampedCosine => vec!["y", "x", "1/x", "y"],
            ModelId::RamseyModel => vec!["y", "x", "1/x", "rad", "y"],
            ModelId::EseemModel => {
                let mut u = vec!["y", "us", "1"];
                for _ in 0..self.eseem_components {
                    u.push("1");
                    u.push("kHz");
                }
                u.push("y");
                u
            }
            ModelId::Orbach => vec!["1/s", "meV"],
            ModelId::Raman => vec!["1/s", "K", "1"],
            ModelId::Constant => vec!["y"],
            ModelId::Linear => vec!["y", "y/x"],
        }
    }
}

fn gauss(x: f64, c: f64, fwhm: f64) -> f64 {
    let u = (x - c) / fwhm;
    (-4.0 * 2f64.ln() * u * u).exp()
}

fn lorentz(x: f64, c: f64, fwhm: f64) -> f64 {
    let u = 2.0 * (x - c) / fwhm;
    1.0 / (1.0 + u * u)
}

impl Model for FitModel {
    fn name(&self) -> String {
        self.id.as_str().to_string()
    }

    fn param_names(&self) -> Vec<String> {
        let v: Vec<&str> = match self.id {
            ModelId::GaussianTwoPeak => vec!["a0", "c0", "fwhm0", "a1", "fwhm1", "separation", "offset"],
            ModelId::Lorentzian => vec!["amplitude", "center", "fwhm", "offset"],
            ModelId::LorentzianPair => vec!["amplitude1", "center1", "amplitude2", "center2", "fwhm", "offset"],
            ModelId::ExpDecay => vec!["amplitude", "tau", "offset"],
            ModelId::RabiDampedCosine => vec!["amplitude", "decay", "frequency", "offset"],
            ModelId::RamseyModel => vec!["amplitude", "t2_star", "detuning", "phase", "offset"],
            ModelId::EseemModel => {
                let mut v = vec!["amplitude".to_string(), "t2".to_string(), "n".to_string()];
                for a in 1..=self.eseem_components {
                    v.push(format!("k{a}"));
                    v.push(format!("omega{a}"));
                }
                v.push("offset".to_string());
                return v;
            }
            ModelId::Orbach => vec!["prefactor", "activation"],
            ModelId::Raman => vec!["prefactor", "offset_temperature", "exponent"],
            ModelId::ExpRise => vec!["amplitude", "tau", "offset"],
            ModelId::Constant => vec!["offset"],
            ModelId::Linear => vec!["intercept", "slope"],
        };
        v.into_iter().map(String::from).collect()
    }

    fn fixed(&self) -> Vec<bool> {
        self.fixed.clone()
    }

    fn eval(&self, x: f64, t: &[f64]) -> Result<f64> {
        if t.len() != self.param_count() {
            return Err(Error::Domain(format!(
                "{} takes {} parameters, got {}",
                self.id,
                self.param_count(),
                t.len()
            )));
        }
        let y = match self.id {
            ModelId::GaussianTwoPeak => t[0] * gauss(x, t[1], t[2]) + t[3] * gauss(x, t[1] - t[5], t[4]) + t[6],
            ModelId::Lorentzian => t[0] * lorentz(x, t[1], t[2]) + t[3],
            ModelId::LorentzianPair => t[0] * lorentz(x, t[1], t[4]) + t[2] * lorentz(x, t[3], t[4]) + t[5],
            ModelId::ExpDecay => t[0] * (-x / t[1]).exp() + t[2],
            ModelId::RabiDampedCosine => t[0] * (-x / t[1]).exp() * (2.0 * PI * t[2] * x).cos() + t[3],
            ModelId::RamseyModel => t[0] * (-x / t[1]).exp() * (2.0 * PI * t[2] * x + t[3]).cos() + t[4],
            ModelId::EseemModel => {
                if x < 0.0 {
                    return Err(Error::Domain(format!("eseem_model needs t ≥ 0, got {x}")));
                }
                let tau = match self.echo_tau {
                    EchoTau::Half => 0.5 * x,
                    EchoTau::Full => x,
                };
                let mut f = (-(x / t[1]).abs().powf(t[2])).exp();
                for a in 0..self.eseem_components {
                    let s = (PI * t[4 + 2 * a] * 1e-3 * tau).sin();
                    f *= 1.0 - t[3 + 2 * a] * s * s;
                }
                t[0] * f + t[t.len() - 1]
            }
            ModelId::Orbach => {
                if !(x > 0.0) {
                    return Err(Error::Domain(format!("orbach needs T > 0, got {x}")));
                }
                t[0] * (-t[1] / (CONSTANTS.boltzmann_mev * x)).exp()
            }
            ModelId::Raman => {
                if !(x > t[1]) {
                    return Err(Error::Domain(format!(
                        "raman needs T > ΔT, got T = {x} K with ΔT = {} K",
                        t[1]
                    )));
                }
                t[0] * ((x - t[1]) / RAMAN_REFERENCE_K).powf(t[2])
            }
            ModelId::ExpRise => t[0] * (1.0 - (-x / t[1]).exp()) + t[2],
            ModelId::Constant => t[0],
            ModelId::Linear => t[0] + t[1] * x,
        };
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::Domain(format!("{} is not finite at x = {x}", self.id)))
        }
    }
}

/// Evaluate a library model on a grid.
pub fn eval_model(id: ModelId, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    let m = if id == ModelId::EseemModel {
        let comps = theta.len().saturating_sub(4) / 2;
        FitModel::eseem(comps, EchoTau::Half)
    } else {
        FitModel::new(id)
    };
    x.iter().map(|&xi| m.eval(xi, theta)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn names_roundtrip() {
        for m in ModelId::ALL {
            assert_eq!(m.as_str().parse::<ModelId>().unwrap(), m);
            let f = FitModel::new(m);
            assert_eq!(f.param_names().len(), f.param_units().len());
            assert!(f.param_count() >= 1);
        }
        assert!("nope".parse::<ModelId>().is_err());
    }

    #[test]
    fn examples() {
        let e = FitModel::new(ModelId::EseemModel);
        let th = [2.0, 81.0, 1.9, 0.2, 87.5, 0.15, 68.0, 0.5];
        assert_eq!(e.eval(0.0, &th).unwrap(), 2.5);

        let o = FitModel::new(ModelId::Orbach);
        let k_b: f64 = 1.380649e-23 / 1.602176634e-22;
        let v = o.eval(20.0, &[3.0, 20.0]).unwrap();
        assert_relative_eq!(v, 3.0 * (-20.0 / (k_b * 20.0)).exp(), max_relative = 1e-8);
        assert!((v / 3.0).ln() + 11.60 < 0.01);

        let r = FitModel::new(ModelId::ExpRise);
        let v = r.eval(1.27, &[64.0, 1.27, 0.0]).unwrap();
        assert_relative_eq!(v, 64.0 * (1.0 - (-1.0f64).exp()), max_relative = 1e-14);

        let raman = FitModel::new(ModelId::Raman);
        assert!(raman.eval(3.0, &[1.0, 3.2, 9.0]).is_err());
        assert_relative_eq!(raman.eval(13.2, &[2.5, 3.2, 9.0]).unwrap(), 2.5, max_relative = 1e-14);
    }

    #[test]
    fn two_peak_uses_fixed_separation() {
        let m = FitModel::new(ModelId::GaussianTwoPeak);
        assert_eq!(m.free_count(), 6);
        let th = [1.0, 0.0, 6.87, 2.0, 3.34, 1.063, 0.0];
        assert_relative_eq!(m.eval(-1.063, &th).unwrap(), 2.0 + gauss(-1.063, 0.0, 6.87), max_relative = 1e-14);
        assert_eq!(m.clone().with_free(5).free_count(), 7);
    }

    #[test]
    fn eval_model_grid() {
        let y = eval_model(ModelId::ExpDecay, &[0.0, 156.3], &[1.0, 156.3, 0.0]).unwrap();
        assert_relative_eq!(y[1], (-1.0f64).exp(), max_relative = 1e-14);
        assert!(eval_model(ModelId::ExpDecay, &[0.0], &[1.0]).is_err());
    }
}
