//! Spin-1 algebra, ground-state level energies and nuclear Larmor frequencies.

use std::str::FromStr;

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{DefectParams, ZeemanConvention, CONSTANTS};

/// Spin-1 matrices in the {|+1⟩, |0⟩, |−1⟩} basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperators {
    pub sx: Matrix3<Complex64>,
    pub sy: Matrix3<Complex64>,
    pub sz: Matrix3<Complex64>,
}

pub fn spin1_operators() -> SpinOperators {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let c = |x: f64| Complex64::new(x, 0.0);
    let i = |x: f64| Complex64::new(0.0, x);
    let z = Complex64::new(0.0, 0.0);
    let sx = Matrix3::new(z, c(r), z, c(r), z, c(r), z, c(r), z);
    let sy = Matrix3::new(z, i(-r), z, i(r), z, i(-r), z, i(r), z);
    let sz = Matrix3::new(c(1.0), z, z, z, z, z, z, z, c(-1.0));
    SpinOperators { sx, sy, sz }
}

/// Ground-state level frequencies relative to ms = 0 and the optical
/// detuning offsets of each ground sublevel's transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagram {
    pub f_zero: f64,
    pub f_minus: f64,
    pub f_plus: f64,
    /// Excited level relative to the g0→e optical transition; field independent.
    pub excited_offset: f64,
}

impl LevelDiagram {
    /// Ground energies in basis order (g0, g−, g+).
    pub fn ground(&self) -> [f64; 3] {
        [self.f_zero, self.f_minus, self.f_plus]
    }

    /// Optical transition frequency of g_i→e relative to g0→e (MHz).
    /// A higher ground level has a lower transition frequency.
    pub fn optical_detunings(&self) -> [f64; 3] {
        [-self.f_zero, -self.f_minus, -self.f_plus]
    }

    /// Distance between the ±1 lines.
    pub fn separation(&self) -> f64 {
        self.f_plus - self.f_minus
    }
}

/// Zeeman shift magnitude of the ±1 levels for this convention.
pub fn zeeman_shift_mhz(g: f64, field_gauss: f64, convention: ZeemanConvention) -> f64 {
    let full = g * CONSTANTS.bohr_mhz_per_gauss() * field_gauss;
    match convention {
        ZeemanConvention::Separation => full,
        ZeemanConvention::Shift => 0.5 * full,
    }
}

pub fn ground_levels(
    p: &DefectParams,
    field_gauss: f64,
    convention: ZeemanConvention,
) -> LevelDiagram {
    let shift = zeeman_shift_mhz(p.g_parallel, field_gauss, convention);
    let d = p.zero_field_splitting_mhz;
    LevelDiagram {
        f_zero: 0.0,
        f_minus: d - shift,
        f_plus: d + shift,
        excited_offset: 0.0,
    }
}

/// Microwave transition frequencies (0↔−1, 0↔+1).
pub fn mw_transition_frequencies(d: &LevelDiagram) -> (f64, f64) {
    (d.f_minus - d.f_zero, d.f_plus - d.f_zero)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Isotope {
    #[serde(rename = "13C")]
    C13,
    #[serde(rename = "29Si")]
    Si29,
}

impl FromStr for Isotope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "13c" | "c13" | "c-13" | "carbon-13" => Ok(Isotope::C13),
            "29si" | "si29" | "si-29" | "silicon-29" => Ok(Isotope::Si29),
            other => Err(Error::Domain(format!("unknown isotope '{other}'"))),
        }
    }
}

/// Nuclear Larmor frequency magnitude in kHz.
pub fn nuclear_larmor(isotope: Isotope, field_gauss: f64) -> f64 {
    let gamma = match isotope {
        Isotope::C13 => CONSTANTS.gamma_c13,
        Isotope::Si29 => CONSTANTS.gamma_si29,
    };
    // MHz/T × G × 1e-4 T/G × 1e3 kHz/MHz
    gamma * field_gauss.abs() * 0.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_params;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn max_abs(m: &Matrix3<Complex64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn spin_algebra() {
        let s = spin1_operators();
        let i = Complex64::new(0.0, 1.0);
        assert_eq!(s.sz[(0, 0)].re, 1.0);
        assert_eq!(s.sz[(1, 1)].re, 0.0);
        assert_eq!(s.sz[(2, 2)].re, -1.0);
        let comm = s.sx * s.sy - s.sy * s.sx - s.sz * i;
        assert!(max_abs(&comm) < 1e-12);
        let comm = s.sy * s.sz - s.sz * s.sy - s.sx * i;
        assert!(max_abs(&comm) < 1e-12);
        let comm = s.sz * s.sx - s.sx * s.sz - s.sy * i;
        assert!(max_abs(&comm) < 1e-12);
        let cas = s.sx * s.sx + s.sy * s.sy + s.sz * s.sz
            - Matrix3::identity() * Complex64::new(2.0, 0.0);
        assert!(max_abs(&cas) < 1e-12);
        for m in [&s.sx, &s.sy, &s.sz] {
            assert!(max_abs(&(m - m.adjoint())) < 1e-15);
        }
    }

    #[test]
    fn zero_field_levels() {
        let d = ground_levels(&default_params(), 0.0, ZeemanConvention::Separation);
        assert_eq!(d.f_plus, 1063.11);
        assert_eq!(d.f_minus, 1063.11);
        assert_eq!(mw_transition_frequencies(&d), (1063.11, 1063.11));
    }

    #[test]
    fn splitting_at_158_gauss() {
        // independent oracle: 2 g (μB/h) B with μB = 9.2740100783e-24 J/T, h = 6.62607015e-34 J s
        let mu_b_over_h_hz_per_t = 9.274_010_078_3e-24 / 6.626_070_15e-34;
        let expected = 2.0 * 2.0 * mu_b_over_h_hz_per_t * 158e-4 / 1e6;
        let d = ground_levels(&default_params(), 158.0, ZeemanConvention::Separation);
        assert_relative_eq!(d.separation(), expected, max_relative = 1e-8);
        assert!((d.separation() - 884.6).abs() < 0.05);
    }

    #[test]
    fn splitting_at_27_5_gauss() {
        let d = ground_levels(&default_params(), 27.5, ZeemanConvention::Separation);
        let (lo, hi) = mw_transition_frequencies(&d);
        assert!((hi - lo - 154.0).abs() < 0.1);
        let d = ground_levels(&default_params(), 27.5, ZeemanConvention::Shift);
        assert!((d.separation() - 77.0).abs() < 0.1);
    }

    #[test]
    fn five_mhz_split() {
        let mut p = default_params();
        p.zero_field_splitting_mhz = 1063.11;
        let b = 5.0 / (2.0 * 2.0 * CONSTANTS.bohr_mhz_per_gauss());
        let d = ground_levels(&p, b, ZeemanConvention::Separation);
        assert_relative_eq!(d.f_plus - 1063.11, 2.5, max_relative = 1e-12);
        assert_relative_eq!(d.separation(), 5.0, max_relative = 1e-12);
    }

    #[test]
    fn larmor_values() {
        assert_eq!(nuclear_larmor(Isotope::C13, 0.0), 0.0);
        assert!((nuclear_larmor(Isotope::C13, 158.0) - 169.2).abs() < 0.05);
        assert!((nuclear_larmor(Isotope::Si29, 158.0) - 133.8).abs() < 0.05);
        assert!("13C".parse::<Isotope>().is_ok());
        assert!("15N".parse::<Isotope>().is_err());
    }

    #[test]
    fn excited_level_field_independent() {
        let p = default_params();
        for b in [0.0, 10.0, 158.0] {
            assert_eq!(
                ground_levels(&p, b, ZeemanConvention::Separation).excited_offset,
                0.0
            );
        }
    }

    proptest! {
        #[test]
        fn levels_linear_in_field(b in 0.01f64..2000.0, shift in any::<bool>()) {
            let conv = if shift { ZeemanConvention::Shift } else { ZeemanConvention::Separation };
            let p = default_params();
            let d = p.zero_field_splitting_mhz;
            let one = ground_levels(&p, b, conv).f_plus - d;
            let two = ground_levels(&p, 2.0 * b, conv).f_plus - d;
            prop_assert!(((two - 2.0 * one) / two).abs() < 1e-9);
        }

        #[test]
        fn field_reversal_swaps_levels(b in -2000.0f64..2000.0) {
            let p = default_params();
            let a = ground_levels(&p, b, ZeemanConvention::Separation);
            let r = ground_levels(&p, -b, ZeemanConvention::Separation);
            prop_assert!((a.f_plus - r.f_minus).abs() < 1e-9);
            prop_assert!((a.f_minus - r.f_plus).abs() < 1e-9);
        }

        #[test]
        fn larmor_homogeneous(b in 0.0f64..5000.0, k in 0.0f64..10.0) {
            for iso in [Isotope::C13, Isotope::Si29] {
                let lhs = nuclear_larmor(iso, k * b);
                let rhs = k * nuclear_larmor(iso, b);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
            }
        }
    }
}
