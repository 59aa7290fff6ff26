//! Dense complex linear algebra helpers: Padé matrix exponential and
//! column-stacked vectorization of 4×4 density matrices.

use nalgebra::{Matrix4, SMatrix, SVector};
use num_complex::Complex64;

pub type C = Complex64;
/// Superoperator acting on column-stacked 4×4 matrices.
pub type Super = SMatrix<C, 16, 16>;
pub type Vec16 = SVector<C, 16>;

/// Column-stacked vec(ρ).
pub fn vectorize(m: &Matrix4<C>) -> Vec16 {
    Vec16::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &Vec16) -> Matrix4<C> {
    Matrix4::from_column_slice(v.as_slice())
}

/// Index of element (row, col) in vec(ρ).
pub const fn vec_index(row: usize, col: usize) -> usize {
    col * 4 + row
}

/// Kronecker product of two 4×4 matrices.
pub fn kron(a: &Matrix4<C>, b: &Matrix4<C>) -> Super {
    let mut out = Super::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let aij = a[(i, j)];
            if aij == C::new(0.0, 0.0) {
                continue;
            }
            for k in 0..4 {
                for l in 0..4 {
                    out[(i * 4 + k, j * 4 + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

fn norm1<const N: usize>(a: &SMatrix<C, N, N>) -> f64 {
    (0..N)
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

// Padé coefficients and the 1-norm bounds below which each degree meets
// double precision without scaling.
const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a diagonal Padé approximant.
pub fn expm<const N: usize>(a: &SMatrix<C, N, N>) -> SMatrix<C, N, N> {
    let id = SMatrix::<C, N, N>::identity();
    let norm = norm1(a);
    if norm == 0.0 {
        return id;
    }
    let sc = |m: &SMatrix<C, N, N>, s: f64| m * C::new(s, 0.0);
    for &(deg, theta) in THETA.iter() {
        if norm <= theta {
            let b: &[f64] = match deg {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let a2 = a * a;
            // odd part U = A·Σ b_{2k+1} A^{2k}, even part V = Σ b_{2k} A^{2k}
            let mut pow = id;
            let mut u = SMatrix::<C, N, N>::zeros();
            let mut v = SMatrix::<C, N, N>::zeros();
            for k in 0..=(deg / 2) {
                v += sc(&pow, b[2 * k]);
                u += sc(&pow, b[2 * k + 1]);
                if k < deg / 2 {
                    pow *= a2;
                }
            }
            let u = a * u;
            return pade_solve(&u, &v);
        }
    }
    let s = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
    let a = sc(a, 0.5f64.powi(s));
    let b = &B13;
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a4 * a2;
    let u_inner = a6 * (sc(&a6, b[13]) + sc(&a4, b[11]) + sc(&a2, b[9]))
        + sc(&a6, b[7])
        + sc(&a4, b[5])
        + sc(&a2, b[3])
        + sc(&id, b[1]);
    let u = a * u_inner;
    let v = a6 * (sc(&a6, b[12]) + sc(&a4, b[10]) + sc(&a2, b[8]))
        + sc(&a6, b[6])
        + sc(&a4, b[4])
        + sc(&a2, b[2])
        + sc(&id, b[0]);
    let mut r = pade_solve(&u, &v);
    for _ in 0..s {
        r = r * r;
    }
    r
}

fn pade_solve<const N: usize>(u: &SMatrix<C, N, N>, v: &SMatrix<C, N, N>) -> SMatrix<C, N, N> {
    // Q X = P by Gaussian elimination with partial pivoting
    let mut q = v - u;
    let mut x = v + u;
    for k in 0..N {
        let piv = (k..N)
            .max_by(|&i, &j| q[(i, k)].norm().total_cmp(&q[(j, k)].norm()))
            .expect("non-empty pivot range");
        assert!(q[(piv, k)].norm() > 0.0, "Padé denominator is singular");
        if piv != k {
            q.swap_rows(piv, k);
            x.swap_rows(piv, k);
        }
        let d = C::new(1.0, 0.0) / q[(k, k)];
        for i in (k + 1)..N {
            let f = q[(i, k)] * d;
            if f == C::new(0.0, 0.0) {
                continue;
            }
            for j in k..N {
                let t = q[(k, j)];
                q[(i, j)] -= f * t;
            }
            for j in 0..N {
                let t = x[(k, j)];
                x[(i, j)] -= f * t;
            }
        }
    }
    for k in (0..N).rev() {
        let d = C::new(1.0, 0.0) / q[(k, k)];
        for j in 0..N {
            let mut acc = x[(k, j)];
            for m in (k + 1)..N {
                acc -= q[(k, m)] * x[(m, j)];
            }
            x[(k, j)] = acc * d;
        }
    }
    x
}

/// Hermitian part (ρ + ρ†)/2.
pub fn hermitize(m: &Matrix4<C>) -> Matrix4<C> {
    (m + m.adjoint()) * C::new(0.5, 0.0)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &Matrix4<C>) -> f64 {
    let h = hermitize(m);
    h.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_abs<const R: usize, const K: usize>(m: &SMatrix<C, R, K>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix2;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    /// Oracle: truncated Taylor series with many squarings.
    fn taylor_expm<const N: usize>(a: &SMatrix<C, N, N>) -> SMatrix<C, N, N> {
        let s = 12;
        let a = a * c(0.5f64.powi(s), 0.0);
        let mut term = SMatrix::<C, N, N>::identity();
        let mut sum = term;
        for k in 1..30 {
            term = term * a * c(1.0 / k as f64, 0.0);
            sum += term;
        }
        for _ in 0..s {
            sum = sum * sum;
        }
        sum
    }

    #[test]
    fn zero_is_identity() {
        let z = Super::zeros();
        assert_eq!(expm(&z), Super::identity());
    }

    #[test]
    fn diagonal_exact() {
        let a = Matrix2::new(c(-1.0, 0.5), c(0.0, 0.0), c(0.0, 0.0), c(3.0, -2.0));
        let e = expm(&a);
        assert!((e[(0, 0)] - c(-1.0, 0.5).exp()).norm() < 1e-13);
        assert!((e[(1, 1)] - c(3.0, -2.0).exp()).norm() < 1e-12 * 20.0);
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn rotation_generator() {
        // exp(-iθσx) = cos θ I − i sin θ σx
        for theta in [0.01, 0.3, 1.0, 4.0, 40.0] {
            let a = Matrix2::new(c(0.0, 0.0), c(0.0, -theta), c(0.0, -theta), c(0.0, 0.0));
            let e = expm(&a);
            assert!((e[(0, 0)] - c(theta.cos(), 0.0)).norm() < 1e-10 * theta.max(1.0));
            assert!((e[(0, 1)] - c(0.0, -theta.sin())).norm() < 1e-10 * theta.max(1.0));
        }
    }

    #[test]
    fn kron_index_convention() {
        let mut a = Matrix4::<C>::zeros();
        let mut b = Matrix4::<C>::zeros();
        let mut rho = Matrix4::<C>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                a[(i, j)] = c((i * 4 + j) as f64 * 0.1, (i as f64) - (j as f64));
                b[(i, j)] = c(1.0 / (1 + i + j) as f64, 0.3 * i as f64);
                rho[(i, j)] = c((i + 2 * j) as f64, -(j as f64));
            }
        }
        // vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)
        let lhs = vectorize(&(a * rho * b));
        let rhs = kron(&b.transpose(), &a) * vectorize(&rho);
        assert!(max_abs(&(lhs - rhs)) < 1e-10);
        assert_eq!(vectorize(&rho)[vec_index(2, 1)], rho[(2, 1)]);
        assert_eq!(unvectorize(&vectorize(&rho)), rho);
    }

    proptest! {
        #[test]
        fn matches_taylor_oracle(entries in proptest::collection::vec(-3.0f64..3.0, 32), scale in 0.001f64..20.0) {
            let mut a = SMatrix::<C, 4, 4>::zeros();
            for i in 0..16 {
                a[(i / 4, i % 4)] = c(entries[2 * i] * scale, entries[2 * i + 1] * scale);
            }
            let e = expm(&a);
            let t = taylor_expm(&a);
            let scale_ref = max_abs(&t).max(1.0);
            prop_assert!(max_abs(&(e - t)) / scale_ref < 1e-9);
        }

        #[test]
        fn inverse_property(entries in proptest::collection::vec(-1.0f64..1.0, 32)) {
            let mut a = SMatrix::<C, 4, 4>::zeros();
            for i in 0..16 {
                a[(i / 4, i % 4)] = c(entries[2 * i], entries[2 * i + 1]);
            }
            let prod = expm(&a) * expm(&(-a));
            prop_assert!(max_abs(&(prod - SMatrix::<C, 4, 4>::identity())) < 1e-12);
        }
    }
}
