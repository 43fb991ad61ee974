//! Small dense symmetric eigenproblems (cyclic Jacobi) and matrix powers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues in `(-NEG_CLAMP, 0)` are treated as exact zeros.
pub const NEG_CLAMP: f64 = 1e-12;

/// Relative tolerance for positive definiteness: the smallest eigenvalue must
/// exceed `PD_RTOL * (1 + largest eigenvalue)`.
pub const PD_RTOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition `m = P diag(values) Pᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
    pub fn new(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "matrix must be square");
        let mut a = m.clone();
        // symmetrize against round-off in the caller
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = s;
                a[(j, i)] = s;
            }
        }
        let mut v = DMatrix::<f64>::identity(n, n);
        let scale = a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        if scale > 0.0 {
            for _ in 0..MAX_SWEEPS {
                let off: f64 = (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
                if off.sqrt() <= 1e-15 * scale {
                    break;
                }
                for p in 0..n {
                    for q in (p + 1)..n {
                        let apq = a[(p, q)];
                        if apq == 0.0 {
                            continue;
                        }
                        let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                        let t = if theta == 0.0 { 1.0 } else { t };
                        let c = 1.0 / (t * t + 1.0).sqrt();
                        let s = t * c;
                        for k in 0..n {
                            let akp = a[(k, p)];
                            let akq = a[(k, q)];
                            a[(k, p)] = c * akp - s * akq;
                            a[(k, q)] = s * akp + c * akq;
                        }
                        for k in 0..n {
                            let apk = a[(p, k)];
                            let aqk = a[(q, k)];
                            a[(p, k)] = c * apk - s * aqk;
                            a[(q, k)] = s * apk + c * aqk;
                        }
                        for k in 0..n {
                            let vkp = v[(k, p)];
                            let vkq = v[(k, q)];
                            v[(k, p)] = c * vkp - s * vkq;
                            v[(k, q)] = s * vkp + c * vkq;
                        }
                        a[(p, q)] = 0.0;
                        a[(q, p)] = 0.0;
                    }
                }
            }
        }
        let values = DVector::from_iterator(n, (0..n).map(|i| a[(i, i)]));
        SymEigen { values, vectors: v }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_positive_definite(&self) -> bool {
        !self.values.is_empty() && self.min() > PD_RTOL * (1.0 + self.max().max(0.0))
    }

    /// `P f(D) Pᵀ`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut out = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let fk = f(self.values[k]);
            for i in 0..n {
                let vik = self.vectors[(i, k)] * fk;
                for j in 0..n {
                    out[(i, j)] += vik * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

/// Exponent accepted by [`sym_matrix_power`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Power {
    Half,
    InverseHalf,
}

/// Whether the symmetric matrix passes the positive-definiteness tolerance.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    SymEigen::new(m).is_positive_definite()
}

/// `m^{1/2}` or `m^{-1/2}` of a symmetric positive semidefinite matrix via
/// its eigen-decomposition.
pub fn sym_matrix_power(m: &DMatrix<f64>, x: Power) -> Result<DMatrix<f64>> {
    let eig = SymEigen::new(m);
    sym_power_from(&eig, x)
}

pub(crate) fn sym_power_from(eig: &SymEigen, x: Power) -> Result<DMatrix<f64>> {
    if eig.min() <= -NEG_CLAMP * (1.0 + eig.max().abs()) {
        return Err(Error::Domain("matrix has a negative eigenvalue".into()));
    }
    match x {
        Power::Half => Ok(eig.apply(|l| l.max(0.0).sqrt())),
        Power::InverseHalf => {
            if !eig.is_positive_definite() {
                return Err(Error::SingularMatrix);
            }
            Ok(eig.apply(|l| 1.0 / l.sqrt()))
        }
    }
}

/// Solves `m x = b` for symmetric positive definite `m`.
pub(crate) fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = SymEigen::new(m);
    if !eig.is_positive_definite() {
        return Err(Error::SingularMatrix);
    }
    let inv = eig.apply(|l| 1.0 / l);
    Ok(inv * b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spd(entries: &[f64], p: usize) -> DMatrix<f64> {
        let a = DMatrix::from_row_slice(p, p, entries);
        &a * a.transpose() + DMatrix::identity(p, p) * 0.1
    }

    #[test]
    fn identity_inverse_sqrt_is_identity() {
        let i = DMatrix::<f64>::identity(3, 3);
        let r = sym_matrix_power(&i, Power::InverseHalf).unwrap();
        assert_relative_eq!(r, i, epsilon = 1e-15);
    }

    #[test]
    fn diagonal_inverse_sqrt() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = sym_matrix_power(&m, Power::InverseHalf).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0 / 3.0]));
        assert_relative_eq!(r, expected, epsilon = 1e-15);
    }

    #[test]
    fn rank_deficient_inverse_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(sym_matrix_power(&m, Power::InverseHalf), Err(Error::SingularMatrix)));
        let half = sym_matrix_power(&m, Power::Half).unwrap();
        assert_relative_eq!(&half * &half, m, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_match_nalgebra() {
        let m = spd(&[1.0, 2.0, 0.5, -1.0, 0.3, 2.0, 0.0, 1.5, -0.7], 3);
        let mut ours: Vec<f64> = SymEigen::new(&m).values.iter().cloned().collect();
        let mut reference: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
        ours.sort_by(f64::total_cmp);
        reference.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(&reference) {
            assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn square_root_squares_back(entries in prop::collection::vec(-3.0f64..3.0, 16), p in 1usize..=4) {
            let m = spd(&entries[..p * p], p);
            let half = sym_matrix_power(&m, Power::Half).unwrap();
            let back = &half * &half;
            prop_assert!((back - &m).abs().max() < 1e-10 * (1.0 + m.abs().max()));
            let inv = sym_matrix_power(&m, Power::InverseHalf).unwrap();
            let ident = &inv * &m * &inv;
            prop_assert!((ident - DMatrix::<f64>::identity(p, p)).abs().max() < 1e-8);
            prop_assert!((&half - half.transpose()).abs().max() < 1e-12);
        }
    }
}
