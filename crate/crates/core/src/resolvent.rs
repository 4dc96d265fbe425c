//! Shifted solves `(sI - A)^{-1} v` for the negative definite system operator.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// Sparse Cholesky factorization of `sI - A`, which is symmetric positive
/// definite for every `s` to the right of the spectrum of `A`.
pub struct Resolvent {
    shift: f64,
    chol: CscCholesky<f64>,
    n: usize,
}

impl std::fmt::Debug for Resolvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Resolvent")
            .field("shift", &self.shift)
            .field("n", &self.n)
            .finish()
    }
}

impl Resolvent {
    pub fn new(a: &CsrMatrix<f64>, shift: f64) -> Result<Self> {
        if !shift.is_finite() {
            return Err(Error::SingularShift {
                shift,
                reason: "shift is not finite".into(),
            });
        }
        let n = a.nrows();
        let mut coo = CooMatrix::new(n, n);
        for (i, j, v) in a.triplet_iter() {
            coo.push(i, j, -*v);
        }
        for i in 0..n {
            coo.push(i, i, shift);
        }
        let m = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&m).map_err(|e| Error::SingularShift {
            shift,
            reason: format!("factorization of sI - A failed: {e:?}"),
        })?;
        Ok(Self { shift, chol, n })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let x = self.chol.solve(rhs);
        x.column(0).into_owned()
    }

    pub fn solve_many(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    /// `(sI - A)^{-p} v` for `p >= 0`.
    pub fn solve_power(&self, v: &DVector<f64>, p: usize) -> DVector<f64> {
        let mut x = v.clone();
        for _ in 0..p {
            x = self.solve(&x);
        }
        x
    }
}

/// Largest eigenvalue magnitude of the symmetric matrix `a`, by power
/// iteration started from a fixed nonconstant vector.
pub fn spectral_radius(a: &CsrMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
    x /= x.norm();
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let y = a * &x;
        let next = y.norm();
        if next == 0.0 {
            return 0.0;
        }
        x = y / next;
        if (next - lambda).abs() <= 1e-10 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> CsrMatrix<f64> {
        let mut coo = CooMatrix::new(n, n);
        for i in 0..n {
            coo.push(i, i, -2.0);
            if i + 1 < n {
                coo.push(i, i + 1, 1.0);
                coo.push(i + 1, i, 1.0);
            }
        }
        CsrMatrix::from(&coo)
    }

    #[test]
    fn solve_inverts_shifted_operator() {
        let a = laplacian(20);
        let r = Resolvent::new(&a, 0.7).unwrap();
        let v = DVector::from_fn(20, |i, _| (i as f64).sin());
        let x = r.solve(&v);
        let back = x.scale(0.7) - &a * &x;
        assert!((back - v).amax() < 1e-12);
    }

    #[test]
    fn shift_inside_spectrum_fails() {
        let a = laplacian(10);
        assert!(matches!(Resolvent::new(&a, -5.0), Err(Error::SingularShift { .. })));
    }

    #[test]
    fn power_iteration_matches_closed_form() {
        let n = 30;
        let a = laplacian(n);
        let exact = 2.0 + 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((spectral_radius(&a) - exact).abs() < 1e-6 * exact);
    }
}
