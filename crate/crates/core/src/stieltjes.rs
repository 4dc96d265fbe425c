//! Stieltjes continued fractions: conversion from poles/residues through a
//! Lanczos tridiagonalization, evaluation, and the equivalent three-point
//! finite-difference scheme.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::PoleResidue;

/// Symmetric tridiagonal matrix; `beta[i]` couples rows `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Tridiagonal {
    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = self.alpha[i];
        }
        for (i, &b) in self.beta.iter().enumerate() {
            t[(i, i + 1)] = b;
            t[(i + 1, i)] = b;
        }
        t
    }
}

/// Output of the Lanczos process: `T = XᵀEX`, `XᵀX = I`, `X e_1 = η`.
#[derive(Debug, Clone)]
pub struct Lanczos {
    pub t: Tridiagonal,
    pub x: DMatrix<f64>,
}

/// Lanczos with full reorthogonalization at every step.
pub fn lanczos_tridiag(e: &DMatrix<f64>, eta: &DVector<f64>) -> Result<Lanczos> {
    let m = e.nrows();
    if e.ncols() != m || eta.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: eta.len(),
        });
    }
    let nrm = eta.norm();
    if !((nrm - 1.0).abs() < 1e-10) {
        return Err(Error::InvalidArgument(format!("starting vector has norm {nrm}, expected 1")));
    }
    let e_norm = e.norm();
    let mut x = DMatrix::zeros(m, m);
    x.set_column(0, eta);
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m.saturating_sub(1));
    for j in 0..m {
        let xj = x.column(j).into_owned();
        let exj = e * &xj;
        alpha.push(xj.dot(&exj));
        if j + 1 == m {
            break;
        }
        let mut u = exj - xj.scale(alpha[j]);
        if j > 0 {
            u -= x.column(j - 1).scale(beta[j - 1]);
        }
        // two passes of classical Gram-Schmidt against all previous vectors
        for _ in 0..2 {
            let basis = x.columns(0, j + 1);
            let coef = basis.transpose() * &u;
            u -= basis * coef;
        }
        let b = u.norm();
        if !(b >= 1e-14 * e_norm) || b == 0.0 {
            return Err(Error::Breakdown { step: j + 1, beta: b });
        }
        beta.push(b);
        x.set_column(j + 1, &(u / b));
    }
    Ok(Lanczos {
        t: Tridiagonal { alpha, beta },
        x,
    })
}

/// Coefficients of
/// `Y_m(s) = 1/(κ̂_1 s + 1/(κ_1 + 1/(κ̂_2 s + ... + 1/(κ̂_m s + 1/κ_m))))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuedFraction {
    pub kappa: Vec<f64>,
    pub kappa_hat: Vec<f64>,
}

impl ContinuedFraction {
    pub fn m(&self) -> usize {
        self.kappa.len()
    }

    /// `(log κ_1..log κ_m, log κ̂_1..log κ̂_m)`.
    pub fn log_vector(&self) -> Vec<f64> {
        self.kappa.iter().chain(&self.kappa_hat).map(|v| v.ln()).collect()
    }

    pub fn from_log_vector(l: &[f64]) -> Result<Self> {
        if !l.len().is_multiple_of(2) || l.is_empty() {
            return Err(Error::InvalidArgument(format!("log vector has odd length {}", l.len())));
        }
        let m = l.len() / 2;
        Ok(Self {
            kappa: l[..m].iter().map(|v| v.exp()).collect(),
            kappa_hat: l[m..].iter().map(|v| v.exp()).collect(),
        })
    }

    /// Positive coefficients above `1e-14` of the largest magnitude.
    pub fn check_admissible(&self) -> Result<()> {
        let max = self
            .kappa
            .iter()
            .chain(&self.kappa_hat)
            .fold(0.0f64, |a, v| a.max(v.abs()));
        for (which, vals) in [("kappa", &self.kappa), ("kappa_hat", &self.kappa_hat)] {
            for (j, &v) in vals.iter().enumerate() {
                if !(v > 1e-14 * max) || !v.is_finite() {
                    return Err(Error::Inadmissible {
                        which,
                        index: j + 1,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Continued-fraction coefficients from a Lanczos tridiagonal matrix and the
/// total residue `Σ c`.
pub fn tridiag_to_cfrac(t: &Tridiagonal, total: f64) -> Result<ContinuedFraction> {
    let m = t.m();
    let mut kappa = vec![0.0; m];
    let mut kappa_hat = vec![0.0; m];
    kappa_hat[0] = 1.0 / total;
    kappa[0] = -1.0 / (kappa_hat[0] * t.alpha[0]);
    for j in 1..m {
        let b = t.beta[j - 1];
        kappa_hat[j] = 1.0 / (kappa[j - 1] * kappa[j - 1] * b * b * kappa_hat[j - 1]);
        kappa[j] = -1.0 / (t.alpha[j] * kappa_hat[j] + 1.0 / kappa[j - 1]);
    }
    let cf = ContinuedFraction { kappa, kappa_hat };
    cf.check_admissible()?;
    Ok(cf)
}

/// `E = -diag(θ)` and `η_i = sqrt(c_i / Σc)`.
pub fn spectral_start(pr: &PoleResidue) -> (DMatrix<f64>, DVector<f64>) {
    let total: f64 = pr.c.iter().sum();
    let e = DMatrix::from_diagonal(&DVector::from_iterator(pr.m(), pr.theta.iter().map(|t| -t)));
    let eta = DVector::from_iterator(pr.m(), pr.c.iter().map(|c| (c / total).sqrt()));
    (e, eta)
}

pub fn pole_residue_to_cfrac(pr: &PoleResidue) -> Result<ContinuedFraction> {
    let (e, eta) = spectral_start(pr);
    let lz = lanczos_tridiag(&e, &eta)?;
    tridiag_to_cfrac(&lz.t, pr.c.iter().sum())
}

/// Direct path from a projected model: `E = A_m`, `η = b_m/‖b_m‖`.
pub fn reduced_to_cfrac(a_m: &DMatrix<f64>, b_m: &DVector<f64>) -> Result<ContinuedFraction> {
    let total = b_m.norm_squared();
    let lz = lanczos_tridiag(a_m, &(b_m / total.sqrt()))?;
    tridiag_to_cfrac(&lz.t, total)
}

/// Bottom-up evaluation of the nested fraction.
pub fn eval_cfrac(cf: &ContinuedFraction, s: f64) -> f64 {
    let m = cf.m();
    // tail = 1/(κ̂_j s + 1/(κ_j + tail_{j+1})), with tail_{m+1} = 0
    let mut tail = 0.0;
    for j in (0..m).rev() {
        tail = 1.0 / (cf.kappa_hat[j] * s + 1.0 / (cf.kappa[j] + tail));
    }
    tail
}

/// Solves the three-point scheme with `w_{m+1} = 0`; `w_1` is the
/// Neumann-to-Dirichlet response and equals `eval_cfrac(cf, s)`.
pub fn solve_fd_scheme(cf: &ContinuedFraction, s: f64) -> Result<Vec<f64>> {
    let m = cf.m();
    let (k, kh) = (&cf.kappa, &cf.kappa_hat);
    // row j: lower w_{j-1}, diag w_j, upper w_{j+1}
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for j in 0..m {
        let left = if j == 0 { 0.0 } else { 1.0 / k[j - 1] };
        upper[j] = 1.0 / (kh[j] * k[j]);
        lower[j] = left / kh[j];
        diag[j] = -(1.0 / k[j] + left) / kh[j] - s;
    }
    rhs[0] = -1.0 / kh[0];
    // Thomas algorithm
    for j in 1..m {
        if diag[j - 1] == 0.0 {
            return Err(Error::Degenerate { gap: 0.0 });
        }
        let w = lower[j] / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    let mut w = vec![0.0; m];
    for j in (0..m).rev() {
        if diag[j] == 0.0 {
            return Err(Error::Degenerate { gap: 0.0 });
        }
        let next = if j + 1 < m { upper[j] * w[j + 1] } else { 0.0 };
        w[j] = (rhs[j] - next) / diag[j];
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    #[test]
    fn single_pole() {
        let pr = PoleResidue::new(vec![1.0], vec![2.0]).unwrap();
        let cf = pole_residue_to_cfrac(&pr).unwrap();
        assert!((cf.kappa_hat[0] - 0.5).abs() < 1e-15);
        assert!((cf.kappa[0] - 2.0).abs() < 1e-15);
        assert!((eval_cfrac(&cf, 1.0) - 1.0).abs() < 1e-15);
        let w = solve_fd_scheme(&cf, 1.0).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-15);
        let lz = lanczos_tridiag(&DMatrix::from_element(1, 1, -3.0), &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(lz.t.alpha, vec![-3.0]);
    }

    #[test]
    fn lanczos_preserves_eigenvalues() {
        let e = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, -3.0]));
        let eta = DVector::from_element(3, 1.0 / 3f64.sqrt());
        let lz = lanczos_tridiag(&e, &eta).unwrap();
        let mut ev: Vec<f64> = SymmetricEigen::new(lz.t.to_dense()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip([-3.0, -2.0, -1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let xtx = lz.x.transpose() * &lz.x;
        assert!((xtx - DMatrix::identity(3, 3)).amax() < 1e-14);
        assert!(lz.t.beta.iter().all(|&b| b > 0.0));
    }

    #[test]
    fn duplicate_poles_break_down() {
        let e = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -1.0, -2.0]));
        let eta = DVector::from_element(3, 1.0 / 3f64.sqrt());
        assert!(matches!(lanczos_tridiag(&e, &eta), Err(Error::Breakdown { .. })));
    }

    #[test]
    fn leading_asymptote() {
        let pr = PoleResidue::new(vec![0.5, 3.0, 20.0], vec![1.0, 0.4, 2.0]).unwrap();
        let cf = pole_residue_to_cfrac(&pr).unwrap();
        let s = 1e9;
        assert!((eval_cfrac(&cf, s) * cf.kappa_hat[0] * s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn direct_and_spectral_paths_agree() {
        let a = DMatrix::from_row_slice(3, 3, &[-4.0, 1.0, 0.5, 1.0, -3.0, 0.2, 0.5, 0.2, -1.0]);
        let b = DVector::from_vec(vec![1.0, 0.3, -0.7]);
        let direct = reduced_to_cfrac(&a, &b).unwrap();
        let eig = SymmetricEigen::new(a);
        let proj = eig.eigenvectors.transpose() * &b;
        let pr = PoleResidue::new(
            eig.eigenvalues.iter().map(|l| -l).collect(),
            proj.iter().map(|p| p * p).collect(),
        )
        .unwrap();
        let spectral = pole_residue_to_cfrac(&pr).unwrap();
        for (a, b) in direct.log_vector().iter().zip(spectral.log_vector()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn inadmissible_coefficients_detected() {
        let t = Tridiagonal {
            alpha: vec![1.0],
            beta: vec![],
        };
        assert!(matches!(tridiag_to_cfrac(&t, 1.0), Err(Error::Inadmissible { .. })));
    }

    fn arb_pole_residue() -> impl Strategy<Value = PoleResidue> {
        (1usize..=8).prop_flat_map(|m| {
            (
                proptest::collection::vec(0.0f64..1.0, m),
                proptest::collection::vec(0.05f64..5.0, m),
                0.05f64..2.0,
            )
                .prop_map(|(gaps, c, start)| {
                    // well separated poles: geometric spacing with random jitter
                    let mut theta = Vec::new();
                    let mut t = start;
                    for g in gaps {
                        theta.push(t);
                        t *= 2.0 + 3.0 * g;
                    }
                    PoleResidue::new(theta, c).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn three_representations_agree(pr in arb_pole_residue()) {
            let cf = pole_residue_to_cfrac(&pr).unwrap();
            for i in 0..=25 {
                let s = 10f64.powf(-2.0 + 5.0 * i as f64 / 25.0);
                let exact = pr.eval(s);
                prop_assert!(((eval_cfrac(&cf, s) - exact) / exact).abs() < 1e-10);
                let w = solve_fd_scheme(&cf, s).unwrap();
                prop_assert!(((w[0] - exact) / exact).abs() < 1e-10);
            }
        }

        #[test]
        fn sign_flips_leave_fraction_unchanged(pr in arb_pole_residue(), flips in proptest::collection::vec(any::<bool>(), 8)) {
            let (e, eta) = spectral_start(&pr);
            let lz = lanczos_tridiag(&e, &eta).unwrap();
            let m = pr.m();
            let d = DMatrix::from_diagonal(&DVector::from_iterator(
                m,
                (0..m).map(|j| if j > 0 && flips[j] { -1.0 } else { 1.0 }),
            ));
            let x = &lz.x * &d;
            let t = x.transpose() * &e * &x;
            let flipped = Tridiagonal {
                alpha: (0..m).map(|i| t[(i, i)]).collect(),
                beta: (0..m - 1).map(|i| t[(i, i + 1)]).collect(),
            };
            let total: f64 = pr.c.iter().sum();
            let a = tridiag_to_cfrac(&lz.t, total).unwrap();
            let b = tridiag_to_cfrac(&flipped, total).unwrap();
            for (u, v) in a.log_vector().iter().zip(b.log_vector()) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }

        #[test]
        fn tridiagonal_keeps_poles(pr in arb_pole_residue()) {
            let (e, eta) = spectral_start(&pr);
            let lz = lanczos_tridiag(&e, &eta).unwrap();
            let mut ev: Vec<f64> = SymmetricEigen::new(lz.t.to_dense()).eigenvalues.iter().map(|l| -l).collect();
            ev.sort_by(f64::total_cmp);
            for (a, b) in ev.iter().zip(&pr.theta) {
                prop_assert!((a - b).abs() < 1e-10 * b.max(1.0));
            }
        }
    }
}
