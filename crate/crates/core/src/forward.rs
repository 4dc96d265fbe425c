//! Time-domain synthesis of the boundary response and direct evaluation of
//! the transfer function `Y(s) = bᵀ(sI - A)^{-1} b`.

use nalgebra::{DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SystemOperator;
use crate::resolvent::{spectral_radius, Resolvent};

/// Uniformly sampled series `y_k = y(k h_T)`, `k = 1..=N_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    step: f64,
    samples: Vec<f64>,
}

impl TimeSeries {
    pub fn new(step: f64, samples: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {step}")));
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {k} is not finite")));
        }
        Ok(Self { step, samples })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `k` (zero-based), `t = (k + 1) h_T`.
    pub fn time(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.step
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMethod {
    /// Exact modal synthesis from the eigendecomposition of `A`.
    Spectral,
    /// Explicit Euler, guarded by the stability bound `h_T <= 2/|λ|max`.
    Euler,
}

/// Eigenvalues `λ_i` of `A` and weights `(bᵀq_i)²` of the symmetrized response.
#[derive(Debug, Clone)]
pub struct ModalResponse {
    pub eigenvalues: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ModalResponse {
    pub fn new(op: &SystemOperator, b: &DVector<f64>) -> Result<Self> {
        check_len(op.dim(), b.len())?;
        let eig = SymmetricEigen::new(op.to_dense());
        let proj = eig.eigenvectors.transpose() * b;
        Ok(Self {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            weights: proj.iter().map(|p| p * p).collect(),
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| w * (l * t).exp())
            .sum()
    }

    /// `Σ w_i / (s - λ_i)`, the Laplace transform of the response.
    pub fn laplace(&self, s: f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| w / (s - l))
            .sum()
    }

    /// Samples at `t_k = k h_T`, `k = 1..=n`.
    ///
    /// Each mode is advanced by multiplying with `e^{λ h_T}`, re-anchored to
    /// the exact exponential periodically, and dropped once its contribution
    /// falls below `1e-18` of the running value (faster modes decay first, so
    /// a dropped mode never becomes relevant again).
    pub fn sample(&self, h_t: f64, n: usize) -> Vec<f64> {
        let mut order: Vec<usize> = (0..self.eigenvalues.len())
            .filter(|&i| self.weights[i] > 0.0)
            .collect();
        // slowest modes first so pruning truncates the tail
        order.sort_by(|&a, &b| self.eigenvalues[b].total_cmp(&self.eigenvalues[a]));
        let lam: Vec<f64> = order.iter().map(|&i| self.eigenvalues[i]).collect();
        let w: Vec<f64> = order.iter().map(|&i| self.weights[i]).collect();
        let factor: Vec<f64> = lam.iter().map(|l| (l * h_t).exp()).collect();
        let mut term: Vec<f64> = w.iter().zip(&factor).map(|(w, f)| w * f).collect();
        let mut active = lam.len();
        let mut out = Vec::with_capacity(n);
        const ANCHOR: usize = 4096;
        for k in 1..=n {
            if k % ANCHOR == 0 {
                let t = k as f64 * h_t;
                for i in 0..active {
                    term[i] = w[i] * (lam[i] * t).exp();
                }
            }
            let y: f64 = term[..active].iter().sum();
            out.push(y);
            while active > 1 && term[active - 1] < 1e-18 * y {
                active -= 1;
            }
            for i in 0..active {
                term[i] *= factor[i];
            }
        }
        out
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Samples `y(t_k) = bᵀ e^{A t_k} b` for `t_k = k h_T`, `k = 1..=round(T/h_T)`.
pub fn simulate_response(
    op: &SystemOperator,
    b: &DVector<f64>,
    t_end: f64,
    h_t: f64,
    method: SimMethod,
) -> Result<TimeSeries> {
    if !(h_t > 0.0) || !(t_end >= h_t) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < h_T <= T, got h_T = {h_t}, T = {t_end}"
        )));
    }
    check_len(op.dim(), b.len())?;
    let n = (t_end / h_t).round() as usize;
    let samples = match method {
        SimMethod::Spectral => ModalResponse::new(op, b)?.sample(h_t, n),
        SimMethod::Euler => {
            let bound = 2.0 / spectral_radius(op.a());
            if h_t > bound {
                return Err(Error::Unstable { step: h_t, bound });
            }
            let mut u = b.clone();
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let au = op.a() * &u;
                u.axpy(h_t, &au, 1.0);
                out.push(b.dot(&u));
            }
            out
        }
    };
    TimeSeries::new(h_t, samples)
}

/// Multiplicative noise `d_k = y_k (1 + ε χ_k)` with standard normal `χ_k`.
pub fn add_noise(y: &TimeSeries, noise: NoiseModel) -> Result<TimeSeries> {
    if !(noise.level >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be nonnegative, got {}",
            noise.level
        )));
    }
    if noise.level == 0.0 {
        return Ok(y.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let samples = y
        .samples()
        .iter()
        .map(|&v| {
            let chi: f64 = StandardNormal.sample(&mut rng);
            v * (1.0 + noise.level * chi)
        })
        .collect();
    TimeSeries::new(y.step(), samples)
}

/// `(b_lᵀ(sI - A)^{-1} b_r, -b_lᵀ(sI - A)^{-2} b_r)`.
pub fn transfer_eval(
    op: &SystemOperator,
    b_left: &DVector<f64>,
    b_right: &DVector<f64>,
    s: f64,
) -> Result<(f64, f64)> {
    check_len(op.dim(), b_left.len())?;
    check_len(op.dim(), b_right.len())?;
    let res = Resolvent::new(op.a(), s)?;
    let xr = res.solve(b_right);
    let value = b_left.dot(&xr);
    let xl = if b_left == b_right { xr.clone() } else { res.solve(b_left) };
    Ok((value, -xl.dot(&xr)))
}

/// Taylor coefficients of `Y` at `s̃`: `τ_k = (-1)^k bᵀ(s̃I - A)^{-(k+1)} b`,
/// so `Y(s) = Σ τ_k (s - s̃)^k`.
///
/// Powers are split symmetrically, `bᵀR^{k+1}b = (R^a b)ᵀ(R^{k+1-a} b)`,
/// which halves the number of solves.
pub fn transfer_moments(op: &SystemOperator, b: &DVector<f64>, shift: f64, k: usize) -> Result<Vec<f64>> {
    check_len(op.dim(), b.len())?;
    let res = Resolvent::new(op.a(), shift)?;
    let half = k.div_ceil(2);
    let mut powers = vec![b.clone()];
    for p in 0..half {
        let next = res.solve(&powers[p]);
        powers.push(next);
    }
    Ok((0..k)
        .map(|j| {
            let a = (j + 1).div_ceil(2);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * powers[a].dot(&powers[j + 1 - a])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble_operator, build_difference_1d, source_vector_1d, Grid1D, ResistivityField};

    fn scalar_op() -> SystemOperator {
        // A = -Dᵀ D with D = (-1) on a two-point grid gives a 2x2 operator;
        // build the 1x1 case by hand instead.
        let d = nalgebra_sparse::CsrMatrix::identity(1);
        assemble_operator(&ResistivityField::constant(1, 1.0).unwrap(), &d).unwrap()
    }

    fn unit_1d(n: usize) -> (SystemOperator, DVector<f64>) {
        let g = Grid1D::new(n).unwrap();
        let d = build_difference_1d(&g);
        let op = assemble_operator(&ResistivityField::constant(n, 1.0).unwrap(), &d).unwrap();
        (op, source_vector_1d(&g).values)
    }

    #[test]
    fn scalar_exponential() {
        let op = scalar_op();
        let b = DVector::from_element(1, 1.0);
        let y = simulate_response(&op, &b, 1.0, 0.25, SimMethod::Spectral).unwrap();
        assert_eq!(y.len(), 4);
        assert!((y.samples()[3] - (-1.0f64).exp()).abs() < 1e-14);
        let (v, dv) = transfer_eval(&op, &b, &b, 1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-14 && (dv + 0.25).abs() < 1e-14);
    }

    #[test]
    fn scalar_geometric_moments() {
        let op = scalar_op();
        let b = DVector::from_element(1, 1.0);
        let tau = transfer_moments(&op, &b, 0.0, 5).unwrap();
        for (k, t) in tau.iter().enumerate() {
            assert!((t - if k % 2 == 0 { 1.0 } else { -1.0 }).abs() < 1e-14);
        }
    }

    #[test]
    fn paper_sample_count() {
        let (n, h) = (100.0_f64, 1e-5_f64);
        assert_eq!((n / h).round() as usize, 10_000_000);
    }

    #[test]
    fn euler_converges_to_spectral_at_first_order() {
        let (op, b) = unit_1d(20);
        let exact = ModalResponse::new(&op, &b).unwrap();
        let bound = 2.0 / spectral_radius(op.a());
        let mut errs = Vec::new();
        let mut steps = Vec::new();
        for f in [0.5, 0.25, 0.125] {
            let h = bound * f;
            let y = simulate_response(&op, &b, 1.0, h, SimMethod::Euler).unwrap();
            // compare at a fixed time away from the initial layer
            let k = (0.5 / h).round() as usize;
            let t = k as f64 * h;
            errs.push(((y.samples()[k - 1] - exact.eval(t)) / exact.eval(t)).abs());
            steps.push(h);
        }
        let slope = (errs[0].ln() - errs[2].ln()) / (steps[0].ln() - steps[2].ln());
        assert!(slope > 0.9, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn euler_guard_reports_bound() {
        let (op, b) = unit_1d(20);
        match simulate_response(&op, &b, 1.0, 0.1, SimMethod::Euler) {
            Err(Error::Unstable { step, bound }) => assert!(step > bound),
            other => panic!("expected instability error, got {other:?}"),
        }
    }

    #[test]
    fn response_positive_and_decreasing() {
        let (op, b) = unit_1d(30);
        let y = simulate_response(&op, &b, 2.0, 1e-3, SimMethod::Spectral).unwrap();
        assert!(y.samples().windows(2).all(|w| w[0] > w[1] && w[1] > 0.0));
    }

    #[test]
    fn modal_laplace_matches_resolvent() {
        let (op, b) = unit_1d(40);
        let modal = ModalResponse::new(&op, &b).unwrap();
        for s in [0.1, 1.0, 7.5, 120.0] {
            let (v, _) = transfer_eval(&op, &b, &b, s).unwrap();
            assert!(((modal.laplace(s) - v) / v).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_matches_direct_exponentials() {
        let (op, b) = unit_1d(25);
        let modal = ModalResponse::new(&op, &b).unwrap();
        let h = 1e-3;
        let y = modal.sample(h, 10_000);
        for k in [1usize, 17, 4095, 4096, 4097, 9999] {
            let t = k as f64 * h;
            assert!(((y[k - 1] - modal.eval(t)) / modal.eval(t)).abs() < 1e-10, "k = {k}");
        }
    }

    #[test]
    fn noise_is_reproducible_and_scaled() {
        let (op, b) = unit_1d(20);
        let y = simulate_response(&op, &b, 5.0, 1e-3, SimMethod::Spectral).unwrap();
        let clean = add_noise(&y, NoiseModel { level: 0.0, seed: 3 }).unwrap();
        assert_eq!(clean, y);
        let eps = 5e-2;
        let a = add_noise(&y, NoiseModel { level: eps, seed: 11 }).unwrap();
        let b2 = add_noise(&y, NoiseModel { level: eps, seed: 11 }).unwrap();
        assert_eq!(a, b2);
        let dn: f64 = a.samples().iter().map(|v| v * v).sum::<f64>().sqrt();
        let nn: f64 = a
            .samples()
            .iter()
            .zip(y.samples())
            .map(|(d, y)| (d - y) * (d - y))
            .sum::<f64>()
            .sqrt();
        let ratio = dn / nn;
        assert!((ratio * eps - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn stieltjes_sign_structure() {
        let (op, b) = unit_1d(30);
        for s in [1e-2, 0.3, 4.0, 50.0] {
            let (v, dv) = transfer_eval(&op, &b, &b, s).unwrap();
            assert!(v > 0.0 && dv < 0.0);
        }
    }

    #[test]
    fn zeroth_moment_is_transfer_value() {
        let (op, b) = unit_1d(30);
        let tau = transfer_moments(&op, &b, 2.0, 4).unwrap();
        let (v, dv) = transfer_eval(&op, &b, &b, 2.0).unwrap();
        assert!(((tau[0] - v) / v).abs() < 1e-13);
        assert!(((tau[1] - dv) / dv).abs() < 1e-13);
    }
}
