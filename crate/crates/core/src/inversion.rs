//! Data fitting `𝒬`, the preconditioned Gauss-Newton iteration with
//! null-space regularization, and the 1D/2D drivers.

use nalgebra::{DMatrix, DVector, SVD};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::TimeSeries;
use crate::grid::{build_difference_1d, Grid1D, Grid2D, ResistivityField};
use crate::laplace::{laplace_derivative, laplace_moments, laplace_transform};
use crate::rational::{fit_multipoint, fit_pade_toeplitz, to_pole_residue, Fit, NodeFamily, PoleResidue};
use crate::sensitivity::{jacobian_1d, jacobian_2d, log_pole_residue, Output};
use crate::stieltjes::{pole_residue_to_cfrac, ContinuedFraction};

/// Result of `𝒬` on one data set.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFit {
    /// Final reduced model size.
    pub m: usize,
    pub poles: PoleResidue,
    pub cf: ContinuedFraction,
    /// Condition number of the interpolation matrix at the accepted `m`.
    pub cond: f64,
    /// Sizes that were tried and rejected, with the reason.
    pub rejected: Vec<(usize, String)>,
}

impl DataFit {
    /// Target vector `l*` in the given parametrization.
    pub fn target(&self, output: Output) -> Vec<f64> {
        match output {
            Output::LogKappa => self.cf.log_vector(),
            Output::LogPoleResidue => log_pole_residue(&self.poles),
        }
    }
}

fn finish_fit(fit: Fit) -> Result<(PoleResidue, ContinuedFraction, f64)> {
    let poles = to_pole_residue(&fit.model)?;
    let cf = pole_residue_to_cfrac(&poles)?;
    Ok((poles, cf, fit.cond))
}

/// Runs `attempt(m)` for `m = m0, m0-1, ..` until it yields an admissible
/// model. Non-admissibility errors lower `m`; anything else is returned.
fn reduce_m(
    m0: usize,
    mut attempt: impl FnMut(usize) -> Result<(PoleResidue, ContinuedFraction, f64)>,
) -> Result<DataFit> {
    let mut rejected = Vec::new();
    for m in (1..=m0).rev() {
        match attempt(m) {
            Ok((poles, cf, cond)) => {
                return Ok(DataFit {
                    m,
                    poles,
                    cf,
                    cond,
                    rejected,
                })
            }
            Err(e) if e.is_inadmissible() => rejected.push((m, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Err(Error::DataUnusable)
}

/// `𝒬` from values and derivatives of `Y` at the family nodes, with
/// `family.resized(m)` supplying the nodes at each size.
pub fn fit_from_transfer(
    family: &NodeFamily,
    m0: usize,
    transfer: impl Fn(f64) -> Result<(f64, f64)>,
) -> Result<DataFit> {
    reduce_m(m0, |m| {
        let nodes = family.resized(m)?.points();
        let (values, derivs): (Vec<f64>, Vec<f64>) =
            nodes.iter().map(|&s| transfer(s)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        finish_fit(fit_multipoint(&values, &derivs, &nodes)?)
    })
}

/// `𝒬` for 1D time data: Laplace transform at the nodes, multipoint Padé,
/// poles and residues, continued fraction. Single-node families (`pade0`)
/// go through the shifted moments instead.
pub fn data_fitting_1d(d: &TimeSeries, family: &NodeFamily, m0: usize) -> Result<DataFit> {
    if family.nodes.iter().all(|&(_, k)| k == 1) {
        return fit_from_transfer(family, m0, |s| Ok((laplace_transform(d, s)?, laplace_derivative(d, s)?)));
    }
    if family.nodes.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "family `{}` mixes nodes and multiplicities",
            family.label
        )));
    }
    let shift = family.nodes[0].0;
    data_fitting_moments(&laplace_moments(d, shift, 2 * m0)?, shift, m0)
}

/// `𝒬` from Taylor coefficients of `Y` at a single node `shift`; uses the
/// first `2m` of `tau` at each size. The moments are rescaled by `shift`.
pub fn data_fitting_moments(tau: &[f64], shift: f64, m0: usize) -> Result<DataFit> {
    if tau.len() < 2 * m0 {
        return Err(Error::DimensionMismatch {
            expected: 2 * m0,
            got: tau.len(),
        });
    }
    let scale = if shift > 0.0 { shift } else { 1.0 };
    reduce_m(m0, |m| finish_fit(fit_pade_toeplitz(&tau[..2 * m], shift, scale)?))
}

/// Fits every source at a common size: the smallest size any source
/// accepts.
pub fn data_fitting_moments_multi(taus: &[Vec<f64>], shift: f64, m0: usize) -> Result<Vec<DataFit>> {
    let first: Vec<DataFit> = taus
        .iter()
        .map(|t| data_fitting_moments(t, shift, m0))
        .collect::<Result<_>>()?;
    let m = first.iter().map(|f| f.m).min().ok_or(Error::EmptySeries)?;
    if first.iter().all(|f| f.m == m) {
        return Ok(first);
    }
    // a source that accepted a larger m must also pass at the common one
    taus.iter()
        .zip(first)
        .map(|(t, f)| {
            if f.m == m {
                return Ok(f);
            }
            let mut g = data_fitting_moments(t, shift, m)?;
            if g.m != m {
                return Err(Error::InvalidArgument(format!(
                    "source fits at m = {} but not at the common size {m}",
                    f.m
                )));
            }
            g.rejected.splice(0..0, f.rejected);
            Ok(g)
        })
        .collect()
}

/// `‖a - b‖₂ / ‖b‖₂`.
pub fn relative_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    let num: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = truth.iter().map(|b| b * b).sum();
    Ok((num / den).sqrt())
}

/// `J⁺ v` through the SVD, dropping singular values below `rel · σ_max`.
pub fn pinv_apply(j: &DMatrix<f64>, v: &DVector<f64>, rel: f64) -> Result<DVector<f64>> {
    let svd = SVD::try_new(j.clone(), true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Regularization("SVD of the Jacobian did not converge".into()))?;
    let smax = svd.singular_values.max();
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    let mut out = DVector::zeros(j.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > rel * smax {
            let coef = u.column(i).dot(v) / s;
            out.axpy(coef, &vt.row(i).transpose(), 1.0);
        }
    }
    Ok(out)
}

/// `ρ = -J⁺(l - l*)`.
pub fn gauss_newton_direction(jac: &DMatrix<f64>, l: &[f64], target: &[f64]) -> Result<DVector<f64>> {
    if l.len() != target.len() || jac.nrows() != l.len() {
        return Err(Error::DimensionMismatch {
            expected: jac.nrows(),
            got: target.len(),
        });
    }
    let res = DVector::from_iterator(l.len(), l.iter().zip(target).map(|(a, b)| a - b));
    Ok(-pinv_apply(jac, &res, 1e-12)?)
}

/// Forward differences of a 1D edge field with the last row (Dirichlet end)
/// dropped: the first `N-1` rows of `D`.
pub fn smoothing_1d(grid: &Grid1D) -> CsrMatrix<f64> {
    let d = build_difference_1d(grid);
    let n = grid.n();
    let mut coo = CooMatrix::new(n - 1, n);
    for (i, j, &v) in d.triplet_iter() {
        if i < n - 1 {
            coo.push(i, j, v);
        }
    }
    CsrMatrix::from(&coo)
}

/// Differences between neighbouring cells of a 2D field, one row per
/// interior face, scaled by the cell size across the face.
pub fn smoothing_2d(grid: &Grid2D) -> CsrMatrix<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let rows = (nx - 1) * ny + nx * (ny - 1);
    let mut coo = CooMatrix::new(rows, grid.n_cells());
    let mut row = 0;
    for iy in 0..ny {
        for ix in 0..nx - 1 {
            coo.push(row, grid.index(ix, iy), -1.0 / grid.hx());
            coo.push(row, grid.index(ix + 1, iy), 1.0 / grid.hx());
            row += 1;
        }
    }
    for iy in 0..ny - 1 {
        for ix in 0..nx {
            coo.push(row, grid.index(ix, iy), -1.0 / grid.hy());
            coo.push(row, grid.index(ix, iy + 1), 1.0 / grid.hy());
            row += 1;
        }
    }
    CsrMatrix::from(&coo)
}

fn csr_mul(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    a.row_iter()
        .map(|row| row.col_indices().iter().zip(row.values()).map(|(&j, v)| v * x[j]).sum())
        .collect()
}

fn csr_mul_t(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.ncols()];
    for (i, row) in a.row_iter().enumerate() {
        for (&j, v) in row.col_indices().iter().zip(row.values()) {
            out[j] += v * x[i];
        }
    }
    out
}

/// `w_j = ((D̃r)_j² + φ²)^{-1}`.
pub fn adaptive_weights(dtilde: &CsrMatrix<f64>, r: &[f64], phi: f64) -> Vec<f64> {
    let dr = csr_mul(dtilde, r);
    // keep the weights finite when both the jump and the misfit vanish
    let floor = f64::EPSILON * (1.0 + dr.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    let phi2 = phi * phi + floor * floor;
    dr.iter().map(|v| 1.0 / (v * v + phi2)).collect()
}

/// How the regularized iterate is obtained from the saddle-point system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KktSolver {
    /// Dense truncated SVD of the full KKT matrix, discarding the given
    /// number of smallest singular components.
    TruncatedSvd { discard: usize },
    /// Conjugate gradients on the null space of the Jacobian.
    ProjectedCg { tol: f64, max_iter: usize },
}

/// Minimizes `½‖W^{1/2}D̃ρ‖²` subject to `Jρ = J r_gn`.
pub fn regularize_nullspace(
    r_gn: &[f64],
    jac: &DMatrix<f64>,
    dtilde: &CsrMatrix<f64>,
    weights: &[f64],
    solver: KktSolver,
) -> Result<Vec<f64>> {
    let n = r_gn.len();
    if jac.ncols() != n || dtilde.ncols() != n || weights.len() != dtilde.nrows() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: jac.ncols(),
        });
    }
    match solver {
        KktSolver::TruncatedSvd { discard } => kkt_truncated(r_gn, jac, dtilde, weights, discard),
        KktSolver::ProjectedCg { tol, max_iter } => projected_cg(r_gn, jac, dtilde, weights, tol, max_iter),
    }
}

fn weighted_laplacian_dense(dtilde: &CsrMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let n = dtilde.ncols();
    let mut h = DMatrix::zeros(n, n);
    for (e, row) in dtilde.row_iter().enumerate() {
        let (idx, vals) = (row.col_indices(), row.values());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                h[(i, j)] += weights[e] * vals[a] * vals[b];
            }
        }
    }
    h
}

fn kkt_truncated(
    r_gn: &[f64],
    jac: &DMatrix<f64>,
    dtilde: &CsrMatrix<f64>,
    weights: &[f64],
    discard: usize,
) -> Result<Vec<f64>> {
    let n = r_gn.len();
    let k = jac.nrows();
    // scaling H leaves ρ unchanged (λ absorbs it); balance the blocks so the
    // SVD sees comparable magnitudes
    let mut h = weighted_laplacian_dense(dtilde, weights);
    let (hn, jn) = (h.norm(), jac.norm());
    if hn > 0.0 && jn > 0.0 {
        h *= jn / hn;
    }
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&h);
    kkt.view_mut((0, n), (n, k)).copy_from(&jac.transpose());
    kkt.view_mut((n, 0), (k, n)).copy_from(jac);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(n, k).copy_from(&(jac * DVector::from_column_slice(r_gn)));
    let svd = SVD::try_new(kkt, true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Regularization("SVD of the KKT matrix did not converge".into()))?;
    let mut order: Vec<usize> = (0..n + k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let keep = (n + k).saturating_sub(discard);
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    let smax = svd.singular_values[order[0]];
    let mut x = DVector::zeros(n + k);
    for &i in &order[..keep] {
        let s = svd.singular_values[i];
        if !(s > 1e-14 * smax) {
            return Err(Error::Regularization(format!(
                "KKT matrix singular beyond truncation (sigma = {s:e})"
            )));
        }
        x.axpy(u.column(i).dot(&rhs) / s, &vt.row(i).transpose(), 1.0);
    }
    Ok(x.rows(0, n).iter().copied().collect())
}

fn projected_cg(
    r_gn: &[f64],
    jac: &DMatrix<f64>,
    dtilde: &CsrMatrix<f64>,
    weights: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = r_gn.len();
    // orthonormal basis of range(Jᵀ)
    let qr = jac.transpose().qr();
    let q = qr.q();
    let project = |x: &mut DVector<f64>| {
        let c = q.transpose() * &*x;
        *x -= &q * c;
    };
    let apply_h = |x: &DVector<f64>| -> DVector<f64> {
        let dx = csr_mul(dtilde, x.as_slice());
        let wdx: Vec<f64> = dx.iter().zip(weights).map(|(a, w)| a * w).collect();
        DVector::from_vec(csr_mul_t(dtilde, &wdx))
    };
    let r0 = DVector::from_column_slice(r_gn);
    // minimize ½(r0 + Δ)ᵀH(r0 + Δ) over Δ ∈ null(J)
    let mut b = -apply_h(&r0);
    project(&mut b);
    let bnorm = b.norm();
    let mut delta = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok(r_gn.to_vec());
    }
    let mut res = b.clone();
    let mut p = res.clone();
    let mut rr = res.norm_squared();
    for _ in 0..max_iter {
        let mut hp = apply_h(&p);
        project(&mut hp);
        let php = p.dot(&hp);
        if !(php > 0.0) {
            break;
        }
        let a = rr / php;
        delta.axpy(a, &p, 1.0);
        res.axpy(-a, &hp, 1.0);
        let rr_new = res.norm_squared();
        if rr_new.sqrt() <= tol * bnorm {
            break;
        }
        p = &res + p * (rr_new / rr);
        rr = rr_new;
    }
    project(&mut delta);
    Ok((r0 + delta).iter().copied().collect())
}

/// How the penalty weights are chosen at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// `W = I`, the plain discrete `H¹` seminorm.
    Identity,
    /// Misfit-adaptive weights with `φ = C_φ ‖l* - ℛ(r_GN)‖`;
    /// `c_phi = None` uses `1/(2m²)`.
    Adaptive { c_phi: Option<f64> },
    /// No null-space correction: the iterate is the Gauss-Newton update.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    /// Initial reduced model size, lowered by the data fit if needed.
    pub m0: usize,
    /// `pade0`, `zolotarev` or `fast` in 1D; ignored in 2D.
    pub family: String,
    /// Single interpolation node in 2D.
    pub shift: f64,
    pub n_gn: usize,
    pub alpha: f64,
    pub weighting: Weighting,
    pub solver: KktSolver,
    pub output: Output,
    /// Relative change of the residual norm below which iterations stop.
    pub stagnation: f64,
    pub max_halvings: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            m0: 6,
            family: "zolotarev".into(),
            shift: 60.0,
            n_gn: 5,
            alpha: 1.0,
            weighting: Weighting::Identity,
            solver: KktSolver::TruncatedSvd { discard: 0 },
            output: Output::LogKappa,
            stagnation: 1e-8,
            max_halvings: 20,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m0 == 0 {
            return Err(Error::InvalidArgument("m0 must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("step length must lie in (0, 1], got {}", self.alpha)));
        }
        if let Weighting::Adaptive { c_phi: Some(c) } = self.weighting {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("C_phi must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// One Gauss-Newton iteration as recorded in the history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// `p`; the last record holds the final iterate `n_GN + 1`.
    pub iteration: usize,
    /// `‖l^(p) - l*‖₂`.
    pub residual: f64,
    /// Relative error against the true field, when supplied.
    pub error: Option<f64>,
    /// Step length actually used after positivity halvings.
    pub alpha: Option<f64>,
    /// `‖𝒟ℛ (r^(p+1) - r_GN)‖ / ‖𝒟ℛ r_GN‖`: zero up to solver accuracy.
    pub constraint_defect: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    pub r: ResistivityField,
    /// `r^(1), r^(2), ..`; the last entry is `r`.
    pub iterates: Vec<ResistivityField>,
    pub m: usize,
    pub target: Vec<f64>,
    pub history: Vec<IterationRecord>,
    pub fits: Vec<DataFit>,
}

/// `ℛ` and its Jacobian on a discretization.
pub trait Preconditioner: Sync {
    fn n_params(&self) -> usize;
    fn evaluate(&self, r: &ResistivityField, m: usize, output: Output) -> Result<(Vec<f64>, DMatrix<f64>)>;
    fn values(&self, r: &ResistivityField, m: usize, output: Output) -> Result<Vec<f64>>;
    fn smoothing(&self) -> &CsrMatrix<f64>;
}

pub struct Model1D {
    pub grid: Grid1D,
    pub family: String,
    dtilde: CsrMatrix<f64>,
}

impl Model1D {
    pub fn new(grid: Grid1D, family: impl Into<String>) -> Self {
        let dtilde = smoothing_1d(&grid);
        Self {
            grid,
            family: family.into(),
            dtilde,
        }
    }
}

impl Preconditioner for Model1D {
    fn n_params(&self) -> usize {
        self.grid.n()
    }

    fn evaluate(&self, r: &ResistivityField, m: usize, output: Output) -> Result<(Vec<f64>, DMatrix<f64>)> {
        jacobian_1d(r, &self.grid, &NodeFamily::by_name(&self.family, m)?, output)
    }

    fn values(&self, r: &ResistivityField, m: usize, output: Output) -> Result<Vec<f64>> {
        let (op, b) = crate::krylov::operator_1d(r, &self.grid)?;
        let fam = NodeFamily::by_name(&self.family, m)?;
        Ok(output.values(&crate::krylov::RomChain::new(&op, &b, &fam)?))
    }

    fn smoothing(&self) -> &CsrMatrix<f64> {
        &self.dtilde
    }
}

pub struct Model2D {
    pub grid: Grid2D,
    pub shift: f64,
    dtilde: CsrMatrix<f64>,
}

impl Model2D {
    pub fn new(grid: Grid2D, shift: f64) -> Self {
        let dtilde = smoothing_2d(&grid);
        Self { grid, shift, dtilde }
    }
}

impl Preconditioner for Model2D {
    fn n_params(&self) -> usize {
        self.grid.n_cells()
    }

    fn evaluate(&self, r: &ResistivityField, m: usize, output: Output) -> Result<(Vec<f64>, DMatrix<f64>)> {
        jacobian_2d(r, &self.grid, &NodeFamily::single_node(self.shift, m)?, output)
    }

    fn values(&self, r: &ResistivityField, m: usize, output: Output) -> Result<Vec<f64>> {
        let op = crate::grid::assemble_operator_2d(r, &self.grid)?;
        let fam = NodeFamily::single_node(self.shift, m)?;
        Ok(crate::krylov::chains_2d(&op, &self.grid, &fam)?
            .iter()
            .flat_map(|c| output.values(c))
            .collect())
    }

    fn smoothing(&self) -> &CsrMatrix<f64> {
        &self.dtilde
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Steps 4-6 of the algorithm: `n_GN` regularized Gauss-Newton iterations
/// towards `target` from `r0` at model size `m`. Returns every iterate,
/// starting with `r0`, and the history.
pub fn gauss_newton<P: Preconditioner>(
    model: &P,
    target: &[f64],
    m: usize,
    r0: &ResistivityField,
    config: &InversionConfig,
    truth: Option<&ResistivityField>,
) -> Result<(Vec<ResistivityField>, Vec<IterationRecord>)> {
    config.validate()?;
    if r0.len() != model.n_params() {
        return Err(Error::DimensionMismatch {
            expected: model.n_params(),
            got: r0.len(),
        });
    }
    let err_of = |r: &ResistivityField| truth.map(|t| relative_error(r.values(), t.values())).transpose();
    let mut r = r0.clone();
    let mut iterates = vec![r.clone()];
    let mut history = Vec::new();
    let mut last_residual: Option<f64> = None;
    for p in 1..=config.n_gn {
        let (l, jac) = model.evaluate(&r, m, config.output)?;
        let residual = norm_diff(&l, target);
        let error = err_of(&r)?;
        if let Some(prev) = last_residual {
            if (prev - residual).abs() <= config.stagnation * prev {
                history.push(IterationRecord {
                    iteration: p,
                    residual,
                    error,
                    alpha: None,
                    constraint_defect: None,
                });
                return Ok((iterates, history));
            }
        }
        last_residual = Some(residual);
        let rho = gauss_newton_direction(&jac, &l, target)?;
        let (next, alpha, defect) = guarded_update(model, &r, &rho, &jac, target, m, config)?;
        history.push(IterationRecord {
            iteration: p,
            residual,
            error,
            alpha: Some(alpha),
            constraint_defect: defect,
        });
        r = next;
        iterates.push(r.clone());
    }
    let l = model.values(&r, m, config.output)?;
    history.push(IterationRecord {
        iteration: config.n_gn + 1,
        residual: norm_diff(&l, target),
        error: err_of(&r)?,
        alpha: None,
        constraint_defect: None,
    });
    Ok((iterates, history))
}

/// `r_GN = r + αρ` followed by the null-space correction; `α` is halved
/// until the next iterate is positive. `r_GN` itself only has to be
/// positive when it is evaluated, i.e. with adaptive weights or without a
/// correction.
fn guarded_update<P: Preconditioner>(
    model: &P,
    r: &ResistivityField,
    rho: &DVector<f64>,
    jac: &DMatrix<f64>,
    target: &[f64],
    m: usize,
    config: &InversionConfig,
) -> Result<(ResistivityField, f64, Option<f64>)> {
    let mut alpha = config.alpha;
    for _ in 0..=config.max_halvings {
        let r_gn: Vec<f64> = r.values().iter().zip(rho.iter()).map(|(a, d)| a + alpha * d).collect();
        let evaluated = !matches!(config.weighting, Weighting::Identity);
        if !evaluated || r_gn.iter().all(|v| *v > 0.0) {
            let (next, defect) = match config.weighting {
                Weighting::None => (r_gn, None),
                w => {
                    let weights = match w {
                        Weighting::Adaptive { c_phi } => {
                            let c = c_phi.unwrap_or(1.0 / (2.0 * (m * m) as f64));
                            let l_gn = model.values(&ResistivityField::new(r_gn.clone())?, m, config.output);
                            // a GN iterate the model cannot evaluate gets the unweighted penalty
                            let phi = match l_gn {
                                Ok(l) => c * norm_diff(&l, target),
                                Err(e) if e.is_inadmissible() => f64::INFINITY,
                                Err(e) => return Err(e),
                            };
                            if phi.is_finite() {
                                adaptive_weights(model.smoothing(), &r_gn, phi)
                            } else {
                                vec![1.0; model.smoothing().nrows()]
                            }
                        }
                        _ => vec![1.0; model.smoothing().nrows()],
                    };
                    let next = regularize_nullspace(&r_gn, jac, model.smoothing(), &weights, config.solver)?;
                    let jr = jac * DVector::from_column_slice(&r_gn);
                    let diff = jac * (DVector::from_column_slice(&next) - DVector::from_column_slice(&r_gn));
                    (next, Some(diff.norm() / jr.norm()))
                }
            };
            if next.iter().all(|v| *v > 0.0) {
                return Ok((ResistivityField::new(next)?, alpha, defect));
            }
        }
        alpha *= 0.5;
    }
    Err(Error::StepFailure {
        halvings: config.max_halvings,
    })
}

/// Full 1D inversion: `𝒬` on the data, then Gauss-Newton from `r0`.
pub fn invert_1d(
    d: &TimeSeries,
    grid: &Grid1D,
    r0: &ResistivityField,
    config: &InversionConfig,
    truth: Option<&ResistivityField>,
) -> Result<InversionResult> {
    config.validate()?;
    let family = NodeFamily::by_name(&config.family, config.m0)?;
    let fit = data_fitting_1d(d, &family, config.m0)?;
    invert_1d_with_fit(fit, grid, r0, config, truth)
}

/// Gauss-Newton on a 1D grid from an already computed data fit.
pub fn invert_1d_with_fit(
    fit: DataFit,
    grid: &Grid1D,
    r0: &ResistivityField,
    config: &InversionConfig,
    truth: Option<&ResistivityField>,
) -> Result<InversionResult> {
    let model = Model1D::new(*grid, config.family.clone());
    let target = fit.target(config.output);
    let (iterates, history) = gauss_newton(&model, &target, fit.m, r0, config, truth)?;
    Ok(InversionResult {
        r: iterates.last().expect("starts with r0").clone(),
        iterates,
        m: fit.m,
        target,
        history,
        fits: vec![fit],
    })
}

/// Full 2D inversion from per-source Taylor coefficients at `config.shift`.
///
/// With `reference`, the coefficients of the unit medium measured the same
/// way as `taus`, the target is shifted by `ℛ(1) - 𝒬(reference)` so that the
/// unit medium maps exactly onto the inversion grid's `ℛ(1)`. This removes
/// the systematic difference between the data discretization and the
/// inversion grid near the sources.
pub fn invert_2d(
    taus: &[Vec<f64>],
    reference: Option<&[Vec<f64>]>,
    grid: &Grid2D,
    r0: &ResistivityField,
    config: &InversionConfig,
    truth: Option<&ResistivityField>,
) -> Result<InversionResult> {
    config.validate()?;
    if taus.len() != grid.segments.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.segments.len(),
            got: taus.len(),
        });
    }
    let fits = data_fitting_moments_multi(taus, config.shift, config.m0)?;
    let m = fits[0].m;
    let mut target: Vec<f64> = fits.iter().flat_map(|f| f.target(config.output)).collect();
    let model = Model2D::new(grid.clone(), config.shift);
    if let Some(reference) = reference {
        let correction = reference_correction(&model, reference, m, config.output)?;
        target.iter_mut().zip(&correction).for_each(|(t, c)| *t += c);
    }
    let (iterates, history) = gauss_newton(&model, &target, m, r0, config, truth)?;
    Ok(InversionResult {
        r: iterates.last().expect("starts with r0").clone(),
        iterates,
        m,
        target,
        history,
        fits,
    })
}

/// `ℛ(1) - 𝒬(reference)` at size `m`.
pub fn reference_correction(
    model: &Model2D,
    reference: &[Vec<f64>],
    m: usize,
    output: Output,
) -> Result<Vec<f64>> {
    let fits = data_fitting_moments_multi(reference, model.shift, m)?;
    if fits[0].m != m {
        return Err(Error::InvalidArgument(format!(
            "reference data fits only at m = {}, the data at m = {m}",
            fits[0].m
        )));
    }
    let measured: Vec<f64> = fits.iter().flat_map(|f| f.target(output)).collect();
    let one = ResistivityField::constant(model.n_params(), 1.0)?;
    let exact = model.values(&one, m, output)?;
    if exact.len() != measured.len() {
        return Err(Error::DimensionMismatch {
            expected: exact.len(),
            got: measured.len(),
        });
    }
    Ok(exact.iter().zip(&measured).map(|(a, b)| a - b).collect())
}

/// Per-source Taylor coefficients of the transfer function of a 2D model,
/// computed in parallel over segments.
pub fn moments_2d(r: &ResistivityField, grid: &Grid2D, shift: f64, count: usize) -> Result<Vec<Vec<f64>>> {
    let op = crate::grid::assemble_operator_2d(r, grid)?;
    grid.segments
        .par_iter()
        .map(|seg| {
            let b = crate::grid::source_vector_2d(grid, seg)?.values;
            crate::forward::transfer_moments(&op, &b, shift, count)
        })
        .collect()
}
