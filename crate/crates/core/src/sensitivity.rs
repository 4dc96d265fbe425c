//! Jacobian of the preconditioner `ℛ(r)`, differentiating every step of the
//! chain: snapshots, QR through Cholesky, projection, eigendecomposition,
//! Lanczos, and the continued-fraction recursion.
//!
//! Two routes are provided. The explicit one forms `∂K/∂r_k` column by
//! column and is used to validate the pieces. [`assemble_jacobian`] only
//! needs the projections `Vᵀ∂K`, `(AV)ᵀ∂K` and `bᵀ∂K`, which it obtains from
//! a fixed set of resolvent solves against `[V, AV, b]` and the symmetry of
//! the resolvent, so the cost per unknown is independent of `N`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{assemble_operator_2d, Grid1D, Grid2D, RankOneTerm, ResistivityField, SystemOperator};
use crate::krylov::{chains_2d, operator_1d, RomChain, Snapshots};
use crate::rational::{NodeFamily, PoleResidue};
use crate::stieltjes::{ContinuedFraction, Tridiagonal};

/// `∂K/∂r_k` for power snapshots: for column `(j, p)`, `K = R_j^p b` with `R_j = (s_jI - A)^{-1}`,
/// `∂K = Σ_{i<p} R_j^{i+1} ∂A R_j^{p-i} b` and `∂A = -Σ w_e d_e d_eᵀ`.
pub fn diff_snapshots(op: &SystemOperator, chain: &RomChain, k: usize) -> Result<DMatrix<f64>> {
    let terms = op.derivative_terms(k)?;
    let basis = &chain.basis;
    let n = op.dim();
    let mut dk = DMatrix::zeros(n, basis.columns.len());
    let col_of = |j: usize, p: usize| basis.columns.iter().position(|&c| c == (j, p)).expect("layout");
    for t in &terms {
        let d = t.d.to_dense(n);
        for (c, &(j, p)) in basis.columns.iter().enumerate() {
            let mut rd = d.clone();
            for i in 0..p {
                rd = chain.resolvents[j].solve(&rd);
                let coef = t.d.dot(basis.k.column(col_of(j, p - i)).as_slice());
                let mut col = dk.column_mut(c);
                col.axpy(-t.weight * coef, &rd, 1.0);
            }
        }
    }
    Ok(dk)
}

/// Perturbation of the Cholesky factor `M = LLᵀ` under `δM`, column by column.
pub fn diff_cholesky(l: &DMatrix<f64>, dm: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = l.nrows();
    let mut dl = DMatrix::zeros(m, m);
    for k in 0..m {
        let lkk = l[(k, k)];
        if lkk == 0.0 {
            return Err(Error::BasisCollapse { column: k + 1 });
        }
        let s: f64 = (0..k).map(|j| dl[(k, j)] * l[(k, j)]).sum();
        dl[(k, k)] = (dm[(k, k)] / 2.0 - s) / lkk;
        for i in k + 1..m {
            let s1: f64 = (0..=k).map(|j| dl[(k, j)] * l[(i, j)]).sum();
            let s2: f64 = (0..k).map(|j| dl[(i, j)] * l[(k, j)]).sum();
            dl[(i, k)] = (dm[(i, k)] - s1 - s2) / lkk;
        }
    }
    Ok(dl)
}

fn upper_inverse(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = u.nrows();
    u.clone()
        .solve_upper_triangular(&DMatrix::identity(m, m))
        .ok_or(Error::BasisCollapse { column: m })
}

/// `∂V = (∂K - V∂U) U^{-1}` with `∂U = (∂L)ᵀ`, `L = Uᵀ`,
/// `δM = ∂KᵀK + Kᵀ∂K`. Returns `(∂V, ∂U)`.
pub fn diff_basis(
    k: &DMatrix<f64>,
    dk: &DMatrix<f64>,
    v: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let ktdk = k.transpose() * dk;
    let dm = &ktdk + ktdk.transpose();
    let du = diff_cholesky(&u.transpose(), &dm)?.transpose();
    let dv = (dk - v * &du) * upper_inverse(u)?;
    Ok((dv, du))
}

/// `∂A_m = -Σ w_e (Vᵀd_e)(Vᵀd_e)ᵀ + ∂VᵀAV + VᵀA∂V`, `∂b_m = ∂Vᵀb`.
pub fn diff_reduced(
    terms: &[RankOneTerm],
    v: &DMatrix<f64>,
    av: &DMatrix<f64>,
    dv: &DMatrix<f64>,
    b: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let x = av.transpose() * dv;
    let mut da = &x + x.transpose();
    for t in terms {
        let vd = project_sparse(v, t);
        da -= t.weight * &vd * vd.transpose();
    }
    let db = dv.transpose() * b;
    (da, db)
}

fn project_sparse(v: &DMatrix<f64>, t: &RankOneTerm) -> DVector<f64> {
    let mut out = DVector::zeros(v.ncols());
    for (&i, &val) in t.d.indices.iter().zip(&t.d.values) {
        out.axpy(val, &v.row(i).transpose(), 1.0);
    }
    out
}

/// Derivatives of the poles and residues of `(A_m, b_m)`.
///
/// `z` holds unit eigenvectors ordered like `theta`.
pub fn diff_spectral(
    theta: &[f64],
    z: &DMatrix<f64>,
    b_m: &DVector<f64>,
    da: &DMatrix<f64>,
    db: &DVector<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = theta.len();
    let scale = theta.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    let mut dtheta = vec![0.0; m];
    let mut dc = vec![0.0; m];
    let daz = da * z;
    for j in 0..m {
        let zj = z.column(j);
        dtheta[j] = -zj.dot(&daz.column(j));
        // (A_m + θ_j I)† restricted to the other eigenvectors
        let mut dz = DVector::zeros(m);
        for p in 0..m {
            if p == j {
                continue;
            }
            let gap = theta[j] - theta[p];
            if gap.abs() < 1e-10 * scale {
                return Err(Error::Degenerate { gap: gap.abs() });
            }
            let coef = z.column(p).dot(&daz.column(j)) / gap;
            dz.axpy(-coef, &z.column(p), 1.0);
        }
        let bz = b_m.dot(&zj);
        dc[j] = 2.0 * bz * (db.dot(&zj) + b_m.dot(&dz));
    }
    Ok((dtheta, dc))
}

/// `δη_i` from `η_i = sqrt(c_i / Σc)`.
pub fn diff_eta(c: &[f64], dc: &[f64]) -> Vec<f64> {
    let total: f64 = c.iter().sum();
    let dtotal: f64 = dc.iter().sum();
    c.iter()
        .zip(dc)
        .map(|(&ci, &dci)| 0.5 * (ci / total).sqrt() * (dci / ci - dtotal / total))
        .collect()
}

/// Perturbation of the Lanczos tridiagonal matrix for `E = -diag(θ)` and
/// starting vector `η`, from the explicit formulas for the cumulative sums
/// `Σ_{j<=i} δα_j` and `Σ_{j<=i} δβ_j/β_j`.
///
/// `q` has the eigenvectors of `T` as columns with `q[(0, p)] = η_p`, that is
/// `q = Xᵀ` for the Lanczos vectors `X`. `beta[i]` couples rows `i` and `i+1`.
///
/// In `A_θ` the two cross products inside the ratio term enter with the same
/// sign; with opposite signs the first differences disagree with finite
/// differences already for `m = 2`.
pub fn diff_lanczos(
    theta: &[f64],
    t: &Tridiagonal,
    q: &DMatrix<f64>,
    dtheta: &[f64],
    deta: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = theta.len();
    if let Some((i, &b)) = t.beta.iter().enumerate().find(|(_, &b)| !(b > 0.0)) {
        return Err(Error::Breakdown { step: i + 1, beta: b });
    }
    let mut cum_alpha = vec![0.0; m];
    let mut cum_beta = vec![0.0; m.saturating_sub(1)];
    for i in 0..m {
        for j in 0..m {
            let (a_theta, a_eta) = if i + 1 == m {
                (1.0, 0.0)
            } else {
                let mut sum = 0.0;
                for p in 0..m {
                    if p == j {
                        continue;
                    }
                    let ratio = q[(0, p)] / q[(0, j)];
                    sum += (2.0 * q[(i, p)] * q[(i + 1, p)]
                        - ratio * (q[(i, p)] * q[(i + 1, j)] + q[(i + 1, p)] * q[(i, j)]))
                        / (theta[p] - theta[j]);
                }
                (
                    1.0 + t.beta[i] * sum,
                    2.0 * t.beta[i] * q[(i + 1, j)] * q[(i, j)] / q[(0, j)],
                )
            };
            cum_alpha[i] += -a_theta * dtheta[j] + a_eta * deta[j];
            if i + 1 < m {
                let mut b_theta = 0.0;
                for p in 0..m {
                    if p == j {
                        continue;
                    }
                    let ratio = q[(0, p)] / q[(0, j)];
                    b_theta += (q[(i + 1, p)].powi(2) - ratio * q[(i + 1, p)] * q[(i + 1, j)])
                        / (theta[p] - theta[j]);
                }
                let b_eta = q[(i + 1, j)].powi(2) / q[(0, j)];
                cum_beta[i] += -b_theta * dtheta[j] + b_eta * deta[j];
            }
        }
    }
    let dalpha = (0..m)
        .map(|i| cum_alpha[i] - if i > 0 { cum_alpha[i - 1] } else { 0.0 })
        .collect();
    let dbeta = (0..m.saturating_sub(1))
        .map(|i| t.beta[i] * (cum_beta[i] - if i > 0 { cum_beta[i - 1] } else { 0.0 }))
        .collect();
    Ok((dalpha, dbeta))
}

/// Forward-mode differentiation of the Lanczos iteration itself; an
/// independent check on [`diff_lanczos`] valid for any symmetric `E`.
pub fn diff_lanczos_tangent(
    e: &DMatrix<f64>,
    x: &DMatrix<f64>,
    t: &Tridiagonal,
    de: &DMatrix<f64>,
    deta: &DVector<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let m = e.nrows();
    let mut dx = DMatrix::zeros(m, m);
    dx.set_column(0, deta);
    let mut dalpha = vec![0.0; m];
    let mut dbeta = vec![0.0; m.saturating_sub(1)];
    for j in 0..m {
        let xj = x.column(j).into_owned();
        let dxj = dx.column(j).into_owned();
        let exj = e * &xj;
        dalpha[j] = 2.0 * dxj.dot(&exj) + xj.dot(&(de * &xj));
        if j + 1 == m {
            break;
        }
        let mut u = &exj - xj.scale(t.alpha[j]);
        let mut du = de * &xj + e * &dxj - xj.scale(dalpha[j]) - dxj.scale(t.alpha[j]);
        if j > 0 {
            u -= x.column(j - 1).scale(t.beta[j - 1]);
            du -= x.column(j - 1).scale(dbeta[j - 1]) + dx.column(j - 1).scale(t.beta[j - 1]);
        }
        // tangent of the reorthogonalization (I - XXᵀ)u
        let basis = x.columns(0, j + 1);
        let dbasis = dx.columns(0, j + 1);
        let proj = basis.transpose() * &u;
        u -= basis * &proj;
        let corr = dbasis.transpose() * &u + basis.transpose() * &du;
        du -= basis * corr + dbasis * proj;
        let b = t.beta[j];
        dbeta[j] = u.dot(&du) / b;
        let xn = &u / b;
        dx.set_column(j + 1, &((du - xn.scale(dbeta[j])) / b));
    }
    (dalpha, dbeta)
}

/// Log-derivatives of `κ`, `κ̂` from perturbations of `T` and of `Σc`.
pub fn diff_cfrac_recursion(
    t: &Tridiagonal,
    cf: &ContinuedFraction,
    dalpha: &[f64],
    dbeta: &[f64],
    total: f64,
    dtotal: f64,
) -> (Vec<f64>, Vec<f64>) {
    let m = t.m();
    let (k, kh) = (&cf.kappa, &cf.kappa_hat);
    let mut dlk = vec![0.0; m];
    let mut dlkh = vec![0.0; m];
    dlkh[0] = -dtotal / total;
    dlk[0] = -dlkh[0] - dalpha[0] / t.alpha[0];
    for j in 1..m {
        dlkh[j] = -(2.0 * dlk[j - 1] + 2.0 * dbeta[j - 1] / t.beta[j - 1] + dlkh[j - 1]);
        let q = t.alpha[j] * kh[j] + 1.0 / k[j - 1];
        let dq = dalpha[j] * kh[j] + t.alpha[j] * kh[j] * dlkh[j] - dlk[j - 1] / k[j - 1];
        dlk[j] = -dq / q;
    }
    (dlk, dlkh)
}

/// Which `2m` reduced-model parameters the Jacobian differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Output {
    /// `(log κ, log κ̂)`, the preconditioner proper.
    #[default]
    LogKappa,
    /// `(log θ, log c)`, the spectral parametrization used as a baseline.
    LogPoleResidue,
}

impl Output {
    /// The chain's parameter vector in this parametrization.
    pub fn values(self, chain: &RomChain) -> Vec<f64> {
        match self {
            Output::LogKappa => chain.log_vector(),
            Output::LogPoleResidue => log_pole_residue(&chain.poles),
        }
    }
}

/// `(log θ_1..log θ_m, log c_1..log c_m)`.
pub fn log_pole_residue(pr: &PoleResidue) -> Vec<f64> {
    pr.theta.iter().chain(&pr.c).map(|v| v.ln()).collect()
}

/// Chain rule from `(∂θ, ∂c)` to one Jacobian column.
fn column_from_spectral(chain: &RomChain, q: &DMatrix<f64>, dtheta: &[f64], dc: &[f64], output: Output) -> Result<Vec<f64>> {
    let pr: &PoleResidue = &chain.poles;
    if output == Output::LogPoleResidue {
        return Ok(dtheta
            .iter()
            .zip(&pr.theta)
            .chain(dc.iter().zip(&pr.c))
            .map(|(d, v)| d / v)
            .collect());
    }
    let deta = diff_eta(&pr.c, dc);
    let (dalpha, dbeta) = diff_lanczos(&pr.theta, &chain.lanczos.t, q, dtheta, &deta)?;
    let total: f64 = pr.c.iter().sum();
    let dtotal: f64 = dc.iter().sum();
    let (dlk, dlkh) = diff_cfrac_recursion(&chain.lanczos.t, &chain.cf, &dalpha, &dbeta, total, dtotal);
    Ok(dlk.into_iter().chain(dlkh).collect())
}

/// `∂V` of a rational Arnoldi basis, following the recurrence column by
/// column: `∂k_c = R_j(∂A k_c + ∂v_{c-1})`, then the Gram-Schmidt tangent.
pub fn diff_arnoldi(terms: &[RankOneTerm], chain: &RomChain) -> DMatrix<f64> {
    let basis = &chain.basis;
    let (n, m) = basis.v.shape();
    let mut dv = DMatrix::zeros(n, m);
    for (c, &(j, _)) in basis.columns.iter().enumerate() {
        let kc = basis.k.column(c);
        let mut rhs = if c == 0 { DVector::zeros(n) } else { dv.column(c - 1).into_owned() };
        for t in terms {
            let coef = -t.weight * t.d.dot(kc.as_slice());
            for (&i, &val) in t.d.indices.iter().zip(&t.d.values) {
                rhs[i] += coef * val;
            }
        }
        let dk = chain.resolvents[j].solve(&rhs);
        let mut dz = dk.clone();
        for i in 0..c {
            let du = dv.column(i).dot(&kc) + basis.v.column(i).dot(&dk);
            dz.axpy(-du, &basis.v.column(i), 1.0);
            dz.axpy(-basis.u[(i, c)], &dv.column(i), 1.0);
        }
        let vc = basis.v.column(c);
        let du_cc = vc.dot(&dz);
        let col = (dz - vc * du_cc) / basis.u[(c, c)];
        dv.set_column(c, &col);
    }
    dv
}

fn jacobian_column_arnoldi(op: &SystemOperator, chain: &RomChain, k: usize, output: Output) -> Result<Vec<f64>> {
    let terms = op.derivative_terms(k)?;
    let dv = diff_arnoldi(&terms, chain);
    let (da, db) = diff_reduced(&terms, &chain.basis.v, &chain.av, &dv, &chain.b);
    let (dtheta, dc) = diff_spectral(&chain.poles.theta, &chain.z, &chain.reduced.b_m, &da, &db)?;
    column_from_spectral(chain, &chain.lanczos.x.transpose(), &dtheta, &dc, output)
}

/// Jacobian column `k` through the explicit route (dense `∂K`, `∂V`).
pub fn jacobian_column_explicit(op: &SystemOperator, chain: &RomChain, k: usize) -> Result<Vec<f64>> {
    if chain.basis.kind == Snapshots::Arnoldi {
        return jacobian_column_arnoldi(op, chain, k, Output::LogKappa);
    }
    let dk = diff_snapshots(op, chain, k)?;
    let basis = &chain.basis;
    let (dv, _) = diff_basis(&basis.k, &dk, &basis.v, &basis.u)?;
    let terms = op.derivative_terms(k)?;
    let (da, db) = diff_reduced(&terms, &basis.v, &chain.av, &dv, &chain.b);
    let (dtheta, dc) = diff_spectral(&chain.poles.theta, &chain.z, &chain.reduced.b_m, &da, &db)?;
    column_from_spectral(chain, &chain.lanczos.x.transpose(), &dtheta, &dc, Output::LogKappa)
}

/// Solves `R_j^i [V, AV, b]` for every node `j` and power `i <= M_j`.
struct Projections {
    /// `[V, AV, b]`.
    w: DMatrix<f64>,
    /// `z[j][i - 1] = R_j^i w`.
    z: Vec<Vec<DMatrix<f64>>>,
    u_inv: DMatrix<f64>,
}

impl Projections {
    fn new(chain: &RomChain) -> Result<Self> {
        let v = &chain.basis.v;
        let (n, m) = v.shape();
        let mut w = DMatrix::zeros(n, 2 * m + 1);
        w.columns_mut(0, m).copy_from(v);
        w.columns_mut(m, m).copy_from(&chain.av);
        w.set_column(2 * m, &chain.b);
        let z = chain
            .family
            .nodes
            .iter()
            .enumerate()
            .map(|(j, &(_, mult))| {
                let mut out = Vec::with_capacity(mult);
                let mut cur = w.clone();
                for _ in 0..mult {
                    cur = chain.resolvents[j].solve_many(&cur);
                    out.push(cur.clone());
                }
                out
            })
            .collect();
        Ok(Self {
            w,
            z,
            u_inv: upper_inverse(&chain.basis.u)?,
        })
    }
}

fn sparse_row_dot(t: &RankOneTerm, m: &DMatrix<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(m.ncols());
    for (&i, &val) in t.d.indices.iter().zip(&t.d.values) {
        out.axpy(val, &m.row(i).transpose(), 1.0);
    }
    out
}

fn jacobian_column_projected(
    op: &SystemOperator,
    chain: &RomChain,
    pr: &Projections,
    k: usize,
    output: Output,
) -> Result<Vec<f64>> {
    let basis = &chain.basis;
    let m = basis.v.ncols();
    let terms = op.derivative_terms(k)?;
    // G = [V, AV, b]ᵀ ∂K
    let mut g = DMatrix::zeros(pr.w.ncols(), m);
    let mut da_local = DMatrix::zeros(m, m);
    for t in &terms {
        let dk_row = sparse_row_dot(t, &basis.k);
        let dz: Vec<Vec<DVector<f64>>> = pr
            .z
            .iter()
            .map(|per| per.iter().map(|zi| sparse_row_dot(t, zi)).collect())
            .collect();
        for (c, &(j, p)) in basis.columns.iter().enumerate() {
            for i in 0..p {
                let kc = basis.columns.iter().position(|&x| x == (j, p - i)).expect("layout");
                let coef = -t.weight * dk_row[kc];
                let mut col = g.column_mut(c);
                col.axpy(coef, &dz[j][i], 1.0);
            }
        }
        let vd = sparse_row_dot(t, &basis.v);
        da_local -= t.weight * &vd * vd.transpose();
    }
    let vt_dk = g.rows(0, m).into_owned();
    let avt_dk = g.rows(m, m).into_owned();
    let bt_dk = g.row(2 * m).into_owned();
    let kt_dk = basis.u.transpose() * &vt_dk;
    let dm = &kt_dk + kt_dk.transpose();
    let du = diff_cholesky(&basis.u.transpose(), &dm)?.transpose();
    let x = (avt_dk - &chain.reduced.a_m * &du) * &pr.u_inv;
    let bt_dv = (bt_dk - chain.reduced.b_m.transpose() * &du) * &pr.u_inv;
    let da = da_local + &x + x.transpose();
    let db = bt_dv.transpose();
    let (dtheta, dc) = diff_spectral(&chain.poles.theta, &chain.z, &chain.reduced.b_m, &da, &db)?;
    column_from_spectral(chain, &chain.lanczos.x.transpose(), &dtheta, &dc, output)
}

/// `𝒟ℛ`, `2m x n_params`, rows ordered like the preconditioner output.
/// Columns are computed in parallel; the result does not depend on the
/// scheduling.
pub fn assemble_jacobian(op: &SystemOperator, chain: &RomChain) -> Result<DMatrix<f64>> {
    assemble_jacobian_with(op, chain, Output::LogKappa)
}

/// Jacobian of the chosen output parametrization.
pub fn assemble_jacobian_with(op: &SystemOperator, chain: &RomChain, output: Output) -> Result<DMatrix<f64>> {
    let m = chain.basis.v.ncols();
    let cols: Vec<Vec<f64>> = match chain.basis.kind {
        Snapshots::Powers => {
            let pr = Projections::new(chain)?;
            (0..op.n_params())
                .into_par_iter()
                .map(|k| jacobian_column_projected(op, chain, &pr, k, output))
                .collect::<Result<_>>()?
        }
        Snapshots::Arnoldi => (0..op.n_params())
            .into_par_iter()
            .map(|k| jacobian_column_arnoldi(op, chain, k, output))
            .collect::<Result<_>>()?,
    };
    Ok(DMatrix::from_fn(2 * m, cols.len(), |i, k| cols[k][i]))
}

/// Stacked `(2m N_d) x n_params` Jacobian of the per-segment chains.
pub fn assemble_jacobian_stacked(op: &SystemOperator, chains: &[RomChain], output: Output) -> Result<DMatrix<f64>> {
    let blocks: Vec<DMatrix<f64>> = chains
        .iter()
        .map(|c| assemble_jacobian_with(op, c, output))
        .collect::<Result<_>>()?;
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, op.n_params());
    let mut r0 = 0;
    for b in &blocks {
        out.rows_mut(r0, b.nrows()).copy_from(b);
        r0 += b.nrows();
    }
    Ok(out)
}

/// `(ℛ(r), 𝒟ℛ(r))` in 1D.
pub fn jacobian_1d(
    r: &ResistivityField,
    grid: &Grid1D,
    family: &NodeFamily,
    output: Output,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (op, b) = operator_1d(r, grid)?;
    let chain = RomChain::new(&op, &b, family)?;
    let jac = assemble_jacobian_with(&op, &chain, output)?;
    Ok((output.values(&chain), jac))
}

/// Stacked `(ℛ(r), 𝒟ℛ(r))` over all segments in 2D.
pub fn jacobian_2d(
    r: &ResistivityField,
    grid: &Grid2D,
    family: &NodeFamily,
    output: Output,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let op = assemble_operator_2d(r, grid)?;
    let chains = chains_2d(&op, grid, family)?;
    let jac = assemble_jacobian_stacked(&op, &chains, output)?;
    Ok((chains.iter().flat_map(|c| output.values(c)).collect(), jac))
}
