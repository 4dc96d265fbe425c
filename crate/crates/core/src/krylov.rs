//! Rational Krylov projection and the preconditioner map
//! `r -> (log κ, log κ̂)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    assemble_operator, assemble_operator_2d, build_difference_1d, source_vector_1d, source_vector_2d,
    Grid1D, Grid2D, ResistivityField, SystemOperator,
};
use crate::rational::{NodeFamily, PoleResidue};
use crate::resolvent::Resolvent;
use crate::stieltjes::{lanczos_tridiag, spectral_start, tridiag_to_cfrac, ContinuedFraction, Lanczos};

/// How the snapshot columns are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Snapshots {
    /// Column `(j, p)` is `R_j^p b`, `R_j = (s_jI - A)^{-1}`.
    Powers,
    /// Rational Arnoldi: column `c` is `R_{j_c} v_{c-1}` (`R_{j_1} b` for the
    /// first), which spans the same space when the powers are numerically
    /// dependent.
    Arnoldi,
}

/// Snapshots `K`, with `K = VU`, `VᵀV = I`, `U` upper triangular with
/// positive diagonal (so `Uᵀ` is the Cholesky factor of `KᵀK`).
#[derive(Debug, Clone)]
pub struct KrylovBasis {
    pub k: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// `(node index, power)` of each column. For [`Snapshots::Powers`] the
    /// column is `(s_j I - A)^{-p} b`.
    pub columns: Vec<(usize, usize)>,
    pub kind: Snapshots,
}

/// Below this value of `u_ii / ‖k_i‖` the power snapshots carry too few
/// significant digits and the Arnoldi construction is used instead.
pub const POWERS_MIN_RATIO: f64 = 1e-8;

const COLLAPSE_RATIO: f64 = 1e-13;

/// One factorization per distinct node of a family.
pub fn factor_family(op: &SystemOperator, family: &NodeFamily) -> Result<Vec<Resolvent>> {
    family
        .nodes
        .iter()
        .map(|&(s, _)| Resolvent::new(op.a(), s))
        .collect()
}

/// Column layout of the snapshot matrix for a family.
pub fn column_layout(family: &NodeFamily) -> Vec<(usize, usize)> {
    family
        .nodes
        .iter()
        .enumerate()
        .flat_map(|(j, &(_, mult))| (1..=mult).map(move |p| (j, p)))
        .collect()
}

pub fn build_krylov_with(resolvents: &[Resolvent], b: &DVector<f64>, family: &NodeFamily) -> Result<KrylovBasis> {
    if let Ok(powers) = build_powers(resolvents, b, family) {
        let ratio = (0..powers.v.ncols())
            .map(|i| powers.u[(i, i)] / powers.k.column(i).norm())
            .fold(f64::INFINITY, f64::min);
        if ratio >= POWERS_MIN_RATIO {
            return Ok(powers);
        }
    }
    build_arnoldi(resolvents, b, family)
}

/// Power snapshots `R_j^p b`, orthonormalized by Householder QR.
pub fn build_powers(resolvents: &[Resolvent], b: &DVector<f64>, family: &NodeFamily) -> Result<KrylovBasis> {
    let columns = column_layout(family);
    let n = b.len();
    let m = columns.len();
    let mut k = DMatrix::zeros(n, m);
    let mut prev: Option<(usize, DVector<f64>)> = None;
    for (c, &(j, p)) in columns.iter().enumerate() {
        let base = match &prev {
            Some((pj, x)) if *pj == j && p > 1 => x.clone(),
            _ => b.clone(),
        };
        let x = resolvents[j].solve(&base);
        k.set_column(c, &x);
        prev = Some((j, x));
    }
    orthonormalize(k, columns)
}

/// Rational Arnoldi snapshots with twice-repeated Gram-Schmidt.
pub fn build_arnoldi(resolvents: &[Resolvent], b: &DVector<f64>, family: &NodeFamily) -> Result<KrylovBasis> {
    let columns = column_layout(family);
    let n = b.len();
    let m = columns.len();
    let mut k = DMatrix::zeros(n, m);
    let mut v = DMatrix::zeros(n, m);
    let mut u = DMatrix::zeros(m, m);
    for (c, &(j, _)) in columns.iter().enumerate() {
        let x = if c == 0 {
            resolvents[j].solve(b)
        } else {
            resolvents[j].solve(&v.column(c - 1).into_owned())
        };
        let mut z = x.clone();
        for _ in 0..2 {
            for i in 0..c {
                let h = v.column(i).dot(&z);
                u[(i, c)] += h;
                z.axpy(-h, &v.column(i), 1.0);
            }
        }
        let norm = z.norm();
        if !(norm > COLLAPSE_RATIO * x.norm()) {
            return Err(Error::BasisCollapse { column: c + 1 });
        }
        u[(c, c)] = norm;
        v.set_column(c, &(z / norm));
        k.set_column(c, &x);
    }
    Ok(KrylovBasis {
        k,
        v,
        u,
        columns,
        kind: Snapshots::Arnoldi,
    })
}

/// Thin QR with a positive diagonal. Computed with Householder reflections
/// for stability; the factors coincide with `V = K L^{-T}`, `L = chol(KᵀK)`.
fn orthonormalize(k: DMatrix<f64>, columns: Vec<(usize, usize)>) -> Result<KrylovBasis> {
    let m = k.ncols();
    let qr = k.clone().qr();
    let mut v = qr.q();
    let mut u = qr.r();
    for i in 0..m {
        let knorm = k.column(i).norm();
        if !(u[(i, i)].abs() > COLLAPSE_RATIO * knorm) {
            return Err(Error::BasisCollapse { column: i + 1 });
        }
        if u[(i, i)] < 0.0 {
            v.column_mut(i).neg_mut();
            u.row_mut(i).neg_mut();
        }
    }
    Ok(KrylovBasis {
        k,
        v,
        u,
        columns,
        kind: Snapshots::Powers,
    })
}

pub fn build_krylov(op: &SystemOperator, b: &DVector<f64>, family: &NodeFamily) -> Result<KrylovBasis> {
    let res = factor_family(op, family)?;
    build_krylov_with(&res, b, family)
}

/// Galerkin projection `A_m = VᵀAV`, `b_m = Vᵀb`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedModel {
    pub a_m: DMatrix<f64>,
    pub b_m: DVector<f64>,
}

impl ReducedModel {
    pub fn m(&self) -> usize {
        self.b_m.len()
    }

    /// `b_mᵀ(sI - A_m)^{-1} b_m`.
    pub fn transfer(&self, s: f64) -> f64 {
        let m = self.m();
        let shifted = DMatrix::identity(m, m) * s - &self.a_m;
        let x = shifted
            .lu()
            .solve(&self.b_m)
            .unwrap_or_else(|| DVector::from_element(m, f64::NAN));
        self.b_m.dot(&x)
    }

    /// `k`-th derivative in `s`: `(-1)^k k! b_mᵀ(sI - A_m)^{-(k+1)} b_m`.
    pub fn transfer_derivative(&self, s: f64, k: usize) -> f64 {
        let m = self.m();
        let lu = (DMatrix::identity(m, m) * s - &self.a_m).lu();
        let mut x = self.b_m.clone();
        for _ in 0..=k {
            x = lu.solve(&x).unwrap_or_else(|| DVector::from_element(m, f64::NAN));
        }
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * fact * self.b_m.dot(&x)
    }
}

pub fn project(op: &SystemOperator, b: &DVector<f64>, basis: &KrylovBasis) -> Result<(ReducedModel, DMatrix<f64>)> {
    let av = op.a() * &basis.v;
    let mut a_m = basis.v.transpose() * &av;
    a_m = (&a_m + a_m.transpose()) * 0.5;
    let b_m = basis.v.transpose() * b;
    let top = SymmetricEigen::new(a_m.clone()).eigenvalues.max();
    if !(top < 0.0) {
        return Err(Error::SpectralValidity {
            index: 0,
            reason: format!("projected operator is not negative definite (eigenvalue {top:e})"),
        });
    }
    Ok((ReducedModel { a_m, b_m }, av))
}

/// Poles `θ_j = -λ_j(A_m)` ascending, residues `c_j = (b_mᵀz_j)²`, and the
/// matching eigenvectors as columns.
pub fn reduced_spectral(model: &ReducedModel) -> Result<(PoleResidue, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(model.a_m.clone());
    let m = model.m();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut z = DMatrix::zeros(m, m);
    for (j, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        // deterministic orientation: positive projection on b_m
        if col.dot(&model.b_m) < 0.0 {
            col.neg_mut();
        }
        z.set_column(j, &col);
    }
    let theta: Vec<f64> = order.iter().map(|&i| -eig.eigenvalues[i]).collect();
    let c: Vec<f64> = (0..m).map(|j| z.column(j).dot(&model.b_m).powi(2)).collect();
    Ok((PoleResidue::new(theta, c)?, z))
}

/// Every intermediate of the preconditioner chain, kept for differentiation.
#[derive(Debug)]
pub struct RomChain {
    pub family: NodeFamily,
    pub resolvents: Vec<Resolvent>,
    pub b: DVector<f64>,
    pub basis: KrylovBasis,
    pub reduced: ReducedModel,
    /// `A V`.
    pub av: DMatrix<f64>,
    pub poles: PoleResidue,
    /// Eigenvectors of `A_m`, columns ordered like `poles.theta`.
    pub z: DMatrix<f64>,
    pub lanczos: Lanczos,
    pub cf: ContinuedFraction,
}

impl RomChain {
    pub fn new(op: &SystemOperator, b: &DVector<f64>, family: &NodeFamily) -> Result<Self> {
        Self::build(op, b, family, None)
    }

    /// Chain with a fixed snapshot construction instead of the automatic one.
    pub fn with_snapshots(op: &SystemOperator, b: &DVector<f64>, family: &NodeFamily, kind: Snapshots) -> Result<Self> {
        Self::build(op, b, family, Some(kind))
    }

    fn build(op: &SystemOperator, b: &DVector<f64>, family: &NodeFamily, kind: Option<Snapshots>) -> Result<Self> {
        let resolvents = factor_family(op, family)?;
        let basis = match kind {
            None => build_krylov_with(&resolvents, b, family)?,
            Some(Snapshots::Powers) => build_powers(&resolvents, b, family)?,
            Some(Snapshots::Arnoldi) => build_arnoldi(&resolvents, b, family)?,
        };
        let (reduced, av) = project(op, b, &basis)?;
        let (poles, z) = reduced_spectral(&reduced)?;
        let (e, eta) = spectral_start(&poles);
        let lanczos = lanczos_tridiag(&e, &eta)?;
        let cf = tridiag_to_cfrac(&lanczos.t, poles.c.iter().sum())?;
        Ok(Self {
            family: family.clone(),
            resolvents,
            b: b.clone(),
            basis,
            reduced,
            av,
            poles,
            z,
            lanczos,
            cf,
        })
    }

    pub fn log_vector(&self) -> Vec<f64> {
        self.cf.log_vector()
    }
}

/// `ℛ(r)` for a given operator and source.
pub fn preconditioner(op: &SystemOperator, b: &DVector<f64>, family: &NodeFamily) -> Result<Vec<f64>> {
    Ok(RomChain::new(op, b, family)?.log_vector())
}

/// Assembled 1D problem on `N` edge samples.
pub fn operator_1d(r: &ResistivityField, grid: &Grid1D) -> Result<(SystemOperator, DVector<f64>)> {
    let d = build_difference_1d(grid);
    let op = assemble_operator(r, &d)?;
    Ok((op, source_vector_1d(grid).values))
}

/// `ℛ(r) = (log κ_1..log κ_m, log κ̂_1..log κ̂_m)` in 1D.
pub fn preconditioner_1d(r: &ResistivityField, grid: &Grid1D, family: &NodeFamily) -> Result<Vec<f64>> {
    let (op, b) = operator_1d(r, grid)?;
    preconditioner(&op, &b, family)
}

/// Per-segment chains for the 2D problem, in segment order.
pub fn chains_2d(op: &SystemOperator, grid: &Grid2D, family: &NodeFamily) -> Result<Vec<RomChain>> {
    grid.segments
        .par_iter()
        .map(|seg| {
            let b = source_vector_2d(grid, seg)?.values;
            RomChain::new(op, &b, family)
        })
        .collect()
}

/// Stacked `ℛ` over all segments of the grid, `2m` entries per segment.
pub fn preconditioner_2d(r: &ResistivityField, grid: &Grid2D, family: &NodeFamily) -> Result<Vec<f64>> {
    let op = assemble_operator_2d(r, grid)?;
    Ok(chains_2d(&op, grid, family)?
        .iter()
        .flat_map(|c| c.log_vector())
        .collect())
}
