//! Optimal (spectrally matched) grids of the reference medium `r ≡ 1` and the
//! ratio estimates of `r` read off the continued-fraction coefficients.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{Grid1D, ResistivityField};
use crate::krylov::preconditioner_1d;
use crate::rational::NodeFamily;
use crate::stieltjes::ContinuedFraction;

/// Staggered grid whose steps are the reference coefficients: primary nodes
/// `x_j = Σ_{k<=j} κ⁰_k` and dual nodes `x̂_j = Σ_{k<=j} κ̂⁰_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalGrid {
    pub primary: Vec<f64>,
    pub dual: Vec<f64>,
    pub reference: ContinuedFraction,
}

fn cumulative(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

impl OptimalGrid {
    pub fn from_reference(reference: ContinuedFraction) -> Self {
        Self {
            primary: cumulative(&reference.kappa),
            dual: cumulative(&reference.kappa_hat),
            reference,
        }
    }

    pub fn m(&self) -> usize {
        self.primary.len()
    }
}

/// Optimal grid of the constant medium on an `N`-point grid.
pub fn reference_grid(family: &NodeFamily, n: usize) -> Result<OptimalGrid> {
    let grid = Grid1D::new(n)?;
    let l = preconditioner_1d(&ResistivityField::constant(n, 1.0)?, &grid, family)?;
    Ok(OptimalGrid::from_reference(ContinuedFraction::from_log_vector(&l)?))
}

/// Checks `0 < x̂_1 < x_1 < x̂_2 < ... < x̂_m < x_m <= 1`.
///
/// Returns the 1-based index `j` of the first pair that breaks the chain,
/// where `j` refers to `x̂_j` or `x_j`; `tol` relaxes the right end.
pub fn check_interlacing(grid: &OptimalGrid, tol: f64) -> std::result::Result<(), usize> {
    let mut prev = 0.0;
    for j in 0..grid.m() {
        if !(prev < grid.dual[j] && grid.dual[j] < grid.primary[j]) {
            return Err(j + 1);
        }
        prev = grid.primary[j];
    }
    if grid.m() > 0 && grid.primary[grid.m() - 1] > 1.0 + tol {
        return Err(grid.m());
    }
    Ok(())
}

/// Ratio estimates of the resistivity at the optimal grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReconstruction {
    /// `(κ⁰_j / κ_j)²` at the primary nodes.
    pub zeta: Vec<f64>,
    /// `(κ̂_j / κ̂⁰_j)²` at the dual nodes.
    pub zeta_hat: Vec<f64>,
    /// `sqrt(ζ_j ζ̂_j)`, placed at the dual nodes.
    pub zeta_tilde: Vec<f64>,
    pub primary: Vec<f64>,
    pub dual: Vec<f64>,
}

pub fn ratio_reconstruction(cf: &ContinuedFraction, grid: &OptimalGrid) -> Result<RatioReconstruction> {
    let m = grid.m();
    if cf.m() != m {
        return Err(crate::Error::DimensionMismatch {
            expected: m,
            got: cf.m(),
        });
    }
    let r0 = &grid.reference;
    let zeta: Vec<f64> = (0..m).map(|j| (r0.kappa[j] / cf.kappa[j]).powi(2)).collect();
    let zeta_hat: Vec<f64> = (0..m).map(|j| (cf.kappa_hat[j] / r0.kappa_hat[j]).powi(2)).collect();
    let zeta_tilde = (0..m)
        .map(|j| r0.kappa[j] * cf.kappa_hat[j] / (cf.kappa[j] * r0.kappa_hat[j]))
        .collect();
    Ok(RatioReconstruction {
        zeta,
        zeta_hat,
        zeta_tilde,
        primary: grid.primary.clone(),
        dual: grid.dual.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_with(kappa: Vec<f64>, kappa_hat: Vec<f64>) -> OptimalGrid {
        OptimalGrid::from_reference(ContinuedFraction { kappa, kappa_hat })
    }

    #[test]
    fn cumulative_nodes() {
        let g = grid_with(vec![0.2, 0.3], vec![0.1, 0.25]);
        assert_eq!(g.primary, vec![0.2, 0.5]);
        assert_eq!(g.dual, vec![0.1, 0.35]);
        assert_eq!(check_interlacing(&g, 0.0), Ok(()));
    }

    #[test]
    fn swapped_nodes_report_index() {
        let g = grid_with(vec![0.2, 0.3, 0.1], vec![0.1, 0.05, 0.5]);
        // x̂ = 0.1, 0.15, 0.65 vs x = 0.2, 0.5, 0.6: x̂_2 < x_1
        assert_eq!(check_interlacing(&g, 0.0), Err(2));
        let single = grid_with(vec![0.5], vec![0.7]);
        assert_eq!(check_interlacing(&single, 0.0), Err(1));
        let outside = grid_with(vec![1.2], vec![0.5]);
        assert_eq!(check_interlacing(&outside, 1e-6), Err(1));
    }

    #[test]
    fn identity_ratios() {
        let g = reference_grid(&NodeFamily::zolotarev(4).unwrap(), 99).unwrap();
        let rr = ratio_reconstruction(&g.reference.clone(), &g).unwrap();
        for v in rr.zeta.iter().chain(&rr.zeta_hat).chain(&rr.zeta_tilde) {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn geometric_mean_identity() {
        let g = reference_grid(&NodeFamily::zolotarev(5).unwrap(), 199).unwrap();
        let grid = Grid1D::new(199).unwrap();
        let r = grid.sample(|x| 2.0 - 4.0 * (x - 0.5).powi(2)).unwrap();
        let l = preconditioner_1d(&r, &grid, &NodeFamily::zolotarev(5).unwrap()).unwrap();
        let rr = ratio_reconstruction(&ContinuedFraction::from_log_vector(&l).unwrap(), &g).unwrap();
        for j in 0..5 {
            let prod = rr.zeta[j] * rr.zeta_hat[j];
            assert!((prod - rr.zeta_tilde[j].powi(2)).abs() < 1e-12 * prod);
        }
    }

    #[test]
    fn reference_grids_interlace() {
        for fam in [NodeFamily::zolotarev(5).unwrap(), NodeFamily::pade0(5).unwrap()] {
            let g = reference_grid(&fam, 399).unwrap();
            assert_eq!(check_interlacing(&g, 1e-6), Ok(()), "{}", fam.label);
        }
    }

    #[test]
    fn constant_medium_ratio_near_constant() {
        // scaling r only rescales the nodes, so ζ̃ ≈ γ holds approximately
        let fam = NodeFamily::zolotarev(5).unwrap();
        let g = reference_grid(&fam, 199).unwrap();
        let grid = Grid1D::new(199).unwrap();
        let l = preconditioner_1d(&ResistivityField::constant(199, 1.5).unwrap(), &grid, &fam).unwrap();
        let rr = ratio_reconstruction(&ContinuedFraction::from_log_vector(&l).unwrap(), &g).unwrap();
        for z in &rr.zeta_tilde {
            assert!((z / 1.5 - 1.0).abs() < 0.1, "{z}");
        }
    }
}
