//! Rational interpolation of transfer-function data and conversion of the
//! interpolant to pole/residue form.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interpolation nodes with multiplicities: node `s` with multiplicity `M`
/// matches `Y` and its first `2M - 1` derivatives at `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFamily {
    pub label: String,
    pub nodes: Vec<(f64, usize)>,
}

impl NodeFamily {
    pub fn new(label: impl Into<String>, nodes: Vec<(f64, usize)>) -> Result<Self> {
        if nodes.is_empty() || nodes.iter().any(|&(_, k)| k == 0) {
            return Err(Error::InvalidArgument("node family needs positive multiplicities".into()));
        }
        if nodes.iter().any(|&(s, _)| !(s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("interpolation nodes must be nonnegative".into()));
        }
        if nodes.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::InvalidArgument("nodes must be strictly increasing".into()));
        }
        Ok(Self {
            label: label.into(),
            nodes,
        })
    }

    /// Reduced model size `m = Σ M_j`.
    pub fn m(&self) -> usize {
        self.nodes.iter().map(|&(_, k)| k).sum()
    }

    pub fn points(&self) -> Vec<f64> {
        self.nodes.iter().map(|&(s, _)| s).collect()
    }

    /// Simple Padé at the origin: one node `s = 0` of multiplicity `m`.
    pub fn pade0(m: usize) -> Result<Self> {
        Self::new("pade0", vec![(0.0, m)])
    }

    /// Geometric approximation of the Zolotarev nodes, `s_j = 2(1 + 12/m)^{j-1}`.
    pub fn zolotarev(m: usize) -> Result<Self> {
        let mut f = nodes_geometric(m, 2.0, 1.0 + 12.0 / m.max(1) as f64)?;
        f.label = "zolotarev".into();
        Ok(f)
    }

    /// Faster-growing geometric nodes; the default ratio cubes the Zolotarev one.
    pub fn fast(m: usize) -> Result<Self> {
        let mut f = nodes_geometric(m, 2.0, (1.0 + 12.0 / m.max(1) as f64).powi(3))?;
        f.label = "fast".into();
        Ok(f)
    }

    /// One node `s` matched to order `2m`.
    pub fn single_node(s: f64, m: usize) -> Result<Self> {
        Self::new("single-node", vec![(s, m)])
    }

    pub fn by_name(name: &str, m: usize) -> Result<Self> {
        match name {
            "pade0" => Self::pade0(m),
            "zolotarev" => Self::zolotarev(m),
            "fast" => Self::fast(m),
            other => Err(Error::InvalidArgument(format!("unknown node family `{other}`"))),
        }
    }

    /// The same kind of family with a different size.
    pub fn resized(&self, m: usize) -> Result<Self> {
        match self.label.as_str() {
            "pade0" | "zolotarev" | "fast" => Self::by_name(&self.label, m),
            "single-node" => Self::single_node(self.nodes[0].0, m),
            _ => {
                if m > self.nodes.len() {
                    return Err(Error::InvalidArgument(format!(
                        "cannot grow custom family `{}` to m = {m}",
                        self.label
                    )));
                }
                Self::new(self.label.clone(), self.nodes[..m].to_vec())
            }
        }
    }
}

/// `s_j = s1 · ratio^{j-1}`, `j = 1..=m`, each of multiplicity one.
pub fn nodes_geometric(m: usize, s1: f64, ratio: f64) -> Result<NodeFamily> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be positive".into()));
    }
    if !(s1 > 0.0) || !(ratio > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "geometric nodes need s1 > 0 and ratio > 1, got s1 = {s1}, ratio = {ratio}"
        )));
    }
    NodeFamily::new(
        "geometric",
        (0..m).map(|j| (s1 * ratio.powi(j as i32), 1)).collect(),
    )
}

/// `Y_m = f/g` with `f`, `g` polynomials in `σ = s - shift`.
///
/// `scale` is the variable scaling used during the fit; root finding works
/// in `σ/scale` where the coefficients are balanced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalModel {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub scale: f64,
    #[serde(default)]
    pub shift: f64,
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

fn horner_derivative(c: &[f64], x: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (j, &v)| acc * x + j as f64 * v)
}

impl RationalModel {
    pub fn m(&self) -> usize {
        self.g.len() - 1
    }

    pub fn eval(&self, s: f64) -> f64 {
        let x = s - self.shift;
        horner(&self.f, x) / horner(&self.g, x)
    }

    pub fn eval_derivative(&self, s: f64) -> f64 {
        let x = s - self.shift;
        let (f, g) = (horner(&self.f, x), horner(&self.g, x));
        let (df, dg) = (horner_derivative(&self.f, x), horner_derivative(&self.g, x));
        (df * g - f * dg) / (g * g)
    }
}

/// Partial-fraction form `Y_m(s) = Σ c_j / (s + θ_j)`, poles sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleResidue {
    pub theta: Vec<f64>,
    pub c: Vec<f64>,
}

impl PoleResidue {
    /// Validates positivity and sorts by pole magnitude.
    pub fn new(theta: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if theta.len() != c.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: c.len(),
            });
        }
        if theta.is_empty() {
            return Err(Error::InvalidArgument("empty pole/residue set".into()));
        }
        let mut idx: Vec<usize> = (0..theta.len()).collect();
        idx.sort_by(|&a, &b| theta[a].total_cmp(&theta[b]));
        let theta: Vec<f64> = idx.iter().map(|&i| theta[i]).collect();
        let c: Vec<f64> = idx.iter().map(|&i| c[i]).collect();
        for (j, (&t, &w)) in theta.iter().zip(&c).enumerate() {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::SpectralValidity {
                    index: j,
                    reason: format!("pole magnitude {t:e} is not positive"),
                });
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::SpectralValidity {
                    index: j,
                    reason: format!("residue {w:e} is not positive"),
                });
            }
        }
        Ok(Self { theta, c })
    }

    pub fn m(&self) -> usize {
        self.theta.len()
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.theta.iter().zip(&self.c).map(|(t, c)| c / (s + t)).sum()
    }

    pub fn eval_derivative(&self, s: f64) -> f64 {
        self.theta
            .iter()
            .zip(&self.c)
            .map(|(t, c)| -c / ((s + t) * (s + t)))
            .sum()
    }
}

/// Fitted model with the condition number of the interpolation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: RationalModel,
    pub cond: f64,
    /// Singular values of the interpolation matrix, descending.
    pub singular_values: Vec<f64>,
}

/// Singular values (descending) and the right singular vector of the
/// smallest one, for a wide matrix padded to square with zero rows.
fn null_vector(p: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (r, c) = p.shape();
    let mut sq = DMatrix::zeros(c, c);
    sq.view_mut((0, 0), (r, c)).copy_from(p);
    // With the default tolerance the implicit QR sweeps deflate singular
    // values below `ε σ_max` to exactly zero; the Padé systems need them.
    let svd = SVD::try_new(sq.clone(), false, true, 1e-20, 100_000)
        .or_else(|| SVD::try_new(sq, false, true, f64::EPSILON, 10_000))
        .ok_or_else(|| Error::Fit("SVD did not converge".into()))?;
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let last = order[c - 1];
    Ok((sv, vt.row(last).iter().copied().collect()))
}

/// Osculatory rational interpolation `Y_m(s_j) = Y_j`, `Y_m'(s_j) = Y'_j` at
/// distinct positive nodes, solved as the null vector of the scaled
/// Vandermonde system.
pub fn fit_multipoint(values: &[f64], derivatives: &[f64], nodes: &[f64]) -> Result<Fit> {
    let m = nodes.len();
    if m == 0 || values.len() != m || derivatives.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: values.len().min(derivatives.len()),
        });
    }
    if nodes.iter().any(|&s| !(s > 0.0)) || nodes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "multipoint nodes must be positive and strictly increasing".into(),
        ));
    }
    let scale = nodes[m - 1];
    let mut p = DMatrix::zeros(2 * m, 2 * m + 1);
    for (j, &node) in nodes.iter().enumerate() {
        let s = node / scale;
        let (y, dy) = (values[j], derivatives[j]);
        for i in 0..=m {
            let pow = s.powi(i as i32);
            let dpow = if i == 0 { 0.0 } else { i as f64 * s.powi(i as i32 - 1) / scale };
            if i < m {
                p[(j, i)] = pow;
                p[(m + j, i)] = dpow;
            }
            p[(j, m + i)] = -y * pow;
            p[(m + j, m + i)] = -dy * pow - y * dpow;
        }
    }
    let (sv, u) = null_vector(&p)?;
    let cond = sv[0] / sv[2 * m - 1];
    let f = (0..m).map(|j| u[j] / scale.powi(j as i32)).collect();
    let g = (0..=m).map(|j| u[m + j] / scale.powi(j as i32)).collect();
    Ok(Fit {
        model: RationalModel {
            f,
            g,
            scale,
            shift: 0.0,
        },
        cond,
        singular_values: sv,
    })
}

/// Padé approximant from `2m` Taylor coefficients at `shift`, via the null
/// vector of the `m x (m+1)` Toeplitz matrix `[τ_{m+i-j}]`.
///
/// With `scale != 1` the coefficients are first rescaled to the variable
/// `(s - shift)/scale`; `scale = 1` reproduces the plain algorithm.
pub fn fit_pade_toeplitz(tau: &[f64], shift: f64, scale: f64) -> Result<Fit> {
    if tau.len() < 2 || !tau.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "need an even number of moments, got {}",
            tau.len()
        )));
    }
    if tau.iter().all(|&t| t == 0.0) {
        return Err(Error::Fit("all moments are zero".into()));
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    let m = tau.len() / 2;
    let ts: Vec<f64> = tau
        .iter()
        .enumerate()
        .map(|(k, t)| t * scale.powi(k as i32))
        .collect();
    let t = DMatrix::from_fn(m, m + 1, |i, j| ts[m + i - j]);
    let (sv, g_scaled) = null_vector(&t)?;
    let cond = sv[0] / sv[m - 1];
    let f_scaled: Vec<f64> = (0..m)
        .map(|i| (0..=i).map(|j| ts[i - j] * g_scaled[j]).sum())
        .collect();
    let f = f_scaled
        .iter()
        .enumerate()
        .map(|(j, v)| v / scale.powi(j as i32))
        .collect();
    let g = g_scaled
        .iter()
        .enumerate()
        .map(|(j, v)| v / scale.powi(j as i32))
        .collect();
    Ok(Fit {
        model: RationalModel { f, g, scale, shift },
        cond,
        singular_values: sv,
    })
}

/// Poles as roots of `g` (companion eigenvalues in the scaled variable) and
/// residues `f(σ_j)/g'(σ_j)`.
pub fn to_pole_residue(model: &RationalModel) -> Result<PoleResidue> {
    let m = model.m();
    if m == 0 {
        return Err(Error::Fit("denominator has degree zero".into()));
    }
    let scale = model.scale;
    let gs: Vec<f64> = model
        .g
        .iter()
        .enumerate()
        .map(|(j, v)| v * scale.powi(j as i32))
        .collect();
    let fs: Vec<f64> = model
        .f
        .iter()
        .enumerate()
        .map(|(j, v)| v * scale.powi(j as i32))
        .collect();
    let gmax = gs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(gs[m].abs() > 1e-14 * gmax) {
        return Err(Error::Fit(format!(
            "denominator degree is deficient (leading coefficient {:e})",
            gs[m]
        )));
    }
    let mut comp = DMatrix::zeros(m, m);
    for i in 1..m {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..m {
        comp[(i, m - 1)] = -gs[i] / gs[m];
    }
    let roots = comp.complex_eigenvalues();
    let mut theta = Vec::with_capacity(m);
    let mut c = Vec::with_capacity(m);
    for (j, z) in roots.iter().enumerate() {
        if z.im.abs() > 1e-8 * z.norm().max(1e-300) {
            return Err(Error::SpectralValidity {
                index: j,
                reason: format!("complex pole pair {:e} ± {:e}i", z.re, z.im.abs()),
            });
        }
        let v = z.re;
        let dg = horner_derivative(&gs, v);
        theta.push(-(v * scale + model.shift));
        c.push(scale * horner(&fs, v) / dg);
    }
    let pr = PoleResidue::new(theta, c)?;
    for (j, w) in pr.theta.windows(2).enumerate() {
        if w[1] - w[0] <= 1e-12 * w[1] {
            return Err(Error::SpectralValidity {
                index: j + 1,
                reason: "coinciding poles".into(),
            });
        }
    }
    Ok(pr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zolotarev_nodes_for_five() {
        let f = NodeFamily::zolotarev(5).unwrap();
        let expected = [2.0, 6.8, 23.12, 78.608, 267.2672];
        for (s, e) in f.points().iter().zip(expected) {
            assert!((s - e).abs() < 1e-9 * e);
        }
        assert_eq!(f.m(), 5);
    }

    #[test]
    fn unit_ratio_rejected() {
        assert!(nodes_geometric(4, 2.0, 1.0).is_err());
        assert!(nodes_geometric(4, 0.0, 2.0).is_err());
    }

    #[test]
    fn fast_nodes_dominate() {
        let z = NodeFamily::zolotarev(6).unwrap().points();
        let f = NodeFamily::fast(6).unwrap().points();
        assert_eq!(z[0], f[0]);
        assert!(z.iter().zip(&f).skip(1).all(|(a, b)| b > a));
    }

    #[test]
    fn single_pole_recovered() {
        // Y = 2/(s+1) at s = 1
        let fit = fit_multipoint(&[1.0], &[-0.5], &[1.0]).unwrap();
        for s in [0.3, 1.0, 9.0] {
            assert!((fit.model.eval(s) - 2.0 / (s + 1.0)).abs() < 1e-13);
        }
        let pr = to_pole_residue(&fit.model).unwrap();
        assert!((pr.theta[0] - 1.0).abs() < 1e-13 && (pr.c[0] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn explicit_polynomials_to_poles() {
        let model = RationalModel {
            f: vec![2.0],
            g: vec![1.0, 1.0],
            scale: 1.0,
            shift: 0.0,
        };
        let pr = to_pole_residue(&model).unwrap();
        assert_eq!(pr.m(), 1);
        assert!((pr.theta[0] - 1.0).abs() < 1e-14 && (pr.c[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn geometric_moments_collapse_to_one_pole() {
        // the null space is two-dimensional; any choice gives g = (1+s)·q(s)
        // with f = q(s), so compare away from a possible common root of q
        let fit = fit_pade_toeplitz(&[1.0, -1.0, 1.0, -1.0], 0.0, 1.0).unwrap();
        for s in [0.5, 3.0, 11.0] {
            assert!((fit.model.eval(s) - 1.0 / (1.0 + s)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_moments_rejected() {
        assert!(matches!(fit_pade_toeplitz(&[0.0; 4], 0.0, 1.0), Err(Error::Fit(_))));
    }

    #[test]
    fn complex_poles_rejected() {
        // g = s² + 1
        let model = RationalModel {
            f: vec![1.0, 0.0],
            g: vec![1.0, 0.0, 1.0],
            scale: 1.0,
            shift: 0.0,
        };
        assert!(matches!(to_pole_residue(&model), Err(Error::SpectralValidity { .. })));
    }

    #[test]
    fn negative_residue_rejected() {
        // -1/(s+1) + 2/(s+3)
        let f = vec![-3.0 + 2.0, -1.0 + 2.0];
        let model = RationalModel {
            f,
            g: vec![3.0, 4.0, 1.0],
            scale: 1.0,
            shift: 0.0,
        };
        match to_pole_residue(&model) {
            Err(Error::SpectralValidity { index, .. }) => assert_eq!(index, 0),
            other => panic!("{other:?}"),
        }
    }

    fn stieltjes_data(pr: &PoleResidue, nodes: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            nodes.iter().map(|&s| pr.eval(s)).collect(),
            nodes.iter().map(|&s| pr.eval_derivative(s)).collect(),
        )
    }

    #[test]
    fn multipoint_round_trip() {
        let truth = PoleResidue::new(vec![0.7, 4.0, 19.0, 85.0], vec![1.3, 0.8, 2.2, 0.4]).unwrap();
        let nodes = NodeFamily::zolotarev(4).unwrap().points();
        let (y, dy) = stieltjes_data(&truth, &nodes);
        let fit = fit_multipoint(&y, &dy, &nodes).unwrap();
        let pr = to_pole_residue(&fit.model).unwrap();
        for j in 0..4 {
            assert!(((pr.theta[j] - truth.theta[j]) / truth.theta[j]).abs() < 1e-6);
            assert!(((pr.c[j] - truth.c[j]) / truth.c[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn shifted_toeplitz_round_trip() {
        let truth = PoleResidue::new(vec![5.0, 40.0, 300.0], vec![0.5, 1.0, 3.0]).unwrap();
        let shift = 60.0;
        // τ_k = Σ c (-1)^k / (shift + θ)^{k+1}
        let tau: Vec<f64> = (0..6)
            .map(|k| {
                truth
                    .theta
                    .iter()
                    .zip(&truth.c)
                    .map(|(t, c)| c * (-1.0f64).powi(k) / (shift + t).powi(k + 1))
                    .sum()
            })
            .collect();
        let fit = fit_pade_toeplitz(&tau, shift, shift).unwrap();
        let pr = to_pole_residue(&fit.model).unwrap();
        for j in 0..3 {
            assert!(((pr.theta[j] - truth.theta[j]) / truth.theta[j]).abs() < 1e-6);
            assert!(((pr.c[j] - truth.c[j]) / truth.c[j]).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn residues_scale_and_poles_stay(gamma in 0.01f64..100.0) {
            let truth = PoleResidue::new(vec![1.0, 9.0, 60.0], vec![1.0, 2.0, 0.5]).unwrap();
            let nodes = NodeFamily::zolotarev(3).unwrap().points();
            let (y, dy) = stieltjes_data(&truth, &nodes);
            let base = to_pole_residue(&fit_multipoint(&y, &dy, &nodes).unwrap().model).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v * gamma).collect();
            let dys: Vec<f64> = dy.iter().map(|v| v * gamma).collect();
            let scaled = to_pole_residue(&fit_multipoint(&ys, &dys, &nodes).unwrap().model).unwrap();
            for j in 0..3 {
                prop_assert!(((scaled.theta[j] - base.theta[j]) / base.theta[j]).abs() < 1e-10);
                prop_assert!(((scaled.c[j] - gamma * base.c[j]) / (gamma * base.c[j])).abs() < 1e-10);
            }
        }

        #[test]
        fn interpolation_holds_at_nodes(
            theta in proptest::collection::vec(0.5f64..500.0, 3),
            c in proptest::collection::vec(0.1f64..5.0, 3),
        ) {
            let mut th = theta.clone();
            th.sort_by(f64::total_cmp);
            prop_assume!(th.windows(2).all(|w| w[1] > 1.5 * w[0]));
            let truth = PoleResidue::new(th, c).unwrap();
            let nodes = NodeFamily::zolotarev(3).unwrap().points();
            let (y, dy) = stieltjes_data(&truth, &nodes);
            let fit = fit_multipoint(&y, &dy, &nodes).unwrap();
            for (j, &s) in nodes.iter().enumerate() {
                prop_assert!(((fit.model.eval(s) - y[j]) / y[j]).abs() <= 1e-6 * fit.cond);
                prop_assert!(((fit.model.eval_derivative(s) - dy[j]) / dy[j]).abs() <= 1e-6 * fit.cond);
            }
        }
    }
}
