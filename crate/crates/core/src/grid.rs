//! Fine-grid discretization of `div(r grad u)`.
//!
//! The operator is always assembled in factored form `A(r) = -Dᵀ diag(r_e) D`,
//! where `D` maps nodal (1D) or cell (2D) values to scaled differences across
//! edges and `r_e` are edge resistivities. In 1D the unknown resistivity lives
//! on the edges themselves; in 2D it is cell-centered and edge values are
//! arithmetic means of the two adjacent cells. That averaging map is kept as a
//! sparse matrix so derivatives with respect to the unknowns remain short sums
//! of rank-one terms `-w_e d_e d_eᵀ`.
//!
//! 1D: nodes sit at `(i - 1/2) h`, edges at `k h` for `k = 1..=N`, Neumann at
//! `x = 0` and homogeneous Dirichlet one step past the last node.
//!
//! 2D: cell `(ix, iy)` has index `iy * nx + ix`; `iy = 0` touches the surface
//! `x2 = 0`. The accessible boundary is an interval of that surface where the
//! flux vanishes; every other boundary face is Dirichlet.

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    n: usize,
    h: f64,
}

impl Grid1D {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need N >= 2 points, got {n}")));
        }
        Ok(Self {
            n,
            h: 1.0 / (n as f64 + 1.0),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Positions `k h`, `k = 1..=N`, where the resistivity samples live.
    pub fn edge_positions(&self) -> Vec<f64> {
        (1..=self.n).map(|k| k as f64 * self.h).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Result<ResistivityField> {
        ResistivityField::new(self.edge_positions().into_iter().map(f).collect())
    }
}

/// A closed interval `[start, end]` of the surface `x2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    fn overlap(&self, a: f64, b: f64) -> f64 {
        (self.end.min(b) - self.start.max(a)).max(0.0)
    }
}

/// Rectangular cell-centered grid on `[0, Lx] x [0, Ly]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    /// Accessible part of the surface, `(a, b)` in `x1`.
    pub accessible: (f64, f64),
    pub segments: Vec<Segment>,
}

impl Grid2D {
    pub fn new(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        accessible: (f64, f64),
        segments: Vec<Segment>,
    ) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2x2 cells, got {nx}x{ny}")));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidGrid(format!("extents must be positive: {lx} x {ly}")));
        }
        let (a, b) = accessible;
        if !(0.0 <= a && a < b && b <= lx) {
            return Err(Error::InvalidGrid(format!("accessible interval ({a}, {b}) not inside [0, {lx}]")));
        }
        let grid = Self {
            nx,
            ny,
            lx,
            ly,
            accessible,
            segments: Vec::new(),
        };
        for s in &segments {
            grid.check_segment(s)?;
        }
        for (i, s) in segments.iter().enumerate() {
            for t in &segments[i + 1..] {
                if s.overlap(t.start, t.end) > 0.0 {
                    return Err(Error::InvalidSegment(format!(
                        "segments [{}, {}] and [{}, {}] overlap",
                        s.start, s.end, t.start, t.end
                    )));
                }
            }
        }
        Ok(Self { segments, ..grid })
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn cell_center(&self, index: usize) -> (f64, f64) {
        let (ix, iy) = (index % self.nx, index / self.nx);
        ((ix as f64 + 0.5) * self.hx(), (iy as f64 + 0.5) * self.hy())
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Result<ResistivityField> {
        ResistivityField::new(
            (0..self.n_cells())
                .map(|i| {
                    let (x1, x2) = self.cell_center(i);
                    f(x1, x2)
                })
                .collect(),
        )
    }

    fn check_segment(&self, s: &Segment) -> Result<()> {
        let (a, b) = self.accessible;
        if !(s.start < s.end) || s.start < a - 1e-12 || s.end > b + 1e-12 {
            return Err(Error::InvalidSegment(format!(
                "[{}, {}] is not a nonempty subinterval of the accessible boundary ({a}, {b})",
                s.start, s.end
            )));
        }
        Ok(())
    }

    /// Whether the surface face of column `ix` lies on the accessible boundary.
    fn surface_is_neumann(&self, ix: usize) -> bool {
        let c = (ix as f64 + 0.5) * self.hx();
        c > self.accessible.0 && c < self.accessible.1
    }

    /// `n_d` segments snapped to cell boundaries, each covering
    /// `floor(cells / n_d)` surface cells of the accessible interval, with the
    /// leftover cells spread as gaps.
    pub fn cell_aligned_segments(&self, n_d: usize) -> Result<Vec<Segment>> {
        let hx = self.hx();
        let first = (self.accessible.0 / hx).ceil() as usize;
        let last = (self.accessible.1 / hx).floor() as usize;
        let cells = last.saturating_sub(first);
        if n_d == 0 || cells < n_d {
            return Err(Error::InvalidSegment(format!(
                "cannot fit {n_d} segments into {cells} accessible cells"
            )));
        }
        let width = cells / n_d;
        let spare = cells - width * n_d;
        Ok((0..n_d)
            .map(|j| {
                // gaps distributed as evenly as integers allow
                let offset = first + j * width + (j + 1) * spare / (n_d + 1);
                Segment::new(offset as f64 * hx, (offset + width) as f64 * hx)
            })
            .collect())
    }
}

/// Strictly positive resistivity samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ResistivityField {
    values: Vec<f64>,
}

impl ResistivityField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::NonPositive { index, value });
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl TryFrom<Vec<f64>> for ResistivityField {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ResistivityField> for Vec<f64> {
    fn from(f: ResistivityField) -> Self {
        f.values
    }
}

/// A sparse vector, used for rows of `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * x[i])
            .sum()
    }

    pub fn to_dense(&self, n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] += v;
        }
        out
    }
}

/// One term `-weight * d dᵀ` of `dA/dr_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneTerm {
    pub weight: f64,
    pub d: SparseVec,
}

/// `A(r) = -Dᵀ diag(M r) D` together with its factors.
#[derive(Debug, Clone)]
pub struct SystemOperator {
    a: CsrMatrix<f64>,
    d: CsrMatrix<f64>,
    /// Edge-from-parameter map `M` (identity in 1D, averaging in 2D).
    averaging: CsrMatrix<f64>,
    /// Transpose of `averaging`, so parameter columns are rows.
    averaging_t: CsrMatrix<f64>,
    edge_r: Vec<f64>,
}

impl SystemOperator {
    fn from_parts(d: CsrMatrix<f64>, averaging: CsrMatrix<f64>, params: &[f64]) -> Result<Self> {
        if averaging.ncols() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: averaging.ncols(),
                got: params.len(),
            });
        }
        let mut edge_r = vec![0.0; averaging.nrows()];
        for (e, row) in averaging.row_iter().enumerate() {
            edge_r[e] = row
                .col_indices()
                .iter()
                .zip(row.values())
                .map(|(&k, &w)| w * params[k])
                .sum();
        }
        let n = d.ncols();
        let mut coo = CooMatrix::new(n, n);
        for (e, row) in d.row_iter().enumerate() {
            let re = edge_r[e];
            for (&i, &vi) in row.col_indices().iter().zip(row.values()) {
                for (&j, &vj) in row.col_indices().iter().zip(row.values()) {
                    coo.push(i, j, -re * vi * vj);
                }
            }
        }
        let averaging_t = averaging.transpose();
        Ok(Self {
            a: CsrMatrix::from(&coo),
            d,
            averaging,
            averaging_t,
            edge_r,
        })
    }

    pub fn a(&self) -> &CsrMatrix<f64> {
        &self.a
    }

    pub fn d(&self) -> &CsrMatrix<f64> {
        &self.d
    }

    pub fn averaging(&self) -> &CsrMatrix<f64> {
        &self.averaging
    }

    pub fn edge_resistivity(&self) -> &[f64] {
        &self.edge_r
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Number of resistivity unknowns.
    pub fn n_params(&self) -> usize {
        self.averaging.ncols()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for (i, row) in self.a.row_iter().enumerate() {
            y[i] = row
                .col_indices()
                .iter()
                .zip(row.values())
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim(), self.dim());
        for (i, j, v) in self.a.triplet_iter() {
            m[(i, j)] += *v;
        }
        m
    }

    pub fn edge_row(&self, e: usize) -> SparseVec {
        let row = self.d.row(e);
        SparseVec {
            indices: row.col_indices().to_vec(),
            values: row.values().to_vec(),
        }
    }

    /// `dA/dr_k = -sum_e w_e d_e d_eᵀ`.
    pub fn derivative_terms(&self, k: usize) -> Result<Vec<RankOneTerm>> {
        if k >= self.n_params() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.n_params(),
            });
        }
        let col = self.averaging_t.row(k);
        Ok(col
            .col_indices()
            .iter()
            .zip(col.values())
            .map(|(&e, &w)| RankOneTerm {
                weight: w,
                d: self.edge_row(e),
            })
            .collect())
    }
}

/// Forward differences scaled by `1/h`; the last row carries the Dirichlet
/// condition: `(Dv)_i = (v_{i+1} - v_i)/h`, `(Dv)_N = -v_N/h`.
pub fn build_difference_1d(grid: &Grid1D) -> CsrMatrix<f64> {
    let n = grid.n();
    let inv_h = 1.0 / grid.h();
    let mut coo = CooMatrix::new(n, n);
    for i in 0..n {
        coo.push(i, i, -inv_h);
        if i + 1 < n {
            coo.push(i, i + 1, inv_h);
        }
    }
    CsrMatrix::from(&coo)
}

fn identity(n: usize) -> CsrMatrix<f64> {
    CsrMatrix::identity(n)
}

/// `A = -Dᵀ diag(r) D` for edge-sampled 1D resistivity.
pub fn assemble_operator(field: &ResistivityField, d: &CsrMatrix<f64>) -> Result<SystemOperator> {
    if field.len() != d.nrows() {
        return Err(Error::DimensionMismatch {
            expected: d.nrows(),
            got: field.len(),
        });
    }
    SystemOperator::from_parts(d.clone(), identity(field.len()), field.values())
}

/// Row `k` of `D`, so that `dA/dr_k = -d_k d_kᵀ`.
pub fn operator_derivative(d: &CsrMatrix<f64>, k: usize) -> Result<SparseVec> {
    if k >= d.nrows() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: d.nrows(),
        });
    }
    let row = d.row(k);
    Ok(SparseVec {
        indices: row.col_indices().to_vec(),
        values: row.values().to_vec(),
    })
}

/// Difference factor and averaging map for the 2D cell-centered scheme.
pub fn build_difference_2d(grid: &Grid2D) -> (CsrMatrix<f64>, CsrMatrix<f64>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let n = grid.n_cells();
    let (ihx, ihy) = (1.0 / grid.hx(), 1.0 / grid.hy());
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut d_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut m_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let i = grid.index(ix, iy);
            if ix + 1 < nx {
                let j = grid.index(ix + 1, iy);
                d_rows.push(vec![(i, -ihx), (j, ihx)]);
                m_rows.push(vec![(i, 0.5), (j, 0.5)]);
            }
            if iy + 1 < ny {
                let j = grid.index(ix, iy + 1);
                d_rows.push(vec![(i, -ihy), (j, ihy)]);
                m_rows.push(vec![(i, 0.5), (j, 0.5)]);
            }
            // Dirichlet faces: half-cell distance to the boundary value 0.
            if ix == 0 {
                d_rows.push(vec![(i, -sqrt2 * ihx)]);
                m_rows.push(vec![(i, 1.0)]);
            }
            if ix + 1 == nx {
                d_rows.push(vec![(i, -sqrt2 * ihx)]);
                m_rows.push(vec![(i, 1.0)]);
            }
            if iy + 1 == ny {
                d_rows.push(vec![(i, -sqrt2 * ihy)]);
                m_rows.push(vec![(i, 1.0)]);
            }
            if iy == 0 && !grid.surface_is_neumann(ix) {
                d_rows.push(vec![(i, -sqrt2 * ihy)]);
                m_rows.push(vec![(i, 1.0)]);
            }
        }
    }
    let n_edges = d_rows.len();
    let mut d = CooMatrix::new(n_edges, n);
    let mut m = CooMatrix::new(n_edges, n);
    for (e, (dr, mr)) in d_rows.iter().zip(&m_rows).enumerate() {
        for &(j, v) in dr {
            d.push(e, j, v);
        }
        for &(j, v) in mr {
            m.push(e, j, v);
        }
    }
    (CsrMatrix::from(&d), CsrMatrix::from(&m))
}

/// Five-point finite-volume operator for cell-centered resistivity.
pub fn assemble_operator_2d(field: &ResistivityField, grid: &Grid2D) -> Result<SystemOperator> {
    if field.len() != grid.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_cells(),
            got: field.len(),
        });
    }
    let (d, m) = build_difference_2d(grid);
    SystemOperator::from_parts(d, m, field.values())
}

/// Source/measurement vector with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceVector {
    pub values: DVector<f64>,
    pub support: Vec<usize>,
}

/// `b = e_1 / sqrt(h)`.
pub fn source_vector_1d(grid: &Grid1D) -> SourceVector {
    let mut values = DVector::zeros(grid.n());
    values[0] = 1.0 / grid.h().sqrt();
    SourceVector {
        values,
        support: vec![0],
    }
}

/// Surface cells under `segment`, each weighted by the length of its face
/// covered by the segment and scaled by `1/sqrt(cell area)`.
///
/// With full coverage the weight is `sqrt(hx/hy)`, so `bᵀ e^{At} b` is the
/// segment-integrated response to a segment-distributed impulse and does not
/// depend on the grid resolution.
pub fn source_vector_2d(grid: &Grid2D, segment: &Segment) -> Result<SourceVector> {
    grid.check_segment(segment)?;
    let hx = grid.hx();
    let scale = 1.0 / (hx * grid.hy()).sqrt();
    let mut values = DVector::zeros(grid.n_cells());
    let mut support = Vec::new();
    for ix in 0..grid.nx {
        let len = segment.overlap(ix as f64 * hx, (ix + 1) as f64 * hx);
        if len > 1e-12 * hx {
            let i = grid.index(ix, 0);
            values[i] = len * scale;
            support.push(i);
        }
    }
    Ok(SourceVector { values, support })
}
