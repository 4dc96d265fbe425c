//! Experiment drivers and the named scenarios built on them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rominv::forward::{add_noise, simulate_response, NoiseModel, SimMethod, TimeSeries};
use rominv::grid::{Grid1D, Grid2D, ResistivityField, Segment};
use rominv::inversion::{
    data_fitting_1d, invert_1d, invert_2d, moments_2d, relative_error, InversionConfig, InversionResult,
    KktSolver, Weighting,
};
use rominv::krylov::{operator_1d, preconditioner_1d};
use rominv::laplace::{laplace_derivative, laplace_moments, laplace_transform};
use rominv::optgrid::{check_interlacing, ratio_reconstruction, OptimalGrid, RatioReconstruction};
use rominv::rational::{fit_multipoint, fit_pade_toeplitz, NodeFamily};
use rominv::sensitivity::{jacobian_1d, jacobian_2d, Output};
use rominv::stieltjes::ContinuedFraction;
use serde_json::json;

use crate::cache::ReferenceCache;
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::io::{fmt_num, render_heatmap, sha256_hex, write_bytes, write_json, Manifest, Table};
use crate::phantom::{inclusion_mask, phantom_1d, phantom_2d};

pub const SCENARIOS: [&str; 15] = [
    "table-ratcond",
    "fig-grids",
    "fig-condjac",
    "fig-ratios",
    "fig-ratios-r20",
    "1d-inversion",
    "1d-noiseless",
    "1d-highcontrast",
    "table-noise",
    "2d-one",
    "2d-corner",
    "2d-side",
    "2d-tilted",
    "2d-sensitivity",
    "2d-shift-sweep",
];

pub const FAMILIES: [&str; 3] = ["pade0", "zolotarev", "fast"];

/// Noiseless response of a 1D phantom on the fine grid.
pub fn synthesize_clean(cfg: &ExperimentConfig, phantom: &str) -> Result<TimeSeries> {
    let grid = Grid1D::new(cfg.fine_n)?;
    let (op, b) = operator_1d(&phantom_1d(phantom, &grid)?, &grid)?;
    Ok(simulate_response(&op, &b, cfg.t_end, cfg.h_t, SimMethod::Spectral)?)
}

/// Response of a 1D phantom with the configured noise.
pub fn synthesize_1d(cfg: &ExperimentConfig, phantom: &str) -> Result<TimeSeries> {
    let clean = synthesize_clean(cfg, phantom)?;
    Ok(add_noise(&clean, NoiseModel { level: cfg.noise, seed: cfg.seed })?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondRow {
    pub m: usize,
    pub cond_p: f64,
    pub cond_t: f64,
}

/// Condition numbers of the multipoint and the simple Padé systems built
/// from the data of the constant medium.
pub fn conditioning_table(cfg: &ExperimentConfig, ms: &[usize]) -> Result<Vec<CondRow>> {
    let d = synthesize_clean(cfg, "one")?;
    ms.iter()
        .map(|&m| {
            let nodes = NodeFamily::zolotarev(m)?.points();
            let values = nodes.iter().map(|&s| laplace_transform(&d, s)).collect::<rominv::Result<Vec<_>>>()?;
            let derivs = nodes.iter().map(|&s| laplace_derivative(&d, s)).collect::<rominv::Result<Vec<_>>>()?;
            let p = fit_multipoint(&values, &derivs, &nodes)?;
            let t = fit_pade_toeplitz(&laplace_moments(&d, 0.0, 2 * m)?, 0.0, 1.0)?;
            Ok(CondRow {
                m,
                cond_p: p.cond,
                cond_t: t.cond,
            })
        })
        .collect()
}

/// `σ_max / σ_min`.
pub fn cond(j: &DMatrix<f64>) -> f64 {
    let sv = j.clone().svd(false, false).singular_values;
    sv.max() / sv.min()
}

/// Condition number of `𝒟ℛ` at the constant medium for each `m`.
pub fn jacobian_conditioning(n: usize, family: &str, ms: &[usize]) -> Result<Vec<(usize, f64)>> {
    let grid = Grid1D::new(n)?;
    let r = ResistivityField::constant(n, 1.0)?;
    ms.iter()
        .map(|&m| {
            let (_, j) = jacobian_1d(&r, &grid, &NodeFamily::by_name(family, m)?, Output::LogKappa)?;
            Ok((m, cond(&j)))
        })
        .collect()
}

/// Ratios `ζ, ζ̂, ζ̃` of a phantom against the reference grid, with the true
/// profile at the primary and dual nodes.
pub fn ratio_profile(
    phantom: &str,
    family: &NodeFamily,
    n: usize,
    cache: &ReferenceCache,
) -> Result<(RatioReconstruction, Vec<f64>, Vec<f64>)> {
    let grid = Grid1D::new(n)?;
    let reference: OptimalGrid = cache.get(family, n)?;
    let l = preconditioner_1d(&phantom_1d(phantom, &grid)?, &grid, family)?;
    let rr = ratio_reconstruction(&ContinuedFraction::from_log_vector(&l)?, &reference)?;
    let f = crate::phantom::profile_1d(phantom)?;
    let at_primary = rr.primary.iter().map(|&x| f(x)).collect();
    let at_dual = rr.dual.iter().map(|&x| f(x)).collect();
    Ok((rr, at_primary, at_dual))
}

/// Inversion settings for a 1D phantom: the high-contrast case runs ten
/// iterations, piecewise-constant ones use adaptive weights.
pub fn inversion_config_1d(cfg: &ExperimentConfig, phantom: &str) -> InversionConfig {
    let piecewise = matches!(phantom, "rj" | "rh" | "r20");
    InversionConfig {
        m0: cfg.m0,
        family: cfg.family.clone(),
        shift: cfg.shift,
        n_gn: cfg.n_gn.unwrap_or(if phantom == "rh" { 10 } else { 5 }),
        weighting: cfg.weighting.unwrap_or(if piecewise {
            Weighting::Adaptive { c_phi: None }
        } else {
            Weighting::Identity
        }),
        solver: cfg.solver,
        output: cfg.output,
        ..Default::default()
    }
}

pub struct Run1D {
    pub grid: Grid1D,
    pub truth: ResistivityField,
    pub result: InversionResult,
    pub error: f64,
}

pub fn run_inversion_1d(cfg: &ExperimentConfig, phantom: &str, inv: &InversionConfig) -> Result<Run1D> {
    let d = synthesize_1d(cfg, phantom)?;
    invert_data_1d(cfg, phantom, &d, inv)
}

pub fn invert_data_1d(cfg: &ExperimentConfig, phantom: &str, d: &TimeSeries, inv: &InversionConfig) -> Result<Run1D> {
    let grid = Grid1D::new(cfg.coarse_n)?;
    let truth = phantom_1d(phantom, &grid)?;
    let r0 = ResistivityField::constant(cfg.coarse_n, 1.0)?;
    let result = invert_1d(d, &grid, &r0, inv, Some(&truth))?;
    let error = relative_error(result.r.values(), truth.values())?;
    Ok(Run1D {
        grid,
        truth,
        result,
        error,
    })
}

/// Terminal `m` of the data fit for each realization at each noise level;
/// 0 marks data that no size could fit.
pub fn noise_ladder(cfg: &ExperimentConfig, phantom: &str, levels: &[f64]) -> Result<Vec<Vec<usize>>> {
    let clean = synthesize_clean(cfg, phantom)?;
    let family = NodeFamily::by_name(&cfg.family, cfg.m0)?;
    levels
        .iter()
        .map(|&level| {
            (0..cfg.realizations as u64)
                .map(|k| {
                    let d = add_noise(&clean, NoiseModel { level, seed: cfg.seed + k })?;
                    match data_fitting_1d(&d, &family, cfg.m0) {
                        Ok(fit) => Ok(fit.m),
                        Err(rominv::Error::DataUnusable) => Ok(0),
                        Err(e) => Err(e.into()),
                    }
                })
                .collect()
        })
        .collect()
}

/// `N_d` equal segments on the accessible interval, each covering 80% of its
/// slot so that neighbours never touch.
pub fn segments_2d(accessible: (f64, f64), n_d: usize) -> Vec<Segment> {
    let slot = (accessible.1 - accessible.0) / n_d as f64;
    (0..n_d)
        .map(|j| {
            let a = accessible.0 + j as f64 * slot + 0.1 * slot;
            Segment::new(a, a + 0.8 * slot)
        })
        .collect()
}

pub fn grid_2d(size: (usize, usize), n_d: usize) -> Result<Grid2D> {
    let accessible = (1.0, 2.0);
    Ok(Grid2D::new(size.0, size.1, 3.0, 1.0, accessible, segments_2d(accessible, n_d))?)
}

pub fn inversion_config_2d(cfg: &ExperimentConfig) -> InversionConfig {
    InversionConfig {
        m0: cfg.m0_2d,
        family: "single-node".into(),
        shift: cfg.shift,
        n_gn: cfg.n_gn.unwrap_or(1),
        weighting: cfg.weighting.unwrap_or(Weighting::Identity),
        solver: KktSolver::ProjectedCg {
            tol: 1e-10,
            max_iter: 20_000,
        },
        output: cfg.output,
        ..Default::default()
    }
}

pub struct Run2D {
    pub grid: Grid2D,
    pub truth: ResistivityField,
    pub result: InversionResult,
    pub error: f64,
}

pub fn run_inversion_2d(cfg: &ExperimentConfig, phantom: &str) -> Result<Run2D> {
    let fine = grid_2d(cfg.fine_2d, cfg.n_d)?;
    let coarse = grid_2d(cfg.coarse_2d, cfg.n_d)?;
    let taus = moments_2d(&phantom_2d(phantom, &fine)?, &fine, cfg.shift, 2 * cfg.m0_2d)?;
    let reference = if cfg.calibrate_2d {
        let one = ResistivityField::constant(fine.n_cells(), 1.0)?;
        Some(moments_2d(&one, &fine, cfg.shift, 2 * cfg.m0_2d)?)
    } else {
        None
    };
    let truth = phantom_2d(phantom, &coarse)?;
    let r0 = ResistivityField::constant(coarse.n_cells(), 1.0)?;
    let result = invert_2d(&taus, reference.as_deref(), &coarse, &r0, &inversion_config_2d(cfg), Some(&truth))?;
    let error = relative_error(result.r.values(), truth.values())?;
    Ok(Run2D {
        grid: coarse,
        truth,
        result,
        error,
    })
}

/// Summary statistics of a 2D reconstruction against its phantom.
pub fn inclusion_stats(run: &Run2D, phantom: &str) -> Result<(f64, f64)> {
    let mask = inclusion_mask(phantom, &run.grid)?;
    let r = run.result.r.values();
    let max_in = r
        .iter()
        .zip(&mask)
        .filter(|(_, m)| **m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let bg: Vec<f64> = r.iter().zip(&mask).filter(|(_, m)| !**m).map(|(v, _)| *v).collect();
    Ok((max_in, bg.iter().sum::<f64>() / bg.len() as f64))
}

/// Rows of the Jacobian of source `j` at the constant medium, `log κ_l`
/// first, then `log κ̂_l`.
pub fn sensitivity_rows(cfg: &ExperimentConfig, source: usize, m: usize) -> Result<(Grid2D, DMatrix<f64>)> {
    let full = grid_2d(cfg.coarse_2d, cfg.n_d)?;
    let seg = *full
        .segments
        .get(source)
        .ok_or_else(|| HarnessError::Config(format!("source {source} out of range")))?;
    let grid = Grid2D::new(full.nx, full.ny, full.lx, full.ly, full.accessible, vec![seg])?;
    let r = ResistivityField::constant(grid.n_cells(), 1.0)?;
    let (_, j) = jacobian_2d(&r, &grid, &NodeFamily::single_node(cfg.shift, m)?, Output::LogKappa)?;
    Ok((grid, j))
}

/// Mean distance from the source midpoint, weighted by `|row|`.
///
/// The argmax of `|row|` jumps between the singularity under the source and
/// the corners of the accessible interval, so the weighted mean is used as
/// the position of the front.
pub fn front_radius(grid: &Grid2D, row: &[f64]) -> f64 {
    let mid = grid.segments[0].midpoint();
    let (num, den) = row.iter().enumerate().fold((0.0, 0.0), |(num, den), (k, v)| {
        let (x, y) = grid.cell_center(k);
        (num + v.abs() * f64::hypot(x - mid, y), den + v.abs())
    });
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Condition number of the stacked Jacobian at the constant medium for each
/// interpolation node.
pub fn shift_sweep(cfg: &ExperimentConfig, shifts: &[f64]) -> Result<Vec<(f64, f64)>> {
    let grid = grid_2d(cfg.coarse_2d, cfg.n_d)?;
    let r = ResistivityField::constant(grid.n_cells(), 1.0)?;
    shifts
        .iter()
        .map(|&s| {
            let (_, j) = jacobian_2d(&r, &grid, &NodeFamily::single_node(s, cfg.m0_2d)?, Output::LogKappa)?;
            Ok((s, cond(&j)))
        })
        .collect()
}

fn history_table(result: &InversionResult) -> Result<Table> {
    let mut t = Table::new(&["iteration", "residual", "error", "alpha", "constraint_defect"]);
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for h in &result.history {
        t.push(vec![
            h.iteration.to_string(),
            fmt_num(h.residual),
            opt(h.error),
            opt(h.alpha),
            opt(h.constraint_defect),
        ])?;
    }
    Ok(t)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        let p = self.dir.join(name);
        t.write(&p)?;
        self.files.push(p);
        Ok(())
    }

    fn bytes(&mut self, name: &str, b: &[u8]) -> Result<()> {
        let p = self.dir.join(name);
        write_bytes(&p, b)?;
        self.files.push(p);
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let p = self.dir.join(name);
        write_json(&p, v)?;
        self.files.push(p);
        Ok(())
    }
}

fn write_run_1d(out: &mut Outputs, prefix: &str, run: &Run1D, save_iterates: bool) -> Result<()> {
    out.table(&format!("{prefix}history.csv"), &history_table(&run.result)?)?;
    let mut rec = Table::new(&["x", "r", "r_true"]);
    for ((x, r), t) in run.grid.edge_positions().iter().zip(run.result.r.values()).zip(run.truth.values()) {
        rec.push_numbers(&[*x, *r, *t])?;
    }
    out.table(&format!("{prefix}reconstruction.csv"), &rec)?;
    if save_iterates {
        for (p, it) in run.result.iterates.iter().enumerate() {
            out.json(&format!("{prefix}iterate-{}.json", p + 1), it)?;
        }
    }
    Ok(())
}

fn write_run_2d(out: &mut Outputs, run: &Run2D, save_iterates: bool) -> Result<()> {
    out.table("history.csv", &history_table(&run.result)?)?;
    let mut rec = Table::new(&["x1", "x2", "r", "r_true"]);
    for (k, (r, t)) in run.result.r.values().iter().zip(run.truth.values()).enumerate() {
        let (x, y) = run.grid.cell_center(k);
        rec.push_numbers(&[x, y, *r, *t])?;
    }
    out.table("reconstruction.csv", &rec)?;
    out.bytes("reconstruction.pgm", &render_heatmap(run.result.r.values(), run.grid.nx, run.grid.ny)?)?;
    out.bytes("truth.pgm", &render_heatmap(run.truth.values(), run.grid.nx, run.grid.ny)?)?;
    if save_iterates {
        for (p, it) in run.result.iterates.iter().enumerate() {
            out.json(&format!("iterate-{}.json", p + 1), it)?;
        }
    }
    Ok(())
}

/// Runs a named scenario, writing its artifacts and a manifest under
/// `out_dir/<scenario>/`.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = Outputs {
        dir: cfg.out_dir.join(&cfg.scenario),
        files: Vec::new(),
    };
    let cache = ReferenceCache::new(cfg.cache_dir.clone());
    let summary = match cfg.scenario.as_str() {
        "table-ratcond" => {
            let rows = conditioning_table(cfg, &[2, 3, 4, 5, 6])?;
            let mut t = Table::new(&["m", "cond_p", "cond_t"]);
            for r in &rows {
                t.push(vec![r.m.to_string(), fmt_num(r.cond_p), fmt_num(r.cond_t)])?;
            }
            out.table("ratcond.csv", &t)?;
            json!({ "rows": rows.len() })
        }
        "fig-grids" => {
            let mut t = Table::new(&["family", "m", "j", "node_primary", "node_dual"]);
            let mut checks = Vec::new();
            for fam in FAMILIES {
                for m in [5, 10] {
                    let g = cache.get(&NodeFamily::by_name(fam, m)?, cfg.reference_n)?;
                    for j in 0..m {
                        t.push(vec![
                            fam.into(),
                            m.to_string(),
                            (j + 1).to_string(),
                            fmt_num(g.primary[j]),
                            fmt_num(g.dual[j]),
                        ])?;
                    }
                    checks.push(json!({
                        "family": fam, "m": m,
                        "interlacing_violation": check_interlacing(&g, 1e-6).err(),
                    }));
                }
            }
            out.table("grids.csv", &t)?;
            json!({ "interlacing": checks })
        }
        "fig-condjac" => {
            let mut t = Table::new(&["family", "m", "cond"]);
            for fam in FAMILIES {
                for (m, c) in jacobian_conditioning(cfg.reference_n, fam, &(2..=8).collect::<Vec<_>>())? {
                    t.push(vec![fam.into(), m.to_string(), fmt_num(c)])?;
                }
            }
            out.table("condjac.csv", &t)?;
            json!({})
        }
        "fig-ratios" | "fig-ratios-r20" => {
            let phantoms: &[&str] = if cfg.scenario == "fig-ratios" { &["rq", "rl", "rj"] } else { &["r20"] };
            let family = NodeFamily::by_name(&cfg.family, 10)?;
            for ph in phantoms {
                let (rr, _, at_dual) = ratio_profile(ph, &family, cfg.reference_n, &cache)?;
                let mut t = Table::new(&["node_primary", "node_dual", "zeta", "zeta_hat", "zeta_tilde", "r_at_dual"]);
                for j in 0..rr.zeta.len() {
                    t.push_numbers(&[rr.primary[j], rr.dual[j], rr.zeta[j], rr.zeta_hat[j], rr.zeta_tilde[j], at_dual[j]])?;
                }
                out.table(&format!("ratios-{ph}.csv"), &t)?;
            }
            json!({ "phantoms": phantoms })
        }
        "1d-inversion" => {
            let run = run_inversion_1d(cfg, &cfg.phantom, &inversion_config_1d(cfg, &cfg.phantom))?;
            write_run_1d(&mut out, "", &run, cfg.save_iterates)?;
            json!({ "phantom": cfg.phantom, "m": run.result.m, "relative_error": run.error })
        }
        "1d-noiseless" => {
            let mut errors = serde_json::Map::new();
            for ph in ["rq", "rl", "rj"] {
                let cfg = ExperimentConfig { noise: 0.0, ..cfg.clone() };
                let run = run_inversion_1d(&cfg, ph, &inversion_config_1d(&cfg, ph))?;
                write_run_1d(&mut out, &format!("{ph}-"), &run, cfg.save_iterates)?;
                errors.insert(ph.into(), json!(run.error));
            }
            json!({ "relative_error": errors })
        }
        "1d-highcontrast" => {
            let cfg = ExperimentConfig { m0: 5, ..cfg.clone() };
            let d = synthesize_1d(&cfg, "rh")?;
            let inv = inversion_config_1d(&cfg, "rh");
            let kappa = invert_data_1d(&cfg, "rh", &d, &inv)?;
            write_run_1d(&mut out, "kappa-", &kappa, cfg.save_iterates)?;
            let base_cfg = InversionConfig {
                output: Output::LogPoleResidue,
                weighting: Weighting::Identity,
                ..inv
            };
            let baseline = match invert_data_1d(&cfg, "rh", &d, &base_cfg) {
                Ok(run) => {
                    write_run_1d(&mut out, "spectral-", &run, cfg.save_iterates)?;
                    json!({ "relative_error": run.error })
                }
                Err(e) => json!({ "failed": e.to_string() }),
            };
            json!({ "kappa": { "relative_error": kappa.error }, "spectral": baseline })
        }
        "table-noise" => {
            let levels = [5e-2, 5e-3, 1e-4, 0.0];
            let ladder = noise_ladder(cfg, &cfg.phantom, &levels)?;
            let mut t = Table::new(&["noise", "seed", "m"]);
            for (level, ms) in levels.iter().zip(&ladder) {
                for (k, m) in ms.iter().enumerate() {
                    t.push(vec![fmt_num(*level), (cfg.seed + k as u64).to_string(), m.to_string()])?;
                }
            }
            out.table("noise-m.csv", &t)?;
            json!({ "ladder": ladder })
        }
        "2d-one" | "2d-corner" | "2d-side" | "2d-tilted" => {
            let phantom = &cfg.scenario[3..];
            let run = run_inversion_2d(cfg, phantom)?;
            write_run_2d(&mut out, &run, cfg.save_iterates)?;
            let (max_in, bg) = inclusion_stats(&run, phantom)?;
            json!({ "relative_error": run.error, "m": run.result.m,
                    "max_in_inclusion": max_in, "background_mean": bg })
        }
        "2d-sensitivity" => {
            let m = cfg.m0_2d;
            let (grid, j) = sensitivity_rows(cfg, 3, m)?;
            let mut t = Table::new(&["l", "radius_kappa", "radius_kappa_hat"]);
            let mut radii = Vec::new();
            for l in 0..m {
                let rk: Vec<f64> = j.row(l).iter().copied().collect();
                let rh: Vec<f64> = j.row(m + l).iter().copied().collect();
                out.bytes(&format!("sens-kappa-{}.pgm", l + 1), &render_heatmap(&rk, grid.nx, grid.ny)?)?;
                out.bytes(&format!("sens-kappa-hat-{}.pgm", l + 1), &render_heatmap(&rh, grid.nx, grid.ny)?)?;
                let (a, b) = (front_radius(&grid, &rk), front_radius(&grid, &rh));
                t.push(vec![(l + 1).to_string(), fmt_num(a), fmt_num(b)])?;
                radii.push(a);
            }
            out.table("fronts.csv", &t)?;
            json!({ "radius_kappa": radii })
        }
        "2d-shift-sweep" => {
            let mut t = Table::new(&["shift", "cond"]);
            for (s, c) in shift_sweep(cfg, &[20.0, 60.0, 180.0])? {
                t.push_numbers(&[s, c])?;
            }
            out.table("shift-sweep.csv", &t)?;
            json!({})
        }
        other => return Err(HarnessError::UnknownScenario(other.into())),
    };
    let manifest = Manifest {
        scenario: cfg.scenario.clone(),
        config_sha256: sha256_hex(&cfg.canonical_bytes()?),
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_s: start.elapsed().as_secs_f64(),
        files: out.files.clone(),
        summary,
    };
    write_json(&out.dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Writes a (decimated) 1D time series and the transfer data at the family
/// nodes computed from the full-resolution samples.
pub fn synthesize_files(cfg: &ExperimentConfig, stride: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    let d = synthesize_1d(cfg, &cfg.phantom)?;
    let stride = stride.max(1);
    let mut series = Table::new(&["t", "d"]);
    for k in (stride - 1..d.len()).step_by(stride) {
        series.push_numbers(&[d.time(k), d.samples()[k]])?;
    }
    let mut transfer = Table::new(&["s", "y", "dy"]);
    for s in NodeFamily::by_name(&cfg.family, cfg.m0)?.points() {
        transfer.push_numbers(&[s, laplace_transform(&d, s)?, laplace_derivative(&d, s)?])?;
    }
    let (a, b) = (dir.join("data.csv"), dir.join("transfer.csv"));
    series.write(&a)?;
    transfer.write(&b)?;
    Ok(vec![a, b])
}

/// Reads a `t,d` series written by [`synthesize_files`] (uniform step).
pub fn read_series(path: &Path) -> Result<TimeSeries> {
    let t = Table::read(path)?;
    let times = t.column_f64("t")?;
    let values = t.column_f64("d")?;
    let step = match times.as_slice() {
        [first, ..] => *first,
        [] => return Err(HarnessError::Config(format!("{} holds no samples", path.display()))),
    };
    Ok(TimeSeries::new(step, values)?)
}
