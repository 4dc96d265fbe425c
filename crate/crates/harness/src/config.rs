//! Experiment configuration shared by the CLI, config files and scenarios.

use std::path::PathBuf;

use rominv::inversion::{KktSolver, Weighting};
use rominv::sensitivity::Output;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    /// Fine (data) and coarse (inversion) 1D grid sizes.
    pub fine_n: usize,
    pub coarse_n: usize,
    /// Grid size for the optimal-grid, ratio and Jacobian-conditioning figures.
    pub reference_n: usize,
    pub fine_2d: (usize, usize),
    pub coarse_2d: (usize, usize),
    pub phantom: String,
    pub noise: f64,
    pub seed: u64,
    pub m0: usize,
    /// Reduced model size per source in 2D.
    pub m0_2d: usize,
    pub family: String,
    /// Interpolation node in 2D.
    pub shift: f64,
    pub n_gn: Option<usize>,
    pub weighting: Option<Weighting>,
    pub solver: KktSolver,
    pub output: Output,
    pub t_end: f64,
    pub h_t: f64,
    pub n_d: usize,
    /// Shift the 2D target by the unit-medium discrepancy between the data
    /// grid and the inversion grid.
    pub calibrate_2d: bool,
    /// Realizations per noise level in the m-ladder table.
    pub realizations: usize,
    pub save_iterates: bool,
    pub out_dir: PathBuf,
    /// Where reference continued fractions are cached; none disables it.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: String::new(),
            fine_n: 299,
            coarse_n: 199,
            reference_n: 1999,
            fine_2d: (120, 40),
            coarse_2d: (90, 30),
            phantom: "rq".into(),
            noise: 0.0,
            seed: 0,
            m0: 6,
            m0_2d: 5,
            family: "zolotarev".into(),
            shift: 60.0,
            n_gn: None,
            weighting: None,
            solver: KktSolver::TruncatedSvd { discard: 0 },
            output: Output::LogKappa,
            t_end: 100.0,
            h_t: 1e-5,
            n_d: 8,
            calibrate_2d: true,
            realizations: 10,
            save_iterates: false,
            out_dir: PathBuf::from("out"),
            cache_dir: Some(PathBuf::from("out/cache")),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fine_n == self.coarse_n {
            return Err(HarnessError::Config(format!(
                "fine and coarse 1D grids coincide (N = {}); data would be generated on the inversion grid",
                self.fine_n
            )));
        }
        if self.fine_2d == self.coarse_2d {
            return Err(HarnessError::Config(format!(
                "fine and coarse 2D grids coincide ({:?})",
                self.fine_2d
            )));
        }
        if self.m0 == 0 || self.m0_2d == 0 || self.n_d == 0 {
            return Err(HarnessError::Config("m0, m0_2d and n_d must be positive".into()));
        }
        if !(self.h_t > 0.0 && self.t_end >= self.h_t) {
            return Err(HarnessError::Config(format!(
                "need 0 < h_t <= t_end, got {} and {}",
                self.h_t, self.t_end
            )));
        }
        Ok(())
    }

    /// Canonical bytes used for the manifest hash.
    pub fn canonical_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    /// Applies the keys of a JSON object on top of this configuration.
    pub fn merge_json(&self, overrides: &serde_json::Value) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        match (base.as_object_mut(), overrides.as_object()) {
            (Some(b), Some(o)) => {
                for (k, v) in o {
                    b.insert(k.clone(), v.clone());
                }
            }
            _ => return Err(HarnessError::Config("config file must hold a JSON object".into())),
        }
        Ok(serde_json::from_value(base)?)
    }
}
