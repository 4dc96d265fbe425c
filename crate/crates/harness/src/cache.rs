//! On-disk cache of reference optimal grids, keyed by a content hash of the
//! request.

use std::fs;
use std::path::PathBuf;

use rominv::optgrid::{reference_grid, OptimalGrid};
use rominv::rational::NodeFamily;
use serde::Serialize;

use crate::error::{io_err, Result};
use crate::io::{sha256_hex, write_bytes};

#[derive(Serialize)]
struct Key<'a> {
    family: &'a NodeFamily,
    n: usize,
    version: &'a str,
}

#[derive(Debug, Clone, Default)]
pub struct ReferenceCache {
    dir: Option<PathBuf>,
}

impl ReferenceCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir }
    }

    pub fn key(family: &NodeFamily, n: usize) -> Result<String> {
        let key = Key {
            family,
            n,
            version: env!("CARGO_PKG_VERSION"),
        };
        Ok(sha256_hex(&serde_json::to_vec(&key)?))
    }

    pub fn path(&self, family: &NodeFamily, n: usize) -> Result<Option<PathBuf>> {
        Ok(match &self.dir {
            Some(d) => Some(d.join(format!("refgrid-{}.json", Self::key(family, n)?))),
            None => None,
        })
    }

    pub fn get(&self, family: &NodeFamily, n: usize) -> Result<OptimalGrid> {
        let Some(path) = self.path(family, n)? else {
            return Ok(reference_grid(family, n)?);
        };
        if let Ok(bytes) = fs::read(&path) {
            // a corrupt entry is recomputed and overwritten
            if let Ok(grid) = serde_json::from_slice(&bytes) {
                return Ok(grid);
            }
        }
        let grid = reference_grid(family, n)?;
        // write-then-rename so readers never see a partial file
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        write_bytes(&tmp, &serde_json::to_vec(&grid)?)?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(grid)
    }
}
