//! Built-in resistivity models.

use rominv::grid::{Grid1D, Grid2D, ResistivityField};

use crate::error::{HarnessError, Result};

pub const PHANTOMS_1D: [&str; 6] = ["one", "rq", "rl", "rj", "rh", "r20"];
pub const PHANTOMS_2D: [&str; 4] = ["one", "corner", "side", "tilted"];

fn piecewise(x: f64, values: [f64; 3]) -> f64 {
    if x < 0.2 {
        values[0]
    } else if x < 0.6 {
        values[1]
    } else {
        values[2]
    }
}

/// Resistivity profile on `(0, 1)` by name.
pub fn profile_1d(name: &str) -> Result<fn(f64) -> f64> {
    Ok(match name {
        "one" => |_| 1.0,
        "rq" => |x| 2.0 - 4.0 * (x - 0.5) * (x - 0.5),
        "rl" => |x| 0.8 * (-100.0 * (x - 0.2) * (x - 0.2)).exp() + x + 1.0,
        "rj" => |x| piecewise(x, [1.0, 2.0, 1.5]),
        "rh" => |x| piecewise(x, [1.0, 5.0, 3.0]),
        // contrast-20 step used to show shape shrinkage of the ratios
        "r20" => |x| piecewise(x, [1.0, 20.0, 1.0]),
        other => return Err(HarnessError::UnknownPhantom(other.into())),
    })
}

/// Jump locations of a 1D profile; empty for smooth ones.
pub fn breaks_1d(name: &str) -> Result<&'static [f64]> {
    profile_1d(name)?;
    Ok(match name {
        "rj" | "rh" | "r20" => &[0.2, 0.6],
        _ => &[],
    })
}

pub fn phantom_1d(name: &str, grid: &Grid1D) -> Result<ResistivityField> {
    Ok(grid.sample(profile_1d(name)?)?)
}

fn inside(x: f64, y: f64, rect: [f64; 4]) -> bool {
    x >= rect[0] && x < rect[1] && y >= rect[2] && y < rect[3]
}

/// Resistivity on `[0, 3] x [0, 1]` by name; depth `x2` grows away from
/// the accessible surface. The inclusions span the aperture `x1 ∈ (1, 2)`.
pub fn profile_2d(name: &str) -> Result<fn(f64, f64) -> f64> {
    Ok(match name {
        "one" => |_, _| 1.0,
        "corner" => |x, y| {
            if inside(x, y, [1.0, 1.5, 0.15, 0.4]) {
                1.5
            } else if inside(x, y, [1.5, 2.0, 0.4, 0.65]) {
                0.66
            } else {
                1.0
            }
        },
        "side" => |x, y| {
            if inside(x, y, [1.0, 1.5, 0.2, 0.5]) {
                1.5
            } else if inside(x, y, [1.5, 2.0, 0.2, 0.5]) {
                0.66
            } else {
                1.0
            }
        },
        "tilted" => |x, y| {
            // slab from (1.0, 0.15) to (2.0, 0.6), thickness 0.12
            let (dx, dy) = (1.0, 0.45);
            let len = f64::hypot(dx, dy);
            let (px, py) = (x - 1.0, y - 0.15);
            let along = (px * dx + py * dy) / len;
            let across = (py * dx - px * dy) / len;
            if (0.0..=len).contains(&along) && across.abs() <= 0.06 {
                2.0
            } else {
                1.0
            }
        },
        other => return Err(HarnessError::UnknownPhantom(other.into())),
    })
}

pub fn phantom_2d(name: &str, grid: &Grid2D) -> Result<ResistivityField> {
    Ok(grid.sample(profile_2d(name)?)?)
}

/// Cells where the phantom differs from the unit background.
pub fn inclusion_mask(name: &str, grid: &Grid2D) -> Result<Vec<bool>> {
    let r = phantom_2d(name, grid)?;
    Ok(r.values().iter().map(|v| (v - 1.0).abs() > 1e-12).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_values() {
        assert_eq!(profile_1d("rq").unwrap()(0.5), 2.0);
        assert_eq!(profile_1d("rj").unwrap()(0.4), 2.0);
        assert_eq!(profile_1d("rj").unwrap()(0.7), 1.5);
        let rh = profile_1d("rh").unwrap();
        assert_eq!(rh(0.4) / rh(0.1), 5.0);
        assert!((profile_1d("rl").unwrap()(0.2) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(profile_1d("rx"), Err(HarnessError::UnknownPhantom(_))));
        assert!(matches!(profile_2d("blob"), Err(HarnessError::UnknownPhantom(_))));
    }

    #[test]
    fn two_rectangle_contrast() {
        let grid = Grid2D::new(90, 30, 3.0, 1.0, (1.0, 2.0), vec![]).unwrap();
        for name in ["corner", "side"] {
            let r = phantom_2d(name, &grid).unwrap();
            let max = r.values().iter().cloned().fold(f64::MIN, f64::max);
            let min = r.values().iter().cloned().fold(f64::MAX, f64::min);
            assert_eq!((min, max), (0.66, 1.5), "{name}");
        }
        let tilted = phantom_2d("tilted", &grid).unwrap();
        let mask = inclusion_mask("tilted", &grid).unwrap();
        assert!(mask.iter().filter(|m| **m).count() > 20);
        assert!(tilted.values().iter().all(|v| *v == 1.0 || *v == 2.0));
    }

    #[test]
    fn tilted_slab_deepens_to_the_right() {
        let f = profile_2d("tilted").unwrap();
        assert_eq!(f(1.05, 0.17), 2.0);
        assert_eq!(f(1.95, 0.58), 2.0);
        assert_eq!(f(1.95, 0.17), 1.0);
    }
}
