//! Continuous sweep sampler: rotates the unit square about a corner and
//! records every cell whose interior it enters. This is the ground truth the
//! discrete pivot tables are generated against and tested with.

use crate::geometry::{CellCoord, Direction, LatticePoint};
use std::collections::BTreeSet;
use thiserror::Error;

/// Lowest accepted `angle_steps × boundary_points` product.
pub const MIN_SWEEP_SAMPLES: usize = 10_000;

/// Distance from a lattice line below which a point counts as on the line.
const INTERIOR_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SweepError {
    #[error("sweep sampling too coarse: {got} samples, need at least {MIN_SWEEP_SAMPLES}")]
    InsufficientSamples { got: usize },
    #[error("pivot {pivot:?} is not a corner of cell {cell}")]
    NotACorner {
        cell: CellCoord,
        pivot: LatticePoint,
    },
    #[error("sweep angle must be 90 or 180 degrees, got {0}")]
    BadAngle(u32),
}

#[derive(Clone, Copy, Debug)]
pub struct SweepSampling {
    /// Number of angle samples over the full rotation (inclusive of both ends).
    pub angle_steps: usize,
    /// Number of samples along each of the four square edges.
    pub points_per_edge: usize,
}

impl Default for SweepSampling {
    fn default() -> Self {
        Self {
            angle_steps: 1441,
            points_per_edge: 64,
        }
    }
}

impl SweepSampling {
    pub fn total(&self) -> usize {
        self.angle_steps * self.points_per_edge * 4
    }
}

/// Cells (excluding `start`) whose interior is entered by the unit square
/// occupying `start` while it rotates by `total_angle` degrees about
/// `pivot`.
pub fn sweep_oracle(
    start: CellCoord,
    pivot: LatticePoint,
    total_angle: u32,
    direction: Direction,
    sampling: SweepSampling,
) -> Result<BTreeSet<CellCoord>, SweepError> {
    if sampling.total() < MIN_SWEEP_SAMPLES
        || sampling.angle_steps < 2
        || sampling.points_per_edge < 1
    {
        return Err(SweepError::InsufficientSamples {
            got: sampling.total(),
        });
    }
    if total_angle != 90 && total_angle != 180 {
        return Err(SweepError::BadAngle(total_angle));
    }
    let (px, py) = pivot;
    if !(px == start.x || px == start.x + 1) || !(py == start.y || py == start.y + 1) {
        return Err(SweepError::NotACorner { cell: start, pivot });
    }

    // Boundary points of the square, relative to the pivot.
    let m = sampling.points_per_edge;
    let (x0, y0) = ((start.x - px) as f64, (start.y - py) as f64);
    let mut boundary = Vec::with_capacity(4 * m);
    for i in 0..m {
        let t = (i as f64 + 0.5) / m as f64;
        boundary.push((x0 + t, y0));
        boundary.push((x0 + 1.0, y0 + t));
        boundary.push((x0 + 1.0 - t, y0 + 1.0));
        boundary.push((x0, y0 + 1.0 - t));
    }

    let sign = match direction {
        Direction::Ccw => 1.0,
        Direction::Cw => -1.0,
    };
    let total = (total_angle as f64).to_radians();
    let mut cells = BTreeSet::new();
    for s in 0..sampling.angle_steps {
        let theta = sign * total * s as f64 / (sampling.angle_steps - 1) as f64;
        let (sin, cos) = theta.sin_cos();
        for &(bx, by) in &boundary {
            let wx = px as f64 + bx * cos - by * sin;
            let wy = py as f64 + bx * sin + by * cos;
            if let Some(cell) = interior_cell(wx, wy) {
                if cell != start {
                    cells.insert(cell);
                }
            }
        }
    }
    Ok(cells)
}

fn interior_cell(x: f64, y: f64) -> Option<CellCoord> {
    let (fx, fy) = (x.floor(), y.floor());
    let (rx, ry) = (x - fx, y - fy);
    if rx > INTERIOR_EPS && rx < 1.0 - INTERIOR_EPS && ry > INTERIOR_EPS && ry < 1.0 - INTERIOR_EPS
    {
        Some(CellCoord::new(fx as i32, fy as i32))
    } else {
        None
    }
}

/// Cell occupied by the square after a rigid rotation of `angle` degrees.
pub fn rotated_cell(
    start: CellCoord,
    pivot: LatticePoint,
    angle: u32,
    direction: Direction,
) -> CellCoord {
    let sign = match direction {
        Direction::Ccw => 1.0,
        Direction::Cw => -1.0,
    };
    let theta = sign * (angle as f64).to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = start.x as f64 + 0.5 - pivot.0 as f64;
    let cy = start.y as f64 + 0.5 - pivot.1 as f64;
    let wx = pivot.0 as f64 + cx * cos - cy * sin;
    let wy = pivot.1 as f64 + cx * sin + cy * cos;
    CellCoord::new(wx.floor() as i32, wy.floor() as i32)
}
