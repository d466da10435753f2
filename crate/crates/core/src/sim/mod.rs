//! Deterministic 2D lattice simulator for pivoting-cube ensembles.

mod ensemble;
mod image;
mod pivot;
mod sweep;

pub use ensemble::{
    brute_force_connected, resolve_pivot, Connectivity, Ensemble, EnsembleError, MoveCommand,
    MoveOutcome, MoveResolution, NoPivot, PivotKind,
};
pub use image::{canvas_side_for, render_images, GridImage, RenderError};
pub use pivot::{pivot_table, PivotTable};
pub use sweep::{rotated_cell, sweep_oracle, SweepError, SweepSampling, MIN_SWEEP_SAMPLES};

#[cfg(test)]
mod tests;
