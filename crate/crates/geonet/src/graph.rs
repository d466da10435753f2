//! Sparse layout of a batch of ensembles for convolution.
//!
//! Every masked layer is exactly zero off the occupied cells, so a
//! convolution only needs the occupied cells and, per kernel offset, the
//! list of occupied (destination, source) pairs. Features are stored as a
//! row per cube, cubes of sample `s` at rows `offsets[s]..offsets[s + 1]`
//! in cube-index order.

use crate::basis::{kernel_offsets, offset_index};
use cubeswarm_core::{CellCoord, GridImage};
use std::collections::HashMap;

#[derive(Clone, Debug)]
pub struct CellBatch {
    offsets: Vec<usize>,
    radius: usize,
    /// Indexed by kernel offset for side `2·radius + 1`; the centre entry is
    /// left empty because it is the identity.
    pairs: Vec<Vec<(u32, u32)>>,
}

impl CellBatch {
    pub fn from_coords<C: AsRef<[CellCoord]>>(samples: &[C], radius: usize) -> Self {
        let side = 2 * radius + 1;
        let offsets_k = kernel_offsets(side);
        let mut pairs = vec![Vec::new(); side * side];
        let mut offsets = vec![0];
        let mut base = 0usize;
        for sample in samples {
            let cells = sample.as_ref();
            assert!(!cells.is_empty(), "empty sample");
            let rows: HashMap<CellCoord, usize> = cells
                .iter()
                .enumerate()
                .map(|(i, &c)| (c, base + i))
                .collect();
            assert_eq!(rows.len(), cells.len(), "duplicate cell in sample");
            for (i, c) in cells.iter().enumerate() {
                for (d, &(dx, dy)) in offsets_k.iter().enumerate() {
                    if (dx, dy) == (0, 0) {
                        continue;
                    }
                    if let Some(&j) = rows.get(&c.offset(dx, dy)) {
                        pairs[d].push(((base + i) as u32, j as u32));
                    }
                }
            }
            base += cells.len();
            offsets.push(base);
        }
        Self {
            offsets,
            radius,
            pairs,
        }
    }

    /// Cube `i` sits at its canvas position in image pixel coordinates.
    pub fn from_images(images: &[&GridImage], radius: usize) -> Self {
        let coords: Vec<Vec<CellCoord>> = images
            .iter()
            .map(|img| {
                img.cube_positions()
                    .into_iter()
                    .map(|(c, r)| CellCoord::new(c as i32, r as i32))
                    .collect()
            })
            .collect();
        Self::from_coords(&coords, radius)
    }

    pub fn samples(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn rows(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn sample_rows(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Occupied `(destination, source)` pairs at displacement `(dx, dy)`,
    /// excluding the centre.
    pub fn pairs(&self, dx: i32, dy: i32) -> &[(u32, u32)] {
        let r = self.radius as i32;
        assert!(
            dx.abs() <= r && dy.abs() <= r,
            "offset ({dx}, {dy}) outside batch radius {r}"
        );
        &self.pairs[offset_index(2 * self.radius + 1, dx, dy)]
    }
}
