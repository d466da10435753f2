use super::ensemble::Ensemble;
use crate::geometry::CellCoord;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("ensemble of extent {width}x{height} does not fit a canvas of side {side}")]
    DoesNotFit {
        width: i32,
        height: i32,
        side: usize,
    },
}

/// Co-registered occupancy and cube-index images on a square canvas.
///
/// Row-major with row 0 at the bottom, so pixel `(col, row)` is world cell
/// `origin + (col, row)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridImage {
    pub width: usize,
    pub height: usize,
    pub origin: CellCoord,
    pub binary: Vec<u8>,
    pub index: Vec<i32>,
}

impl GridImage {
    pub fn empty(side: usize, origin: CellCoord) -> Self {
        Self {
            width: side,
            height: side,
            origin,
            binary: vec![0; side * side],
            index: vec![-1; side * side],
        }
    }

    #[inline]
    pub fn offset(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn cube_count(&self) -> usize {
        self.binary.iter().map(|&b| b as usize).sum()
    }

    /// Canvas position of every cube, ordered by cube index.
    pub fn cube_positions(&self) -> Vec<(usize, usize)> {
        let n = self.cube_count();
        let mut out = vec![(usize::MAX, usize::MAX); n];
        for row in 0..self.height {
            for col in 0..self.width {
                let idx = self.index[self.offset(col, row)];
                if idx >= 0 {
                    let slot = &mut out[idx as usize];
                    assert_eq!(
                        *slot,
                        (usize::MAX, usize::MAX),
                        "cube {idx} appears twice in index image"
                    );
                    *slot = (col, row);
                }
            }
        }
        assert!(
            out.iter().all(|p| p.0 != usize::MAX),
            "index image does not cover cubes 0..{n}"
        );
        out
    }

    /// Checks the binary/index consistency invariants.
    pub fn is_consistent(&self) -> bool {
        let n = self.cube_count();
        let mut seen = vec![false; n];
        for (b, &i) in self.binary.iter().zip(&self.index) {
            match (*b, i) {
                (0, -1) => {}
                (1, i) if i >= 0 && (i as usize) < n && !seen[i as usize] => {
                    seen[i as usize] = true
                }
                _ => return false,
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Render onto a `side × side` canvas with the bounding box centred (odd
/// leftover margins go to the upper/right side).
pub fn render_images(ensemble: &Ensemble, side: usize) -> Result<GridImage, RenderError> {
    let (lo, hi) = ensemble.bounding_box();
    let (w, h) = (hi.x - lo.x + 1, hi.y - lo.y + 1);
    if w as usize > side || h as usize > side {
        return Err(RenderError::DoesNotFit {
            width: w,
            height: h,
            side,
        });
    }
    let left = (side as i32 - w) / 2;
    let bottom = (side as i32 - h) / 2;
    let origin = CellCoord::new(lo.x - left, lo.y - bottom);
    let mut img = GridImage::empty(side, origin);
    for (i, c) in ensemble.coords().iter().enumerate() {
        let (col, row) = ((c.x - origin.x) as usize, (c.y - origin.y) as usize);
        let o = img.offset(col, row);
        img.binary[o] = 1;
        img.index[o] = i as i32;
    }
    Ok(img)
}

/// Canvas side that fits any connected ensemble of `n` cubes with margin.
pub fn canvas_side_for(n: usize) -> usize {
    2 * n + 1
}
