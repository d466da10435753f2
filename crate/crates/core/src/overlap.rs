//! Shape overlap between the current ensemble and a target: the best
//! cell-wise agreement over the eight lattice symmetries and all
//! translations, found by zero-padded FFT cross-correlation.

use crate::geometry::TransformId;
use crate::sim::GridImage;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OverlapError {
    #[error("correlation peak {value} is not within {tolerance} of an integer")]
    RoundingGuard { value: f64, tolerance: f64 },
    #[error("images must share one square canvas (got {a:?} and {b:?})")]
    CanvasMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapResult {
    pub overlap: usize,
    pub best_transform: TransformId,
    /// Translation `(dx, dy)` carrying the transformed current image onto the target.
    pub best_shift: (i32, i32),
}

/// Transform both channels of a square image about the canvas centre.
pub fn apply_transform(image: &GridImage, t: TransformId) -> GridImage {
    assert_eq!(image.width, image.height, "transforms need a square canvas");
    let s = image.width;
    let mut out = GridImage::empty(s, image.origin);
    for row in 0..s {
        for col in 0..s {
            let (c2, r2) = transform_pixel(col, row, s, t);
            let (src, dst) = (image.offset(col, row), out.offset(c2, r2));
            out.binary[dst] = image.binary[src];
            out.index[dst] = image.index[src];
        }
    }
    out
}

fn transform_pixel(col: usize, row: usize, side: usize, t: TransformId) -> (usize, usize) {
    let last = side - 1;
    let (mut c, mut r) = (col, row);
    if t.mirrored {
        c = last - c;
    }
    for _ in 0..t.rotation.quarter_turns() {
        (c, r) = (last - r, c);
    }
    (c, r)
}

fn check_canvases(a: &GridImage, b: &GridImage) -> Result<usize, OverlapError> {
    if a.width != a.height || (a.width, a.height) != (b.width, b.height) {
        return Err(OverlapError::CanvasMismatch {
            a: (a.width, a.height),
            b: (b.width, b.height),
        });
    }
    Ok(a.width)
}

/// Smallest 2-3-5-smooth length ≥ `n`.
fn fft_len(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut k = m;
            for p in [2, 3, 5] {
                while k % p == 0 {
                    k /= p;
                }
            }
            k == 1
        })
        .expect("smooth numbers are unbounded")
}

/// FFT workspace for one canvas size.
struct Correlator {
    side: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Correlator {
    fn new(side: usize) -> Self {
        let len = fft_len(2 * side - 1);
        let mut planner = FftPlanner::new();
        Self {
            side,
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    fn spectrum(&self, image: &GridImage) -> Vec<Complex64> {
        let p = self.len;
        let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
        for row in 0..self.side {
            for col in 0..self.side {
                buf[row * p + col].re = image.binary[image.offset(col, row)] as f64;
            }
        }
        self.transform_2d(&mut buf, &self.forward);
        buf
    }

    fn transform_2d(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let p = self.len;
        fft.process(buf);
        let mut col = vec![Complex64::new(0.0, 0.0); p];
        for c in 0..p {
            for r in 0..p {
                col[r] = buf[r * p + c];
            }
            fft.process(&mut col);
            for r in 0..p {
                buf[r * p + c] = col[r];
            }
        }
    }

    /// Peak of `corr(s) = Σ_p a(p)·b(p+s)` with lexicographically smallest
    /// shift among ties.
    fn peak(
        &self,
        a: &[Complex64],
        b: &[Complex64],
        count: usize,
    ) -> Result<(usize, (i32, i32)), OverlapError> {
        let p = self.len;
        let mut prod: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x.conj() * y).collect();
        self.transform_2d(&mut prod, &self.inverse);
        let scale = 1.0 / (p * p) as f64;
        let tolerance = 1e-6 * count.max(1) as f64;
        let reach = self.side as i32 - 1;
        let mut best: Option<(usize, (i32, i32))> = None;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                let (ix, iy) = (
                    dx.rem_euclid(p as i32) as usize,
                    dy.rem_euclid(p as i32) as usize,
                );
                let value = prod[iy * p + ix].re * scale;
                let rounded = value.round();
                if (value - rounded).abs() > tolerance {
                    return Err(OverlapError::RoundingGuard { value, tolerance });
                }
                let v = rounded.max(0.0) as usize;
                if best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, (dx, dy)));
                }
            }
        }
        Ok(best.expect("at least one shift"))
    }
}

/// Maximum linear cross-correlation of two binary images and the shift of
/// `b` relative to `a` where it occurs.
pub fn cross_correlate_peak(
    a: &GridImage,
    b: &GridImage,
) -> Result<(usize, (i32, i32)), OverlapError> {
    let side = check_canvases(a, b)?;
    let corr = Correlator::new(side);
    corr.peak(&corr.spectrum(a), &corr.spectrum(b), a.cube_count())
}

/// Overlap search with the target spectrum computed once.
pub struct OverlapEngine {
    corr: Correlator,
    target: GridImage,
    target_spectrum: Vec<Complex64>,
}

impl OverlapEngine {
    pub fn new(target: &GridImage) -> Self {
        assert_eq!(target.width, target.height, "overlap needs a square canvas");
        let corr = Correlator::new(target.width);
        let target_spectrum = corr.spectrum(target);
        Self {
            corr,
            target: target.clone(),
            target_spectrum,
        }
    }

    pub fn target(&self) -> &GridImage {
        &self.target
    }

    pub fn overlap(&self, current: &GridImage) -> Result<OverlapResult, OverlapError> {
        check_canvases(current, &self.target)?;
        let count = current.cube_count();
        let mut best: Option<OverlapResult> = None;
        for t in TransformId::all() {
            let spectrum = self.corr.spectrum(&apply_transform(current, t));
            let (value, shift) = self.corr.peak(&spectrum, &self.target_spectrum, count)?;
            if best.is_none_or(|b| value > b.overlap) {
                best = Some(OverlapResult {
                    overlap: value,
                    best_transform: t,
                    best_shift: shift,
                });
            }
        }
        Ok(best.expect("eight transforms"))
    }
}

/// O(t): best overlap of `current` with `target` over symmetries and shifts.
pub fn overlap(current: &GridImage, target: &GridImage) -> Result<OverlapResult, OverlapError> {
    check_canvases(current, target)?;
    OverlapEngine::new(target).overlap(current)
}

/// Exhaustive reference search, independent of the FFT path.
pub mod reference {
    use super::*;

    /// Count of cells where `a` shifted by `(dx, dy)` meets `b`.
    pub fn shifted_agreement(a: &GridImage, b: &GridImage, dx: i32, dy: i32) -> usize {
        let s = a.width as i32;
        let mut n = 0;
        for row in 0..s {
            for col in 0..s {
                let (c2, r2) = (col + dx, row + dy);
                if c2 < 0 || r2 < 0 || c2 >= s || r2 >= s {
                    continue;
                }
                let av = a.binary[a.offset(col as usize, row as usize)];
                let bv = b.binary[b.offset(c2 as usize, r2 as usize)];
                n += (av & bv) as usize;
            }
        }
        n
    }

    pub fn brute_force_peak(a: &GridImage, b: &GridImage) -> (usize, (i32, i32)) {
        let reach = a.width as i32 - 1;
        let mut best = (0, (-reach, -reach));
        let mut first = true;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                let v = shifted_agreement(a, b, dx, dy);
                if first || v > best.0 {
                    best = (v, (dx, dy));
                    first = false;
                }
            }
        }
        best
    }

    pub fn brute_force_overlap(current: &GridImage, target: &GridImage) -> OverlapResult {
        let mut best: Option<OverlapResult> = None;
        for t in TransformId::all() {
            let (v, shift) = brute_force_peak(&apply_transform(current, t), target);
            if best.is_none_or(|b| v > b.overlap) {
                best = Some(OverlapResult {
                    overlap: v,
                    best_transform: t,
                    best_shift: shift,
                });
            }
        }
        best.expect("eight transforms")
    }
}
