//! Rotation-invariant kernel bases from the Reynolds operator.
//!
//! Kernels are `k×k` arrays indexed by offset `(dx, dy)` with
//! `index = (dy + r)·k + (dx + r)`, `r = (k − 1)/2`.

use crate::scalar::Scalar;

/// Offsets of a `k×k` kernel in index order.
pub fn kernel_offsets(k: usize) -> Vec<(i32, i32)> {
    let r = (k / 2) as i32;
    let mut out = Vec::with_capacity(k * k);
    for dy in -r..=r {
        for dx in -r..=r {
            out.push((dx, dy));
        }
    }
    out
}

pub fn offset_index(k: usize, dx: i32, dy: i32) -> usize {
    let r = (k / 2) as i32;
    ((dy + r) as usize) * k + (dx + r) as usize
}

/// Index permutation of a quarter turn: entry at `(dx, dy)` moves to `(−dy, dx)`.
pub fn rotation_permutation(k: usize) -> Vec<usize> {
    kernel_offsets(k)
        .into_iter()
        .map(|(dx, dy)| offset_index(k, -dy, dx))
        .collect()
}

/// Index permutation of the horizontal mirror `(dx, dy) ↦ (−dx, dy)`.
pub fn mirror_permutation(k: usize) -> Vec<usize> {
    kernel_offsets(k)
        .into_iter()
        .map(|(dx, dy)| offset_index(k, -dx, dy))
        .collect()
}

/// `out[perm[i]] = w[i]`.
pub fn permute<T: Copy>(w: &[T], perm: &[usize]) -> Vec<T> {
    let mut out = w.to_vec();
    for (i, &p) in perm.iter().enumerate() {
        out[p] = w[i];
    }
    out
}

pub fn rot90<T: Copy>(w: &[T], k: usize) -> Vec<T> {
    permute(w, &rotation_permutation(k))
}

pub fn mirror_h<T: Copy>(w: &[T], k: usize) -> Vec<T> {
    permute(w, &mirror_permutation(k))
}

/// `R̄ = ¼ Σ_q P^q` as a dense `k²×k²` row-major matrix.
pub fn reynolds_operator(k: usize) -> Vec<f64> {
    group_average(k, false)
}

/// Average over all eight lattice symmetries (rotations and their mirrors).
pub fn mirror_reynolds_operator(k: usize) -> Vec<f64> {
    group_average(k, true)
}

fn group_average(k: usize, with_mirror: bool) -> Vec<f64> {
    let n = k * k;
    let perm = rotation_permutation(k);
    let mirror = mirror_permutation(k);
    let starts: Vec<Vec<usize>> = if with_mirror {
        vec![(0..n).collect(), mirror]
    } else {
        vec![(0..n).collect()]
    };
    let weight = 1.0 / (4 * starts.len()) as f64;
    let mut r = vec![0.0; n * n];
    for mut image in starts {
        for _ in 0..4 {
            for j in 0..n {
                r[image[j] * n + j] += weight;
            }
            image = image.iter().map(|&i| perm[i]).collect();
        }
    }
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantKernelBasis {
    pub k: usize,
    /// Each element is a flattened `k×k` kernel.
    pub basis: Vec<Vec<f64>>,
}

impl InvariantKernelBasis {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// `k²×len` matrix with basis elements as columns.
    pub fn matrix<T: Scalar>(&self) -> Vec<T> {
        let (n, m) = (self.k * self.k, self.len());
        let mut out = vec![T::zero(); n * m];
        for (b, e) in self.basis.iter().enumerate() {
            for (i, &v) in e.iter().enumerate() {
                out[i * m + b] = T::of(v);
            }
        }
        out
    }
}

/// Orthonormal basis of the eigenvalue-1 eigenspace of `R̄`, via Gram-Schmidt
/// over its columns taken centre-out.
pub fn reynolds_basis(k: usize) -> InvariantKernelBasis {
    assert!(k % 2 == 1, "kernel side must be odd, got {k}");
    eigenbasis(k, &reynolds_operator(k))
}

/// Basis of kernels invariant under rotations and mirroring.
pub fn mirror_reynolds_basis(k: usize) -> InvariantKernelBasis {
    assert!(k % 2 == 1, "kernel side must be odd, got {k}");
    eigenbasis(k, &mirror_reynolds_operator(k))
}

fn eigenbasis(k: usize, r: &[f64]) -> InvariantKernelBasis {
    let n = k * k;
    let offsets = kernel_offsets(k);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        let (dx, dy) = offsets[i];
        (dx.abs().max(dy.abs()), dx.abs() + dy.abs(), i)
    });
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for j in order {
        let mut v: Vec<f64> = (0..n).map(|i| r[i * n + j]).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
    }
    InvariantKernelBasis { k, basis }
}

/// `W = Σ ω_i B_i`.
pub fn build_kernel<T: Scalar>(coeffs: &[T], basis: &InvariantKernelBasis) -> Vec<T> {
    assert_eq!(
        coeffs.len(),
        basis.len(),
        "one coefficient per basis element"
    );
    let mut w = vec![T::zero(); basis.k * basis.k];
    for (c, b) in coeffs.iter().zip(&basis.basis) {
        for (wi, &bi) in w.iter_mut().zip(b) {
            *wi = *wi + *c * T::of(bi);
        }
    }
    w
}
