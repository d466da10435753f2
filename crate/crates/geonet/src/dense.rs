//! Dense reference implementation on full canvases.
//!
//! Straightforward loops over every pixel; slow, but independent of the
//! sparse engine and used to check it.

use crate::basis::{kernel_offsets, mirror_h};
use crate::net::{Activation, LayerKind, PolicyValueNet};
use crate::scalar::Scalar;
use cubeswarm_core::GridImage;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "data length must equal the shape product"
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    /// `[1, H, W]` occupancy of an image.
    pub fn binary(image: &GridImage) -> Self {
        Self::new(
            vec![1, image.height, image.width],
            image.binary.iter().map(|&b| T::of(b as f64)).collect(),
        )
    }

    /// `[H, W]` mask of an image.
    pub fn mask(image: &GridImage) -> Self {
        Self::new(
            vec![image.height, image.width],
            image.binary.iter().map(|&b| T::of(b as f64)).collect(),
        )
    }

    /// Horizontal mirror of a `[C, H, W]` tensor.
    pub fn mirrored(&self) -> Self {
        let (c, h, w) = dims3(self);
        let mut out = self.clone();
        for ch in 0..c {
            for r in 0..h {
                for col in 0..w {
                    out.data[(ch * h + r) * w + col] = self.data[(ch * h + r) * w + (w - 1 - col)];
                }
            }
        }
        out
    }
}

fn dims3<T>(t: &Tensor<T>) -> (usize, usize, usize) {
    assert_eq!(t.shape.len(), 3, "expected a [C, H, W] tensor");
    (t.shape[0], t.shape[1], t.shape[2])
}

/// Reorders `[k², cin, cout]` kernels into a `[cout, cin, k, k]` tensor.
pub fn kernel_tensor<T: Scalar>(k: usize, cin: usize, cout: usize, flat: &[T]) -> Tensor<T> {
    let k2 = k * k;
    let mut t = Tensor::zeros(vec![cout, cin, k, k]);
    for d in 0..k2 {
        for ci in 0..cin {
            for co in 0..cout {
                t.data[(co * cin + ci) * k2 + d] = flat[(d * cin + ci) * cout + co];
            }
        }
    }
    t
}

/// Horizontally mirrors every kernel of a `[cout, cin, k, k]` tensor.
pub fn mirror_kernels<T: Scalar>(kernels: &Tensor<T>) -> Tensor<T> {
    let k = kernels.shape[2];
    let mut out = kernels.clone();
    for (dst, src) in out
        .data
        .chunks_exact_mut(k * k)
        .zip(kernels.data.chunks_exact(k * k))
    {
        dst.copy_from_slice(&mirror_h(src, k));
    }
    out
}

/// Zero-padded cross-correlation `Σ_d K(d)·x(p + d)` without bias.
fn correlate<T: Scalar>(x: &Tensor<T>, kernels: &Tensor<T>) -> Tensor<T> {
    let (cin, h, w) = dims3(x);
    let (cout, kcin, k) = (kernels.shape[0], kernels.shape[1], kernels.shape[2]);
    assert_eq!(kcin, cin, "kernel input channels");
    let offsets = kernel_offsets(k);
    let mut out = Tensor::zeros(vec![cout, h, w]);
    for co in 0..cout {
        for r in 0..h as i32 {
            for c in 0..w as i32 {
                let mut acc = T::zero();
                for ci in 0..cin {
                    for (d, &(dx, dy)) in offsets.iter().enumerate() {
                        let (rr, cc) = (r + dy, c + dx);
                        if rr < 0 || cc < 0 || rr >= h as i32 || cc >= w as i32 {
                            continue;
                        }
                        let xv = x.data[(ci * h + rr as usize) * w + cc as usize];
                        acc = acc + kernels.data[(co * cin + ci) * k * k + d] * xv;
                    }
                }
                out.data[(co * h + r as usize) * w + c as usize] = acc;
            }
        }
    }
    out
}

fn finish<T: Scalar>(mut t: Tensor<T>, bias: &[T], mask: &Tensor<T>, act: Activation) -> Tensor<T> {
    let (c, h, w) = dims3(&t);
    assert_eq!(mask.shape, vec![h, w], "mask shape");
    for ch in 0..c {
        for p in 0..h * w {
            let v = &mut t.data[ch * h * w + p];
            *v = act.apply(*v + bias[ch]) * mask.data[p];
        }
    }
    t
}

/// Convolution, bias, activation, then multiplication by the mask.
pub fn masked_conv<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &[T],
    mask: &Tensor<T>,
    act: Activation,
) -> Tensor<T> {
    finish(correlate(x, kernels), bias, mask, act)
}

/// `x⁰ = W∗x + b`, `y⁰ = M_H(W)∗x + b`.
pub fn mr_first_layer<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &[T],
    mask: &Tensor<T>,
    act: Activation,
) -> (Tensor<T>, Tensor<T>) {
    let x0 = masked_conv(x, kernels, bias, mask, act);
    let y0 = masked_conv(x, &mirror_kernels(kernels), bias, mask, act);
    (x0, y0)
}

/// `x¹ = ½(W₀∗x + W₁∗y) + b`, `y¹ = ½(W₁∗x + W₀∗y) + b`.
#[allow(clippy::too_many_arguments)]
pub fn mr_hidden_layer<T: Scalar>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    w0: &Tensor<T>,
    w1: &Tensor<T>,
    bias: &[T],
    mask: &Tensor<T>,
    act: Activation,
) -> (Tensor<T>, Tensor<T>) {
    let half = T::of(0.5);
    let (a, b, c, d) = (
        correlate(x, w0),
        correlate(y, w1),
        correlate(x, w1),
        correlate(y, w0),
    );
    let mix = |p: &Tensor<T>, q: &Tensor<T>| {
        Tensor::new(
            p.shape.clone(),
            p.data
                .iter()
                .zip(&q.data)
                .map(|(u, v)| (*u + *v) * half)
                .collect(),
        )
    };
    (
        finish(mix(&a, &b), bias, mask, act),
        finish(mix(&c, &d), bias, mask, act),
    )
}

/// Per-cube `(CW, CCW)` logits: a 1×1 map to two channels gathered through
/// the index image. `weight` is `[C, 2]`.
pub fn action_head<T: Scalar>(
    features: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    index: &GridImage,
) -> Vec<T> {
    let (c, h, w) = dims3(features);
    let positions = index.cube_positions();
    let mut out = Vec::with_capacity(2 * positions.len());
    for (col, row) in positions {
        let p = row * w + col;
        for o in 0..2 {
            let mut acc = bias[o];
            for ch in 0..c {
                acc = acc + weight[ch * 2 + o] * features.data[ch * h * w + p];
            }
            out.push(acc);
        }
    }
    out
}

/// Paired head: `o₀ = ½(R₀x + R₁y) + b`, `o₁ = ½(R₁x + R₀y) + b`.
pub fn action_head_mr<T: Scalar>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    r0: &[T],
    r1: &[T],
    bias: T,
    index: &GridImage,
) -> Vec<T> {
    let (c, h, w) = dims3(x);
    let half = T::of(0.5);
    let mut out = Vec::new();
    for (col, row) in index.cube_positions() {
        let p = row * w + col;
        let (mut a, mut b) = (T::zero(), T::zero());
        for ch in 0..c {
            let (xv, yv) = (x.data[ch * h * w + p], y.data[ch * h * w + p]);
            a = a + r0[ch] * xv + r1[ch] * yv;
            b = b + r1[ch] * xv + r0[ch] * yv;
        }
        out.push(a * half + bias);
        out.push(b * half + bias);
    }
    out
}

/// Masked mean of the features followed by `w·f + b`.
pub fn value_head<T: Scalar>(features: &Tensor<T>, mask: &Tensor<T>, weight: &[T], bias: T) -> T {
    let (c, h, w) = dims3(features);
    let count: T = mask.data.iter().copied().sum();
    assert!(count > T::zero(), "value head needs a non-empty mask");
    let mut v = bias;
    for ch in 0..c {
        let s: T = (0..h * w)
            .map(|p| features.data[ch * h * w + p] * mask.data[p])
            .sum();
        v = v + weight[ch] * s / count;
    }
    v
}

/// Full network on a canvas, composed from the dense ops above.
pub fn dense_forward<T: Scalar>(net: &PolicyValueNet<T>, image: &GridImage) -> (Vec<T>, T) {
    let act = net.config().activation;
    let mask = Tensor::mask(image);
    let mut x = Tensor::binary(image);
    let mut y: Option<Tensor<T>> = None;
    let convs = net
        .layer_specs()
        .iter()
        .filter(|s| !matches!(s.kind, LayerKind::ActionHead | LayerKind::ValueHead));
    for (i, s) in convs.enumerate() {
        let ks: Vec<Tensor<T>> = net
            .conv_kernels(i)
            .iter()
            .map(|k| kernel_tensor(s.k, s.cin, s.cout, k))
            .collect();
        let bias = net.conv_bias(i);
        match s.kind {
            LayerKind::ReferenceConv | LayerKind::RotInvConv => {
                x = masked_conv(&x, &ks[0], bias, &mask, act)
            }
            LayerKind::MirrorRotFirst => {
                let (a, b) = mr_first_layer(&x, &ks[0], bias, &mask, act);
                x = a;
                y = Some(b);
            }
            LayerKind::MirrorRotHidden | LayerKind::PointwiseMix => {
                let (a, b) =
                    mr_hidden_layer(&x, y.as_ref().unwrap(), &ks[0], &ks[1], bias, &mask, act);
                x = a;
                y = Some(b);
            }
            LayerKind::ActionHead | LayerKind::ValueHead => unreachable!(),
        }
    }
    let (aw, ab) = net.action_params();
    let (vw, vb) = net.value_params();
    match y {
        None => (
            action_head(&x, aw, ab, image),
            value_head(&x, &mask, vw, vb),
        ),
        Some(y) => {
            let c = net.config().latent();
            let logits = action_head_mr(&x, &y, &aw[..c], &aw[c..], ab[0], image);
            let avg = Tensor::new(
                x.shape.clone(),
                x.data
                    .iter()
                    .zip(&y.data)
                    .map(|(a, b)| (*a + *b) * T::of(0.5))
                    .collect(),
            );
            (logits, value_head(&avg, &mask, vw, vb))
        }
    }
}
