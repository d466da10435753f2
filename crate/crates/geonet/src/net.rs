//! Policy/value network: layer stack, parameters, batched forward and
//! reverse-mode gradients over a [`CellBatch`].

use crate::basis::{
    kernel_offsets, mirror_permutation, mirror_reynolds_basis, reynolds_basis, InvariantKernelBasis,
};
use crate::graph::CellBatch;
use crate::scalar::{gemm, Scalar};
use cubeswarm_core::GridImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("parameter vector has {got} values, network needs {expected}")]
    ParamCount { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    /// Free kernels.
    Cnn,
    /// Rotation-invariant kernels, with mirror-alternating channel pairs
    /// when the kernel side allows it.
    MrCnn,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Cnn => "cnn",
            Arch::MrCnn => "mr-cnn",
        })
    }
}

impl FromStr for Arch {
    type Err = NetError;
    fn from_str(s: &str) -> Result<Self, NetError> {
        match s {
            "cnn" => Ok(Arch::Cnn),
            "mr-cnn" => Ok(Arch::MrCnn),
            _ => Err(NetError::Config(format!(
                "unknown arch {s:?} (cnn, mr-cnn)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = NetError;
    fn from_str(s: &str) -> Result<Self, NetError> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            _ => Err(NetError::Config(format!("unknown activation {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub arch: Arch,
    pub kernel: usize,
    /// `[1, c₁, …, c_L, latent]`: input channels, the `L` k×k layer widths
    /// and the width of the final 1×1 stage. Per channel group for
    /// mirror-paired nets.
    pub widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub mirror: bool,
}

impl NetConfig {
    /// Widths used for 1 to 4 k×k layers.
    pub fn default_widths(layers: usize) -> Result<Vec<usize>, NetError> {
        Ok(match layers {
            1 => vec![1, 8192, 32],
            2 => vec![1, 64, 512, 32],
            3 => vec![1, 64, 256, 128, 32],
            4 => vec![1, 64, 128, 128, 64, 32],
            _ => {
                return Err(NetError::Config(format!(
                    "no default widths for {layers} layers"
                )))
            }
        })
    }

    /// Default widths; mirror pairing whenever the arch and kernel allow it.
    pub fn new(arch: Arch, kernel: usize, layers: usize) -> Result<Self, NetError> {
        let mirror = arch == Arch::MrCnn && kernel != 3;
        Self::with_widths(
            arch,
            kernel,
            Self::default_widths(layers)?,
            Activation::Relu,
            mirror,
        )
    }

    pub fn with_widths(
        arch: Arch,
        kernel: usize,
        widths: Vec<usize>,
        activation: Activation,
        mirror: bool,
    ) -> Result<Self, NetError> {
        let cfg = Self {
            arch,
            kernel,
            widths,
            activation,
            mirror,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.kernel % 2 == 0 {
            return bad(format!("kernel side must be odd, got {}", self.kernel));
        }
        if self.widths.len() < 3 {
            return bad("widths need an input, at least one conv layer and a latent width".into());
        }
        if self.widths[0] != 1 {
            return bad(format!("input width must be 1, got {}", self.widths[0]));
        }
        if self.widths.contains(&0) {
            return bad("zero width".into());
        }
        if self.mirror {
            if self.arch != Arch::MrCnn {
                return bad("mirror pairing requires the mr-cnn arch".into());
            }
            if self.kernel == 3 {
                return bad("3x3 rotation-invariant kernels cannot carry mirror pairing; use k = 1 or k >= 5".into());
            }
        }
        Ok(())
    }

    pub fn conv_layers(&self) -> usize {
        self.widths.len() - 2
    }

    /// Chebyshev radius of the information a cube's outputs depend on.
    pub fn receptive_radius(&self) -> usize {
        self.conv_layers() * (self.kernel / 2)
    }

    pub fn latent(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let (k, w, l) = (self.kernel, &self.widths, self.conv_layers());
        let mut out = Vec::new();
        let spec = |kind, k, cin, cout, paired| LayerSpec {
            kind,
            k,
            cin,
            cout,
            paired,
        };
        if self.mirror {
            out.push(spec(LayerKind::MirrorRotFirst, k, 1, w[1], true));
            for i in 1..l {
                out.push(spec(LayerKind::MirrorRotHidden, k, w[i], w[i + 1], true));
            }
            out.push(spec(LayerKind::PointwiseMix, 1, w[l], w[l + 1], true));
        } else {
            let kind = match self.arch {
                Arch::Cnn => LayerKind::ReferenceConv,
                Arch::MrCnn => LayerKind::RotInvConv,
            };
            for i in 0..l {
                out.push(spec(kind, k, w[i], w[i + 1], false));
            }
            out.push(spec(LayerKind::ReferenceConv, 1, w[l], w[l + 1], false));
        }
        let c = self.latent();
        out.push(spec(LayerKind::ActionHead, 1, c, 2, self.mirror));
        out.push(spec(LayerKind::ValueHead, 1, c, 1, self.mirror));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    ReferenceConv,
    RotInvConv,
    MirrorRotFirst,
    MirrorRotHidden,
    PointwiseMix,
    ActionHead,
    ValueHead,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
    /// Operates on an (x, y) channel pair.
    pub paired: bool,
}

/// Number of rotation orbits of a `k×k` grid.
pub fn orbit_count(k: usize) -> usize {
    (k * k - 1) / 4 + 1
}

/// Number of orbits of a `k×k` grid under rotations and mirroring.
pub fn symmetric_orbit_count(k: usize) -> usize {
    // Pairs (a, b) with 0 ≤ b ≤ a ≤ r.
    let r = k / 2 + 1;
    r * (r + 1) / 2
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        let (k2, nb, ns) = (
            self.k * self.k,
            orbit_count(self.k),
            symmetric_orbit_count(self.k),
        );
        match self.kind {
            LayerKind::ReferenceConv => k2 * self.cin * self.cout + self.cout,
            LayerKind::RotInvConv | LayerKind::MirrorRotFirst => {
                nb * self.cin * self.cout + self.cout
            }
            LayerKind::MirrorRotHidden => 2 * ns * self.cin * self.cout + self.cout,
            LayerKind::PointwiseMix => 2 * self.cin * self.cout + self.cout,
            LayerKind::ActionHead if self.paired => 2 * self.cin + 1,
            LayerKind::ActionHead => 2 * self.cin + 2,
            LayerKind::ValueHead => self.cin + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug)]
enum KernelSrc {
    /// `[k², cin, cout]` entries.
    Free(usize),
    /// `[basis, cin, cout]` coefficients of rotation-invariant kernels.
    Invariant(usize),
    /// `[basis, cin, cout]` coefficients of kernels that are also mirror
    /// symmetric.
    Symmetric(usize),
}

#[derive(Clone, Debug)]
struct Conv {
    spec: LayerSpec,
    kernels: Vec<KernelSrc>,
    bias: usize,
}

#[derive(Clone, Debug)]
struct Heads {
    action_w: usize,
    action_b: usize,
    value_w: usize,
    value_b: usize,
}

/// Activations kept by [`PolicyValueNet::forward`] for the backward pass.
#[derive(Clone, Debug)]
enum Act<T> {
    One(Vec<T>),
    Two(Vec<T>, Vec<T>),
}

#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    /// `2·rows` entries: row `g` holds the CW logit at `2g` and the CCW logit
    /// at `2g + 1`.
    pub logits: Vec<T>,
    /// One value per sample.
    pub values: Vec<T>,
    acts: Vec<Act<T>>,
    kernels: Vec<Vec<Vec<T>>>,
    pooled: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn sample_logits(&self, batch: &CellBatch, s: usize) -> &[T] {
        let r = batch.sample_rows(s);
        &self.logits[2 * r.start..2 * r.end]
    }
}

#[derive(Clone, Debug)]
pub struct PolicyValueNet<T: Scalar> {
    config: NetConfig,
    specs: Vec<LayerSpec>,
    convs: Vec<Conv>,
    heads: Heads,
    params: Vec<T>,
    param_specs: Vec<ParamSpec>,
    basis: InvariantKernelBasis,
    basis_matrix: Vec<T>,
    sym_basis: InvariantKernelBasis,
    sym_matrix: Vec<T>,
}

impl<T: Scalar> PolicyValueNet<T> {
    /// Zero-initialised network.
    pub fn zeros(config: NetConfig) -> Result<Self, NetError> {
        config.validate()?;
        let specs = config.layer_specs();
        let mut param_specs = Vec::new();
        let mut add = |name: String, shape: Vec<usize>| {
            let offset = param_specs
                .last()
                .map_or(0, |p: &ParamSpec| p.offset + p.len());
            param_specs.push(ParamSpec {
                name,
                shape,
                offset,
            });
            offset
        };
        let nb_main = orbit_count(config.kernel);
        let nb_sym = symmetric_orbit_count(config.kernel);
        let mut convs = Vec::new();
        let mut heads = Heads {
            action_w: 0,
            action_b: 0,
            value_w: 0,
            value_b: 0,
        };
        for (i, s) in specs.iter().enumerate() {
            let p = format!("conv{i}");
            let (cin, cout, k2) = (s.cin, s.cout, s.k * s.k);
            let kernels = match s.kind {
                LayerKind::ReferenceConv => vec![KernelSrc::Free(add(
                    format!("{p}.weight"),
                    vec![k2, cin, cout],
                ))],
                LayerKind::RotInvConv | LayerKind::MirrorRotFirst => {
                    vec![KernelSrc::Invariant(add(
                        format!("{p}.omega"),
                        vec![nb_main, cin, cout],
                    ))]
                }
                LayerKind::MirrorRotHidden => vec![
                    KernelSrc::Symmetric(add(format!("{p}.omega0"), vec![nb_sym, cin, cout])),
                    KernelSrc::Symmetric(add(format!("{p}.omega1"), vec![nb_sym, cin, cout])),
                ],
                LayerKind::PointwiseMix => vec![
                    KernelSrc::Free(add(format!("{p}.weight0"), vec![1, cin, cout])),
                    KernelSrc::Free(add(format!("{p}.weight1"), vec![1, cin, cout])),
                ],
                LayerKind::ActionHead => {
                    if s.paired {
                        heads.action_w = add("action.r".into(), vec![2, cin]);
                        heads.action_b = add("action.bias".into(), vec![1]);
                    } else {
                        heads.action_w = add("action.weight".into(), vec![cin, 2]);
                        heads.action_b = add("action.bias".into(), vec![2]);
                    }
                    continue;
                }
                LayerKind::ValueHead => {
                    heads.value_w = add("value.weight".into(), vec![cin]);
                    heads.value_b = add("value.bias".into(), vec![1]);
                    continue;
                }
            };
            let bias = add(format!("{p}.bias"), vec![cout]);
            convs.push(Conv {
                spec: *s,
                kernels,
                bias,
            });
        }
        let total = param_specs.last().map_or(0, |p| p.offset + p.len());
        let basis = reynolds_basis(config.kernel);
        let basis_matrix = basis.matrix();
        let sym_basis = mirror_reynolds_basis(config.kernel);
        let sym_matrix = sym_basis.matrix();
        Ok(Self {
            config,
            specs,
            convs,
            heads,
            params: vec![T::zero(); total],
            param_specs,
            basis,
            basis_matrix,
            sym_basis,
            sym_matrix,
        })
    }

    /// Uniform fan-in initialisation: free weights in `±1/√(cin·k²)`,
    /// invariant coefficients in `±1/√(cin·basis)`, biases zero, the action
    /// head scaled down so the initial policy is close to uniform over legal
    /// moves.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self, NetError> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for ps in net.param_specs.clone() {
            let bound = if ps.name.ends_with(".bias") {
                0.0
            } else if ps.name.starts_with("action.") {
                0.01 / (ps.shape[if ps.name == "action.r" { 1 } else { 0 }] as f64).sqrt()
            } else if ps.name.starts_with("value.") {
                1.0 / (ps.shape[0] as f64).sqrt()
            } else {
                // [taps, cin, cout]
                1.0 / ((ps.shape[0] * ps.shape[1]) as f64).sqrt()
            };
            for v in &mut net.params[ps.range()] {
                *v = if bound > 0.0 {
                    T::of(rng.random_range(-bound..bound))
                } else {
                    T::zero()
                };
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layer_specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn param_specs(&self) -> &[ParamSpec] {
        &self.param_specs
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<(), NetError> {
        if p.len() != self.params.len() {
            return Err(NetError::ParamCount {
                expected: self.params.len(),
                got: p.len(),
            });
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    pub fn param(&self, name: &str) -> Result<&[T], NetError> {
        let ps = self
            .param_specs
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| NetError::UnknownParam(name.into()))?;
        Ok(&self.params[ps.range()])
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut [T], NetError> {
        let ps = self
            .param_specs
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| NetError::UnknownParam(name.into()))?;
        Ok(&mut self.params[ps.range()])
    }

    pub fn basis(&self) -> &InvariantKernelBasis {
        &self.basis
    }

    pub fn symmetric_basis(&self) -> &InvariantKernelBasis {
        &self.sym_basis
    }

    fn basis_of(&self, src: KernelSrc) -> (&InvariantKernelBasis, &[T]) {
        match src {
            KernelSrc::Symmetric(_) => (&self.sym_basis, &self.sym_matrix),
            _ => (&self.basis, &self.basis_matrix),
        }
    }

    /// Same network in another precision.
    pub fn cast<U: Scalar>(&self) -> PolicyValueNet<U> {
        PolicyValueNet {
            config: self.config.clone(),
            specs: self.specs.clone(),
            convs: self.convs.clone(),
            heads: self.heads.clone(),
            params: self.params.iter().map(|v| U::of(v.f64())).collect(),
            param_specs: self.param_specs.clone(),
            basis: self.basis.clone(),
            basis_matrix: self.basis.matrix(),
            sym_basis: self.sym_basis.clone(),
            sym_matrix: self.sym_basis.matrix(),
        }
    }

    /// Number of k×k and 1×1 convolution stages.
    pub fn conv_count(&self) -> usize {
        self.convs.len()
    }

    /// Materialised kernels of conv stage `i`, each `[k², cin, cout]`
    /// (two for paired hidden stages).
    pub fn conv_kernels(&self, i: usize) -> Vec<Vec<T>> {
        let c = &self.convs[i];
        c.kernels
            .iter()
            .map(|&src| self.kernel(src, &c.spec))
            .collect()
    }

    pub fn conv_bias(&self, i: usize) -> &[T] {
        let c = &self.convs[i];
        &self.params[c.bias..c.bias + c.spec.cout]
    }

    /// Action head weights and bias: `[cin, 2]` and `[2]` for free heads,
    /// `[r₀; r₁]` as `[2, cin]` and a shared `[1]` bias for paired heads.
    pub fn action_params(&self) -> (&[T], &[T]) {
        let c = self.config.latent();
        let nb = if self.config.mirror { 1 } else { 2 };
        let h = &self.heads;
        (
            &self.params[h.action_w..h.action_w + 2 * c],
            &self.params[h.action_b..h.action_b + nb],
        )
    }

    pub fn value_params(&self) -> (&[T], T) {
        let c = self.config.latent();
        let h = &self.heads;
        (
            &self.params[h.value_w..h.value_w + c],
            self.params[h.value_b],
        )
    }

    fn kernel(&self, src: KernelSrc, spec: &LayerSpec) -> Vec<T> {
        let k2 = spec.k * spec.k;
        let cc = spec.cin * spec.cout;
        match src {
            KernelSrc::Free(o) => self.params[o..o + k2 * cc].to_vec(),
            KernelSrc::Invariant(o) | KernelSrc::Symmetric(o) => {
                let (basis, matrix) = self.basis_of(src);
                debug_assert_eq!(spec.k, basis.k);
                let nb = basis.len();
                let mut w = vec![T::zero(); k2 * cc];
                gemm(
                    k2,
                    nb,
                    cc,
                    T::one(),
                    matrix,
                    false,
                    &self.params[o..o + nb * cc],
                    false,
                    T::zero(),
                    &mut w,
                );
                w
            }
        }
    }

    fn kernel_grad(&self, src: KernelSrc, spec: &LayerSpec, dk: &[T], grads: &mut [T]) {
        let k2 = spec.k * spec.k;
        let cc = spec.cin * spec.cout;
        match src {
            KernelSrc::Free(o) => {
                for (g, d) in grads[o..o + k2 * cc].iter_mut().zip(dk) {
                    *g = *g + *d;
                }
            }
            KernelSrc::Invariant(o) | KernelSrc::Symmetric(o) => {
                let (basis, matrix) = self.basis_of(src);
                let nb = basis.len();
                gemm(
                    nb,
                    k2,
                    cc,
                    T::one(),
                    matrix,
                    true,
                    dk,
                    false,
                    T::one(),
                    &mut grads[o..o + nb * cc],
                );
            }
        }
    }

    /// Sparse batch matching this network's kernel radius.
    pub fn batch(&self, images: &[&GridImage]) -> CellBatch {
        CellBatch::from_images(images, self.config.kernel / 2)
    }

    /// Logits (`2N`) and value for a single observation.
    pub fn evaluate(&self, image: &GridImage) -> (Vec<T>, T) {
        let batch = self.batch(&[image]);
        let cache = self.forward(&batch);
        (cache.logits, cache.values[0])
    }

    pub fn forward(&self, batch: &CellBatch) -> ForwardCache<T> {
        assert!(
            batch.radius() >= self.config.kernel / 2,
            "batch radius smaller than the kernel radius"
        );
        let n = batch.rows();
        let act = self.config.activation;
        let mut acts = vec![Act::One(vec![T::one(); n])];
        let mut kernels = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let s = &conv.spec;
            let ks: Vec<Vec<T>> = conv
                .kernels
                .iter()
                .map(|&src| self.kernel(src, s))
                .collect();
            let bias = &self.params[conv.bias..conv.bias + s.cout];
            let next = match (s.kind, acts.last().unwrap()) {
                (LayerKind::ReferenceConv | LayerKind::RotInvConv, Act::One(x)) => {
                    let mut out = broadcast(bias, n);
                    conv_forward(batch, s.k, s.cin, s.cout, x, &ks[0], false, &mut out);
                    activate(&mut out, act);
                    Act::One(out)
                }
                (LayerKind::MirrorRotFirst, Act::One(x)) => {
                    let mut ox = broadcast(bias, n);
                    conv_forward(batch, s.k, s.cin, s.cout, x, &ks[0], false, &mut ox);
                    let mut oy = broadcast(bias, n);
                    conv_forward(batch, s.k, s.cin, s.cout, x, &ks[0], true, &mut oy);
                    activate(&mut ox, act);
                    activate(&mut oy, act);
                    Act::Two(ox, oy)
                }
                (LayerKind::MirrorRotHidden | LayerKind::PointwiseMix, Act::Two(x, y)) => {
                    let (u, v) = sum_diff(x, y);
                    let (sk, dk) = quarter_sum_diff(&ks[0], &ks[1]);
                    let mut a = vec![T::zero(); n * s.cout];
                    conv_forward(batch, s.k, s.cin, s.cout, &u, &sk, false, &mut a);
                    let mut b = vec![T::zero(); n * s.cout];
                    conv_forward(batch, s.k, s.cin, s.cout, &v, &dk, false, &mut b);
                    let mut ox = a.clone();
                    let mut oy = a;
                    for r in 0..n {
                        for c in 0..s.cout {
                            let i = r * s.cout + c;
                            ox[i] = act.apply(ox[i] + b[i] + bias[c]);
                            oy[i] = act.apply(oy[i] - b[i] + bias[c]);
                        }
                    }
                    Act::Two(ox, oy)
                }
                (kind, _) => unreachable!("layer {kind:?} fed the wrong channel layout"),
            };
            acts.push(next);
            kernels.push(ks);
        }

        let c = self.config.latent();
        let h = &self.heads;
        let mut logits = vec![T::zero(); 2 * n];
        match acts.last().unwrap() {
            Act::One(f) => {
                let w = &self.params[h.action_w..h.action_w + 2 * c];
                gemm(
                    n,
                    c,
                    2,
                    T::one(),
                    f,
                    false,
                    w,
                    false,
                    T::zero(),
                    &mut logits,
                );
                for r in 0..n {
                    logits[2 * r] = logits[2 * r] + self.params[h.action_b];
                    logits[2 * r + 1] = logits[2 * r + 1] + self.params[h.action_b + 1];
                }
            }
            Act::Two(x, y) => {
                let r0 = &self.params[h.action_w..h.action_w + c];
                let r1 = &self.params[h.action_w + c..h.action_w + 2 * c];
                let b = self.params[h.action_b];
                let half = T::of(0.5);
                for r in 0..n {
                    let (xr, yr) = (&x[r * c..(r + 1) * c], &y[r * c..(r + 1) * c]);
                    logits[2 * r] = half * (dot(xr, r0) + dot(yr, r1)) + b;
                    logits[2 * r + 1] = half * (dot(xr, r1) + dot(yr, r0)) + b;
                }
            }
        }

        let pooled = self.pool(batch, acts.last().unwrap());
        let (w, b) = self.value_params();
        let values = (0..batch.samples())
            .map(|s| dot(&pooled[s * c..(s + 1) * c], w) + b)
            .collect();
        ForwardCache {
            logits,
            values,
            acts,
            kernels,
            pooled,
        }
    }

    /// Per-sample mean of the latent features (of `½(x + y)` for pairs).
    fn pool(&self, batch: &CellBatch, latent: &Act<T>) -> Vec<T> {
        let c = self.config.latent();
        let mut pooled = vec![T::zero(); batch.samples() * c];
        for s in 0..batch.samples() {
            let rows = batch.sample_rows(s);
            let scale = T::one() / T::of(rows.len() as f64);
            let out = &mut pooled[s * c..(s + 1) * c];
            for r in rows {
                match latent {
                    Act::One(f) => {
                        for (o, v) in out.iter_mut().zip(&f[r * c..(r + 1) * c]) {
                            *o = *o + *v * scale;
                        }
                    }
                    Act::Two(x, y) => {
                        let half = T::of(0.5) * scale;
                        for ((o, a), b) in out
                            .iter_mut()
                            .zip(&x[r * c..(r + 1) * c])
                            .zip(&y[r * c..(r + 1) * c])
                        {
                            *o = *o + (*a + *b) * half;
                        }
                    }
                }
            }
        }
        pooled
    }

    /// Accumulates into `grads` the gradient of `Σ dlogits·logits + Σ dvalues·values`.
    pub fn backward(
        &self,
        batch: &CellBatch,
        cache: &ForwardCache<T>,
        dlogits: &[T],
        dvalues: &[T],
        grads: &mut [T],
    ) {
        assert_eq!(grads.len(), self.params.len());
        assert_eq!(dlogits.len(), cache.logits.len());
        assert_eq!(dvalues.len(), batch.samples());
        let n = batch.rows();
        let c = self.config.latent();
        let h = &self.heads;
        let act = self.config.activation;

        // Heads.
        let mut g = match cache.acts.last().unwrap() {
            Act::One(f) => {
                let w = &self.params[h.action_w..h.action_w + 2 * c];
                gemm(
                    c,
                    n,
                    2,
                    T::one(),
                    f,
                    true,
                    dlogits,
                    false,
                    T::one(),
                    &mut grads[h.action_w..h.action_w + 2 * c],
                );
                for r in 0..n {
                    grads[h.action_b] = grads[h.action_b] + dlogits[2 * r];
                    grads[h.action_b + 1] = grads[h.action_b + 1] + dlogits[2 * r + 1];
                }
                let mut gf = vec![T::zero(); n * c];
                gemm(
                    n,
                    2,
                    c,
                    T::one(),
                    dlogits,
                    false,
                    w,
                    true,
                    T::zero(),
                    &mut gf,
                );
                Act::One(gf)
            }
            Act::Two(x, y) => {
                let half = T::of(0.5);
                let (mut gx, mut gy) = (vec![T::zero(); n * c], vec![T::zero(); n * c]);
                for r in 0..n {
                    let (g0, g1) = (dlogits[2 * r] * half, dlogits[2 * r + 1] * half);
                    grads[h.action_b] = grads[h.action_b] + dlogits[2 * r] + dlogits[2 * r + 1];
                    for j in 0..c {
                        let (xv, yv) = (x[r * c + j], y[r * c + j]);
                        let (r0, r1) =
                            (self.params[h.action_w + j], self.params[h.action_w + c + j]);
                        grads[h.action_w + j] = grads[h.action_w + j] + g0 * xv + g1 * yv;
                        grads[h.action_w + c + j] = grads[h.action_w + c + j] + g0 * yv + g1 * xv;
                        gx[r * c + j] = g0 * r0 + g1 * r1;
                        gy[r * c + j] = g0 * r1 + g1 * r0;
                    }
                }
                Act::Two(gx, gy)
            }
        };
        for s in 0..batch.samples() {
            let dv = dvalues[s];
            grads[h.value_b] = grads[h.value_b] + dv;
            for j in 0..c {
                grads[h.value_w + j] = grads[h.value_w + j] + dv * cache.pooled[s * c + j];
            }
            let rows = batch.sample_rows(s);
            let scale = dv / T::of(rows.len() as f64);
            for r in rows {
                for j in 0..c {
                    let wv = self.params[h.value_w + j] * scale;
                    match &mut g {
                        Act::One(gf) => gf[r * c + j] = gf[r * c + j] + wv,
                        Act::Two(gx, gy) => {
                            let half = wv * T::of(0.5);
                            gx[r * c + j] = gx[r * c + j] + half;
                            gy[r * c + j] = gy[r * c + j] + half;
                        }
                    }
                }
            }
        }

        // Conv stack, last to first.
        for (li, conv) in self.convs.iter().enumerate().rev() {
            let s = &conv.spec;
            let ks = &cache.kernels[li];
            let need_input_grad = li > 0;
            let bias_range = conv.bias..conv.bias + s.cout;
            match (&cache.acts[li], &cache.acts[li + 1], &mut g) {
                (Act::One(x), Act::One(out), Act::One(gout)) => {
                    apply_act_grad(gout, out, act);
                    add_column_sums(&mut grads[bias_range], gout, s.cout);
                    let mut dk = vec![T::zero(); ks[0].len()];
                    let mut din = need_input_grad.then(|| vec![T::zero(); n * s.cin]);
                    conv_backward(
                        batch,
                        s.k,
                        s.cin,
                        s.cout,
                        x,
                        &ks[0],
                        false,
                        gout,
                        &mut dk,
                        din.as_deref_mut(),
                    );
                    self.kernel_grad(conv.kernels[0], s, &dk, grads);
                    g = Act::One(din.unwrap_or_default());
                }
                (Act::One(x), Act::Two(ox, oy), Act::Two(gx, gy)) => {
                    apply_act_grad(gx, ox, act);
                    apply_act_grad(gy, oy, act);
                    add_column_sums(&mut grads[bias_range.clone()], gx, s.cout);
                    add_column_sums(&mut grads[bias_range], gy, s.cout);
                    let mut dk = vec![T::zero(); ks[0].len()];
                    let mut din = need_input_grad.then(|| vec![T::zero(); n * s.cin]);
                    conv_backward(
                        batch,
                        s.k,
                        s.cin,
                        s.cout,
                        x,
                        &ks[0],
                        false,
                        gx,
                        &mut dk,
                        din.as_deref_mut(),
                    );
                    conv_backward(
                        batch,
                        s.k,
                        s.cin,
                        s.cout,
                        x,
                        &ks[0],
                        true,
                        gy,
                        &mut dk,
                        din.as_deref_mut(),
                    );
                    self.kernel_grad(conv.kernels[0], s, &dk, grads);
                    g = Act::One(din.unwrap_or_default());
                }
                (Act::Two(x, y), Act::Two(ox, oy), Act::Two(gx, gy)) => {
                    apply_act_grad(gx, ox, act);
                    apply_act_grad(gy, oy, act);
                    add_column_sums(&mut grads[bias_range.clone()], gx, s.cout);
                    add_column_sums(&mut grads[bias_range], gy, s.cout);
                    let (u, v) = sum_diff(x, y);
                    let (ga, gb) = sum_diff(gx, gy);
                    let (sk, dkk) = quarter_sum_diff(&ks[0], &ks[1]);
                    let mut ds = vec![T::zero(); sk.len()];
                    let mut dd = vec![T::zero(); sk.len()];
                    let mut du = need_input_grad.then(|| vec![T::zero(); n * s.cin]);
                    let mut dv = need_input_grad.then(|| vec![T::zero(); n * s.cin]);
                    conv_backward(
                        batch,
                        s.k,
                        s.cin,
                        s.cout,
                        &u,
                        &sk,
                        false,
                        &ga,
                        &mut ds,
                        du.as_deref_mut(),
                    );
                    conv_backward(
                        batch,
                        s.k,
                        s.cin,
                        s.cout,
                        &v,
                        &dkk,
                        false,
                        &gb,
                        &mut dd,
                        dv.as_deref_mut(),
                    );
                    // S = ¼(K₀ + K₁), D = ¼(K₀ − K₁).
                    let (dk0, dk1) = quarter_sum_diff(&ds, &dd);
                    self.kernel_grad(conv.kernels[0], s, &dk0, grads);
                    self.kernel_grad(conv.kernels[1], s, &dk1, grads);
                    g = match (du, dv) {
                        (Some(du), Some(dv)) => {
                            let (dx, dy) = sum_diff(&du, &dv);
                            Act::Two(dx, dy)
                        }
                        _ => Act::One(Vec::new()),
                    };
                }
                _ => unreachable!("activation layout mismatch in backward"),
            }
        }
    }
}

fn broadcast<T: Scalar>(bias: &[T], rows: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * bias.len());
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    out
}

fn activate<T: Scalar>(v: &mut [T], act: Activation) {
    if act != Activation::Identity {
        for x in v {
            *x = act.apply(*x);
        }
    }
}

fn apply_act_grad<T: Scalar>(g: &mut [T], out: &[T], act: Activation) {
    if act != Activation::Identity {
        for (gi, &o) in g.iter_mut().zip(out) {
            *gi = *gi * act.grad_from_output(o);
        }
    }
}

fn add_column_sums<T: Scalar>(acc: &mut [T], m: &[T], cols: usize) {
    for row in m.chunks_exact(cols) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a = *a + *v;
        }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn sum_diff<T: Scalar>(a: &[T], b: &[T]) -> (Vec<T>, Vec<T>) {
    (
        a.iter().zip(b).map(|(x, y)| *x + *y).collect(),
        a.iter().zip(b).map(|(x, y)| *x - *y).collect(),
    )
}

fn quarter_sum_diff<T: Scalar>(a: &[T], b: &[T]) -> (Vec<T>, Vec<T>) {
    let q = T::of(0.25);
    (
        a.iter().zip(b).map(|(x, y)| (*x + *y) * q).collect(),
        a.iter().zip(b).map(|(x, y)| (*x - *y) * q).collect(),
    )
}

/// `out[i] += Σ_d K(d)ᵀ · input[i + d]` over occupied neighbours, with
/// `K(d)` read from the mirrored offset when `mirror` is set.
#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Scalar>(
    batch: &CellBatch,
    k: usize,
    cin: usize,
    cout: usize,
    input: &[T],
    kernel: &[T],
    mirror: bool,
    out: &mut [T],
) {
    let n = batch.rows();
    let kk = cin * cout;
    let mperm = mirror_permutation(k);
    let (mut gathered, mut prod) = (Vec::new(), Vec::new());
    for (d, (dx, dy)) in kernel_offsets(k).into_iter().enumerate() {
        let kd = if mirror { mperm[d] } else { d };
        let w = &kernel[kd * kk..(kd + 1) * kk];
        if (dx, dy) == (0, 0) {
            gemm(
                n,
                cin,
                cout,
                T::one(),
                input,
                false,
                w,
                false,
                T::one(),
                out,
            );
            continue;
        }
        let pairs = batch.pairs(dx, dy);
        if pairs.is_empty() {
            continue;
        }
        gathered.clear();
        for &(_, j) in pairs {
            let j = j as usize;
            gathered.extend_from_slice(&input[j * cin..(j + 1) * cin]);
        }
        prod.resize(pairs.len() * cout, T::zero());
        gemm(
            pairs.len(),
            cin,
            cout,
            T::one(),
            &gathered,
            false,
            w,
            false,
            T::zero(),
            &mut prod,
        );
        for (q, &(i, _)) in pairs.iter().enumerate() {
            let i = i as usize;
            for (o, p) in out[i * cout..(i + 1) * cout]
                .iter_mut()
                .zip(&prod[q * cout..(q + 1) * cout])
            {
                *o = *o + *p;
            }
        }
    }
}

/// Adjoint of [`conv_forward`]: accumulates kernel gradients into `dkernel`
/// and, when requested, input gradients into `din`.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    batch: &CellBatch,
    k: usize,
    cin: usize,
    cout: usize,
    input: &[T],
    kernel: &[T],
    mirror: bool,
    gout: &[T],
    dkernel: &mut [T],
    mut din: Option<&mut [T]>,
) {
    let n = batch.rows();
    let kk = cin * cout;
    let mperm = mirror_permutation(k);
    let (mut gathered, mut gg, mut back) = (Vec::new(), Vec::new(), Vec::new());
    for (d, (dx, dy)) in kernel_offsets(k).into_iter().enumerate() {
        let kd = if mirror { mperm[d] } else { d };
        let w = &kernel[kd * kk..(kd + 1) * kk];
        let dw = &mut dkernel[kd * kk..(kd + 1) * kk];
        if (dx, dy) == (0, 0) {
            gemm(
                cin,
                n,
                cout,
                T::one(),
                input,
                true,
                gout,
                false,
                T::one(),
                dw,
            );
            if let Some(din) = din.as_deref_mut() {
                gemm(n, cout, cin, T::one(), gout, false, w, true, T::one(), din);
            }
            continue;
        }
        let pairs = batch.pairs(dx, dy);
        let p = pairs.len();
        if p == 0 {
            continue;
        }
        gathered.clear();
        gg.clear();
        for &(i, j) in pairs {
            let (i, j) = (i as usize, j as usize);
            gathered.extend_from_slice(&input[j * cin..(j + 1) * cin]);
            gg.extend_from_slice(&gout[i * cout..(i + 1) * cout]);
        }
        gemm(
            cin,
            p,
            cout,
            T::one(),
            &gathered,
            true,
            &gg,
            false,
            T::one(),
            dw,
        );
        if let Some(din) = din.as_deref_mut() {
            back.resize(p * cin, T::zero());
            gemm(
                p,
                cout,
                cin,
                T::one(),
                &gg,
                false,
                w,
                true,
                T::zero(),
                &mut back,
            );
            for (q, &(_, j)) in pairs.iter().enumerate() {
                let j = j as usize;
                for (o, b) in din[j * cin..(j + 1) * cin]
                    .iter_mut()
                    .zip(&back[q * cin..(q + 1) * cin])
                {
                    *o = *o + *b;
                }
            }
        }
    }
}
