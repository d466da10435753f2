use cubeswarm_core::sim::render_images;
use cubeswarm_core::{Ensemble, GridImage, TransformId};
use cubeswarm_geonet::dense::{
    action_head, dense_forward, kernel_tensor, masked_conv, mr_first_layer, mr_hidden_layer,
    value_head, Tensor,
};
use cubeswarm_geonet::{Activation, Arch, CellBatch, LayerKind, NetConfig, PolicyValueNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(e: &Ensemble) -> GridImage {
    render_images(e, 2 * e.len() + 1).unwrap()
}

fn small_configs() -> Vec<NetConfig> {
    let mk = |arch, k, widths: Vec<usize>, act, mirror| {
        NetConfig::with_widths(arch, k, widths, act, mirror).unwrap()
    };
    vec![
        mk(Arch::Cnn, 3, vec![1, 4, 3], Activation::Relu, false),
        mk(Arch::Cnn, 5, vec![1, 3, 5, 2], Activation::Tanh, false),
        mk(Arch::MrCnn, 3, vec![1, 4, 6, 3], Activation::Relu, false),
        mk(Arch::MrCnn, 5, vec![1, 3, 4, 3], Activation::Relu, true),
        mk(Arch::MrCnn, 5, vec![1, 2, 3, 4, 2], Activation::Tanh, true),
        mk(Arch::MrCnn, 1, vec![1, 3, 2], Activation::Identity, true),
    ]
}

/// Give the biases random values too so that no term is trivially zero.
fn random_net(cfg: NetConfig, seed: u64) -> PolicyValueNet<f64> {
    let mut net = PolicyValueNet::<f64>::new(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for p in net.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    net
}

#[test]
fn sparse_engine_matches_dense_reference() {
    for (ci, cfg) in small_configs().into_iter().enumerate() {
        let net = random_net(cfg, ci as u64);
        for seed in 0..20 {
            let e = Ensemble::random_connected(7, seed);
            let img = image(&e);
            let (logits, value) = net.evaluate(&img);
            let (dl, dv) = dense_forward(&net, &img);
            assert_eq!(logits.len(), 14);
            for (a, b) in logits.iter().zip(&dl) {
                assert!((a - b).abs() < 1e-10, "config {ci}: {a} vs {b}");
            }
            assert!((value - dv).abs() < 1e-10);
        }
    }
}

#[test]
fn batching_matches_single_evaluation() {
    let net = random_net(small_configs().remove(3), 9);
    let imgs: Vec<GridImage> = (0..6)
        .map(|s| image(&Ensemble::random_connected(5 + s as usize, s)))
        .collect();
    let refs: Vec<&GridImage> = imgs.iter().collect();
    let batch = net.batch(&refs);
    let cache = net.forward(&batch);
    for (s, img) in imgs.iter().enumerate() {
        let (l, v) = net.evaluate(img);
        assert_eq!(cache.sample_logits(&batch, s), &l[..]);
        assert_eq!(cache.values[s], v);
    }
}

fn check_symmetry(
    net: &PolicyValueNet<f32>,
    ensembles: usize,
    check_rotation: bool,
    check_mirror: bool,
) -> f32 {
    let mut worst = 0.0f32;
    for seed in 0..ensembles as u64 {
        let e = Ensemble::random_connected(9, 1000 + seed);
        let (l0, v0) = net.evaluate(&image(&e));
        for t in TransformId::all() {
            if (t.mirrored && !check_mirror) || (!t.mirrored && !check_rotation) {
                continue;
            }
            let (l, v) = net.evaluate(&image(&e.transformed(t)));
            for i in 0..e.len() {
                let (cw, ccw) = if t.mirrored {
                    (l[2 * i + 1], l[2 * i])
                } else {
                    (l[2 * i], l[2 * i + 1])
                };
                worst = worst
                    .max((cw - l0[2 * i]).abs())
                    .max((ccw - l0[2 * i + 1]).abs());
            }
            worst = worst.max((v - v0).abs());
        }
    }
    worst
}

#[test]
fn rotation_invariant_nets_ignore_rotations() {
    let cfg = NetConfig::with_widths(Arch::MrCnn, 3, vec![1, 16, 32, 8], Activation::Relu, false)
        .unwrap();
    let net = PolicyValueNet::<f32>::new(cfg, 4).unwrap();
    assert!(check_symmetry(&net, 100, true, false) <= 1e-5);
}

#[test]
fn mirror_paired_nets_swap_cw_and_ccw_under_mirroring() {
    let cfg =
        NetConfig::with_widths(Arch::MrCnn, 5, vec![1, 16, 32, 8], Activation::Relu, true).unwrap();
    let mut net = PolicyValueNet::<f32>::new(cfg, 5).unwrap();
    // Lift the action head out of its near-zero initialisation.
    for v in net.param_mut("action.r").unwrap() {
        *v *= 100.0;
    }
    assert!(check_symmetry(&net, 100, true, true) <= 1e-5);
}

#[test]
fn reference_cnn_is_not_rotation_invariant_but_is_deterministic() {
    let cfg = NetConfig::with_widths(Arch::Cnn, 3, vec![1, 8, 4], Activation::Relu, false).unwrap();
    let mut net = PolicyValueNet::<f32>::new(cfg, 2).unwrap();
    for v in net.param_mut("action.weight").unwrap() {
        *v *= 100.0;
    }
    assert!(check_symmetry(&net, 10, true, false) > 1e-3);
    let img = image(&Ensemble::random_connected(9, 3));
    let a = net.evaluate(&img);
    let b = net.evaluate(&img);
    assert_eq!(
        a.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(a.1.to_bits(), b.1.to_bits());
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(NetConfig::with_widths(Arch::MrCnn, 3, vec![1, 4, 2], Activation::Relu, true).is_err());
    assert!(NetConfig::with_widths(Arch::Cnn, 5, vec![1, 4, 2], Activation::Relu, true).is_err());
    assert!(NetConfig::with_widths(Arch::Cnn, 4, vec![1, 4, 2], Activation::Relu, false).is_err());
    assert!(NetConfig::with_widths(Arch::Cnn, 3, vec![2, 4, 2], Activation::Relu, false).is_err());
    assert!(NetConfig::with_widths(Arch::Cnn, 3, vec![1, 2], Activation::Relu, false).is_err());
    assert!(NetConfig::new(Arch::Cnn, 3, 5).is_err());
    // Asking for mr-cnn with k = 3 gives rotation invariance only.
    assert!(!NetConfig::new(Arch::MrCnn, 3, 2).unwrap().mirror);
    assert!(NetConfig::new(Arch::MrCnn, 5, 2).unwrap().mirror);
}

#[test]
fn parameter_counts() {
    let cfg =
        NetConfig::with_widths(Arch::MrCnn, 3, vec![1, 4, 6, 2], Activation::Relu, false).unwrap();
    let net = PolicyValueNet::<f32>::zeros(cfg).unwrap();
    let specs = net.layer_specs();
    assert_eq!(specs[0].kind, LayerKind::RotInvConv);
    assert_eq!(specs[0].param_count(), 3 * 4 + 4);
    assert_eq!(specs[1].param_count(), 3 * 4 * 6 + 6);
    let total: usize = specs.iter().map(|s| s.param_count()).sum();
    assert_eq!(total, net.num_params());

    let cfg = NetConfig::new(Arch::MrCnn, 5, 2).unwrap();
    let net = PolicyValueNet::<f32>::zeros(cfg).unwrap();
    let kinds: Vec<_> = net.layer_specs().iter().map(|s| s.kind).collect();
    assert_eq!(
        kinds,
        vec![
            LayerKind::MirrorRotFirst,
            LayerKind::MirrorRotHidden,
            LayerKind::PointwiseMix,
            LayerKind::ActionHead,
            LayerKind::ValueHead
        ]
    );
    assert_eq!(net.param("conv0.omega").unwrap().len(), 7 * 64);
    assert_eq!(net.param("conv1.omega0").unwrap().len(), 6 * 64 * 512);
    let expected =
        (7 * 64 + 64) + (2 * 6 * 64 * 512 + 512) + (2 * 512 * 32 + 32) + (2 * 32 + 1) + (32 + 1);
    assert_eq!(net.num_params(), expected);
    assert_eq!(net.config().receptive_radius(), 4);

    let net = PolicyValueNet::<f32>::zeros(NetConfig::new(Arch::Cnn, 3, 1).unwrap()).unwrap();
    assert_eq!(
        net.num_params(),
        (9 * 8192 + 8192) + (8192 * 32 + 32) + (32 * 2 + 2) + 33
    );
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[test]
fn masked_conv_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let img = image(&Ensemble::random_connected(6, 2));
    let mask = Tensor::<f64>::mask(&img);
    let x = random_tensor(&mut rng, vec![2, 13, 13]);
    let k = random_tensor(&mut rng, vec![3, 2, 3, 3]);
    let out = masked_conv(&x, &k, &[0.1, -0.2, 0.3], &mask, Activation::Tanh);
    for c in 0..3 {
        for p in 0..169 {
            if mask.data[p] == 0.0 {
                assert_eq!(out.data[c * 169 + p], 0.0);
            }
        }
    }
    let zero = Tensor::zeros(vec![13, 13]);
    assert!(masked_conv(&x, &k, &[1.0; 3], &zero, Activation::Relu)
        .data
        .iter()
        .all(|&v| v == 0.0));
    let mut ident = Tensor::zeros(vec![2, 2, 1, 1]);
    ident.data[0] = 1.0;
    ident.data[3] = 1.0;
    let out = masked_conv(&x, &ident, &[0.0; 2], &mask, Activation::Identity);
    for c in 0..2 {
        for p in 0..169 {
            assert_eq!(out.data[c * 169 + p], x.data[c * 169 + p] * mask.data[p]);
        }
    }
}

#[test]
fn mr_layer_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let net = random_net(small_configs().remove(3), 3);
    let ks = kernel_tensor(5, 1, 3, &net.conv_kernels(0)[0]);
    let img = image(&Ensemble::random_connected(7, 5));
    let mask = Tensor::<f64>::mask(&img);
    let side = img.width;
    let x = random_tensor(&mut rng, vec![1, side, side]);
    let b = [0.2, -0.1, 0.05];
    let (x0, y0) = mr_first_layer(&x, &ks, &b, &mask, Activation::Identity);
    let (mx0, my0) = mr_first_layer(
        &x.mirrored(),
        &ks,
        &b,
        &mask.clone_mirrored(),
        Activation::Identity,
    );
    assert_close(&mx0, &y0.mirrored());
    assert_close(&my0, &x0.mirrored());

    let zero = Tensor::zeros(vec![1, side, side]);
    let (zx, zy) = mr_first_layer(&zero, &ks, &b, &mask, Activation::Tanh);
    for c in 0..3 {
        for p in 0..side * side {
            let want = if mask.data[p] > 0.0 { b[c].tanh() } else { 0.0 };
            assert_eq!(zx.data[c * side * side + p], want);
            assert_eq!(zy.data[c * side * side + p], want);
        }
    }

    let xs = random_tensor(&mut rng, vec![3, side, side]);
    let ys = random_tensor(&mut rng, vec![3, side, side]);
    let w0 = random_tensor(&mut rng, vec![2, 3, 5, 5]);
    let w1 = random_tensor(&mut rng, vec![2, 3, 5, 5]);
    let (x1, y1) = mr_hidden_layer(&xs, &ys, &w0, &w1, &[0.1, 0.2], &mask, Activation::Relu);
    let (sx, sy) = mr_hidden_layer(&ys, &xs, &w0, &w1, &[0.1, 0.2], &mask, Activation::Relu);
    assert_eq!(x1, sy);
    assert_eq!(y1, sx);
    let (ex, ey) = mr_hidden_layer(&xs, &ys, &w0, &w0, &[0.1, 0.2], &mask, Activation::Relu);
    assert_eq!(ex, ey);
    let (fx, fy) = mr_hidden_layer(&xs, &xs, &w0, &w1, &[0.1, 0.2], &mask, Activation::Relu);
    assert_eq!(fx, fy);
}

trait MirrorMask {
    fn clone_mirrored(&self) -> Self;
}

impl MirrorMask for Tensor<f64> {
    fn clone_mirrored(&self) -> Self {
        let t = Tensor::new(vec![1, self.shape[0], self.shape[1]], self.data.clone()).mirrored();
        Tensor::new(self.shape.clone(), t.data)
    }
}

fn assert_close(a: &Tensor<f64>, b: &Tensor<f64>) {
    assert_eq!(a.shape, b.shape);
    for (x, y) in a.data.iter().zip(&b.data) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn head_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let e = Ensemble::from_pairs(&[(0, 0)]).unwrap();
    let img = image(&e);
    let f = random_tensor(&mut rng, vec![4, 3, 3]);
    let w: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    assert_eq!(action_head(&f, &w, &[0.0, 0.0], &img).len(), 2);

    let zero = Tensor::zeros(vec![4, 3, 3]);
    let l = action_head(&zero, &w, &[0.0, 0.0], &img);
    assert_eq!(l[0], l[1]);

    // Relabelling cubes permutes logit pairs.
    let e = Ensemble::random_connected(6, 8);
    let mut coords = e.coords().to_vec();
    coords.reverse();
    let r = Ensemble::new(coords).unwrap();
    let (ia, ib) = (image(&e), image(&r));
    let feats = random_tensor(&mut rng, vec![4, 13, 13]);
    let la = action_head(&feats, &w, &[0.1, 0.2], &ia);
    let lb = action_head(&feats, &w, &[0.1, 0.2], &ib);
    for i in 0..6 {
        assert_eq!(la[2 * i], lb[2 * (5 - i)]);
        assert_eq!(la[2 * i + 1], lb[2 * (5 - i) + 1]);
    }

    let mask = Tensor::<f64>::mask(&ia);
    let constant = Tensor::new(vec![2, 13, 13], vec![0.5; 2 * 169]);
    let v = value_head(&constant, &mask, &[2.0, -1.0], 0.25);
    assert!((v - (2.0 * 0.5 - 0.5 + 0.25)).abs() < 1e-15);
}

#[test]
fn value_is_translation_invariant() {
    let net = random_net(small_configs().remove(1), 1);
    let e = Ensemble::random_connected(8, 21);
    let a = net.evaluate(&render_images(&e, 17).unwrap());
    let b = net.evaluate(&render_images(&e, 31).unwrap());
    assert!((a.1 - b.1).abs() < 1e-12);
    let batch = CellBatch::from_coords(
        &[e.coords().to_vec(), e.translated(40, -7).coords().to_vec()],
        2,
    );
    let c = net.forward(&batch);
    assert!((c.values[0] - c.values[1]).abs() < 1e-12);
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
    #[test]
    fn translation_changes_nothing(n in 2usize..12, seed in 0u64..1000, dx in -50i32..50, dy in -50i32..50, which in 0usize..6) {
        let cfg = small_configs().remove(which);
        let radius = cfg.kernel / 2;
        let net = random_net(cfg, seed);
        let e = Ensemble::random_connected(n, seed);
        let batch = CellBatch::from_coords(&[e.coords().to_vec(), e.translated(dx, dy).coords().to_vec()], radius);
        let c = net.forward(&batch);
        proptest::prop_assert!((c.values[0] - c.values[1]).abs() < 1e-12);
        for (a, b) in c.sample_logits(&batch, 0).iter().zip(c.sample_logits(&batch, 1)) {
            proptest::prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
