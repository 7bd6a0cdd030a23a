//! Finite-difference oracle for the composed networks and loss pipelines.
//!
//! The per-op checks live next to the tape; these tests differentiate whole
//! forward passes (attack path and training path) in double precision and
//! compare against central differences.

use depthguard_core::losses::{attack_objective, difference_loss, LossKind};
use depthguard_core::networks::{bind_net, build_network, net_forward, NetworkSpec};
use depthguard_core::rng::Rng;
use depthguard_core::tensor::{Tape, Tensor};

const FD_STEP: f64 = 1e-4;
const TOLERANCE: f64 = 1e-5;

fn fd_grad(f: &dyn Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let mut hi = x.clone();
        hi.data_mut()[i] += FD_STEP;
        let mut lo = x.clone();
        lo.data_mut()[i] -= FD_STEP;
        g.push((f(&hi) - f(&lo)) / (2.0 * FD_STEP));
    }
    g
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs())
        .fold(0.0, f64::max)
        / scale
}

fn random_image(rng: &mut Rng, h: usize, w: usize) -> Tensor<f64> {
    Tensor::from_fn(vec![3, h, w], |_| rng.uniform(0.05, 0.95))
}

fn random_depth(rng: &mut Rng, h: usize, w: usize) -> Tensor<f64> {
    Tensor::from_fn(vec![1, h, w], |_| rng.uniform(0.8, 9.0))
}

#[test]
fn depth_network_input_gradient_matches_fd() {
    for seed in 0..4u64 {
        let spec = NetworkSpec::depth(16, 16, vec![3, 4]).unwrap();
        let store = build_network::<f64>(&spec, seed).unwrap();
        let mut rng = Rng::new(1000 + seed);
        let x = random_image(&mut rng, 16, 16);
        let ybar = random_depth(&mut rng, 8, 8);

        let objective = |t: &Tensor<f64>| {
            let mut tape = Tape::new();
            let net = bind_net(&mut tape, &store, false).unwrap();
            let xv = tape.constant(t);
            let y = net_forward(&mut tape, &net, xv).unwrap();
            let obj = attack_objective(&mut tape, LossKind::L1, y, &ybar).unwrap();
            tape.item(obj).unwrap()
        };

        let mut tape = Tape::new();
        let net = bind_net(&mut tape, &store, false).unwrap();
        let xv = tape.param(&x);
        let y = net_forward(&mut tape, &net, xv).unwrap();
        let obj = attack_objective(&mut tape, LossKind::L1, y, &ybar).unwrap();
        tape.backward(obj).unwrap();
        let analytic = tape.grad_data(xv).unwrap().to_vec();

        let numeric = fd_grad(&objective, &x);
        let err = max_rel_err(&analytic, &numeric);
        assert!(err <= TOLERANCE, "seed {seed}: rel err {err}");
    }
}

#[test]
fn masked_composite_gradient_matches_fd() {
    // The defense-training path: gradient w.r.t. the input flows through G,
    // the mask product, N, and the full difference loss.
    let n_spec = NetworkSpec::depth(16, 16, vec![3, 4]).unwrap();
    let g_spec = NetworkSpec::saliency(16, 16, vec![3, 4]).unwrap();
    let n = build_network::<f64>(&n_spec, 5).unwrap();
    let g = build_network::<f64>(&g_spec, 6).unwrap();
    let mut rng = Rng::new(2024);
    let x = random_image(&mut rng, 16, 16);
    let ybar = random_depth(&mut rng, 8, 8);

    let loss_of = |t: &Tensor<f64>| {
        let mut tape = Tape::new();
        let g_net = bind_net(&mut tape, &g, false).unwrap();
        let xv = tape.constant(t);
        let mask = net_forward(&mut tape, &g_net, xv).unwrap();
        let masked = tape.mask_mul(xv, mask).unwrap();
        let n_net = bind_net(&mut tape, &n, false).unwrap();
        let y = net_forward(&mut tape, &n_net, masked).unwrap();
        let bv = tape.constant(&ybar);
        let terms = difference_loss(&mut tape, y, bv).unwrap();
        tape.item(terms.total).unwrap()
    };

    let mut tape = Tape::new();
    let g_net = bind_net(&mut tape, &g, false).unwrap();
    let xv = tape.param(&x);
    let mask = net_forward(&mut tape, &g_net, xv).unwrap();
    let masked = tape.mask_mul(xv, mask).unwrap();
    let n_net = bind_net(&mut tape, &n, false).unwrap();
    let y = net_forward(&mut tape, &n_net, masked).unwrap();
    let bv = tape.constant(&ybar);
    let terms = difference_loss(&mut tape, y, bv).unwrap();
    tape.backward(terms.total).unwrap();
    let analytic = tape.grad_data(xv).unwrap().to_vec();

    let numeric = fd_grad(&loss_of, &x);
    let err = max_rel_err(&analytic, &numeric);
    assert!(err <= TOLERANCE, "rel err {err}");
}

#[test]
fn saliency_parameter_gradients_match_fd() {
    // Spot-check parameter gradients through the masked pipeline for the
    // first decoder layer of G (the one the sparsity penalty leans on).
    let n_spec = NetworkSpec::depth(16, 16, vec![3, 4]).unwrap();
    let g_spec = NetworkSpec::saliency(16, 16, vec![3, 4]).unwrap();
    let n = build_network::<f64>(&n_spec, 8).unwrap();
    let g = build_network::<f64>(&g_spec, 9).unwrap();
    let mut rng = Rng::new(77);
    let x = random_image(&mut rng, 16, 16);
    let ybar = random_depth(&mut rng, 8, 8);

    let loss_with = |g_store: &depthguard_core::networks::ParameterStore<f64>| {
        let mut tape = Tape::new();
        let g_net = bind_net(&mut tape, g_store, false).unwrap();
        let xv = tape.constant(&x);
        let mask = net_forward(&mut tape, &g_net, xv).unwrap();
        let masked = tape.mask_mul(xv, mask).unwrap();
        let n_net = bind_net(&mut tape, &n, false).unwrap();
        let y = net_forward(&mut tape, &n_net, masked).unwrap();
        let bv = tape.constant(&ybar);
        let terms = difference_loss(&mut tape, y, bv).unwrap();
        let spars = depthguard_core::losses::mask_sparsity(&mut tape, mask).unwrap();
        let weighted = tape.scalar_mul(spars, 1.0);
        let total = tape.add(terms.total, weighted).unwrap();
        tape.item(total).unwrap()
    };

    let mut tape = Tape::new();
    let g_net = bind_net(&mut tape, &g, true).unwrap();
    let xv = tape.constant(&x);
    let mask = net_forward(&mut tape, &g_net, xv).unwrap();
    let masked = tape.mask_mul(xv, mask).unwrap();
    let n_net = bind_net(&mut tape, &n, false).unwrap();
    let y = net_forward(&mut tape, &n_net, masked).unwrap();
    let bv = tape.constant(&ybar);
    let terms = difference_loss(&mut tape, y, bv).unwrap();
    let spars = depthguard_core::losses::mask_sparsity(&mut tape, mask).unwrap();
    let weighted = tape.scalar_mul(spars, 1.0);
    let total = tape.add(terms.total, weighted).unwrap();
    tape.backward(total).unwrap();

    // dec2.bias of G is parameter index 7 (enc1.w, enc1.b, enc2.w, enc2.b,
    // dec1.w, dec1.b, dec2.w, dec2.b).
    let vars = g_net.param_vars();
    let analytic = tape.grad_data(vars[7]).unwrap().to_vec();

    let bias_len = analytic.len();
    let mut numeric = Vec::with_capacity(bias_len);
    for i in 0..bias_len {
        let mut hi = g.clone();
        hi.entries_mut().nth(7).unwrap().1.data_mut()[i] += FD_STEP;
        let mut lo = g.clone();
        lo.entries_mut().nth(7).unwrap().1.data_mut()[i] -= FD_STEP;
        numeric.push((loss_with(&hi) - loss_with(&lo)) / (2.0 * FD_STEP));
    }
    let err = max_rel_err(&analytic, &numeric);
    assert!(err <= TOLERANCE, "rel err {err}");
}
