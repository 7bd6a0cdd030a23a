//! Dev probe: magnitude of the accuracy gradient on the mask versus the
//! constant sparsity pressure, at several mask operating points.
//!
//! Usage: cargo run --release -p depthguard-core --example probe_forces -- N_CKPT DATA

use depthguard_core::data::io::load_dataset;
use depthguard_core::losses::difference_loss;
use depthguard_core::networks::{bind_net, load_checkpoint, net_forward, NetworkSpec};
use depthguard_core::tensor::{Tape, Tensor};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_path = &args[0];
    let data_path = &args[1];
    let (records, _) = load_dataset(std::path::Path::new(data_path)).unwrap();
    let (h, w) = records[0].image_dims();
    let spec = NetworkSpec::depth(h, w, vec![12, 24, 48]).unwrap();
    let n = load_checkpoint::<f32>(std::path::Path::new(n_path), &spec).unwrap();

    let lambda_force = 5.0 / (h * w) as f64;
    println!("sparsity force lambda/n = {lambda_force:.3e}");

    for mask_level in [0.25f32, 0.5, 0.75, 0.9, 1.0] {
        let mut all: Vec<f64> = Vec::new();
        for rec in records.iter().take(8) {
            let mask = Tensor::full(vec![1, h, w], mask_level).with_grad(true);
            let mut tape = Tape::new();
            let xv = tape.constant(&rec.image);
            let mv = tape.leaf(&mask);
            let masked = tape.mask_mul(xv, mv).unwrap();
            let net = bind_net(&mut tape, &n, false).unwrap();
            let y = net_forward(&mut tape, &net, masked).unwrap();
            let bv = tape.constant(&rec.depth);
            let terms = difference_loss(&mut tape, y, bv).unwrap();
            tape.backward(terms.total).unwrap();
            let g = tape.grad_data(mv).unwrap();
            all.extend(g.iter().map(|&v| -(v as f64))); // positive = push mask up
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pct = |p: f64| all[(p * (all.len() - 1) as f64) as usize];
        let above = all.iter().filter(|&&v| v > lambda_force).count() as f64 / all.len() as f64;
        println!(
            "m={mask_level:.2}: p10={:+.3e} p50={:+.3e} p90={:+.3e} p99={:+.3e} frac_beating_lambda={:.3}",
            pct(0.10), pct(0.50), pct(0.90), pct(0.99), above
        );
    }
}
