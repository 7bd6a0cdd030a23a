//! Dev probe: how much does the attack corrupt G's masks, and how saturated
//! are they?
//!
//! Usage: probe_leak N_CKPT G_CKPT CLEAN_DGD1 ADV_DGD1

use depthguard_core::data::io::load_dataset;
use depthguard_core::networks::{forward_saliency, load_checkpoint, NetworkSpec};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (clean, _) = load_dataset(std::path::Path::new(&args[2])).unwrap();
    let (adv, _) = load_dataset(std::path::Path::new(&args[3])).unwrap();
    let (h, w) = clean[0].image_dims();
    let g = load_checkpoint::<f32>(
        std::path::Path::new(&args[1]),
        &NetworkSpec::saliency(h, w, vec![12, 24, 48]).unwrap(),
    )
    .unwrap();

    let mut mean_mask = 0.0f64;
    let mut mean_abs_delta = 0.0f64;
    let mut saturated = 0.0f64;
    let mut mid = 0.0f64;
    let n = clean.len().min(64);
    for i in 0..n {
        let m_clean = forward_saliency(&g, &clean[i].image).unwrap();
        let m_adv = forward_saliency(&g, &adv[i].image).unwrap();
        let numel = m_clean.numel() as f64;
        mean_mask += m_clean.data().iter().map(|&v| v as f64).sum::<f64>() / numel;
        mean_abs_delta += m_clean
            .data()
            .iter()
            .zip(m_adv.data())
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>()
            / numel;
        saturated += m_clean
            .data()
            .iter()
            .filter(|&&v| v < 0.05 || v > 0.95)
            .count() as f64
            / numel;
        mid += m_clean
            .data()
            .iter()
            .filter(|&&v| (0.2..=0.8).contains(&v))
            .count() as f64
            / numel;
    }
    println!(
        "mean mask {:.4}, mean |G(x*)-G(x)| {:.4}, saturated frac {:.3}, mid frac {:.3}",
        mean_mask / n as f64,
        mean_abs_delta / n as f64,
        saturated / n as f64,
        mid / n as f64
    );
}
