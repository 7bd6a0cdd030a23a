//! Dev probe: channel structure of the adversarial perturbation.
//!
//! Usage: probe_delta CLEAN_DGD1 ADV_DGD1

use depthguard_core::data::io::load_dataset;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (clean, _) = load_dataset(std::path::Path::new(&args[0])).unwrap();
    let (adv, _) = load_dataset(std::path::Path::new(&args[1])).unwrap();

    let mut same_sign_rg = 0u64;
    let mut same_sign_rb = 0u64;
    let mut total = 0u64;
    let mut mean_abs = 0.0f64;
    let mut mean_abs_chroma = 0.0f64;
    for (c, a) in clean.iter().zip(&adv).take(32) {
        let [_, h, w] = c.image.shape()[..] else { panic!() };
        let plane = h * w;
        let cd = c.image.data();
        let ad = a.image.data();
        for i in 0..plane {
            let dr = (ad[i] - cd[i]) as f64;
            let dg = (ad[plane + i] - cd[plane + i]) as f64;
            let db = (ad[2 * plane + i] - cd[2 * plane + i]) as f64;
            if dr * dg > 0.0 {
                same_sign_rg += 1;
            }
            if dr * db > 0.0 {
                same_sign_rb += 1;
            }
            total += 1;
            let lum = (dr + dg + db) / 3.0;
            mean_abs += lum.abs();
            mean_abs_chroma += ((dr - lum).abs() + (dg - lum).abs() + (db - lum).abs()) / 3.0;
        }
    }
    println!(
        "same-sign rg {:.3}, rb {:.3}; |luminance delta| {:.4}, |chroma delta| {:.4}",
        same_sign_rg as f64 / total as f64,
        same_sign_rb as f64 / total as f64,
        mean_abs / total as f64,
        mean_abs_chroma / total as f64
    );
}
