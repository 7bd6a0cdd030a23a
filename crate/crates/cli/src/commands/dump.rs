//! `dump`: write inspection images (PPM/PGM with normalization sidecars).

use std::path::Path;

use depthguard_core::data::io::{write_pgm, write_ppm};
use depthguard_core::networks::{forward_depth, forward_saliency};
use depthguard_core::tensor::Tensor;

use crate::args::{parse_widths, Args};
use crate::cli_error::{CliError, CliResult};
use crate::outputs::Outputs;

pub fn run(argv: &[String]) -> CliResult<()> {
    let args = Args::parse(
        argv,
        &["what", "data", "data2", "n", "g", "out", "limit", "widths", "g-widths"],
        &[],
    )?;
    args.expect_no_positional()?;
    let what = args.require("what")?;
    let (records, _) = super::load_records(args.require("data")?)?;
    let out_dir = Path::new(args.require("out")?).to_path_buf();
    std::fs::create_dir_all(&out_dir)?;
    let limit: usize = args.parse_num("limit")?.unwrap_or(8);
    let take = limit.min(records.len());
    let widths = match args.get("widths") {
        Some(w) => parse_widths(w)?,
        None => super::DEFAULT_WIDTHS.to_vec(),
    };

    let mut outputs = Outputs::new();
    match what {
        "depth" => {
            let n = super::load_depth_net(args.require("n")?, &records, &widths)?;
            for (i, rec) in records.iter().take(take).enumerate() {
                let pred = forward_depth(&n, &rec.image)?;
                stage_ppm(&mut outputs, &out_dir.join(format!("img_{i:03}.ppm")), &rec.image)?;
                stage_pgm(&mut outputs, &out_dir.join(format!("depth_pred_{i:03}.pgm")), &pred)?;
                stage_pgm(&mut outputs, &out_dir.join(format!("depth_true_{i:03}.pgm")), &rec.depth)?;
            }
        }
        "saliency" => {
            let g_widths = match args.get("g-widths") {
                Some(w) => parse_widths(w)?,
                None => widths.clone(),
            };
            let g = super::load_saliency_net(args.require("g")?, &records, &g_widths)?;
            for (i, rec) in records.iter().take(take).enumerate() {
                let mask = forward_saliency(&g, &rec.image)?;
                stage_ppm(&mut outputs, &out_dir.join(format!("img_{i:03}.ppm")), &rec.image)?;
                stage_pgm(&mut outputs, &out_dir.join(format!("mask_{i:03}.pgm")), &mask)?;
            }
        }
        "diff" => {
            let second = args
                .get("data2")
                .ok_or_else(|| CliError::usage("diff needs --data2 with the second dataset"))?;
            let (other, _) = super::load_records(second)?;
            if other.len() < take {
                return Err(CliError::new(
                    "invalid-argument",
                    "second dataset has fewer records than requested",
                ));
            }
            for i in 0..take {
                let a = &records[i].image;
                let b = &other[i].image;
                if a.shape() != b.shape() {
                    return Err(CliError::new(
                        "shape-mismatch",
                        format!("record {i}: {:?} vs {:?}", a.shape(), b.shape()),
                    ));
                }
                let [_, h, w] = a.shape()[..] else { unreachable!() };
                let plane = h * w;
                let diff = Tensor::from_fn(vec![1, h, w], |p| {
                    let mut acc = 0.0f32;
                    for c in 0..3 {
                        acc += (a.data()[c * plane + p] - b.data()[c * plane + p]).abs();
                    }
                    acc / 3.0
                });
                stage_ppm(&mut outputs, &out_dir.join(format!("a_{i:03}.ppm")), a)?;
                stage_ppm(&mut outputs, &out_dir.join(format!("b_{i:03}.ppm")), b)?;
                stage_pgm(&mut outputs, &out_dir.join(format!("diff_{i:03}.pgm")), &diff)?;
            }
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown dump kind `{other}` (expected depth|saliency|diff)"
            )))
        }
    }
    outputs.commit()
}

fn stage_ppm(outputs: &mut Outputs, path: &Path, image: &Tensor<f32>) -> CliResult<()> {
    write_ppm(path, image)?;
    outputs.written_in_place(path);
    Ok(())
}

// The PGM writer emits its own `.range.txt` sidecar, so it cannot go through
// the temp-rename path; both files are registered for cleanup instead.
fn stage_pgm(outputs: &mut Outputs, path: &Path, map: &Tensor<f32>) -> CliResult<()> {
    write_pgm(path, map)?;
    outputs.written_in_place(path);
    outputs.written_in_place(&super::sidecar(path, "range.txt"));
    Ok(())
}
