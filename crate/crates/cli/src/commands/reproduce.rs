//! `reproduce`: run the full pipeline and emit both result tables, all four
//! checkpoints, the per-training loss logs, and the resolved configuration.

use std::path::Path;

use depthguard_core::metrics::render_csv;
use depthguard_core::networks::checkpoint_bytes;
use depthguard_core::pipeline::{run_reproduce, ReproduceConfig};

use crate::args::{parse_dims, parse_widths, Args};
use crate::cli_error::CliResult;
use crate::config::Resolved;
use crate::outputs::Outputs;

pub fn run(argv: &[String]) -> CliResult<()> {
    let args = Args::parse(
        argv,
        &[
            "workdir",
            "seed",
            "n",
            "dims",
            "widths",
            "eval-samples",
            "attack-iters",
            "epochs-depth",
            "epochs-depth-adv",
            "epochs-saliency",
            "epochs-saliency-adv",
        ],
        &["quick"],
    )?;
    args.expect_no_positional()?;
    let workdir = Path::new(args.require("workdir")?).to_path_buf();
    std::fs::create_dir_all(&workdir)?;

    let mut cfg = ReproduceConfig::default();
    if args.switch("quick") {
        cfg.n_samples = 60;
        cfg.dims = (32, 32);
        cfg.widths = vec![4, 6];
        cfg.depth_epochs = 1;
        cfg.depth_adv_epochs = 1;
        cfg.saliency_epochs = 1;
        cfg.saliency_adv_epochs = 1;
        cfg.eval_samples = 8;
        cfg.attack_iters = 3;
    }
    if let Some(v) = args.parse_num("seed")? {
        cfg.seed = v;
    }
    if let Some(v) = args.parse_num("n")? {
        cfg.n_samples = v;
    }
    if let Some(d) = args.get("dims") {
        cfg.dims = parse_dims(d)?;
    }
    if let Some(w) = args.get("widths") {
        cfg.widths = parse_widths(w)?;
    }
    if let Some(v) = args.parse_num("eval-samples")? {
        cfg.eval_samples = v;
    }
    if let Some(v) = args.parse_num("attack-iters")? {
        cfg.attack_iters = v;
    }
    if let Some(v) = args.parse_num("epochs-depth")? {
        cfg.depth_epochs = v;
    }
    if let Some(v) = args.parse_num("epochs-depth-adv")? {
        cfg.depth_adv_epochs = v;
    }
    if let Some(v) = args.parse_num("epochs-saliency")? {
        cfg.saliency_epochs = v;
    }
    if let Some(v) = args.parse_num("epochs-saliency-adv")? {
        cfg.saliency_adv_epochs = v;
    }

    let artifacts = run_reproduce(&cfg, &mut |line| super::eprint_progress(&line))?;

    let mut resolved = Resolved::default();
    resolved.push("data", "seed", cfg.seed);
    resolved.push("data", "n", cfg.n_samples);
    resolved.push("data", "height", cfg.dims.0);
    resolved.push("data", "width", cfg.dims.1);
    resolved.push("data", "train_fraction", cfg.train_fraction);
    resolved.push(
        "network",
        "widths",
        cfg.widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    resolved.push("train", "epochs_depth", cfg.depth_epochs);
    resolved.push("train", "epochs_depth_adv", cfg.depth_adv_epochs);
    resolved.push("train", "epochs_saliency", cfg.saliency_epochs);
    resolved.push("train", "epochs_saliency_adv", cfg.saliency_adv_epochs);
    resolved.push("train", "lambda_clean", cfg.lambda_clean);
    resolved.push("train", "lambda_adv", cfg.lambda_adv);
    resolved.push("attack", "iters", cfg.attack_iters);
    resolved.push("eval", "samples", cfg.eval_samples);

    let mut outputs = Outputs::new();
    outputs.stage_bytes(&workdir.join("table1.csv"), render_csv(&artifacts.table1).as_bytes())?;
    outputs.stage_bytes(&workdir.join("table2.csv"), render_csv(&artifacts.table2).as_bytes())?;
    outputs.stage_bytes(&workdir.join("n.dgw1"), &checkpoint_bytes(&artifacts.n)?)?;
    outputs.stage_bytes(&workdir.join("n_adv.dgw1"), &checkpoint_bytes(&artifacts.n_adv)?)?;
    outputs.stage_bytes(&workdir.join("g.dgw1"), &checkpoint_bytes(&artifacts.g)?)?;
    outputs.stage_bytes(&workdir.join("g_adv.dgw1"), &checkpoint_bytes(&artifacts.g_adv)?)?;
    outputs.stage_bytes(
        &workdir.join("train_n.csv"),
        super::training_log_csv(&artifacts.logs.depth.epoch_losses).as_bytes(),
    )?;
    outputs.stage_bytes(
        &workdir.join("train_n_adv.csv"),
        super::training_log_csv(&artifacts.logs.depth_adv.epoch_losses).as_bytes(),
    )?;
    outputs.stage_bytes(
        &workdir.join("train_g.csv"),
        super::training_log_csv(&artifacts.logs.saliency.epoch_losses).as_bytes(),
    )?;
    outputs.stage_bytes(
        &workdir.join("train_g_adv.csv"),
        super::training_log_csv(&artifacts.logs.saliency_adv.epoch_losses).as_bytes(),
    )?;
    outputs.stage_bytes(&workdir.join("resolved.cfg"), resolved.render().as_bytes())?;
    outputs.commit()
}
