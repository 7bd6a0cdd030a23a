//! `train depth|depth-adv|saliency|saliency-adv`: run one training loop and
//! write a checkpoint plus an epoch-loss CSV.

use std::path::Path;

use depthguard_core::defense::{
    train_depth, train_depth_adv, train_saliency_adv, train_saliency_clean, TrainConfig,
};
use depthguard_core::networks::checkpoint_bytes;

use crate::args::{parse_widths, Args};
use crate::cli_error::{CliError, CliResult};
use crate::config::{Resolved, RunConfig};
use crate::outputs::Outputs;

pub fn run(argv: &[String]) -> CliResult<()> {
    if argv.is_empty() {
        return Err(CliError::usage(
            "train expects a variant: depth|depth-adv|saliency|saliency-adv",
        ));
    }
    let variant = argv[0].as_str();
    if !["depth", "depth-adv", "saliency", "saliency-adv"].contains(&variant) {
        return Err(CliError::usage(format!(
            "unknown train variant `{variant}` (expected depth|depth-adv|saliency|saliency-adv)"
        )));
    }
    let args = Args::parse(
        &argv[1..],
        &[
            "data", "config", "out", "frozen-n", "seed", "epochs", "lambda", "widths", "g-widths",
            "iters-per-epoch", "batch-size", "adv-prob", "lambda-warmup", "sparsity-target",
        ],
        &[],
    )?;
    args.expect_no_positional()?;
    let (records, _) = super::load_records(args.require("data")?)?;
    let out = Path::new(args.require("out")?);

    let file_cfg = match args.get("config") {
        Some(p) => RunConfig::load(Path::new(p))?,
        None => RunConfig::default(),
    };

    let widths = match args.get("widths") {
        Some(w) => parse_widths(w)?,
        None => match file_cfg.get("network", "widths") {
            Some(w) => parse_widths(w)?,
            None => super::DEFAULT_WIDTHS.to_vec(),
        },
    };

    let default_lambda = match variant {
        "saliency" => 5.0,
        "saliency-adv" => 1.0,
        _ => 0.0,
    };
    let mut cfg = TrainConfig {
        widths: widths.clone(),
        lambda: default_lambda,
        ..TrainConfig::default()
    };
    if let Some(v) = file_cfg.parse_num("train", "epochs")? {
        cfg.epochs = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "iters_per_epoch")? {
        cfg.iters_per_epoch = Some(v);
    }
    if let Some(v) = file_cfg.parse_num("train", "lambda")? {
        cfg.lambda = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "lr")? {
        cfg.lr = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "beta1")? {
        cfg.betas.0 = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "beta2")? {
        cfg.betas.1 = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "weight_decay")? {
        cfg.weight_decay = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "adv_prob")? {
        cfg.adv_prob = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "eps_lo")? {
        cfg.eps_range.0 = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "eps_hi")? {
        cfg.eps_range.1 = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "iter_lo")? {
        cfg.iter_range.0 = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "iter_hi")? {
        cfg.iter_range.1 = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "seed")? {
        cfg.seed = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "batch_size")? {
        cfg.batch_size = v;
    }
    if let Some(v) = file_cfg.parse_num("train", "lambda_warmup_iters")? {
        cfg.lambda_warmup_iters = Some(v);
    }
    if let Some(v) = file_cfg.parse_num("train", "sparsity_target")? {
        cfg.sparsity_target = Some(v);
    }
    // Flags override file values.
    if let Some(v) = args.parse_num("seed")? {
        cfg.seed = v;
    }
    if let Some(v) = args.parse_num("epochs")? {
        cfg.epochs = v;
    }
    if let Some(v) = args.parse_num("lambda")? {
        cfg.lambda = v;
    }
    if let Some(v) = args.parse_num("iters-per-epoch")? {
        cfg.iters_per_epoch = Some(v);
    }
    if let Some(v) = args.parse_num("batch-size")? {
        cfg.batch_size = v;
    }
    if let Some(v) = args.parse_num("adv-prob")? {
        cfg.adv_prob = v;
    }
    if let Some(v) = args.parse_num("lambda-warmup")? {
        cfg.lambda_warmup_iters = Some(v);
    }
    if let Some(v) = args.parse_num("sparsity-target")? {
        cfg.sparsity_target = Some(v);
    }

    let progress = |epoch: u32, loss: f64| {
        super::eprint_progress(&format!("{variant}: epoch {epoch} mean loss {loss:.4}"));
    };

    let (store, log) = match variant {
        "depth" => train_depth(&records, &cfg, progress)?,
        "depth-adv" => train_depth_adv(&records, &cfg, progress)?,
        "saliency" | "saliency-adv" => {
            let frozen_path = args.get("frozen-n").ok_or_else(|| {
                CliError::usage("saliency training requires --frozen-n CKPT")
            })?;
            let n = super::load_depth_net(frozen_path, &records, &widths)?;
            if let Some(gw) = args.get("g-widths") {
                cfg.widths = crate::args::parse_widths(gw)?;
            }
            if variant == "saliency" {
                train_saliency_clean(&n, &records, &cfg, progress)?
            } else {
                train_saliency_adv(&n, &records, &cfg, progress)?
            }
        }
        _ => unreachable!(),
    };

    let mut resolved = Resolved::default();
    resolved.push("network", "widths", widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","));
    resolved.push("train", "variant", variant);
    resolved.push("train", "epochs", cfg.epochs);
    if let Some(j) = cfg.iters_per_epoch {
        resolved.push("train", "iters_per_epoch", j);
    }
    resolved.push("train", "lambda", cfg.lambda);
    resolved.push("train", "lr", cfg.lr);
    resolved.push("train", "beta1", cfg.betas.0);
    resolved.push("train", "beta2", cfg.betas.1);
    resolved.push("train", "weight_decay", cfg.weight_decay);
    resolved.push("train", "adv_prob", cfg.adv_prob);
    resolved.push("train", "eps_lo", cfg.eps_range.0);
    resolved.push("train", "eps_hi", cfg.eps_range.1);
    resolved.push("train", "iter_lo", cfg.iter_range.0);
    resolved.push("train", "iter_hi", cfg.iter_range.1);
    resolved.push("train", "seed", cfg.seed);
    resolved.push("train", "batch_size", cfg.batch_size);
    if let Some(w) = cfg.lambda_warmup_iters {
        resolved.push("train", "lambda_warmup_iters", w);
    }
    if let Some(t) = cfg.sparsity_target {
        resolved.push("train", "sparsity_target", t);
    }
    resolved.push("train", "adv_iterations", log.adv_iterations);
    resolved.push("train", "total_iterations", log.total_iterations);

    let mut outputs = Outputs::new();
    outputs.stage_bytes(out, &checkpoint_bytes(&store)?)?;
    outputs.stage_bytes(&super::sidecar(out, "cfg"), resolved.render().as_bytes())?;
    outputs.stage_bytes(
        &super::sidecar(out, "train.csv"),
        super::training_log_csv(&log.epoch_losses).as_bytes(),
    )?;
    outputs.commit()
}
