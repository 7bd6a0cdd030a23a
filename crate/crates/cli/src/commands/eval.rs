//! `eval`: run one configuration over a test set and append a row to the
//! metrics CSV.

use std::path::Path;

use depthguard_core::attacks::AttackConfig;
use depthguard_core::defense::{
    evaluate_configuration, predict_configuration, ConfigStores, ConfigurationId,
};
use depthguard_core::losses::{eval_difference_loss, LossKind};
use depthguard_core::metrics::{csv_row, CSV_HEADER};
use depthguard_core::networks::forward_saliency;

use crate::args::{parse_widths, Args};
use crate::cli_error::{CliError, CliResult};
use crate::config::{Resolved, RunConfig};
use crate::outputs::Outputs;

pub fn run(argv: &[String]) -> CliResult<()> {
    let args = Args::parse(
        argv,
        &[
            "config-id", "n", "n-adv", "g", "g-adv", "data", "adv-data", "eps", "iters",
            "loss", "out", "samples", "widths", "g-widths", "config", "losses-out",
        ],
        &[],
    )?;
    args.expect_no_positional()?;
    let id: ConfigurationId = args.require("config-id")?.parse()?;
    let (mut records, _) = super::load_records(args.require("data")?)?;
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
    let samples: Option<usize> = match args.parse_num("samples")? {
        Some(v) => Some(v),
        None => file_cfg.parse_num("eval", "samples")?,
    };
    if let Some(k) = samples {
        if k == 0 {
            return Err(CliError::usage("--samples must be positive"));
        }
        records.truncate(k);
    }

    let adv_records = match args.get("adv-data") {
        Some(p) => {
            let (mut adv, _) = super::load_records(p)?;
            if let Some(k) = samples {
                adv.truncate(k);
            }
            Some(adv)
        }
        None => None,
    };

    let eps: f64 = match args.parse_num("eps")? {
        Some(v) => v,
        None => file_cfg.parse_num("attack", "eps")?.unwrap_or(0.0),
    };
    let iters: u32 = match args.parse_num("iters")? {
        Some(v) => v,
        None => file_cfg.parse_num("attack", "iters")?.unwrap_or(10),
    };
    let loss: LossKind = match args.get("loss").or(file_cfg.get("attack", "loss")) {
        Some(s) => s.parse()?,
        None => LossKind::L1,
    };
    let attack_cfg = AttackConfig::new(eps, iters)?.with_objective(loss);

    let n = super::load_depth_net(args.require("n")?, &records, &widths)?;
    let n_adv = args
        .get("n-adv")
        .map(|p| super::load_depth_net(p, &records, &widths))
        .transpose()?;
    let g_widths = match args.get("g-widths") {
        Some(w) => parse_widths(w)?,
        None => widths.clone(),
    };
    let g = args
        .get("g")
        .map(|p| super::load_saliency_net(p, &records, &g_widths))
        .transpose()?;
    let g_adv = args
        .get("g-adv")
        .map(|p| super::load_saliency_net(p, &records, &g_widths))
        .transpose()?;
    let stores = ConfigStores {
        n: &n,
        n_adv: n_adv.as_ref(),
        g: g.as_ref(),
        g_adv: g_adv.as_ref(),
    };

    let report = evaluate_configuration(id, &stores, &records, adv_records.as_deref(), &attack_cfg)?;

    // Append the row, creating the table (with header) on first use.
    let mut table = match std::fs::read_to_string(out) {
        Ok(existing) => existing,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => format!("{CSV_HEADER}\n"),
        Err(e) => return Err(e.into()),
    };
    table.push_str(&csv_row(&report));
    table.push('\n');

    let mut resolved = Resolved::default();
    resolved.push("eval", "config_id", id);
    resolved.push("eval", "samples", records.len());
    resolved.push("attack", "eps", format!("{eps:.6}"));
    resolved.push("attack", "iters", iters);
    resolved.push("attack", "loss", loss);

    let mut outputs = Outputs::new();
    outputs.stage_bytes(out, table.as_bytes())?;
    outputs.stage_bytes(&super::sidecar(out, "cfg"), resolved.render().as_bytes())?;

    // Optional difference-loss breakdown over the same evaluation.
    if let Some(losses_out) = args.get("losses-out") {
        let breakdown_csv = losses_breakdown_csv(id, &stores, &records, adv_records.as_deref(), &attack_cfg)?;
        outputs.stage_bytes(Path::new(losses_out), breakdown_csv.as_bytes())?;
    }
    outputs.commit()
}

/// Mean difference-loss components (and mask sparsity where a mask is in
/// play) for one configuration, as a one-row CSV.
fn losses_breakdown_csv(
    id: ConfigurationId,
    stores: &ConfigStores,
    records: &[depthguard_core::data::SampleRecord],
    adv: Option<&[depthguard_core::data::SampleRecord]>,
    attack_cfg: &AttackConfig,
) -> CliResult<String> {
    let mut sums = [0.0f64; 4];
    let mut sparsity_sum = 0.0f64;
    let mut has_mask = false;
    for (i, rec) in records.iter().enumerate() {
        let x_star = if attack_cfg.eps == 0.0 {
            rec.image.clone()
        } else if let Some(adv) = adv {
            adv[i].image.clone()
        } else {
            depthguard_core::attacks::attack_plain(stores.n, &rec.image, &rec.depth, attack_cfg)?
                .x_star
        };
        let pred = predict_configuration(id, stores, &rec.image, &x_star)?;
        let b = eval_difference_loss(&pred, &rec.depth)?;
        sums[0] += b.depth;
        sums[1] += b.gradient;
        sums[2] += b.normal;
        sums[3] += b.total;
        let mask_src = match id {
            ConfigurationId::D | ConfigurationId::F => Some(&x_star),
            ConfigurationId::E => Some(&rec.image),
            _ => None,
        };
        if let Some(src) = mask_src {
            let store = match id {
                ConfigurationId::F => stores.g_adv.expect("checked by evaluate"),
                _ => stores.g.expect("checked by evaluate"),
            };
            let mask = forward_saliency(store, src)?;
            let mean: f64 =
                mask.data().iter().map(|&v| v as f64).sum::<f64>() / mask.numel() as f64;
            sparsity_sum += mean;
            has_mask = true;
        }
    }
    let n = records.len() as f64;
    let sparsity = if has_mask {
        format!("{:.6}", sparsity_sum / n)
    } else {
        String::new()
    };
    Ok(format!(
        "config,attack,eps,iters,l_depth,l_grad,l_normal,total,sparsity,n\n{},{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
        id,
        attack_cfg.describe(),
        attack_cfg.eps,
        if attack_cfg.eps == 0.0 { 0 } else { attack_cfg.iters },
        sums[0] / n,
        sums[1] / n,
        sums[2] / n,
        sums[3] / n,
        sparsity,
        records.len()
    ))
}
