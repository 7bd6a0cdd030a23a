//! `attack`: generate an adversarial dataset against N or the masked
//! composite, persisting provenance alongside the records.

use std::path::Path;

use depthguard_core::attacks::{attack_dataset, provenance_string, AttackConfig, AttackTarget};
use depthguard_core::data::io::dataset_bytes;
use depthguard_core::data::SampleRecord;
use depthguard_core::losses::LossKind;
use depthguard_core::networks::forward_depth;

use crate::args::{parse_widths, Args};
use crate::cli_error::{CliError, CliResult};
use crate::config::{Resolved, RunConfig};
use crate::outputs::Outputs;

pub fn run(argv: &[String]) -> CliResult<()> {
    let args = Args::parse(
        argv,
        &[
            "n", "g", "data", "eps", "iters", "alpha", "loss", "target", "out", "widths", "g-widths",
            "config",
        ],
        &["self"],
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

    let eps: f64 = match args.parse_num("eps")? {
        Some(v) => v,
        None => file_cfg
            .parse_num("attack", "eps")?
            .ok_or_else(|| CliError::usage("missing --eps (or [attack] eps)"))?,
    };
    let iters: u32 = match args.parse_num("iters")? {
        Some(v) => v,
        None => file_cfg.parse_num("attack", "iters")?.unwrap_or(10),
    };
    let loss: LossKind = match args.get("loss").or(file_cfg.get("attack", "loss")) {
        Some(s) => s.parse()?,
        None => LossKind::L1,
    };
    let target = match args.get("target").or(file_cfg.get("attack", "target")) {
        None | Some("plain") => AttackTarget::PlainN,
        Some("composite") => AttackTarget::CompositeC,
        Some(other) => {
            return Err(CliError::usage(format!(
                "unknown target `{other}` (expected plain|composite)"
            )))
        }
    };

    let mut cfg = AttackConfig::new(eps, iters)?
        .with_objective(loss)
        .with_target(target);
    match args.get("alpha").or(file_cfg.get("attack", "alpha")) {
        None | Some("eps-split") => {}
        Some("paper") => cfg = cfg.with_paper_alpha(),
        Some(v) => {
            let a: f64 = v
                .parse()
                .map_err(|_| CliError::usage(format!("bad alpha `{v}`")))?;
            cfg = cfg.with_alpha(a)?;
        }
    }

    let n = super::load_depth_net(args.require("n")?, &records, &widths)?;
    let g = match target {
        AttackTarget::CompositeC => {
            let path = args
                .get("g")
                .ok_or_else(|| CliError::usage("composite target requires --g CKPT"))?;
            let g_widths = match args.get("g-widths") {
                Some(w) => parse_widths(w)?,
                None => widths.clone(),
            };
            Some(super::load_saliency_net(path, &records, &g_widths)?)
        }
        AttackTarget::PlainN => None,
    };

    // Label-free variant: attack against the network's own clean prediction
    // instead of the stored ground truth.
    let self_target = args.switch("self");
    let attack_input: Vec<SampleRecord> = if self_target {
        records
            .iter()
            .map(|rec| -> CliResult<SampleRecord> {
                Ok(SampleRecord {
                    image: rec.image.clone(),
                    depth: forward_depth(&n, &rec.image)?,
                    scene_seed: rec.scene_seed,
                })
            })
            .collect::<CliResult<_>>()?
    } else {
        records.clone()
    };

    let mut adversarial = attack_dataset(&n, g.as_ref(), &attack_input, &cfg)?;
    if self_target {
        for (adv, orig) in adversarial.iter_mut().zip(&records) {
            adv.depth = orig.depth.clone();
        }
    }

    let mut provenance = provenance_string(&cfg);
    if self_target {
        provenance.push_str("self_target=true\n");
    }

    let mut resolved = Resolved::default();
    resolved.push("attack", "eps", format!("{eps:.6}"));
    resolved.push("attack", "iters", iters);
    resolved.push("attack", "alpha", format!("{:.6}", cfg.alpha));
    resolved.push("attack", "loss", loss);
    resolved.push("attack", "target", target.as_str());
    resolved.push("attack", "self", self_target);

    let mut outputs = Outputs::new();
    outputs.stage_bytes(out, &dataset_bytes(&adversarial, Some(&provenance))?)?;
    outputs.stage_bytes(&super::sidecar(out, "cfg"), resolved.render().as_bytes())?;
    outputs.commit()
}
