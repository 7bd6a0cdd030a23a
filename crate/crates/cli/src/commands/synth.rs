//! `synth`: generate a synthetic dataset file.

use std::path::Path;

use depthguard_core::data::{io::dataset_bytes, synth_generate};

use crate::args::{parse_dims, Args};
use crate::cli_error::CliResult;
use crate::config::{Resolved, RunConfig};
use crate::outputs::Outputs;

pub fn run(argv: &[String]) -> CliResult<()> {
    let args = Args::parse(argv, &["seed", "n", "dims", "out", "config"], &[])?;
    args.expect_no_positional()?;
    let file_cfg = match args.get("config") {
        Some(p) => RunConfig::load(Path::new(p))?,
        None => RunConfig::default(),
    };

    let seed: u64 = match args.parse_num("seed")? {
        Some(v) => v,
        None => file_cfg.parse_num("data", "seed")?.unwrap_or(0),
    };
    let n: usize = match args.parse_num("n")? {
        Some(v) => v,
        None => file_cfg.parse_num("data", "n")?.unwrap_or(100),
    };
    let dims = match args.get("dims") {
        Some(d) => parse_dims(d)?,
        None => {
            let h = file_cfg.parse_num("data", "height")?.unwrap_or(64);
            let w = file_cfg.parse_num("data", "width")?.unwrap_or(48);
            (h, w)
        }
    };
    let out = Path::new(args.require("out")?);

    let records = synth_generate(seed, n, dims)?;

    let mut resolved = Resolved::default();
    resolved.push("data", "seed", seed);
    resolved.push("data", "n", n);
    resolved.push("data", "height", dims.0);
    resolved.push("data", "width", dims.1);

    let mut outputs = Outputs::new();
    outputs.stage_bytes(out, &dataset_bytes(&records, None)?)?;
    outputs.stage_bytes(&super::sidecar(out, "cfg"), resolved.render().as_bytes())?;
    outputs.commit()
}
