//! Subcommand implementations.

pub mod attack;
pub mod dump;
pub mod eval;
pub mod reproduce;
pub mod synth;
pub mod train;

use std::path::Path;

use depthguard_core::data::SampleRecord;
use depthguard_core::losses::LossBreakdown;
use depthguard_core::networks::{load_checkpoint, NetworkSpec, ParameterStore};

use crate::cli_error::{CliError, CliResult};

pub const DEFAULT_WIDTHS: [usize; 3] = [12, 24, 48];

pub fn load_records(path: &str) -> CliResult<(Vec<SampleRecord>, Option<String>)> {
    let (records, provenance) = depthguard_core::data::io::load_dataset(Path::new(path))?;
    if records.is_empty() {
        return Err(CliError::new(
            "invalid-argument",
            format!("{path}: dataset holds no records"),
        ));
    }
    Ok((records, provenance))
}

pub fn record_dims(records: &[SampleRecord]) -> (usize, usize) {
    records[0].image_dims()
}

pub fn depth_spec(records: &[SampleRecord], widths: &[usize]) -> CliResult<NetworkSpec> {
    let (h, w) = record_dims(records);
    Ok(NetworkSpec::depth(h, w, widths.to_vec())?)
}

pub fn saliency_spec(records: &[SampleRecord], widths: &[usize]) -> CliResult<NetworkSpec> {
    let (h, w) = record_dims(records);
    Ok(NetworkSpec::saliency(h, w, widths.to_vec())?)
}

pub fn load_depth_net(
    path: &str,
    records: &[SampleRecord],
    widths: &[usize],
) -> CliResult<ParameterStore<f32>> {
    Ok(load_checkpoint(Path::new(path), &depth_spec(records, widths)?)?)
}

pub fn load_saliency_net(
    path: &str,
    records: &[SampleRecord],
    widths: &[usize],
) -> CliResult<ParameterStore<f32>> {
    Ok(load_checkpoint(Path::new(path), &saliency_spec(records, widths)?)?)
}

/// Training-log CSV: one row per epoch with the loss breakdown.
pub fn training_log_csv(epochs: &[LossBreakdown]) -> String {
    let mut out = String::from("epoch,l_depth,l_grad,l_normal,total,sparsity,lambda\n");
    for (i, b) in epochs.iter().enumerate() {
        let sparsity = b
            .sparsity
            .map(|s| format!("{s:.6}"))
            .unwrap_or_else(|| "".to_string());
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{},{:.6}\n",
            i + 1,
            b.depth,
            b.gradient,
            b.normal,
            b.total,
            sparsity,
            b.lambda
        ));
    }
    out
}

pub fn eprint_progress(line: &str) {
    eprintln!("[depthguard] {line}");
}

/// `path` plus a dotted suffix, e.g. `out.dgd1` -> `out.dgd1.cfg`.
pub fn sidecar(path: &Path, ext: &str) -> std::path::PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".{ext}"));
    path.with_file_name(name)
}
