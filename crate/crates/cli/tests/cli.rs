//! End-to-end command-line tests: the full synth -> train -> attack -> eval
//! -> dump flow at tiny scale, plus the error and sidecar contracts.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_depthguard"))
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> TempDir {
        let dir = std::env::temp_dir().join(format!("dg-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn depthguard");
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run_err(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn depthguard");
    assert!(!out.status.success(), "command unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn unknown_command_and_flags_give_single_line_errors() {
    let stderr = run_err(bin().arg("transmogrify"));
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].starts_with("error: usage: "), "{stderr}");

    let stderr = run_err(bin().args(["synth", "--sed", "1"]));
    assert!(stderr.starts_with("error: usage: unknown flag --sed"), "{stderr}");
}

#[test]
fn synth_writes_dataset_and_resolved_config() {
    let dir = TempDir::new("synth");
    let out = dir.path("data.dgd1");
    run_ok(bin().args([
        "synth", "--seed", "3", "--n", "5", "--dims", "32x32", "--out",
        out.to_str().unwrap(),
    ]));
    let (records, _) = depthguard_core::data::io::load_dataset(&out).unwrap();
    assert_eq!(records.len(), 5);
    let sidecar = std::fs::read_to_string(dir.path("data.dgd1.cfg")).unwrap();
    assert!(sidecar.contains("[data]"));
    assert!(sidecar.contains("seed=3"));
    assert!(sidecar.contains("height=32"));
}

#[test]
fn synth_rejects_bad_dims_without_leaving_outputs() {
    let dir = TempDir::new("synth-bad");
    let out = dir.path("data.dgd1");
    let stderr = run_err(bin().args([
        "synth", "--seed", "1", "--n", "2", "--dims", "30x32", "--out",
        out.to_str().unwrap(),
    ]));
    assert!(stderr.starts_with("error: invalid-argument:"), "{stderr}");
    assert!(!out.exists());
    assert!(!dir.path("data.dgd1.cfg").exists());
}

/// The full pipeline through every subcommand at miniature scale.
#[test]
fn full_flow_train_attack_eval_dump() {
    let dir = TempDir::new("flow");
    let data = dir.path("data.dgd1");
    run_ok(bin().args([
        "synth", "--seed", "11", "--n", "10", "--dims", "32x32", "--out",
        data.to_str().unwrap(),
    ]));

    // Train a small N.
    let n_ckpt = dir.path("n.dgw1");
    run_ok(bin().args([
        "train", "depth", "--data", data.to_str().unwrap(), "--out",
        n_ckpt.to_str().unwrap(), "--epochs", "1", "--widths", "3,4", "--seed", "5",
    ]));
    assert!(n_ckpt.exists());
    let train_log = std::fs::read_to_string(dir.path("n.dgw1.train.csv")).unwrap();
    assert!(train_log.starts_with("epoch,l_depth,l_grad,l_normal,total,sparsity,lambda"));

    // Saliency training requires the frozen N.
    let g_ckpt = dir.path("g.dgw1");
    let stderr = run_err(bin().args([
        "train", "saliency", "--data", data.to_str().unwrap(), "--out",
        g_ckpt.to_str().unwrap(), "--epochs", "1", "--widths", "3,4",
    ]));
    assert!(stderr.contains("--frozen-n"), "{stderr}");
    run_ok(bin().args([
        "train", "saliency", "--data", data.to_str().unwrap(), "--out",
        g_ckpt.to_str().unwrap(), "--epochs", "1", "--widths", "3,4", "--seed", "6",
        "--frozen-n", n_ckpt.to_str().unwrap(),
    ]));

    // Wrong widths against an existing checkpoint: spec hash mismatch.
    let stderr = run_err(bin().args([
        "attack", "--n", n_ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--eps", "0.05", "--widths", "4,6", "--out", dir.path("bad.dgd1").to_str().unwrap(),
    ]));
    assert!(stderr.starts_with("error: spec-hash-mismatch:"), "{stderr}");

    // Attack N.
    let adv = dir.path("adv.dgd1");
    run_ok(bin().args([
        "attack", "--n", n_ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--eps", "0.1", "--iters", "3", "--loss", "l1", "--widths", "3,4", "--out",
        adv.to_str().unwrap(),
    ]));
    let (adv_records, provenance) = depthguard_core::data::io::load_dataset(&adv).unwrap();
    assert_eq!(adv_records.len(), 10);
    let provenance = provenance.expect("adversarial datasets carry provenance");
    assert!(provenance.contains("eps=0.100000"));
    assert!(provenance.contains("loss=l1"));

    // Composite attack needs --g.
    let stderr = run_err(bin().args([
        "attack", "--n", n_ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--eps", "0.05", "--target", "composite", "--widths", "3,4", "--out",
        dir.path("x.dgd1").to_str().unwrap(),
    ]));
    assert!(stderr.contains("--g"), "{stderr}");

    // Evaluate A on the adversarial set and B on clean; both append rows.
    let csv = dir.path("results.csv");
    run_ok(bin().args([
        "eval", "--config-id", "A", "--n", n_ckpt.to_str().unwrap(), "--data",
        data.to_str().unwrap(), "--adv-data", adv.to_str().unwrap(), "--eps", "0.1",
        "--iters", "3", "--widths", "3,4", "--out", csv.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "eval", "--config-id", "B", "--n", n_ckpt.to_str().unwrap(), "--data",
        data.to_str().unwrap(), "--eps", "0", "--widths", "3,4", "--out",
        csv.to_str().unwrap(),
    ]));
    let table = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert_eq!(lines[0], depthguard_core::metrics::CSV_HEADER);
    assert!(lines[1].starts_with("A,ifgsm-l1,0.100000,3,"));
    assert!(lines[2].starts_with("B,none,0.000000,0,"));

    // Config D without --g names the missing role.
    let stderr = run_err(bin().args([
        "eval", "--config-id", "D", "--n", n_ckpt.to_str().unwrap(), "--data",
        data.to_str().unwrap(), "--eps", "0.1", "--widths", "3,4", "--out",
        csv.to_str().unwrap(),
    ]));
    assert!(stderr.starts_with("error: missing-checkpoint:"), "{stderr}");
    assert!(stderr.contains("`g`"), "{stderr}");

    // Dumps: depth maps and the clean-vs-adversarial difference images.
    let dump_dir = dir.path("dump");
    run_ok(bin().args([
        "dump", "--what", "depth", "--data", data.to_str().unwrap(), "--n",
        n_ckpt.to_str().unwrap(), "--widths", "3,4", "--limit", "2", "--out",
        dump_dir.to_str().unwrap(),
    ]));
    assert!(dump_dir.join("img_000.ppm").exists());
    assert!(dump_dir.join("depth_pred_000.pgm").exists());
    assert!(dump_dir.join("depth_pred_000.pgm.range.txt").exists());

    run_ok(bin().args([
        "dump", "--what", "diff", "--data", data.to_str().unwrap(), "--data2",
        adv.to_str().unwrap(), "--limit", "1", "--out", dump_dir.to_str().unwrap(),
    ]));
    assert!(dump_dir.join("diff_000.pgm").exists());
}

#[test]
fn eval_zero_eps_adv_data_matches_clean_row() {
    // `eval --config-id A` with eps=0 equals `eval --config-id B` row for row.
    let dir = TempDir::new("collapse");
    let data = dir.path("data.dgd1");
    run_ok(bin().args([
        "synth", "--seed", "2", "--n", "6", "--dims", "32x32", "--out",
        data.to_str().unwrap(),
    ]));
    let n_ckpt = dir.path("n.dgw1");
    run_ok(bin().args([
        "train", "depth", "--data", data.to_str().unwrap(), "--out",
        n_ckpt.to_str().unwrap(), "--epochs", "1", "--widths", "3,4",
    ]));
    let csv = dir.path("ab.csv");
    for id in ["A", "B"] {
        run_ok(bin().args([
            "eval", "--config-id", id, "--n", n_ckpt.to_str().unwrap(), "--data",
            data.to_str().unwrap(), "--eps", "0", "--widths", "3,4", "--out",
            csv.to_str().unwrap(),
        ]));
    }
    let table = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    let a_metrics = lines[1].strip_prefix("A,").unwrap();
    let b_metrics = lines[2].strip_prefix("B,").unwrap();
    assert_eq!(a_metrics, b_metrics);
}

#[test]
fn corrupted_dataset_fails_loudly() {
    let dir = TempDir::new("corrupt");
    let data = dir.path("data.dgd1");
    run_ok(bin().args([
        "synth", "--seed", "1", "--n", "2", "--dims", "32x32", "--out",
        data.to_str().unwrap(),
    ]));
    let mut bytes = std::fs::read(&data).unwrap();
    bytes[9] ^= 0xFF; // inside the first tensor header
    std::fs::write(&data, &bytes).unwrap();
    let stderr = run_err(bin().args([
        "dump", "--what", "depth", "--data", data.to_str().unwrap(), "--n", "x.dgw1",
        "--out", dir.path("d").to_str().unwrap(),
    ]));
    assert!(stderr.starts_with("error: format:"), "{stderr}");
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let dir = TempDir::new("cfg");
    let cfg = dir.path("run.cfg");
    std::fs::write(&cfg, "[data]\nseed=1\nnn=4\n").unwrap();
    let stderr = run_err(bin().args([
        "synth", "--config", cfg.to_str().unwrap(), "--out",
        dir.path("d.dgd1").to_str().unwrap(),
    ]));
    assert!(stderr.starts_with("error: config:"), "{stderr}");
    assert!(stderr.contains("unknown key `nn`"), "{stderr}");
}

#[test]
fn help_prints_usage() {
    let stdout = run_ok(bin().arg("help"));
    assert!(stdout.contains("usage: depthguard"));
    assert!(stdout.contains("DEPTHGUARD_THREADS"));
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let dir = TempDir::new("threads");
    for (name, threads) in [("one.dgd1", "1"), ("many.dgd1", "4")] {
        run_ok(
            bin()
                .env("DEPTHGUARD_THREADS", threads)
                .args([
                    "synth", "--seed", "12", "--n", "8", "--dims", "32x32", "--out",
                    dir.path(name).to_str().unwrap(),
                ]),
        );
    }
    let a = std::fs::read(dir.path("one.dgd1")).unwrap();
    let b = std::fs::read(dir.path("many.dgd1")).unwrap();
    assert_eq!(a, b, "worker count changed the generated bytes");
}

#[test]
fn self_targeted_attack_keeps_ground_truth() {
    let dir = TempDir::new("selfattack");
    let data = dir.path("data.dgd1");
    run_ok(bin().args([
        "synth", "--seed", "4", "--n", "3", "--dims", "32x32", "--out",
        data.to_str().unwrap(),
    ]));
    let n_ckpt = dir.path("n.dgw1");
    run_ok(bin().args([
        "train", "depth", "--data", data.to_str().unwrap(), "--out",
        n_ckpt.to_str().unwrap(), "--epochs", "1", "--widths", "3,4",
    ]));
    let adv = dir.path("adv.dgd1");
    run_ok(bin().args([
        "attack", "--n", n_ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--eps", "0.05", "--iters", "2", "--widths", "3,4", "--self", "--out",
        adv.to_str().unwrap(),
    ]));
    let (orig, _) = depthguard_core::data::io::load_dataset(&data).unwrap();
    let (advr, provenance) = depthguard_core::data::io::load_dataset(&adv).unwrap();
    assert!(provenance.unwrap().contains("self_target=true"));
    // Ground-truth depths are preserved even though the attack targeted N(x).
    // Note the self-targeted objective starts at exactly zero, so the first
    // gradient (hence the whole deterministic attack) may be a no-op; only
    // the band invariant is guaranteed.
    for (a, o) in advr.iter().zip(&orig) {
        assert_eq!(a.depth.data(), o.depth.data());
        assert!(a.image.max_abs_diff(&o.image) <= 0.05 + 1e-6);
    }
}

/// Keep a reference to the path helper so the binary path resolves in tests.
#[allow(dead_code)]
fn binary_exists() {
    assert!(Path::new(env!("CARGO_BIN_EXE_depthguard")).exists());
}
