//! Batch command-line front end for the depth attack/defense toolkit.
//!
//! Every failure exits nonzero with a single machine-parsable line:
//! `error: <code>: <detail>`. A successful exit means the requested artifact
//! was fully written; partial outputs are cleaned up on the way out.

mod args;
mod cli_error;
mod commands;
mod config;
mod outputs;

use cli_error::CliError;

const USAGE: &str = "\
depthguard - adversarial attacks and saliency-masking defenses for toy
monocular depth estimation.

usage: depthguard <command> [flags]

commands:
  synth      --seed S --n N --dims HxW --out FILE.dgd1
  train      depth|depth-adv|saliency|saliency-adv --data FILE.dgd1
             --out FILE.dgw1 [--frozen-n FILE.dgw1] [--config FILE]
             [--seed S] [--epochs K] [--lambda L] [--widths 12,24,48]
  attack     --n FILE.dgw1 --data FILE.dgd1 --eps E [--iters T]
             [--alpha eps-split|paper|NUM] [--loss l1|l2|rel|log10|ldif]
             [--target plain|composite --g FILE.dgw1] [--self]
             --out FILE.dgd1
  eval       --config-id A|B|C|D|E|F --n FILE.dgw1 [--n-adv F] [--g F]
             [--g-adv F] --data FILE.dgd1 [--adv-data FILE.dgd1]
             [--eps E --iters T --loss L] [--samples K] --out FILE.csv
             [--losses-out FILE.csv]
  dump       --what depth|saliency|diff --data FILE.dgd1 [--data2 FILE.dgd1]
             [--n F | --g F] --out DIR [--limit K]
  reproduce  --workdir DIR [--seed S] [--quick] [--n N] [--dims HxW]
             [--widths ...] [--eval-samples K] [--attack-iters T]
             [--epochs-depth K] [--epochs-depth-adv K]
             [--epochs-saliency K] [--epochs-saliency-adv K]

environment:
  DEPTHGUARD_THREADS   cap on worker threads (default: logical processors)
";

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(run(&argv));
}

fn run(argv: &[String]) -> i32 {
    let Some(command) = argv.first() else {
        eprintln!("error: usage: no command given; run `depthguard help`");
        return 1;
    };
    let rest = &argv[1..];
    let result = match command.as_str() {
        "synth" => commands::synth::run(rest),
        "train" => commands::train::run(rest),
        "attack" => commands::attack::run(rest),
        "eval" => commands::eval::run(rest),
        "dump" => commands::dump::run(rest),
        "reproduce" => commands::reproduce::run(rest),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            return 0;
        }
        other => Err(CliError::usage(format!("unknown command `{other}`"))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {}", e.code, e.one_line_detail());
            1
        }
    }
}
