//! Plain-text run configuration: INI-style sections of key=value lines.
//!
//! Unknown sections or keys are hard errors so typos never silently change a
//! run. Every command writes the fully resolved settings it actually used
//! next to its outputs, so any artifact can be regenerated from its sidecar.

use std::collections::BTreeMap;
use std::path::Path;

use crate::cli_error::{CliError, CliResult};

const SECTIONS: [(&str, &[&str]); 5] = [
    ("data", &["seed", "n", "height", "width", "train_fraction"]),
    ("network", &["widths"]),
    (
        "train",
        &[
            "epochs",
            "iters_per_epoch",
            "lambda",
            "lr",
            "beta1",
            "beta2",
            "weight_decay",
            "adv_prob",
            "eps_lo",
            "eps_hi",
            "iter_lo",
            "iter_hi",
            "seed",
            "batch_size",
            "lambda_warmup_iters",
            "sparsity_target",
        ],
    ),
    ("attack", &["eps", "iters", "alpha", "loss", "target"]),
    ("eval", &["samples"]),
];

/// Parsed configuration file: section -> key -> raw value.
#[derive(Default, Debug)]
pub struct RunConfig {
    values: BTreeMap<(String, String), String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<RunConfig> {
        let mut values = BTreeMap::new();
        let mut section: Option<String> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(CliError::config(format!(
                        "line {}: unknown section [{name}]",
                        ln + 1
                    )));
                }
                section = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!(
                    "line {}: expected key=value, got `{line}`",
                    ln + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            let Some(section) = &section else {
                return Err(CliError::config(format!(
                    "line {}: key `{key}` outside any section",
                    ln + 1
                )));
            };
            let known = SECTIONS
                .iter()
                .find(|(s, _)| s == section)
                .map(|(_, keys)| keys.contains(&key))
                .unwrap_or(false);
            if !known {
                return Err(CliError::config(format!(
                    "line {}: unknown key `{key}` in section [{section}]",
                    ln + 1
                )));
            }
            if values
                .insert((section.clone(), key.to_string()), value.to_string())
                .is_some()
            {
                return Err(CliError::config(format!(
                    "line {}: duplicate key `{key}` in section [{section}]",
                    ln + 1
                )));
            }
        }
        Ok(RunConfig { values })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(|s| s.as_str())
    }

    pub fn parse_num<T: std::str::FromStr>(&self, section: &str, key: &str) -> CliResult<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                CliError::config(format!("[{section}] {key}: cannot parse `{v}`"))
            }),
        }
    }
}

/// Fully resolved settings, rendered in insertion order as an INI document.
#[derive(Default)]
pub struct Resolved {
    sections: Vec<(&'static str, Vec<(String, String)>)>,
}

impl Resolved {
    pub fn push(&mut self, section: &'static str, key: &str, value: impl ToString) {
        if let Some((_, entries)) = self.sections.iter_mut().find(|(s, _)| *s == section) {
            entries.push((key.to_string(), value.to_string()));
        } else {
            self.sections
                .push((section, vec![(key.to_string(), value.to_string())]));
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (section, entries) in &self.sections {
            out.push('[');
            out.push_str(section);
            out.push_str("]\n");
            for (k, v) in entries {
                out.push_str(k);
                out.push('=');
                out.push_str(v);
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_values() {
        let cfg = RunConfig::parse("# comment\n[data]\nseed = 7\nn=100\n\n[train]\nepochs=3\n")
            .unwrap();
        assert_eq!(cfg.get("data", "seed"), Some("7"));
        assert_eq!(cfg.parse_num::<u32>("train", "epochs").unwrap(), Some(3));
        assert_eq!(cfg.get("train", "lambda"), None);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        assert!(RunConfig::parse("[data]\nsed=7\n").is_err());
        assert!(RunConfig::parse("[datum]\nseed=7\n").is_err());
        assert!(RunConfig::parse("seed=7\n").is_err());
        assert!(RunConfig::parse("[data]\nseed=7\nseed=8\n").is_err());
    }

    #[test]
    fn resolved_renders_canonically() {
        let mut r = Resolved::default();
        r.push("data", "seed", 7);
        r.push("data", "n", 100);
        r.push("attack", "eps", "0.050000");
        assert_eq!(r.render(), "[data]\nseed=7\nn=100\n\n[attack]\neps=0.050000\n\n");
    }
}
