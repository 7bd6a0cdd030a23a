//! Minimal flag parser: `--key value` pairs, boolean switches, and strict
//! rejection of anything undeclared.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::cli_error::{CliError, CliResult};

pub struct Args {
    pub positional: Vec<String>,
    values: BTreeMap<String, String>,
    switches: BTreeSet<String>,
}

impl Args {
    /// Parse `argv`, accepting only the declared value flags and switches.
    pub fn parse(argv: &[String], value_flags: &[&str], switch_flags: &[&str]) -> CliResult<Args> {
        let mut positional = Vec::new();
        let mut values = BTreeMap::new();
        let mut switches = BTreeSet::new();
        let mut i = 0;
        while i < argv.len() {
            let a = &argv[i];
            if let Some(name) = a.strip_prefix("--") {
                if switch_flags.contains(&name) {
                    switches.insert(name.to_string());
                } else if value_flags.contains(&name) {
                    let v = argv.get(i + 1).ok_or_else(|| {
                        CliError::usage(format!("flag --{name} expects a value"))
                    })?;
                    if values.insert(name.to_string(), v.clone()).is_some() {
                        return Err(CliError::usage(format!("flag --{name} given twice")));
                    }
                    i += 1;
                } else {
                    return Err(CliError::usage(format!("unknown flag --{name}")));
                }
            } else {
                positional.push(a.clone());
            }
            i += 1;
        }
        Ok(Args {
            positional,
            values,
            switches,
        })
    }

    /// Commands that take no positional arguments call this first.
    pub fn expect_no_positional(&self) -> CliResult<()> {
        match self.positional.first() {
            None => Ok(()),
            Some(p) => Err(CliError::usage(format!("unexpected argument `{p}`"))),
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(|s| s.as_str())
    }

    pub fn require(&self, name: &str) -> CliResult<&str> {
        self.get(name)
            .ok_or_else(|| CliError::usage(format!("missing required flag --{name}")))
    }

    pub fn switch(&self, name: &str) -> bool {
        self.switches.contains(name)
    }

    pub fn parse_num<T: std::str::FromStr>(&self, name: &str) -> CliResult<Option<T>> {
        match self.get(name) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                CliError::usage(format!("flag --{name}: cannot parse `{v}`"))
            }),
        }
    }
}

/// Parse `HxW` dimension syntax, e.g. `64x48`.
pub fn parse_dims(s: &str) -> CliResult<(usize, usize)> {
    let (h, w) = s
        .split_once('x')
        .ok_or_else(|| CliError::usage(format!("dims `{s}` must look like 64x48")))?;
    let h = h
        .parse()
        .map_err(|_| CliError::usage(format!("bad height in dims `{s}`")))?;
    let w = w
        .parse()
        .map_err(|_| CliError::usage(format!("bad width in dims `{s}`")))?;
    Ok((h, w))
}

/// Parse a comma-separated width list, e.g. `12,24,48`.
pub fn parse_widths(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("bad channel width `{p}`")))
        })
        .collect()
}
