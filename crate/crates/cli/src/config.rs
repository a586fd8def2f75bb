//! `key = value` config files, merged into the argument list ahead of the
//! command-line flags so that flags win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::CommandFactory;

use crate::Cli;

/// Parse a config file body. Blank lines and `#` comments are skipped; keys
/// may use `_` or `-`.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", no + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("config line {}: empty key", no + 1));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(format!("config key '{key}' given twice"));
        }
    }
    Ok(out)
}

/// Long flag names accepted by a subcommand.
fn known_keys(command: &str) -> Option<Vec<String>> {
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(command)?;
    Some(
        sub.get_arguments()
            .filter_map(|a| a.get_long().map(str::to_string))
            .filter(|l| l != "config" && l != "help")
            .collect(),
    )
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Long flags given explicitly after the subcommand.
fn explicit_flags(args: &[OsString]) -> Vec<String> {
    args.iter()
        .filter_map(|a| {
            let s = a.to_string_lossy();
            let name = s.strip_prefix("--")?;
            Some(name.split('=').next().unwrap_or_default().to_string())
        })
        .collect()
}

/// Splice `--key=value` pairs from the `--config` file right after the
/// subcommand name, except for keys also given as flags. Unknown keys are
/// rejected.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path))
        .map_err(|e| format!("cannot read config {}: {e}", Path::new(&path).display()))?;
    let pairs = parse(&text)?;
    let Some(pos) = args
        .iter()
        .skip(1)
        .position(|a| known_keys(&a.to_string_lossy()).is_some())
    else {
        return Ok(args);
    };
    let pos = pos + 1;
    let command = args[pos].to_string_lossy().to_string();
    let known = known_keys(&command).unwrap_or_default();
    let given = explicit_flags(&args[pos + 1..]);
    let mut out: Vec<OsString> = args[..=pos].to_vec();
    for (k, v) in &pairs {
        if !known.contains(k) {
            return Err(format!("unknown config key '{k}' for command '{command}'"));
        }
        if !given.contains(k) {
            out.push(format!("--{k}={v}").into());
        }
    }
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
