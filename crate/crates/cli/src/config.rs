//! `key = value` config files whose keys are long flag names of the chosen
//! subcommand. Values from the file are appended to the argument list
//! unless the flag was given explicitly, so flags always win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Command;

pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", n + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"').to_string();
        out.insert(key, value);
    }
    Ok(out)
}

/// Position of the `--config` value and the subcommand name in `args`.
fn locate(args: &[OsString]) -> (Option<String>, Option<usize>) {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(|v| v.to_string_lossy().into_owned());
            i += 2;
            continue;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else if !a.starts_with('-') && sub.is_none() {
            sub = Some(i);
        }
        i += 1;
    }
    (config, sub)
}

/// Extend `args` with config values for flags not already present.
pub fn apply(command: &Command, args: Vec<OsString>) -> Result<Vec<OsString>> {
    let (Some(path), Some(sub_at)) = locate(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .with_context(|| format!("reading config {path}"))?;
    let values = parse(&text)?;
    let sub_name = args[sub_at].to_string_lossy().into_owned();
    let Some(sub) = command.find_subcommand(&sub_name) else {
        return Ok(args);
    };
    let given: Vec<String> = args[sub_at + 1..]
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let mut out = args;
    for (key, value) in values {
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            eprintln!("warning: config key '{key}' is not a flag of '{sub_name}'");
            continue;
        };
        let flag = format!("--{key}");
        if given.iter().any(|g| g == &flag || g.starts_with(&format!("{flag}="))) {
            continue;
        }
        if arg.get_action().takes_values() {
            out.push(flag.into());
            out.push(value.into());
        } else if matches!(value.as_str(), "true" | "1" | "yes") {
            out.push(flag.into());
        }
    }
    Ok(out)
}
