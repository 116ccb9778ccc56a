//! `key=value` config files merged with command-line overrides.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Pairs from `file` (if any) followed by flag pairs, so later entries, and
/// therefore flags, win when applied in order.
pub fn gather(
    file: Option<&Path>,
    flags: Vec<(&'static str, String)>,
) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    pairs.extend(flags.into_iter().map(|(k, v)| (k.to_string(), v)));
    Ok(pairs)
}

pub fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad value `{value}` for {key}")))
}

pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').map(|v| parse(key, v)).collect()
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("bad value `{value}` for {key}"))),
    }
}

pub fn unknown(command: &str, key: &str) -> CliError {
    CliError::Config(format!("unknown key `{key}` for {command}"))
}
