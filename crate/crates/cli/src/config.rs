//! `--config` files: `key = value` lines whose entries become command-line
//! flags. Keys also given on the command line are dropped, so it wins.

use std::ffi::OsString;
use std::fmt;

/// Invalid configuration or arguments; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub const SUBCOMMANDS: [&str; 8] = ["simulate", "ampute", "impute", "em", "fit", "theory", "bench", "selectfreq"];

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = k.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError(format!("config line {}: bad key {key:?}", i + 1)));
        }
        out.push((key.replace('_', "-"), v.trim().to_owned()));
    }
    Ok(out)
}

/// Turns entries into flags. `true` enables a switch, `false` leaves it off.
pub fn to_flags(entries: &[(String, String)]) -> Vec<OsString> {
    let mut out = Vec::new();
    for (k, v) in entries {
        if k == "config" {
            continue;
        }
        match v.as_str() {
            "true" => out.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{k}").into());
                out.push(v.into());
            }
        }
    }
    out
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

fn given(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&format!("{flag}="))
    })
}

/// Splices the flags of the `--config` file, if any, right after the
/// subcommand name.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let entries: Vec<(String, String)> = parse(&text)?.into_iter().filter(|(k, _)| !given(&args, k)).collect();
    let flags = to_flags(&entries);
    let at = args.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())).map_or(args.len(), |i| i + 2);
    let mut out = args[..at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}
