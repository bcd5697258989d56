//! `key=value` config files. Each key is a long flag name of the chosen
//! subcommand (`per_class` and `per-class` both work); flags given on the
//! command line win over the file.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses a config file into `(flag, value)` pairs. `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got {raw:?}", lineno + 1);
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            bail!("config line {}: invalid key {key:?}", lineno + 1);
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn given_on_cli(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let with_eq = format!("--{key}=");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&with_eq)
    })
}

/// Splices the flags of a `--config` file in after the subcommand name,
/// leaving out keys that the command line already sets.
pub fn expand_args(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let entries = parse_config(&text).with_context(|| format!("in {}", path.display()))?;

    let Some(sub) = argv.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|i| i + 1) else {
        return Ok(argv);
    };
    let mut out: Vec<OsString> = argv[..=sub].to_vec();
    for (key, value) in entries {
        if !given_on_cli(&argv, &key) {
            out.push(format!("--{key}").into());
            out.push(value.into());
        }
    }
    out.extend_from_slice(&argv[sub + 1..]);
    Ok(out)
}
