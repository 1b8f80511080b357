//! `--config FILE` support: `key = value` lines become `--key value` flags
//! placed before the command-line flags, so explicit flags win.

use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses a config file into flag tokens. Blank lines and `#` comments are
/// skipped; `key = true` becomes a bare `--key`, `key = false` is dropped.
pub fn parse(text: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected `key = value`", lineno + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            bail!("config line {}: empty key", lineno + 1);
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            v => {
                args.push(format!("--{key}"));
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}

/// Removes `--config FILE` (or `--config=FILE`) from `argv` and splices the
/// file's flags in right after the subcommand.
pub fn expand(argv: Vec<String>) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(argv.len());
    let mut config_path = None;
    let mut iter = argv.into_iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            config_path = Some(iter.next().context("--config needs a file path")?);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        } else {
            out.push(arg);
        }
    }
    let Some(path) = config_path else {
        return Ok(out);
    };
    let text = std::fs::read_to_string(Path::new(&path)).with_context(|| format!("reading config file {path}"))?;
    let extra = parse(&text)?;
    // argv[0] is the program, argv[1] the subcommand
    let at = out.len().min(2);
    out.splice(at..at, extra);
    Ok(out)
}
