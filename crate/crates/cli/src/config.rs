//! Key=value config files merged into the argument list so that flags given
//! on the command line take precedence over the file, which in turn takes
//! precedence over built-in defaults.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::CommandFactory;

use crate::args::Cli;

/// Parses `key = value` lines; blank lines and `#` comments are ignored.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!(crate::UsageError(format!(
                "{}:{}: expected key=value, got '{line}'",
                path.display(),
                n + 1
            )));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Location of `--config` in `argv`, if present.
fn find_config(argv: &[String]) -> Result<Option<String>> {
    for (i, a) in argv.iter().enumerate() {
        if a == "--" {
            break;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Ok(Some(v.to_string()));
        }
        if a == "--config" {
            return match argv.get(i + 1) {
                Some(v) => Ok(Some(v.clone())),
                None => bail!(crate::UsageError("--config needs a path".into())),
            };
        }
    }
    Ok(None)
}

/// Returns `argv` extended with the config file's settings for every flag
/// not already given on the command line.
pub fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(strings) = argv.iter().map(|a| a.to_str().map(str::to_string)).collect::<Option<Vec<_>>>() else {
        return Ok(argv); // non-UTF-8 arguments are left for clap to reject
    };
    let Some(path) = find_config(&strings)? else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let pairs = parse_config(&text, path)?;

    let root = Cli::command();
    let Some(sub) = strings
        .iter()
        .skip(1)
        .find_map(|a| root.get_subcommands().find(|s| s.get_name() == a))
    else {
        return Ok(argv); // let clap report the missing subcommand
    };

    let mut merged = argv;
    for (key, value) in pairs {
        if key == "config" {
            bail!(crate::UsageError(format!("{}: a config file cannot name another config", path.display())));
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            bail!(crate::UsageError(format!(
                "{}: unknown key '{key}' for the {} subcommand",
                path.display(),
                sub.get_name()
            )));
        };
        let flag = format!("--{key}");
        let on_command_line = strings
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if on_command_line {
            continue;
        }
        if arg.get_action().takes_values() {
            merged.push(format!("{flag}={value}").into());
        } else {
            match value.as_str() {
                "true" | "yes" | "1" => merged.push(flag.into()),
                "false" | "no" | "0" => {}
                other => bail!(crate::UsageError(format!(
                    "{}: '{key}' is a switch, expected true or false, got '{other}'",
                    path.display()
                ))),
            }
        }
    }
    Ok(merged)
}
