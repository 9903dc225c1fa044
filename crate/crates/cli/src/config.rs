//! `--config` files: a flat TOML table whose keys are long flag names.
//!
//! Values are turned back into `--key value` arguments for the selected
//! subcommand and appended only when that flag is absent from the command
//! line, so explicit flags always win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Command};

fn leaf<'a>(mut cmd: &'a Command, args: &[OsString]) -> &'a Command {
    for a in args.iter().skip(1) {
        let Some(a) = a.to_str() else { continue };
        if a.starts_with('-') {
            continue;
        }
        match cmd.find_subcommand(a) {
            Some(sub) => cmd = sub,
            None if cmd.has_subcommands() => continue,
            None => break,
        }
    }
    cmd
}

fn present(args: &[OsString], flag: &str) -> bool {
    let eq = format!("{flag}=");
    args.iter()
        .filter_map(|a| a.to_str())
        .any(|a| a == flag || a.starts_with(&eq))
}

fn scalar(key: &str, v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .iter()
            .map(|i| scalar(key, i))
            .collect::<Result<Vec<_>>>()?
            .join(","),
        _ => bail!("config key {key:?}: unsupported value"),
    })
}

/// Appends config values for flags missing from `args`.
pub fn merge(root: &Command, args: Vec<OsString>, path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("config {}", path.display()))?;
    let mut root = root.clone();
    root.build();
    let cmd = leaf(&root, &args);
    let mut extra = Vec::new();
    for (key, value) in &table {
        if key == "config" {
            bail!("config key \"config\" is not allowed");
        }
        let Some(arg) = cmd.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            let known_elsewhere = root
                .get_subcommands()
                .flat_map(|s| std::iter::once(s).chain(s.get_subcommands()))
                .any(|s| s.get_arguments().any(|a| a.get_long() == Some(key.as_str())));
            if known_elsewhere {
                log::debug!("config key {key:?} does not apply to `{}`", cmd.get_name());
                continue;
            }
            bail!("unknown config key {key:?}");
        };
        let flag = format!("--{key}");
        if present(&args, &flag) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value {
                toml::Value::Boolean(true) => extra.push(flag.into()),
                toml::Value::Boolean(false) => {}
                _ => bail!("config key {key:?} expects true or false"),
            },
            _ => {
                extra.push(flag.into());
                extra.push(scalar(key, value)?.into());
            }
        }
    }
    let mut args = args;
    args.extend(extra);
    Ok(args)
}
