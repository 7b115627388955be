//! Config files supply flag values the command line leaves unset.
//!
//! Top-level scalars are global flags; a table named after a subcommand
//! holds that subcommand's flags. Keys are long flag names, with `_` or `-`.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgMatches, Command};
use serde_json::Value;

pub fn load(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value = if is_json {
        serde_json::from_str(&text).with_context(|| format!("parsing JSON config {}", path.display()))?
    } else {
        let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing TOML config {}", path.display()))?;
        serde_json::to_value(table)?
    };
    if !value.is_object() {
        bail!("config {} must be a table of flag values", path.display());
    }
    Ok(value)
}

fn scalar(key: &str, v: &Value) -> Result<Option<String>> {
    Ok(match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(_) => None,
        Value::Array(items) => Some(
            items
                .iter()
                .map(|i| scalar(key, i)?.with_context(|| format!("config key `{key}` holds a nested list")))
                .collect::<Result<Vec<_>>>()?
                .join(","),
        ),
        _ => bail!("config key `{key}` must be a string, number, boolean or list"),
    })
}

fn given_by_user(m: &ArgMatches, id: &str) -> bool {
    matches!(
        m.value_source(id),
        Some(ValueSource::CommandLine) | Some(ValueSource::EnvVariable)
    )
}

/// Extra arguments, to append after the subcommand, that carry config
/// values for flags the user did not set.
pub fn extra_args(config: &Value, cmd: &Command, top: &ArgMatches) -> Result<Vec<OsString>> {
    let Some((sub_name, sub)) = top.subcommand() else {
        return Ok(Vec::new());
    };
    let mut known: Vec<String> = cmd.get_arguments().map(|a| a.get_id().to_string()).collect();
    if let Some(sc) = cmd.find_subcommand(sub_name) {
        known.extend(sc.get_arguments().map(|a| a.get_id().to_string()));
    }
    let mut args = Vec::new();
    let obj = config.as_object().expect("checked in load");
    let mut push = |key: &str, v: &Value, m: &ArgMatches| -> Result<()> {
        let id = key.replace('-', "_");
        if id == "config" {
            return Ok(());
        }
        if !known.contains(&id) {
            bail!("config key `{key}` is not a flag of `{sub_name}`");
        }
        if given_by_user(m, &id) {
            return Ok(());
        }
        let flag = format!("--{}", id.replace('_', "-"));
        match v {
            // `param = { key = value }` becomes repeated `--param key=value`.
            Value::Object(map) => {
                for (k, inner) in map {
                    let s = scalar(k, inner)?.unwrap_or_else(|| inner.to_string());
                    args.push(flag.clone().into());
                    args.push(format!("{k}={s}").into());
                }
            }
            Value::Bool(true) => args.push(flag.into()),
            Value::Bool(false) => {}
            other => {
                if let Some(s) = scalar(key, other)? {
                    args.push(flag.into());
                    args.push(s.into());
                }
            }
        }
        Ok(())
    };
    for (key, v) in obj {
        if v.is_object() && key != "param" {
            if key.replace('_', "-") == sub_name {
                for (k, inner) in v.as_object().unwrap() {
                    push(k, inner, sub)?;
                }
            }
            continue;
        }
        push(key, v, sub)?;
    }
    Ok(args)
}
