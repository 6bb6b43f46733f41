//! JSON config files.
//!
//! A config file is one flat object whose keys are long flag names
//! (`pc_grid` or `pc-grid`). Its entries are spliced into the argument list
//! right after the subcommand, so later command-line flags override them and
//! clap validates both the same way. Keys that belong to other subcommands
//! are ignored; keys no subcommand knows are rejected.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, Command};
use serde_json::Value;

use crate::CliError;

fn subcommand_position(argv: &[OsString]) -> Option<usize> {
    let mut skip_value = false;
    for (i, arg) in argv.iter().enumerate().skip(1) {
        if skip_value {
            skip_value = false;
            continue;
        }
        let text = arg.to_string_lossy();
        if text == "--config" {
            skip_value = true;
        } else if !text.starts_with('-') {
            return Some(i);
        }
    }
    None
}

fn value_text(key: &str, value: &Value) -> Result<Option<String>, String> {
    let scalar = |v: &Value| match v {
        Value::Number(n) => Ok(n.to_string()),
        Value::String(s) => Ok(s.clone()),
        _ => Err(format!("`{key}` must hold numbers or strings")),
    };
    match value {
        Value::Null => Ok(None),
        Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
            Ok(Some(parts.join(",")))
        }
        other => scalar(other).map(Some),
    }
}

/// Argument list with the config entries of `path` inserted after the
/// subcommand token.
pub fn merge_config(
    root: &Command,
    argv: &[OsString],
    path: &Path,
) -> Result<Vec<OsString>, CliError> {
    let fail = |reason: String| CliError::Config {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let document: Value = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
    let Value::Object(entries) = document else {
        return Err(fail("expected a JSON object".into()));
    };
    let position = subcommand_position(argv).ok_or_else(|| fail("no subcommand given".into()))?;
    let name = argv[position].to_string_lossy().into_owned();
    let command = root
        .find_subcommand(&name)
        .ok_or_else(|| fail(format!("unknown subcommand `{name}`")))?;

    let known: BTreeSet<String> = root
        .get_subcommands()
        .flat_map(|c| c.get_arguments())
        .filter_map(|a| a.get_long().map(str::to_owned))
        .collect();

    let mut spliced = Vec::new();
    for (key, value) in &entries {
        let long = key.replace('_', "-");
        if long == "config" || !known.contains(&long) {
            return Err(fail(format!("unknown option `{key}`")));
        }
        let Some(arg) = command
            .get_arguments()
            .find(|a| a.get_long() == Some(long.as_str()))
        else {
            continue;
        };
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value {
                Value::Bool(true) => spliced.push(OsString::from(format!("--{long}"))),
                Value::Bool(false) | Value::Null => {}
                _ => return Err(fail(format!("`{key}` must be true or false"))),
            }
            continue;
        }
        if let Some(text) = value_text(key, value).map_err(fail)? {
            spliced.push(OsString::from(format!("--{long}={text}")));
        }
    }

    let mut merged = argv[..=position].to_vec();
    merged.extend(spliced);
    merged.extend_from_slice(&argv[position + 1..]);
    Ok(merged)
}
