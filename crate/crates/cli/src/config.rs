//! `--config` files: a flat JSON object whose entries become flags.
//!
//! `{"lambda": 0.7, "label_mode": "soft", "bootstrap": true}` expands to
//! `--lambda 0.7 --label-mode soft --bootstrap`, inserted right after the
//! subcommand so that flags typed on the command line (which come later and
//! override earlier occurrences) win.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use serde_json::Value;

use crate::CliError;

fn config_path(args: &[OsString]) -> Result<Option<(PathBuf, usize)>, CliError> {
    let mut subcommand = None;
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        let arg = args[i].to_string_lossy();
        if arg == "--config" {
            let value = args
                .get(i + 1)
                .ok_or_else(|| CliError::Usage("--config requires a file path".into()))?;
            path = Some(PathBuf::from(value));
            i += 2;
            continue;
        }
        if let Some(value) = arg.strip_prefix("--config=") {
            path = Some(PathBuf::from(value));
        } else if subcommand.is_none() && !arg.starts_with('-') {
            subcommand = Some(i);
        }
        i += 1;
    }
    Ok(match (path, subcommand) {
        (Some(p), Some(s)) => Some((p, s)),
        _ => None,
    })
}

fn scalar(key: &str, v: &Value) -> Result<String, CliError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(CliError::Usage(format!(
            "config key `{key}` has an unsupported value"
        ))),
    }
}

/// Converts a config document into flag arguments.
pub fn config_flags(text: &str) -> Result<Vec<OsString>, CliError> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| CliError::Usage(format!("malformed config: {e}")))?;
    let Value::Object(entries) = doc else {
        return Err(CliError::Usage("config must be a JSON object".into()));
    };
    let mut out = Vec::new();
    for (key, value) in &entries {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => out.push(flag.into()),
            Value::Array(items) => {
                let parts = items
                    .iter()
                    .map(|v| scalar(key, v))
                    .collect::<Result<Vec<_>, _>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            other => {
                out.push(flag.into());
                out.push(scalar(key, other)?.into());
            }
        }
    }
    Ok(out)
}

/// Splices the flags of a `--config` file, if any, into `args`.
pub fn expand_args(mut args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some((path, subcommand)) = config_path(&args)? else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|source| CliError::Io { path, source })?;
    let flags = config_flags(&text)?;
    args.splice(subcommand + 1..subcommand + 1, flags);
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: Vec<OsString>) -> Vec<String> {
        v.into_iter().map(|s| s.into_string().unwrap()).collect()
    }

    #[test]
    fn flags_from_object() {
        let flags = config_flags(
            r#"{"label_mode":"soft","bootstrap":true,"strip":false,"lambdas":[0.6,0.7],"seed":3}"#,
        )
        .unwrap();
        assert_eq!(
            strings(flags),
            [
                "--bootstrap",
                "--label-mode",
                "soft",
                "--lambdas",
                "0.6,0.7",
                "--seed",
                "3"
            ]
        );
    }

    #[test]
    fn rejects_non_objects() {
        assert!(matches!(config_flags("[1]"), Err(CliError::Usage(_))));
        assert!(matches!(config_flags("{"), Err(CliError::Usage(_))));
        assert!(matches!(
            config_flags(r#"{"a":{"b":1}}"#),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn no_config_leaves_args_alone() {
        let args: Vec<OsString> = ["pseudocal", "train", "--seed", "1"]
            .map(OsString::from)
            .to_vec();
        assert_eq!(expand_args(args.clone()).unwrap(), args);
    }

    #[test]
    fn missing_config_value_is_usage_error() {
        let args: Vec<OsString> = ["pseudocal", "train", "--config"]
            .map(OsString::from)
            .to_vec();
        assert!(matches!(expand_args(args), Err(CliError::Usage(_))));
    }
}
