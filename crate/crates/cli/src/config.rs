//! `--config FILE` support: a JSON object of flag names to values, spliced in
//! right after the subcommand so that flags given on the command line win.

use std::ffi::OsString;
use std::fs;

use anyhow::{bail, Context, Result};
use serde_json::Value;

/// Removes `--config FILE` / `--config=FILE` from `args` and returns the file.
fn take_config_path(args: &mut Vec<OsString>) -> Result<Option<OsString>> {
    let mut found = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy().into_owned();
        if a == "--" {
            break;
        }
        if a == "--config" {
            if i + 1 >= args.len() {
                bail!(crate::UsageError("--config needs a file argument".into()));
            }
            found = Some(args.remove(i + 1));
            args.remove(i);
            continue;
        }
        if let Some(path) = a.strip_prefix("--config=") {
            found = Some(OsString::from(path));
            args.remove(i);
            continue;
        }
        i += 1;
    }
    Ok(found)
}

fn flag_args(key: &str, value: &Value) -> Result<Vec<OsString>> {
    let flag = format!("--{}", key.replace('_', "-"));
    let scalar = |v: &Value| -> Result<String> {
        Ok(match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            other => bail!(crate::UsageError(format!("config key {key:?}: unsupported value {other}"))),
        })
    };
    Ok(match value {
        Value::Null | Value::Bool(false) => vec![],
        Value::Bool(true) => vec![flag.into()],
        Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
            vec![flag.into(), parts.join(",").into()]
        }
        Value::Object(_) => bail!(crate::UsageError(format!("config key {key:?}: nested objects are not supported"))),
        v => vec![flag.into(), scalar(v)?.into()],
    })
}

/// Expands `--config` into explicit flags placed before the user's own.
pub fn expand(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = take_config_path(&mut args)? else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading config {}", path.to_string_lossy()))
        .map_err(|e| crate::UsageError(format!("{e:#}")))?;
    let json: Value = serde_json::from_str(&text)
        .map_err(|e| crate::UsageError(format!("config {}: {e}", path.to_string_lossy())))?;
    let Value::Object(map) = json else {
        bail!(crate::UsageError("config must be a JSON object of flag names to values".into()));
    };
    let mut injected = Vec::new();
    for (k, v) in &map {
        injected.extend(flag_args(k, v)?);
    }
    // Subcommand = first argument after the program name that is not a flag.
    let at = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 2)
        .unwrap_or(args.len());
    args.splice(at..at, injected);
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"window": 8, "band_bpm": [80, 200], "no_filter": true, "post_filter": false}"#).unwrap();
        let args = os(&["rppg", "hr", "--config", p.to_str().unwrap(), "--window", "12"]);
        let out = expand(args).unwrap();
        let s: Vec<_> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(
            s,
            ["rppg", "hr", "--band-bpm", "80,200", "--no-filter", "--window", "8", "--window", "12"]
        );
    }

    #[test]
    fn passthrough_without_config() {
        let args = os(&["rppg", "eval", "--pred", "a.csv"]);
        assert_eq!(expand(args.clone()).unwrap(), args);
    }

    #[test]
    fn rejects_non_object() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, "[1, 2]").unwrap();
        let arg = format!("--config={}", p.display());
        assert!(expand(os(&["rppg", "hr", &arg])).is_err());
    }
}
