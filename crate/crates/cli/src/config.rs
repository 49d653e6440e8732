//! Flag defaults from a JSON config file.
//!
//! The file maps command names to objects of flag values, nesting for
//! subcommands:
//!
//! ```json
//! { "train": { "episodes": 2000, "workers": 2 }, "gen": { "bw": { "duration": 600 } } }
//! ```
//!
//! Values are spliced into the argument list right after their command, unless
//! the flag was given explicitly. Arrays repeat the flag, `true` adds a bare
//! switch, `false` and `null` are skipped.

use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};

fn flag_name(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}

fn scalar(v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        other => bail!("config value {other} is not a string or number"),
    })
}

fn flag_args(key: &str, v: &Value) -> Result<Vec<String>> {
    let flag = flag_name(key);
    Ok(match v {
        Value::Bool(true) => vec![flag],
        Value::Bool(false) | Value::Null => vec![],
        Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                out.push(flag.clone());
                out.push(scalar(item)?);
            }
            out
        }
        other => vec![flag, scalar(other)?],
    })
}

/// Index just past the first non-flag token at or after `from` equal to `name`.
fn find_command(args: &[String], from: usize, name: &str) -> Option<usize> {
    args.iter().skip(from).position(|a| a == name).map(|i| from + i + 1)
}

fn given(args: &[String], from: usize, flag: &str) -> bool {
    args.iter().skip(from).any(|a| a == flag || a.starts_with(&format!("{flag}=")))
}

fn splice(args: &mut Vec<String>, from: usize, table: &Map<String, Value>, env_seed: bool) -> Result<()> {
    let mut inserted = Vec::new();
    for (key, value) in table {
        if let Value::Object(sub) = value {
            if let Some(at) = find_command(args, from, key) {
                splice(args, at, sub, env_seed)?;
            }
            continue;
        }
        let flag = flag_name(key);
        if given(args, from, &flag) || (env_seed && key == "seed") {
            continue;
        }
        inserted.extend(flag_args(key, value).with_context(|| format!("config key {key}"))?);
    }
    let at = from.min(args.len());
    args.splice(at..at, inserted);
    Ok(())
}

/// Applies the `--config FILE` given anywhere in `args`, returning the
/// rewritten argument list.
pub fn apply(mut args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = if let Some(p) = args[pos].strip_prefix("--config=") {
        let p = p.to_string();
        args.remove(pos);
        p
    } else {
        if pos + 1 >= args.len() {
            bail!("--config needs a file");
        }
        let p = args.remove(pos + 1);
        args.remove(pos);
        p
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let root: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {path}"))?;
    let Value::Object(table) = root else {
        bail!("config {path} must be a JSON object");
    };
    let env_seed = std::env::var_os("OFBVR_SEED").is_some();
    for (command, value) in &table {
        let Value::Object(sub) = value else {
            bail!("config entry {command} must be an object of flags");
        };
        if let Some(at) = find_command(&args, 1, command) {
            splice(&mut args, at, sub, env_seed)?;
        }
    }
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn explicit_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"train": {"episodes": 9, "workers": 2, "dry_run": true}}"#).unwrap();
        let out = apply(args(&format!("ofbvr --config {} train --episodes 3", path.display()))).unwrap();
        assert_eq!(out[..2], args("ofbvr train")[..]);
        assert!(out.windows(2).any(|w| w == ["--workers", "2"]));
        assert!(out.contains(&"--dry-run".to_string()));
        assert_eq!(out.iter().filter(|a| *a == "--episodes").count(), 1);
        assert!(out.windows(2).any(|w| w == ["--episodes", "3"]));
    }

    #[test]
    fn nested_subcommands() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"gen": {"bw": {"duration": 600}}}"#).unwrap();
        let out = apply(args(&format!("ofbvr gen bw --out x.csv --config={}", path.display()))).unwrap();
        assert_eq!(out, args("ofbvr gen bw --duration 600 --out x.csv"));
    }
}
