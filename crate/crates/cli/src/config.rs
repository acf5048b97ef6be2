//! Layered run configuration: defaults, then a TOML file, then flags.
//!
//! Keys are dotted paths into [`RunConfig`] (`model.rank`, `adam.lr`). The
//! merged result is echoed as flat `key = value` lines, which is itself a
//! valid config file.

use serde_json::{Map, Value};
use svdno::train::RunConfig;
use svdno::{Error, Result};

/// A `key=value` override. The value is read as a TOML literal, falling back
/// to a bare string.
pub fn parse_override(s: &str) -> std::result::Result<(String, Value), String> {
    let (key, raw) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(format!("empty key in `{s}`"));
    }
    Ok((key.to_string(), toml_literal(raw.trim())))
}

fn toml_literal(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("key just parsed")).unwrap_or(Value::Null),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !node.get(*part).is_some_and(Value::is_object) {
            node[*part] = Value::Object(Map::new());
        }
        node = &mut node[*part];
    }
    node[parts[parts.len() - 1]] = value;
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        _ => out.push((prefix.to_string(), v.clone())),
    }
}

/// Merges `file` (TOML text) and `overrides` over the defaults.
pub fn merge(file: Option<&str>, overrides: &[(String, Value)]) -> Result<RunConfig> {
    let mut tree = serde_json::to_value(RunConfig::default())?;
    let mut known = Vec::new();
    flatten("", &tree, &mut known);
    let mut given = Vec::new();
    if let Some(text) = file {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
        flatten("", &serde_json::to_value(table)?, &mut given);
    }
    given.extend(overrides.iter().cloned());
    for (key, value) in given {
        if !known.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        set_path(&mut tree, &key, value);
    }
    let cfg: RunConfig = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Flat `key = value` rendering, sorted by key.
pub fn render(cfg: &RunConfig) -> Result<String> {
    let mut pairs = Vec::new();
    flatten("", &serde_json::to_value(cfg)?, &mut pairs);
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::new();
    for (k, v) in pairs {
        let literal: toml::Value = serde_json::from_value(v)?;
        out.push_str(&format!("{k} = {literal}\n"));
    }
    Ok(out)
}
