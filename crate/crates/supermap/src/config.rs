//! Configuration layering: defaults, then a JSON file, then `key=value`
//! overrides. Later layers win. Overrides address nested fields with dotted
//! paths (`sampler.max_stream_dim=30`) and parse values as JSON, falling back
//! to a plain string.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{AppError, Result};
use crate::formats::read_text;

/// Overlays `layer` onto `base`; keys absent from `base` are rejected so that
/// typos do not pass silently. `Option` fields serialize as `null` and accept
/// any value.
fn merge(base: &mut Value, layer: Value, at: &str) -> Result<()> {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                let slot = b
                    .get_mut(&k)
                    .ok_or_else(|| AppError::config(format!("unknown configuration field {path:?}")))?;
                merge(slot, v, &path)?;
            }
        }
        (slot, v) => *slot = v,
    }
    Ok(())
}

/// Sets the field at a dotted path; the field must already exist.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    for part in path.split('.') {
        cur = match cur {
            Value::Object(map) => map
                .get_mut(part)
                .ok_or_else(|| AppError::config(format!("unknown configuration field {path:?}")))?,
            Value::Array(items) => {
                let i: usize = part
                    .parse()
                    .map_err(|_| AppError::config(format!("{path:?}: {part:?} is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(i)
                    .ok_or_else(|| AppError::config(format!("{path:?}: index {i} out of range (length {len})")))?
            }
            _ => return Err(AppError::config(format!("{path:?}: {part:?} is not a nested field"))),
        };
    }
    *cur = value;
    Ok(())
}

/// Parses one `key=value` override.
pub fn parse_override(text: &str) -> Result<(String, Value)> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| AppError::config(format!("override {text:?} is not of the form key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Applies the file and overrides on top of `defaults`.
pub fn layered<T: Serialize + DeserializeOwned>(defaults: &T, file: Option<&Path>, overrides: &[String]) -> Result<T> {
    let mut value = serde_json::to_value(defaults).expect("serializable defaults");
    if let Some(path) = file {
        let layer: Value =
            serde_json::from_str(&read_text(path)?).map_err(|e| AppError::format(path, e.to_string()))?;
        if !layer.is_object() {
            return Err(AppError::format(path, "configuration file must hold a JSON object"));
        }
        merge(&mut value, layer, "").map_err(|e| AppError::format(path, e.to_string()))?;
    }
    for o in overrides {
        let (k, v) = parse_override(o)?;
        set_path(&mut value, &k, v)?;
    }
    serde_json::from_value(value).map_err(|e| AppError::config(e.to_string()))
}
