//! Layered configuration: defaults, then a JSON file, then flags, then `--set key=value`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

pub struct Layers {
    value: Value,
}

impl Layers {
    pub fn new<T: Serialize + Default>() -> Self {
        Self { value: serde_json::to_value(T::default()).expect("defaults serialise") }
    }

    pub fn file(mut self, path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(self) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        merge(&mut self.value, file, "")?;
        Ok(self)
    }

    /// Set `key` (dotted path) when `value` is given.
    pub fn flag<V: Serialize>(mut self, key: &str, value: Option<V>) -> Result<Self, CliError> {
        if let Some(v) = value {
            let v = serde_json::to_value(v).map_err(|e| CliError::Config(format!("{key}: {e}")))?;
            set(&mut self.value, key, v)?;
        }
        Ok(self)
    }

    /// Apply `key=value` overrides; values parse as JSON, falling back to a plain string.
    pub fn sets(mut self, sets: &[String]) -> Result<Self, CliError> {
        for s in sets {
            let (key, raw) =
                s.split_once('=').ok_or_else(|| CliError::Config(format!("--set {s:?} is not key=value")))?;
            let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set(&mut self.value, key.trim(), v)?;
        }
        Ok(self)
    }

    pub fn build<T: DeserializeOwned>(self) -> Result<(T, Value), CliError> {
        let t = serde_json::from_value(self.value.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        Ok((t, self.value))
    }
}

fn merge(base: &mut Value, over: Value, prefix: &str) -> Result<(), CliError> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &path)?,
                    None => return Err(CliError::Config(format!("unknown key `{path}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn set(root: &mut Value, key: &str, v: Value) -> Result<(), CliError> {
    let unknown = || CliError::Config(format!("unknown key `{key}`"));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj: &mut Map<String, Value> = cur.as_object_mut().ok_or_else(unknown)?;
        let slot = obj.get_mut(*part).ok_or_else(unknown)?;
        if i + 1 == parts.len() {
            *slot = v;
            return Ok(());
        }
        cur = slot;
    }
    Err(unknown())
}
