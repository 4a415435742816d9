//! `manifest.json`: one per output directory, one section per command.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::output::write_atomic;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Replaces the `section` entry, keeping the others. Caller holds the directory lock.
pub fn update(dir: &Path, section: &str, value: Value) -> Result<(), CliError> {
    let path = dir.join(MANIFEST_FILE);
    let mut root = match fs::read_to_string(&path) {
        Ok(text) => match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(m)) => m,
            _ => {
                log::warn!("replacing unreadable {}", path.display());
                Map::new()
            }
        },
        Err(_) => Map::new(),
    };
    root.insert("tool".into(), json!("owc"));
    root.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    let runs = root.entry("runs").or_insert_with(|| Value::Object(Map::new()));
    if !runs.is_object() {
        *runs = Value::Object(Map::new());
    }
    runs.as_object_mut().expect("object").insert(section.into(), value);
    let text = serde_json::to_string_pretty(&Value::Object(root))
        .map_err(|e| CliError::internal("serialising manifest", e))?;
    write_atomic(&path, format!("{text}\n").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_accumulate() {
        let dir = tempfile::tempdir().unwrap();
        update(dir.path(), "simulate", json!({"a": 1})).unwrap();
        update(dir.path(), "allocate", json!({"b": 2})).unwrap();
        update(dir.path(), "simulate", json!({"a": 3})).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(v["runs"]["simulate"]["a"], 3);
        assert_eq!(v["runs"]["allocate"]["b"], 2);
        assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    }
}
