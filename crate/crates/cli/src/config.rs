use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::Failure;

/// Loads `path` (if any) as a JSON object and lays it over `base`. Keys the
/// base does not know about are rejected so typos do not pass silently.
pub fn layered<C: Serialize + DeserializeOwned>(base: C, path: Option<&Path>) -> Result<C, Failure> {
    let Some(path) = path else { return Ok(base) };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read config {}: {e}", path.display())))?;
    let overlay: Value = serde_json::from_str(&text).map_err(|e| Failure::Data(format!("config {} is not valid JSON: {e}", path.display())))?;
    let mut merged = serde_json::to_value(base).map_err(|e| Failure::Internal(e.to_string()))?;
    merge(&mut merged, overlay, "")?;
    serde_json::from_value(merged).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
}

fn merge(base: &mut Value, overlay: Value, at: &str) -> Result<(), Failure> {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let here = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &here)?,
                    None => return Err(Failure::Usage(format!("unknown config key {here:?}"))),
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
