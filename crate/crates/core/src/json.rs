//! JSON helpers shared by every document reader.

use crate::error::{Error, Result};

/// Deserializes `value`, reporting failures as [`Error::Schema`] with a field path.
pub fn deserialize_with_path<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let mut path = e.path().to_string();
        let inner = e.into_inner().to_string();
        if let Some(field) = missing_field(&inner) {
            path = if path == "." || path.is_empty() {
                field.to_string()
            } else {
                format!("{path}.{field}")
            };
        }
        if path == "." {
            path.clear();
        }
        Error::Schema { path, msg: inner }
    })
}

fn missing_field(msg: &str) -> Option<&str> {
    let rest = msg.strip_prefix("missing field `")?;
    rest.split('`').next()
}
