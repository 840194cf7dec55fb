//! JSON configuration files.
//!
//! A config file is either a bare [`SimulationConfig`] / [`GraphSpec`]
//! object or a run manifest written by an earlier command, in which case
//! its `config` member is used. Parse and validation errors are reported as
//! `path:line:column: message`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Reads `path` and deserialises it, unwrapping a manifest if present.
pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<(T, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| json_error(path, &e))?;
    let parsed = match value {
        // manifests echo the config verbatim under `config`
        Value::Object(mut m) if m.contains_key("command") && m.contains_key("config") => {
            serde_json::from_value(m.remove("config").unwrap_or_default())
                .map_err(|e| CliError::Config(format!("{}: manifest config: {e}", path.display())))?
        }
        // re-parse from text so that errors keep their line numbers
        _ => serde_json::from_str(&text).map_err(|e| json_error(path, &e))?,
    };
    Ok((parsed, text))
}

fn json_error(path: &Path, e: &serde_json::Error) -> CliError {
    CliError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
}

/// Attaches the line of the offending key to a validation message, when the
/// message starts with a field name that appears in the source text.
pub fn locate(path: &Path, text: &str, err: twisted_core::Error) -> CliError {
    let twisted_core::Error::InvalidParameter(msg) = &err else {
        return err.into();
    };
    let key: String = msg.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
    let needle = format!("\"{key}\"");
    match text.lines().position(|l| !key.is_empty() && l.contains(&needle)) {
        Some(i) => CliError::Config(format!("{}:{}: {msg}", path.display(), i + 1)),
        None => CliError::Config(format!("{}: {msg}", path.display())),
    }
}
