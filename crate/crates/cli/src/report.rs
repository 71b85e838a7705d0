use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Serialize)]
pub struct Report<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_digest_sha256: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub method_notes: Vec<String>,
    pub result: T,
}

pub fn digest(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON values always serialize");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl<T: Serialize> Report<T> {
    pub fn new(
        command: &str,
        config: &impl Serialize,
        seeds: Vec<u64>,
        method_notes: Vec<String>,
        result: T,
    ) -> Self {
        let config = serde_json::to_value(config).expect("configs serialize");
        Self {
            tool: "qrc",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_digest_sha256: digest(&config),
            config,
            seeds,
            method_notes,
            result,
        }
    }
}

/// Writes pretty JSON to `out`, or stdout when `out` is `None`.
pub fn emit(value: &impl Serialize, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::schema(path, e))
}
