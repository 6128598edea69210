//! Run manifests: enough of a run's inputs to reproduce it, plus its outputs.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand name, or `acceptance` for suite entries.
    pub command: String,
    /// Argument vector that reproduces the run (without the program name).
    #[serde(default)]
    pub argv: Vec<String>,
    pub params: Value,
    pub seed: u64,
    pub version: String,
    pub workers: usize,
    pub wall_time_s: f64,
    /// What the run checks, in a few words.
    pub claim: String,
    /// `None` for exploratory runs that assert nothing.
    pub pass: Option<bool>,
    pub outputs: Value,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, params: Value, seed: u64) -> Self {
        Self {
            command: command.into(),
            argv: Vec::new(),
            params,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            workers: rayon::current_num_threads(),
            wall_time_s: 0.0,
            claim: String::new(),
            pass: None,
            outputs: Value::Null,
        }
    }

    /// The reproducible part of the manifest: everything except timing and
    /// worker count. Identical runs give identical keys.
    pub fn content_key(&self) -> String {
        json!({
            "command": self.command,
            "argv": self.argv,
            "params": self.params,
            "seed": self.seed,
            "version": self.version,
            "claim": self.claim,
            "pass": self.pass,
            "outputs": self.outputs,
        })
        .to_string()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))
    }
}
