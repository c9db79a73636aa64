use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use prefbo::domain::git_blob_hash;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::OutArgs;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Bookkeeping for one subcommand invocation; written as `manifest.json`.
pub struct Run {
    out: PathBuf,
    subcommand: &'static str,
    args: Value,
    resolved: serde_json::Map<String, Value>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    seed: u64,
    seed_source: &'static str,
    started: Instant,
    timestamp: String,
}

impl Run {
    pub fn start(subcommand: &'static str, out: &OutArgs, args: &impl Serialize) -> Result<Self, CliError> {
        std::fs::create_dir_all(&out.out).map_err(|e| CliError::output(&out.out, e))?;
        let (seed, seed_source) = match out.seed {
            Some(s) => (s, "flag"),
            None => (rand::random::<u64>(), "random"),
        };
        Ok(Self {
            out: out.out.clone(),
            subcommand,
            args: serde_json::to_value(args).expect("arguments serialize"),
            resolved: serde_json::Map::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            seed,
            seed_source,
            started: Instant::now(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn resolve(&mut self, key: &str, value: impl Serialize) {
        self.resolved.insert(key.into(), serde_json::to_value(value).expect("config serializes"));
    }

    /// Reads an input file and records its content hash.
    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
        self.inputs.insert(path.display().to_string(), git_blob_hash(&bytes));
        String::from_utf8(bytes).map_err(|_| CliError::Data(format!("{} is not UTF-8", path.display())))
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| CliError::output(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Records an output written by someone else (e.g. a checkpoint).
    pub fn produced(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn finish(self, error: Option<&CliError>) -> Result<(), CliError> {
        let manifest = json!({
            "subcommand": self.subcommand,
            "status": if error.is_some() { "failed" } else { "ok" },
            "error": error.map(|e| e.to_string()),
            "config": { "args": self.args, "resolved": self.resolved },
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seed": self.seed,
            "seed_source": self.seed_source,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "timestamp": self.timestamp,
            "wall_time_seconds": self.started.elapsed().as_secs_f64(),
        });
        let path = self.out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::output(&path, e))
    }
}
