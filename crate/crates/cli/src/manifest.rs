use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

/// Record of one invocation, written as `<output>.manifest.json` next to the
/// main output file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// The command's flags as parsed.
    pub config: Value,
    pub workers: usize,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub started_unix: u64,
    pub seconds: f64,
    pub success: bool,
    pub result: Option<Value>,
    #[serde(skip)]
    pub primary: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub treeshrink: &'static str,
    pub cli: &'static str,
}

impl RunManifest {
    pub fn new(command: &impl Serialize, workers: usize) -> anyhow::Result<Self> {
        let (command, config) = match serde_json::to_value(command)? {
            Value::Object(map) if map.len() == 1 => map.into_iter().next().expect("one entry"),
            other => (String::new(), other),
        };
        Ok(Self {
            command,
            config,
            workers,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            versions: Versions { treeshrink: treeshrink::VERSION, cli: env!("CARGO_PKG_VERSION") },
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            seconds: 0.0,
            success: false,
            result: None,
            primary: None,
        })
    }

    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    /// Writes the manifest when the run produced at least one file.
    pub fn finish(&mut self, seconds: f64, success: bool) -> anyhow::Result<()> {
        self.seconds = seconds;
        self.success = success;
        let Some(anchor) = self.primary.clone().or_else(|| self.outputs.first().cloned()) else {
            return Ok(());
        };
        let path = Self::path_for(&anchor);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}
