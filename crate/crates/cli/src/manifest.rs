//! Every command writes one JSON manifest next to its outputs so a run can be
//! reproduced from the manifest alone.

use std::path::Path;
use std::time::Instant;

use serde_json::json;

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug)]
pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: u64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config: String::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
        }
    }

    pub fn config(mut self, config: impl Into<String>) -> Self {
        self.config = config.into();
        self
    }

    pub fn input(mut self, path: impl AsRef<Path>) -> Self {
        self.inputs.push(path.as_ref().display().to_string());
        self
    }

    pub fn output(mut self, path: impl AsRef<Path>) -> Self {
        self.outputs.push(path.as_ref().display().to_string());
        self
    }

    pub fn finish(self, started: Instant, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let value = json!({
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "duration_seconds": started.elapsed().as_secs_f64(),
            "seed": self.seed,
        });
        std::fs::write(dir.join(RUN_MANIFEST), serde_json::to_string_pretty(&value)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(dir.join(RUN_MANIFEST))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let strings = |key: &str| -> Vec<String> {
            value[key]
                .as_array()
                .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
                .unwrap_or_default()
        };
        Ok(Self {
            command: value["command"].as_str().unwrap_or_default().to_string(),
            config: value["config"].as_str().unwrap_or_default().to_string(),
            inputs: strings("inputs"),
            outputs: strings("outputs"),
            seed: value["seed"].as_u64().unwrap_or_default(),
        })
    }
}
