//! Run manifests: every command writes one next to its outputs so a run
//! can be audited and replayed. Replaying the recorded command with the
//! same inputs reproduces the outputs byte for byte (the manifest itself
//! carries the only timestamp).

use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub subcommand: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: Option<&Path>, seed: Option<u64>) -> RunManifest {
        RunManifest {
            command: std::env::args().collect(),
            subcommand: subcommand.to_string(),
            config: config.map(Path::to_path_buf),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn with_inputs(mut self, inputs: &[Option<&Path>]) -> RunManifest {
        self.inputs = inputs.iter().flatten().map(|p| p.to_path_buf()).collect();
        self
    }

    pub fn with_outputs(mut self, base: &Path, names: &[String]) -> RunManifest {
        self.outputs = names.iter().map(|n| base.join(n)).collect();
        self
    }

    pub fn with_output_file(mut self, path: &Path) -> RunManifest {
        self.outputs = vec![path.to_path_buf()];
        self
    }

    pub fn write(&self, path: &Path) -> Result<(), String> {
        let json = serde_json::to_string_pretty(self).expect("manifest serialization");
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        }
        std::fs::write(path, json).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Manifest path next to a single-file output: `foo.csv` gets
/// `foo.csv.manifest.json`.
pub fn sibling(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".to_string());
    name.push_str(".manifest.json");
    output.with_file_name(name)
}
