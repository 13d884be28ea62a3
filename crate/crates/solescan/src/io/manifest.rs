//! Run manifests: plain-text key=value with sorted keys, written next to
//! every command's outputs so runs stay diffable and reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Record of one command invocation. `duration_seconds` is the only field
/// expected to differ between reruns with identical inputs.
#[derive(Clone, Debug, Default)]
pub struct RunManifest {
    pub command: String,
    pub params: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        RunManifest {
            command: command.into(),
            ..Default::default()
        }
    }

    pub fn param(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    /// Serialize and write. Every recorded input/output path must exist.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        for p in self.inputs.iter().chain(self.outputs.iter()) {
            if !p.exists() {
                return Err(Error::InvalidInput(format!(
                    "manifest records missing path {}",
                    p.display()
                )));
            }
        }
        let mut lines: Vec<String> = Vec::new();
        lines.push(format!("command={}", self.command));
        lines.push(format!("duration_seconds={:.3}", self.duration_seconds));
        for (i, p) in self.inputs.iter().enumerate() {
            lines.push(format!("input.{i}={}", p.display()));
        }
        for (i, p) in self.outputs.iter().enumerate() {
            lines.push(format!("output.{i}={}", p.display()));
        }
        for (k, v) in &self.params {
            lines.push(format!("param.{k}={v}"));
        }
        if let Some(seed) = self.seed {
            lines.push(format!("seed={seed}"));
        }
        lines.push(format!("version={TOOLKIT_VERSION}"));
        lines.sort();
        let mut text = lines.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_keys_and_existing_paths() {
        let dir = std::env::temp_dir().join(format!("solescan_manifest_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let input = dir.join("in.txt");
        fs::write(&input, "x").unwrap();

        let mut m = RunManifest::new("scan");
        m.param("theta_max", 90).param("alpha", 4.0);
        m.seed = Some(7);
        m.inputs.push(input);
        let p = dir.join("manifest.txt");
        m.write(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let mut sorted = lines.clone();
        sorted.sort();
        assert_eq!(lines, sorted);
        assert!(text.contains("param.theta_max=90"));
        assert!(text.contains("seed=7"));
    }

    #[test]
    fn missing_recorded_path_rejected() {
        let dir = std::env::temp_dir().join(format!("solescan_manifest_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let mut m = RunManifest::new("scan");
        m.outputs.push(dir.join("does_not_exist.ply"));
        assert!(m.write(dir.join("m.txt")).is_err());
    }
}
