//! Output directory handling: every file goes through one writer, which
//! records its SHA-256 for the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub command: String,
    /// Fully resolved configuration, command-line overrides included.
    pub config: serde_json::Value,
    pub seed: u64,
    pub tool_version: String,
    pub outputs: Vec<OutputFile>,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub struct OutputDir {
    root: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(OutputFile { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable value");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes the manifest listing every file written so far.
    pub fn finish(self, command: &str, config: serde_json::Value, seed: u64) -> CliResult<ExperimentManifest> {
        let manifest = ExperimentManifest {
            command: command.to_string(),
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
        text.push('\n');
        let path = self.root.join(MANIFEST_NAME);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

/// 32-bit float WAV with one channel per slice.
pub fn wav_bytes(channels: &[Vec<f64>], sample_rate: f64) -> CliResult<Vec<u8>> {
    let infeasible = |e: hound::Error| CliError::Infeasible(format!("cannot encode WAV: {e}"));
    let n = u16::try_from(channels.len()).map_err(|_| CliError::Infeasible("too many channels for WAV".into()))?;
    let spec = hound::WavSpec {
        channels: n,
        sample_rate: sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec).map_err(infeasible)?;
        let len = channels.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..len {
            for ch in channels {
                writer.write_sample(ch.get(i).copied().unwrap_or(0.0) as f32).map_err(infeasible)?;
            }
        }
        writer.finalize().map_err(infeasible)?;
    }
    Ok(cursor.into_inner())
}
