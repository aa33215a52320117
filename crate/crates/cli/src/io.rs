//! Output directory layout, the single file writer, and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use advtraj::scene::{load_scene, save_scene, Scene, SceneFormat, SceneParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, SceneFileFormat};
use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects every file a command writes, in order, for its manifest.
/// All writes of a run go through one instance.
pub struct OutputWriter {
    root: PathBuf,
    written: Vec<OutputEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

impl OutputWriter {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf(), written: Vec::new() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.retain(|w| w.path != rel);
        self.written.push(OutputEntry { path: rel.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<(), CliError> {
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.to_string()))?;
        text.push('\n');
        self.write_text(rel, &text)
    }

    /// Writes rows of serializable records as CSV with a header.
    pub fn write_csv<T: Serialize>(&mut self, rel: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Run(format!("{rel}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Run(format!("{rel}: {e}")))?;
        self.write_bytes(rel, &bytes)
    }

    /// Writes the manifest of `command` and returns its path.
    pub fn finish(mut self, command: &str, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
        let canonical = cfg.canonical_json();
        let manifest = Manifest {
            command: command.to_string(),
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            format_version: FORMAT_VERSION,
            seed: cfg.seed,
            config_hash: sha256_hex(canonical.as_bytes()),
            config: cfg.clone(),
            outputs: std::mem::take(&mut self.written),
        };
        let rel = format!("manifests/{command}.json");
        self.write_json(&rel, &manifest)?;
        Ok(self.root.join(rel))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool: String,
    pub tool_version: String,
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<OutputEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SceneIndexEntry {
    file: String,
    id: String,
    frequency_hz: f64,
    l_i: usize,
    l_o: usize,
    target_id: String,
}

/// Writes a corpus as `scene_NNN.{json,csv}` plus `index.json` under `dir`.
pub fn write_corpus(
    out: &mut OutputWriter,
    dir: &str,
    scenes: &[Scene],
    format: SceneFileFormat,
) -> Result<(), CliError> {
    let mut index = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let (ext, fmt) = match format {
            SceneFileFormat::Json => ("json", SceneFormat::Json),
            SceneFileFormat::Csv => ("csv", SceneFormat::Csv(params(scene))),
        };
        let file = format!("scene_{i:03}.{ext}");
        let mut bytes = Vec::new();
        save_scene(scene, &mut bytes, &fmt).map_err(|e| CliError::Run(format!("{}: {e}", scene.id())))?;
        out.write_bytes(&format!("{dir}/{file}"), &bytes)?;
        let p = params(scene);
        index.push(SceneIndexEntry {
            file,
            id: p.id,
            frequency_hz: p.frequency_hz,
            l_i: p.l_i,
            l_o: p.l_o,
            target_id: p.target_id,
        });
    }
    out.write_json(&format!("{dir}/index.json"), &index)
}

fn params(scene: &Scene) -> SceneParams {
    SceneParams {
        id: scene.id().to_string(),
        frequency_hz: scene.frequency_hz(),
        l_i: scene.l_i(),
        l_o: scene.l_o(),
        target_id: scene.target_id().to_string(),
    }
}

/// Reads a corpus written by [`write_corpus`].
pub fn read_corpus(dir: &Path) -> Result<Vec<Scene>, CliError> {
    let index_path = dir.join("index.json");
    let text = fs::read_to_string(&index_path).map_err(|e| {
        CliError::Config(format!("missing scene corpus {} ({e}); run `generate` first", index_path.display()))
    })?;
    let index: Vec<SceneIndexEntry> =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", index_path.display())))?;
    index
        .into_iter()
        .map(|entry| {
            let path = dir.join(&entry.file);
            let file = fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
            let format = if entry.file.ends_with(".csv") {
                SceneFormat::Csv(SceneParams {
                    id: entry.id,
                    frequency_hz: entry.frequency_hz,
                    l_i: entry.l_i,
                    l_o: entry.l_o,
                    target_id: entry.target_id,
                })
            } else {
                SceneFormat::Json
            };
            load_scene(std::io::BufReader::new(file), format)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        })
        .collect()
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}
