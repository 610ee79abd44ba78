//! Output directory handling: data files, the manifest and timing metadata.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_SCHEMA: &str = "fpcsim-manifest/1";

#[derive(Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: &'static str,
    tool_version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    config: &'a BTreeMap<String, String>,
    files: Vec<FileEntry>,
}

#[derive(Serialize)]
struct Timing {
    command: String,
    wall_clock_seconds: f64,
    workers: Option<usize>,
    out_dir: String,
}

/// Collects the files of one study and writes them with the manifest.
pub struct Study {
    dir: PathBuf,
    command: String,
    seed: Option<u64>,
    config: BTreeMap<String, String>,
    files: Vec<(String, Vec<u8>)>,
    started: Instant,
}

impl Study {
    pub fn new(dir: &Path, command: &str, seed: Option<u64>, config: BTreeMap<String, String>) -> Self {
        Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            seed,
            config,
            files: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Header line that opens every CSV file.
    pub fn csv_header(&self) -> String {
        match self.seed {
            Some(seed) => format!("# manifest={MANIFEST} seed={seed}\n"),
            None => format!("# manifest={MANIFEST}\n"),
        }
    }

    pub fn add_csv(&mut self, name: &str, body: &str) {
        let text = format!("{}{body}", self.csv_header());
        self.files.push((name.to_string(), text.into_bytes()));
    }

    /// Adds a JSON object with `manifest` and `master_seed` fields merged in.
    pub fn add_json(&mut self, name: &str, value: &impl Serialize) {
        let mut object = serde_json::Map::new();
        object.insert("manifest".into(), MANIFEST.into());
        object.insert("master_seed".into(), self.seed.into());
        match serde_json::to_value(value).expect("output types serialize") {
            serde_json::Value::Object(fields) => object.extend(fields),
            other => {
                object.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&object).expect("output types serialize");
        text.push('\n');
        self.files.push((name.to_string(), text.into_bytes()));
    }

    /// Writes data files, `manifest.json` and `timing.json`; returns the
    /// paths of the data files.
    pub fn finish(self, workers: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let mut written = Vec::new();
        let mut entries = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
            entries.push(FileEntry {
                name: name.clone(),
                sha256: format!("{:x}", Sha256::digest(bytes)),
            });
            written.push(path);
        }
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            seed: self.seed,
            config: &self.config,
            files: entries,
        };
        write_json(&self.dir.join(MANIFEST), &manifest)?;
        let timing = Timing {
            command: self.command.clone(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            workers,
            out_dir: self.dir.display().to_string(),
        };
        write_json(&self.dir.join("timing.json"), &timing)?;
        Ok(written)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
