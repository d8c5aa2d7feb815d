//! Run manifests and the output directory they describe.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Everything needed to re-run a command bit-exactly.
///
/// `args` are the command-line arguments without the output directory, so
/// a replay into another directory produces an identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Relative to the output directory.
    pub output_paths: Vec<String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))
    }
}

/// Collects the files a command writes.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Opens `name` for writing and records it.
    pub fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.record(name);
        Ok(BufWriter::new(File::create(path)?))
    }

    /// Writes `name` through `f` and flushes it.
    pub fn write<F>(&mut self, name: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> nowcast::Result<()>,
    {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Manifest(e.to_string()))?;
        text.push('\n');
        self.write(name, |w| w.write_all(text.as_bytes()).map_err(Into::into))
    }

    /// Records a file written by other means.
    pub fn record(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }

    pub fn finish(
        mut self,
        command: &str,
        args: Vec<String>,
        config: serde_json::Value,
        seed: Option<u64>,
    ) -> CliResult<Vec<String>> {
        self.written.sort();
        let manifest = RunManifest {
            command: command.to_string(),
            args,
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            output_paths: self.written.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Manifest(e.to_string()))?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST_NAME), text)?;
        Ok(self.written)
    }
}

/// Drops `--out-dir <dir>` / `--out-dir=<dir>` from an argument list.
pub fn strip_out_dir(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out-dir" {
            skip = true;
        } else if !a.starts_with("--out-dir=") {
            out.push(a.clone());
        }
    }
    out
}
