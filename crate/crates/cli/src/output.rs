use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Report files written into one output directory.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    files: &'a [String],
    config: &'a ExperimentConfig,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("serializing {name}: {e}")))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<BufWriter<File>>, CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        Ok(csv::Writer::from_writer(BufWriter::new(file)))
    }

    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        Ok(BufWriter::new(file))
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))
    }

    /// Write the manifest: a timestamp comment on the first line, then the
    /// resolved configuration and the files this run produced.
    pub fn finish(mut self, cfg: &ExperimentConfig) -> Result<(), CliError> {
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        self.written.sort();
        let body = toml::to_string(&Manifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            files: &self.written,
            config: cfg,
        })
        .map_err(|e| CliError::Io(format!("serializing manifest: {e}")))?;
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, format!("# generated at unix time {stamp}\n{body}"))
            .map_err(|e| io_err(&path, e))
    }
}

pub fn flush_csv<W: std::io::Write>(mut w: csv::Writer<W>) -> Result<(), CliError> {
    w.flush()?;
    Ok(())
}
