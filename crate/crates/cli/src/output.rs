//! CSV and JSON emission. Every file carries the hash of the resolved config
//! and nothing run-dependent, so identical inputs give identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    command: &'static str,
    hash: String,
}

impl OutputDir {
    pub fn create(cfg: &ExperimentConfig, command: &'static str) -> std::io::Result<Self> {
        let dir = PathBuf::from(&cfg.output.dir);
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            command,
            hash: cfg.hash(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes serializable rows under a two-line `#` comment header.
    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        let mut buf = format!("# qcd {}\n# config_sha256={}\n", self.command, self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in rows {
                w.serialize(r).map_err(std::io::Error::other)?;
            }
            w.flush()?;
        }
        write_file(&path, &buf)?;
        Ok(path)
    }

    /// Writes `{command, config_sha256, config, result}` as pretty JSON.
    pub fn json<T: Serialize>(&self, name: &str, cfg: &ExperimentConfig, result: &T) -> std::io::Result<PathBuf> {
        #[derive(Serialize)]
        struct Summary<'a, T> {
            command: &'a str,
            config_sha256: &'a str,
            config: &'a ExperimentConfig,
            result: &'a T,
        }
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(&Summary {
            command: self.command,
            config_sha256: &self.hash,
            config: cfg,
            result,
        })
        .map_err(std::io::Error::other)?;
        text.push('\n');
        write_file(&path, text.as_bytes())?;
        Ok(path)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)
}
