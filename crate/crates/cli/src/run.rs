//! Run directories and manifests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub solver: u64,
    pub surrogate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seeds: Seeds,
    pub args: Vec<String>,
    pub workers: usize,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, args: Vec<String>) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: cfg.digest(),
            seeds: Seeds { solver: cfg.solver.seed, surrogate: cfg.minimax.seed },
            args,
            workers: rayon::current_num_threads(),
            config: cfg.clone(),
        }
    }
}

/// A freshly created directory `<base>/<command>-NNNN`.
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Creates the first unused index; existing directories are never reused.
    pub fn create(base: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(base).map_err(|e| CliError::file(base, e))?;
        for n in 1..100_000 {
            let path = base.join(format!("{command}-{n:04}"));
            match fs::create_dir(&path) {
                Ok(()) => return Ok(Self { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(CliError::file(&path, e)),
            }
        }
        Err(CliError::Usage(format!("no free run directory under {}", base.display())))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Creates a subdirectory that must not exist yet.
    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let p = self.path.join(name);
        fs::create_dir(&p).map_err(|e| CliError::file(&p, e))?;
        Ok(p)
    }
}

pub fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::OpenOptions::new().write(true).create_new(true).open(path).map_err(|e| CliError::file(path, e))?;
    Ok(BufWriter::new(f))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| CliError::file(path, e))?;
    w.flush().map_err(|e| CliError::file(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn open(path: &Path) -> Result<std::io::BufReader<fs::File>> {
    Ok(std::io::BufReader::new(fs::File::open(path).map_err(|e| CliError::file(path, e))?))
}
