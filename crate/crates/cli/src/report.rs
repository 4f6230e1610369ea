//! Run reports, error classes and file helpers shared by the subcommands.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use robsub::io::{read_matrix_binary, read_matrix_text, write_matrix_binary, write_matrix_text, BINARY_MAGIC};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io(_) => 4,
        }
    }
}

impl From<robsub::Error> for CliError {
    fn from(e: robsub::Error) -> Self {
        use robsub::Error as E;
        match e {
            E::InvalidArgument(_) | E::DimensionMismatch(_) => Self::Usage(e.to_string()),
            E::NonFinite(_) | E::Numerical(_) | E::EnumerationCap { .. } => Self::Numerical(e.to_string()),
            E::Parse { .. } | E::Io(_) => Self::Io(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Machine-readable result of one command. `metrics` and the per-row norms
/// depend only on the flags and the seed; `timing` does not.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub version: &'static str,
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    /// Non-finite values are written as `null`.
    pub metrics: BTreeMap<String, Option<f64>>,
    pub outlier_norms: Vec<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub series: BTreeMap<String, Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Option<usize>>>,
    pub timing: Timing,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub elapsed_ms: f64,
}

impl RunReport {
    pub fn new(config: &impl Serialize, seed: u64) -> CliResult<Self> {
        Ok(Self {
            version: env!("CARGO_PKG_VERSION"),
            command: std::env::args().collect(),
            config: serde_json::to_value(config).map_err(|e| CliError::Io(e.to_string()))?,
            seed,
            metrics: BTreeMap::new(),
            outlier_norms: Vec::new(),
            series: BTreeMap::new(),
            labels: None,
            timing: Timing { elapsed_ms: 0.0 },
        })
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics
            .insert(name.to_string(), value.is_finite().then_some(value));
    }

    pub fn flag(&mut self, name: &str, value: bool) {
        self.metric(name, if value { 1.0 } else { 0.0 });
    }

    pub fn finish(mut self, started: Instant, dest: Option<&Path>) -> CliResult<()> {
        self.timing.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Io(e.to_string()))?;
        match dest {
            Some(path) => std::fs::write(path, text + "\n").map_err(|e| io_err(path, e)),
            None => {
                println!("{text}");
                Ok(())
            }
        }
    }
}

/// Read a matrix, picking the binary reader when the file starts with the
/// binary magic.
pub fn load_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let mut f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut head = [0u8; 8];
    let got = f.read(&mut head).map_err(|e| io_err(path, e))?;
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let m = if got == 8 && head == BINARY_MAGIC {
        read_matrix_binary(BufReader::new(f))
    } else {
        read_matrix_text(BufReader::new(f))
    };
    m.map_err(|e| io_err(path, e))
}

pub fn load_data(path: &Path) -> CliResult<robsub::DataMatrix> {
    Ok(robsub::DataMatrix::new(load_matrix(path)?)?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>, binary: bool) -> CliResult<()> {
    let mut w = create(path)?;
    if binary {
        write_matrix_binary(&mut w, m)
    } else {
        write_matrix_text(&mut w, m)
    }
    .map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Write through `f` into a fresh file.
pub fn save_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> robsub::Result<()>) -> CliResult<()> {
    let mut w = create(path)?;
    f(&mut w).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn save_json(path: &Path, v: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Worker-thread budget: `ROBSUB_THREADS` if set, else the available
/// parallelism.
pub fn worker_threads() -> CliResult<usize> {
    match std::env::var("ROBSUB_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(usage(format!("ROBSUB_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Fail with the non-convergence exit code after the report is written.
pub fn require_converged(converged: bool, what: &str, max_iters: usize) -> CliResult<()> {
    if converged {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "{what} did not converge within {max_iters} iterations"
        )))
    }
}
