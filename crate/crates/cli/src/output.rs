use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::CliError;

/// The `--out` directory. Every file the CLI writes goes through here.
pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Ok(OutDir(path.to_path_buf()))
    }

    /// Path of `name` inside the directory; `name` must be a plain file name.
    pub fn file(&self, name: &str) -> PathBuf {
        let clean: String = name
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || "._-".contains(c) {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        self.0.join(clean.trim_start_matches('.'))
    }
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e| CliError::Io(path.to_path_buf(), e);
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Invocation record, enough to reproduce the run.
#[derive(Serialize)]
pub struct Manifest {
    pub subcommand: &'static str,
    pub scenario: Option<String>,
    pub seed: u64,
    pub out: String,
    pub version: &'static str,
    pub wall_time_s: f64,
    pub parallel: bool,
    pub args: Vec<String>,
}

impl Manifest {
    pub fn new(subcommand: &'static str, scenario: Option<&Path>, seed: u64, out: &Path, started: Instant) -> Self {
        Manifest {
            subcommand,
            scenario: scenario.map(|p| p.display().to_string()),
            seed,
            out: out.display().to_string(),
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: started.elapsed().as_secs_f64(),
            parallel: quatmpc::par::is_parallel(),
            args: std::env::args().collect(),
        }
    }

    pub fn write(&self, dir: &OutDir) -> Result<(), CliError> {
        write_json(&dir.file("manifest.json"), self)
    }
}
