//! Report files, each stamped with the provenance of its run.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use crate::config::{ExperimentConfig, LoadedConfig, Tolerances};
use crate::CliError;

/// Where a report came from.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub p: f64,
    pub horizon: usize,
    pub x_max: usize,
    pub tolerances: Tolerances,
}

impl Provenance {
    fn of(loaded: &LoadedConfig) -> Self {
        let ExperimentConfig { seed, p, horizon, x_max, tolerances, .. } = &loaded.config;
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: loaded.sha256.clone(),
            seed: *seed,
            p: *p,
            horizon: *horizon,
            x_max: *x_max,
            tolerances: tolerances.clone(),
        }
    }
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

pub struct Output {
    dir: Option<PathBuf>,
    provenance: Provenance,
}

impl Output {
    pub fn new(dir: Option<PathBuf>, loaded: &LoadedConfig) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self { dir, provenance: Provenance::of(loaded) })
    }

    /// One line of human-readable summary on stdout.
    pub fn say(&self, line: impl AsRef<str>) {
        println!("{}", line.as_ref());
    }

    /// Writes `name` as pretty JSON with the provenance block, or prints it
    /// when no output directory was given.
    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&Stamped { provenance: &self.provenance, body })
            .map_err(|e| CliError::Io(e.to_string()))?;
        self.emit(name, format!("{text}\n").as_bytes())
    }

    /// CSV with a header row; the provenance goes to the companion
    /// `<stem>.meta.json`.
    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T], meta: &impl Serialize) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.emit(name, &bytes)?;
        let stem = name.strip_suffix(".csv").unwrap_or(name);
        self.json(&format!("{stem}.meta.json"), meta)
    }

    /// JSON lines, one record per line, without provenance.
    pub fn jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<(), CliError> {
        let mut bytes = Vec::new();
        for r in records {
            serde_json::to_writer(&mut bytes, r).map_err(|e| CliError::Io(e.to_string()))?;
            bytes.push(b'\n');
        }
        self.emit(name, &bytes)
    }

    fn emit(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => fs::write(d.join(name), bytes)?,
            None => {
                let mut stdout = std::io::stdout().lock();
                let written = writeln!(stdout, "# {name}").and_then(|()| stdout.write_all(bytes));
                // A closed pipe (`| head`) is the reader's choice, not a failure.
                match written {
                    Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
