//! Batch experiment runner: `nhsquare <experiment> --config <path> [--out <dir>] [--seed <u64>]`.
//!
//! Exit codes: 0 success, 1 an audited property failed, 2 invalid config or input.

mod config;
mod experiments;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use config::{ConfigError, ExperimentConfig, Loaded};

pub const OUT_DIR_ENV: &str = "NHSQUARE_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Eval,
    Goodbad,
    Whitney,
    Cz,
    Weak11,
    Tb,
    Goodlambda,
    Rbmo,
    Bessel,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Eval => "eval",
            Experiment::Goodbad => "goodbad",
            Experiment::Whitney => "whitney",
            Experiment::Cz => "cz",
            Experiment::Weak11 => "weak11",
            Experiment::Tb => "tb",
            Experiment::Goodlambda => "goodlambda",
            Experiment::Rbmo => "rbmo",
            Experiment::Bessel => "bessel",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Parser)]
#[command(name = "nhsquare", version, about = "Square-function experiments against atomic measures")]
pub struct Args {
    #[arg(value_enum)]
    pub experiment: Experiment,
    #[arg(long)]
    pub config: PathBuf,
    /// output directory (overrides NHSQUARE_OUT_DIR and the config)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub constants: BTreeMap<String, Value>,
    pub pass: bool,
    pub paper_refs: Vec<String>,
    pub audits: BTreeMap<String, bool>,
    /// CSV file -> column names
    pub columns: BTreeMap<String, Vec<String>>,
}

/// What an experiment hands back to the runner.
#[derive(Default)]
pub struct Outcome {
    pub constants: BTreeMap<String, Value>,
    pub audits: Vec<(String, bool)>,
    pub refs: Vec<String>,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn constant(&mut self, k: &str, v: impl Serialize) {
        self.constants.insert(k.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn audit(&mut self, k: &str, ok: bool) {
        self.audits.push((k.to_string(), ok));
    }
}

pub struct Table {
    pub file: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, columns: &[&str]) -> Self {
        Table { file: file.to_string(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Shortest round-trip text; exponent form far from 1.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub enum RunError {
    Config(ConfigError),
    Io(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "{e}"),
        }
    }
}

pub fn output_dir(args: &Args, cfg: &ExperimentConfig, base: &Path) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    if let Ok(o) = std::env::var(OUT_DIR_ENV) {
        if !o.is_empty() {
            return PathBuf::from(o);
        }
    }
    match &cfg.out {
        Some(o) => base.join(o),
        None => PathBuf::from("out"),
    }
}

/// Runs one experiment and writes its artifacts; returns the manifest.
pub fn run(args: &Args) -> Result<Manifest, RunError> {
    let loaded = Loaded::read(&args.config).map_err(RunError::Config)?;
    if let Some(e) = loaded.cfg.experiment {
        if e != args.experiment {
            return Err(RunError::Config(loaded.error_at(
                "experiment",
                format!("config is for '{e}' but '{}' was requested", args.experiment),
            )));
        }
    }
    let seed = args.seed.or(loaded.cfg.seed).unwrap_or(0);
    let outcome = experiments::dispatch(args.experiment, &loaded, seed).map_err(RunError::Config)?;
    let dir = output_dir(args, &loaded.cfg, &loaded.base);
    std::fs::create_dir_all(&dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
    let mut columns = BTreeMap::new();
    for t in &outcome.tables {
        let p = dir.join(&t.file);
        std::fs::write(&p, t.render()).map_err(|e| RunError::Io(format!("{}: {e}", p.display())))?;
        columns.insert(t.file.clone(), t.columns.clone());
    }
    let manifest = Manifest {
        experiment: args.experiment.name().to_string(),
        seed,
        pass: outcome.audits.iter().all(|(_, ok)| *ok),
        audits: outcome.audits.iter().cloned().collect(),
        constants: outcome.constants,
        paper_refs: outcome.refs,
        columns,
    };
    let p = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Io(e.to_string()))?;
    std::fs::write(&p, text + "\n").map_err(|e| RunError::Io(format!("{}: {e}", p.display())))?;
    Ok(manifest)
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with(args: Args) -> i32 {
    match run(&args) {
        Ok(m) if m.pass => 0,
        Ok(m) => {
            for (k, ok) in &m.audits {
                if !ok {
                    eprintln!("FAIL {k}");
                }
            }
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
