//! Experiment runner: flags and `key = value` config files in, CSV and a
//! one-line verdict out.
//!
//! Exit codes are 0 on success, 1 for runtime or capacity failures and 2
//! for usage errors (unknown, missing or malformed keys).

mod config;
mod run;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use crate::operator::OperatorPolynomial;

pub use config::{command, parse_config, parse_config_with_env, THREADS_ENV};
pub use run::{format_f64, run, RunOutput, Verdict};

/// Failure of one CLI invocation, carrying its exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    /// `--help` or `--version`; printed to stdout with exit code 0.
    #[error("{0}")]
    Help(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help(_) => 0,
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
        }
    }

    pub(crate) fn key(key: &str, message: impl std::fmt::Display) -> Self {
        CliError::Usage(format!("error: {key}: {message}"))
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Runtime(format!("error: {e}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeKind {
    Random,
    SafeBasis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapParams {
    pub eta: f64,
    pub m: usize,
    pub n_list: Vec<usize>,
    pub excited_overlaps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommutatorParams {
    pub expr: OperatorPolynomial,
    pub d: usize,
    pub n_list: Vec<u64>,
    pub probe: ProbeKind,
    pub probe_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureParams {
    pub amplitudes: Vec<f64>,
    pub apparatus_sites: usize,
    pub pointer_overlap: f64,
    pub kappa: f64,
    pub env_list: Vec<usize>,
    pub keep_apparatus: bool,
    pub gamma: f64,
    pub t: f64,
    /// Zero selects the analytic dephasing factor.
    pub samples: usize,
    pub sigmas: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitParams {
    pub n: usize,
    pub k_list: Vec<usize>,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CatParams {
    pub gamma: f64,
    pub n_list: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleParams {
    pub atoms: f64,
    pub atom_mass: f64,
}

/// Typed parameters of one subcommand.
#[derive(Clone, Debug, PartialEq)]
pub enum Experiment {
    Overlap(OverlapParams),
    Commutator(CommutatorParams),
    Measure(MeasureParams),
    Split(SplitParams),
    Cat(CatParams),
    Scale(ScaleParams),
}

impl Experiment {
    pub fn subcommand(&self) -> &'static str {
        match self {
            Experiment::Overlap(_) => "overlap",
            Experiment::Commutator(_) => "commutator",
            Experiment::Measure(_) => "measure",
            Experiment::Split(_) => "split",
            Experiment::Cat(_) => "cat",
            Experiment::Scale(_) => "scale",
        }
    }
}

/// One validated sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_path: PathBuf,
    /// Worker threads; `None` leaves the choice to rayon.
    pub threads: Option<usize>,
    /// Allowed `|slope − expected|` for exact experiments.
    pub tolerance: f64,
}

impl ExperimentConfig {
    pub fn subcommand(&self) -> &'static str {
        self.experiment.subcommand()
    }
}

/// Parses, runs and writes output; returns the process exit code.
pub fn main_with_args<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match execute(argv, stdout) {
        Ok(()) => 0,
        Err(CliError::Help(text)) => {
            let _ = write!(stdout, "{text}");
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}

fn execute<I, T>(argv: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = parse_config(argv)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Runtime(format!("error: thread pool: {e}")))?;
    let output = pool.install(|| run(&config))?;
    std::fs::write(&config.output_path, &output.csv).map_err(|e| {
        CliError::Runtime(format!(
            "error: writing {}: {e}",
            config.output_path.display()
        ))
    })?;
    for line in &output.summary {
        writeln!(stdout, "{line}").map_err(|e| CliError::Runtime(format!("error: stdout: {e}")))?;
    }
    Ok(())
}
