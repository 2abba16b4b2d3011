//! Command-line front end: TOML run configs, external evaluators, run logs
//! and demo scenarios.

pub mod config;
pub mod demo;
pub mod evaluator;
pub mod runlog;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use rei_core::acquisition::{psi_bounds, psi_exact_1d, psi_monte_carlo, GaussianMinProblem, PsiEstimate};
use rei_core::optimizer::{ego_run, suggest, LogRecord, Proposal, RunLog};
use rei_core::problems::BuiltinEvaluator;
use rei_core::{Evaluator, Measurement};

use config::RunConfig;
use evaluator::ExternalEvaluator;
use runlog::LogWriter;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Evaluator(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(rei_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 2 for configuration problems, 3 for evaluator failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Evaluator(_) => 3,
            _ => 1,
        }
    }
}

impl From<rei_core::Error> for CliError {
    fn from(e: rei_core::Error) -> Self {
        match e {
            rei_core::Error::EvaluatorFailure { .. } => CliError::Evaluator(e.to_string()),
            rei_core::Error::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

/// The evaluator a config names; `max_in_flight` bounds concurrent
/// requests to an external one.
pub fn make_evaluator(cfg: &RunConfig, max_in_flight: usize) -> Result<Box<dyn Evaluator>, CliError> {
    let e = &cfg.evaluator;
    match (&e.builtin, &e.command) {
        (Some(name), _) => Ok(Box::new(BuiltinEvaluator::by_name(name)?)),
        (None, Some(cmd)) => Ok(Box::new(ExternalEvaluator::new(
            cmd.clone(),
            Duration::from_secs_f64(e.timeout_secs),
            e.attempts,
            max_in_flight,
        ))),
        (None, None) => Err(CliError::Config("no evaluator configured".into())),
    }
}

fn in_flight(cfg: &RunConfig) -> usize {
    match cfg.acquisition {
        rei_core::optimizer::AcquisitionMode::BatchRei { batch_size } => batch_size,
        _ => 1,
    }
}

/// Runs EGO as configured, appending each record to `log_path` as it is
/// produced.  On failure the records written so far stay on disk.
pub fn run(cfg: &RunConfig, log_path: Option<&Path>) -> Result<RunLog, CliError> {
    let ego = cfg.to_ego().map_err(|e| CliError::Config(e.to_string()))?;
    let mut evaluator = make_evaluator(cfg, in_flight(cfg))?;
    let mut writer = log_path.map(LogWriter::create).transpose()?;
    let mut write_error = None;
    let mut sink = |r: &LogRecord| -> rei_core::Result<()> {
        if let Some(w) = writer.as_mut() {
            if let Err(e) = w.write(r) {
                let message = format!("cannot write run log: {e}");
                write_error = Some(e);
                return Err(rei_core::Error::InvalidConfig(message));
            }
        }
        Ok(())
    };
    let result = ego_run(evaluator.as_mut(), &ego, &mut sink);
    if let (Some(e), Some(p)) = (write_error, log_path) {
        return Err(CliError::io(p, e));
    }
    Ok(result?)
}

/// Reads a `suggest` state file: a JSON array of measurements, or a
/// JSON-lines run log.
pub fn load_state(path: &Path) -> Result<Vec<Measurement>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if let Ok(m) = serde_json::from_str::<Vec<Measurement>>(&text) {
        return Ok(m);
    }
    Ok(runlog::read_log(path)?.measurements())
}

/// The next evaluation round for `data`, without running anything.
pub fn suggest_next(cfg: &RunConfig, data: &[Measurement]) -> Result<Proposal, CliError> {
    let ego = cfg.to_ego().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(suggest(&ego, data)?)
}

pub fn write_requests(out: &mut dyn Write, p: &Proposal) -> std::io::Result<()> {
    for q in &p.requests {
        serde_json::to_writer(&mut *out, q)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Input of the `psi` command: `E min{clamp, X}` for `X ~ N(mu, sigma)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiInput {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    #[serde(default)]
    pub clamp: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiOutput {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub exact: bool,
}

pub fn psi(input: &PsiInput, samples: usize, seed: u64) -> Result<PsiOutput, CliError> {
    let p = input.mu.len();
    if input.sigma.len() != p || input.sigma.iter().any(|r| r.len() != p) {
        return Err(CliError::Config(format!("sigma must be {p}x{p}")));
    }
    let sigma = DMatrix::from_fn(p, p, |i, j| input.sigma[i][j]);
    let problem = GaussianMinProblem::new(DVector::from_vec(input.mu.clone()), sigma, input.clamp)?;
    let (exact, est): (bool, PsiEstimate) = match psi_exact_1d(&problem) {
        Some(e) => (true, e),
        None => (false, psi_monte_carlo(&problem, samples, seed)?),
    };
    let (lower, upper) = psi_bounds(&problem);
    Ok(PsiOutput {
        value: est.value,
        stderr: est.stderr,
        n_samples: est.n_samples,
        lower_bound: lower,
        upper_bound: upper,
        exact,
    })
}
