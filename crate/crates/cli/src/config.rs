//! Strict TOML run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rei_core::field::FitBounds;
use rei_core::kernel::{Component, ComponentSpec};
use rei_core::optimizer::{AcquisitionMode, EgoConfig, InnerOptConfig};
use rei_core::{Domain, FminMethod, KernelSpec, Prior};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub variance: f64,
    pub lengthscales: Vec<f64>,
    #[serde(default)]
    pub mean_const: f64,
    /// Refit by maximum likelihood before every acquisition.
    #[serde(default)]
    pub fit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<FitBounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSection {
    pub id: String,
    pub variance: f64,
    pub lengthscales: Vec<f64>,
    #[serde(default)]
    pub mean_const: f64,
}

fn default_timeout() -> f64 {
    30.0
}
fn default_attempts() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorSection {
    /// Name of a builtin problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    /// Program and arguments of an external evaluator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_attempts")]
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmin_method: Option<FminMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_design: Option<usize>,
    pub domain: DomainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<ComponentSection>,
    pub acquisition: AcquisitionMode,
    #[serde(default)]
    pub inner: InnerOptConfig,
    pub evaluator: EvaluatorSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(describe_toml_error(text, &e)))?;
        cfg.to_ego().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.evaluator_checks()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    fn evaluator_checks(&self) -> Result<(), CliError> {
        let e = &self.evaluator;
        match (&e.builtin, &e.command) {
            (Some(name), None) => {
                if !rei_core::problems::BUILTIN_NAMES.contains(&name.as_str()) {
                    return Err(CliError::Config(format!(
                        "unknown builtin evaluator `{name}` (known: {})",
                        rei_core::problems::BUILTIN_NAMES.join(", ")
                    )));
                }
            }
            (None, Some(cmd)) if !cmd.is_empty() => {}
            (None, Some(_)) => return Err(CliError::Config("evaluator.command is empty".into())),
            _ => return Err(CliError::Config("evaluator needs exactly one of `builtin` or `command`".into())),
        }
        if !(e.timeout_secs > 0.0) || e.attempts == 0 {
            return Err(CliError::Config("evaluator timeout and attempts must be positive".into()));
        }
        Ok(())
    }

    fn prior(&self) -> rei_core::Result<(Prior, bool, Option<FitBounds>)> {
        match (&self.kernel, self.components.is_empty()) {
            (Some(k), true) => {
                let spec = KernelSpec::new(k.variance, k.lengthscales.clone(), k.mean_const)?;
                Ok((Prior::Single(spec), k.fit, k.bounds.clone()))
            }
            (None, false) => {
                let comps = self
                    .components
                    .iter()
                    .map(|c| {
                        Ok(Component {
                            id: c.id.clone(),
                            kernel: KernelSpec::new(c.variance, c.lengthscales.clone(), c.mean_const)?,
                        })
                    })
                    .collect::<rei_core::Result<Vec<_>>>()?;
                Ok((Prior::Components(ComponentSpec::new(comps)?), false, None))
            }
            _ => Err(rei_core::Error::InvalidConfig("declare exactly one of [kernel] or [[components]]".into())),
        }
    }

    /// The optimizer configuration this file describes.
    pub fn to_ego(&self) -> rei_core::Result<EgoConfig> {
        let domain = Domain::new(self.domain.lower.clone(), self.domain.upper.clone())?;
        let (prior, fit, bounds) = self.prior()?;
        let mut cfg = EgoConfig::new(domain, prior, self.budget, self.acquisition.clone());
        cfg.seed = self.seed;
        cfg.refit_hyperparameters = fit;
        cfg.fit_bounds = bounds;
        cfg.inner = self.inner.clone();
        cfg.initial_design = self.initial_design;
        if let Some(n) = self.mc_samples {
            cfg.mc_samples = n;
        }
        if let Some(m) = self.fmin_method {
            cfg.fmin_method = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `message (line L, column C)` for a TOML error.
fn describe_toml_error(text: &str, e: &toml::de::Error) -> String {
    let message = e.message().trim().to_string();
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("{message} (line {line}, column {column})")
        }
        None => message,
    }
}
