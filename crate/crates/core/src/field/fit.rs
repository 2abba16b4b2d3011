use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Measurement;
use crate::kernel::{self, Domain, GeneralizedPoint, KernelSpec, Prior};
use crate::linalg::cholesky_jittered;
use crate::search::{latin_hypercube_unit, PatternSearch};

/// Box constraints for maximum-likelihood hyperparameter estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub variance: (f64, f64),
    pub lengthscales: Vec<(f64, f64)>,
    #[serde(default)]
    pub mean: Option<(f64, f64)>,
}

impl FitBounds {
    /// Lengthscales in `[0.02, 2]` domain widths; variance within eight
    /// orders of magnitude around the spread of the value data.
    pub fn default_for(domain: &Domain, data: &[Measurement]) -> Self {
        let values: Vec<f64> = data.iter().map(|m| m.value).collect();
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let spread = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let scale = if spread > 0.0 { spread } else { 1.0 };
        Self {
            variance: (1e-6 * scale, 1e2 * scale),
            lengthscales: (0..domain.dim()).map(|a| (0.02 * domain.width(a), 2.0 * domain.width(a))).collect(),
            mean: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: KernelSpec,
    pub log_likelihood: f64,
    /// σ² ended on its lower bound (e.g. constant data).
    pub degenerate: bool,
    /// Every multistart initial point with its (profiled) log-likelihood.
    pub starts: Vec<(KernelSpec, f64)>,
}

struct Profiled {
    spec: KernelSpec,
    log_likelihood: f64,
    at_variance_floor: bool,
}

struct Problem<'a> {
    points: Vec<GeneralizedPoint>,
    values: DVector<f64>,
    bounds: &'a FitBounds,
    fallback_mean: f64,
}

impl Problem<'_> {
    fn correlation_factor(
        &self,
        lengthscales: &[f64],
    ) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, DVector<f64>)> {
        let unit = Prior::Single(KernelSpec { variance: 1.0, lengthscales: lengthscales.to_vec(), mean_const: 1.0 });
        let r = kernel::gram(&unit, &self.points)?;
        let (chol, _) = cholesky_jittered(&r, 1.0).ok_or(Error::SingularGram)?;
        // ∂μ(s)/∂μ₀ for a constant mean: 1 for value-like tags, 0 for derivatives
        let h = DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|p| kernel::prior_mean(&unit, p).unwrap_or(0.0)),
        );
        Ok((chol, h))
    }

    fn profile(&self, lengthscales: &[f64]) -> Result<Profiled> {
        let (chol, h) = self.correlation_factor(lengthscales)?;
        let rinv_h = chol.solve(&h);
        let hh = h.dot(&rinv_h);
        let mut mean = if hh > 1e-12 { rinv_h.dot(&self.values) / hh } else { self.fallback_mean };
        if let Some((lo, hi)) = self.bounds.mean {
            mean = mean.clamp(lo, hi);
        }
        let resid = &self.values - &h * mean;
        let quad = resid.dot(&chol.solve(&resid));
        let n = self.values.len() as f64;
        let (lo, hi) = self.bounds.variance;
        let raw = quad / n;
        let variance = raw.clamp(lo, hi);
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let log_likelihood =
            -0.5 * quad / variance - 0.5 * (n * variance.ln() + log_det) - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        Ok(Profiled {
            spec: KernelSpec { variance, lengthscales: lengthscales.to_vec(), mean_const: mean },
            log_likelihood,
            at_variance_floor: raw <= lo,
        })
    }
}

/// Gaussian log marginal likelihood of `data` under a fixed spec.
pub fn log_marginal_likelihood(spec: &KernelSpec, data: &[Measurement]) -> Result<f64> {
    spec.validate()?;
    let points: Vec<GeneralizedPoint> = data.iter().map(|m| m.point.clone()).collect();
    let unit = Prior::Single(KernelSpec { variance: 1.0, lengthscales: spec.lengthscales.clone(), mean_const: 1.0 });
    let r = kernel::gram(&unit, &points)?;
    let (chol, _) = cholesky_jittered(&r, 1.0).ok_or(Error::SingularGram)?;
    let h = DVector::from_iterator(points.len(), points.iter().map(|p| kernel::prior_mean(&unit, p).unwrap_or(0.0)));
    let values = DVector::from_iterator(data.len(), data.iter().map(|m| m.value));
    let resid = values - h * spec.mean_const;
    let quad = resid.dot(&chol.solve(&resid));
    let n = data.len() as f64;
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    Ok(-0.5 * quad / spec.variance
        - 0.5 * (n * spec.variance.ln() + log_det)
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// Maximum-likelihood estimate of `(σ², ℓ, μ₀)` within `bounds`.
///
/// σ² and μ₀ are profiled out in closed form; the lengthscales are searched
/// in log space by multistart compass search.  The starts are the initial
/// spec (clamped into bounds), the log-center of the bounds, and a seeded
/// Latin hypercube.
pub fn fit_hyperparameters(
    initial: &KernelSpec,
    data: &[Measurement],
    bounds: &FitBounds,
    seed: u64,
) -> Result<FitResult> {
    initial.validate()?;
    if data.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: data.len() });
    }
    let d = initial.dim();
    if bounds.lengthscales.len() != d {
        return Err(Error::DomainMismatch { expected: d, found: bounds.lengthscales.len() });
    }
    let (vlo, vhi) = bounds.variance;
    if !(vlo > 0.0 && vlo <= vhi) || bounds.lengthscales.iter().any(|(lo, hi)| !(*lo > 0.0 && lo <= hi)) {
        return Err(Error::InvalidKernel("fit bounds must be positive and ordered".into()));
    }

    let problem = Problem {
        points: data.iter().map(|m| m.point.clone()).collect(),
        values: DVector::from_iterator(data.len(), data.iter().map(|m| m.value)),
        bounds,
        fallback_mean: initial.mean_const,
    };

    let log_lo: Vec<f64> = bounds.lengthscales.iter().map(|b| b.0.ln()).collect();
    let log_hi: Vec<f64> = bounds.lengthscales.iter().map(|b| b.1.ln()).collect();
    let to_ls = |t: &[f64]| t.iter().map(|v| v.exp()).collect::<Vec<f64>>();
    let objective = |t: &[f64]| match problem.profile(&to_ls(t)) {
        Ok(p) => -p.log_likelihood,
        Err(_) => f64::INFINITY,
    };

    let mut starts: Vec<Vec<f64>> =
        vec![initial.lengthscales.iter().enumerate().map(|(a, l)| l.ln().clamp(log_lo[a], log_hi[a])).collect()];
    starts.push((0..d).map(|a| 0.5 * (log_lo[a] + log_hi[a])).collect());
    for u in latin_hypercube_unit(d, 2 * d + 3, seed) {
        starts.push((0..d).map(|a| log_lo[a] + u[a] * (log_hi[a] - log_lo[a])).collect());
    }

    let search = PatternSearch { initial_step: 0.125, min_step: 1e-5, max_iters: 300 };
    let mut recorded = Vec::with_capacity(starts.len());
    let mut best: Option<Profiled> = None;
    for t0 in &starts {
        if let Ok(p) = problem.profile(&to_ls(t0)) {
            recorded.push((p.spec.clone(), p.log_likelihood));
            if best.as_ref().is_none_or(|b| p.log_likelihood > b.log_likelihood) {
                best = Some(p);
            }
        }
        let r = search.minimize(objective, t0, &log_lo, &log_hi);
        if let Ok(p) = problem.profile(&to_ls(&r.x)) {
            if best.as_ref().is_none_or(|b| p.log_likelihood > b.log_likelihood) {
                best = Some(p);
            }
        }
    }
    let best = best.ok_or(Error::SingularGram)?;
    Ok(FitResult {
        degenerate: best.at_variance_floor,
        log_likelihood: best.log_likelihood,
        spec: best.spec,
        starts: recorded,
    })
}
