//! Expected minimum of a Gaussian vector, `Ψ_{μ,Σ} = E min{γ₁, …, γ_p}`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::psd_factor;
use crate::search::rng_from;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `γ ~ N(mu, sigma)`, optionally joined by the deterministic coordinate
/// `clamp`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMinProblem {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub clamp: Option<f64>,
    /// `F` with `F Fᵀ = sigma`, when already known.
    factor: Option<DMatrix<f64>>,
}

impl GaussianMinProblem {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, clamp: Option<f64>) -> Result<Self> {
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::DomainMismatch { expected: mu.len(), found: sigma.nrows() });
        }
        if mu.is_empty() {
            return Err(Error::InvalidAcquisition("Gaussian-min problem needs at least one coordinate".into()));
        }
        Ok(Self { mu, sigma, clamp, factor: None })
    }

    /// Builds the problem from a square-root factor, `sigma = factor·factorᵀ`.
    pub fn from_factor(mu: DVector<f64>, factor: DMatrix<f64>, clamp: Option<f64>) -> Result<Self> {
        if factor.nrows() != mu.len() {
            return Err(Error::DomainMismatch { expected: mu.len(), found: factor.nrows() });
        }
        let sigma = &factor * factor.transpose();
        let mut p = Self::new(mu, sigma, clamp)?;
        p.factor = Some(factor);
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn min_mean(&self) -> f64 {
        let m = self.mu.iter().copied().fold(f64::INFINITY, f64::min);
        match self.clamp {
            Some(c) => m.min(c),
            None => m,
        }
    }

    fn max_sd(&self) -> f64 {
        (0..self.dim()).map(|i| self.sigma[(i, i)].max(0.0).sqrt()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// `E min{clamp, X}` for `X ~ N(mu, var)`:
/// `clamp − [(clamp − μ) Φ(z) + σ φ(z)]` with `z = (clamp − μ)/σ`.
pub fn psi_closed_form_1d(mu: f64, var: f64, clamp: f64) -> f64 {
    let sd = var.max(0.0).sqrt();
    if sd == 0.0 {
        return clamp.min(mu);
    }
    let gap = clamp - mu;
    let z = gap / sd;
    let improvement = gap * normal_cdf(z) + sd * normal_pdf(z);
    clamp - improvement.max(0.0)
}

/// Elementary bracket for `Ψ`: the minimum of the means from above and the
/// Gaussian maximal inequality `E max |γ_i − μ_i| ≤ σ_max √(2 ln 2p')`
/// from below.
pub fn psi_bounds(problem: &GaussianMinProblem) -> (f64, f64) {
    let upper = problem.min_mean();
    let p = problem.dim() + usize::from(problem.clamp.is_some());
    let lower = upper - (2.0 * (2.0 * p as f64).ln()).sqrt() * problem.max_sd();
    (lower, upper)
}

/// Antithetic Monte Carlo estimate of `Ψ` from `n` draws (`n / 2` pairs).
pub fn psi_monte_carlo(problem: &GaussianMinProblem, n: usize, seed: u64) -> Result<PsiEstimate> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("psi_monte_carlo needs n >= 2, got {n}")));
    }
    let factor = match &problem.factor {
        Some(f) => f.clone(),
        None => psd_factor(&problem.sigma)?,
    };
    let pairs = n / 2;
    let p = problem.dim();
    let m = factor.ncols();
    let clamp = problem.clamp.unwrap_or(f64::INFINITY);
    let mut rng = rng_from(seed);
    let mut z = DVector::zeros(m);
    let mut shift = DVector::zeros(p);

    // Welford accumulation over pair averages
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..pairs {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        shift.gemv(1.0, &factor, &z, 0.0);
        let mut lo_plus = clamp;
        let mut lo_minus = clamp;
        for i in 0..p {
            lo_plus = lo_plus.min(problem.mu[i] + shift[i]);
            lo_minus = lo_minus.min(problem.mu[i] - shift[i]);
        }
        let sample = 0.5 * (lo_plus + lo_minus);
        let delta = sample - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (sample - mean);
    }
    let var = if pairs > 1 { m2 / (pairs - 1) as f64 } else { 0.0 };
    let (lower_bound, upper_bound) = psi_bounds(problem);
    Ok(PsiEstimate { value: mean, stderr: (var / pairs as f64).sqrt(), n_samples: 2 * pairs, lower_bound, upper_bound })
}

/// Exact value for `p = 1`: the closed form with a clamp, the mean without.
pub fn psi_exact_1d(problem: &GaussianMinProblem) -> Option<PsiEstimate> {
    if problem.dim() != 1 {
        return None;
    }
    let mu = problem.mu[0];
    let var = problem.sigma[(0, 0)];
    let value = match problem.clamp {
        Some(c) => psi_closed_form_1d(mu, var, c),
        None => mu,
    };
    let (lower_bound, upper_bound) = psi_bounds(problem);
    Some(PsiEstimate { value, stderr: 0.0, n_samples: 0, lower_bound, upper_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn standard_clamped_at_zero() {
        assert_relative_eq!(psi_closed_form_1d(0.0, 1.0, 0.0), -INV_SQRT_2PI, max_relative = 1e-14);
    }

    #[test]
    fn deterministic_minimum() {
        assert_eq!(psi_closed_form_1d(2.0, 0.0, 1.0), 1.0);
        assert_eq!(psi_closed_form_1d(0.5, 0.0, 1.0), 0.5);
    }

    #[test]
    fn clamp_inactive_far_below() {
        let mu = 1.0 - 40.0 * 0.7;
        assert!((psi_closed_form_1d(mu, 0.49, 1.0) - mu).abs() < 1e-9);
    }

    #[test]
    fn clamp_dominates_far_above() {
        assert!((psi_closed_form_1d(50.0, 1.0, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_covariance_is_exact() {
        let p = GaussianMinProblem::new(DVector::from_vec(vec![0.3, -0.2]), DMatrix::zeros(2, 2), Some(0.1)).unwrap();
        let e = psi_monte_carlo(&p, 1000, 1).unwrap();
        assert_eq!(e.value, -0.2);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(psi_bounds(&p), (-0.2, -0.2));
    }

    #[test]
    fn single_gaussian_bounds() {
        let p = GaussianMinProblem::new(DVector::from_vec(vec![0.0]), DMatrix::identity(1, 1), None).unwrap();
        let (lo, hi) = psi_bounds(&p);
        assert_relative_eq!(lo, -(2.0 * 2f64.ln()).sqrt(), max_relative = 1e-15);
        assert_eq!(hi, 0.0);
        assert_eq!(psi_exact_1d(&p).unwrap().value, 0.0);
    }

    #[test]
    fn rejects_tiny_sample_counts_and_indefinite_sigma() {
        let p = GaussianMinProblem::new(DVector::from_vec(vec![0.0]), DMatrix::identity(1, 1), None).unwrap();
        assert!(psi_monte_carlo(&p, 1, 0).is_err());
        let bad = GaussianMinProblem::new(
            DVector::from_vec(vec![0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]),
            None,
        )
        .unwrap();
        assert!(matches!(psi_monte_carlo(&bad, 10, 0), Err(Error::NonPsd { .. })));
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let p = GaussianMinProblem::new(
            DVector::from_vec(vec![0.0, 0.5]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]),
            Some(0.2),
        )
        .unwrap();
        assert_eq!(psi_monte_carlo(&p, 500, 7).unwrap(), psi_monte_carlo(&p, 500, 7).unwrap());
    }
}
