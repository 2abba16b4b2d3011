//! Expected improvement and relative expected improvement (REI).
//!
//! `REI(ζ, η) = E_M min{F_min, F_η(ζ₁), …, F_η(ζ_k)}` where
//! `F_η(x) = E_M(F(x) | F(η₁), …, F(η_l))`.  Since `F_η(ζ)` is affine in the
//! jointly Gaussian `F(η)`,
//!
//! ```text
//! F_η(ζ) = μ_M(ζ) + A (F(η) − μ_M(η)),   A = K_M(ζ,η) K_M(η,η)⁻¹
//! (F_η(ζ₁), …, F_η(ζ_k)) ~ N(μ_M(ζ), K_M(ζ,η) K_M(η,η)⁻¹ K_M(η,ζ))
//! ```
//!
//! so every REI reduces to a Gaussian-minimum problem.  Smaller is better.

mod builders;
mod psi;

pub use builders::{
    build_batch_spec, build_fidelity_specs, build_gradient_spec, build_noisy_spec, build_robust_spec, select_fidelity,
    Fidelity, RobustKind,
};
pub use psi::{
    normal_cdf, normal_pdf, psi_bounds, psi_closed_form_1d, psi_exact_1d, psi_monte_carlo, GaussianMinProblem,
    PsiEstimate,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FminContext, PosteriorField};
use crate::kernel::{self, GeneralizedPoint};
use crate::linalg::cholesky_jittered;

/// Posterior variance of an η point, relative to its prior variance, below
/// which the point is treated as already known.
pub const SINGULAR_ETA_RELATIVE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReiVariant {
    /// Clamped by `F_min`.
    Rei,
    /// Unclamped expected minimum of the responses.
    ReiM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSpec {
    pub zeta: Vec<GeneralizedPoint>,
    pub eta: Vec<GeneralizedPoint>,
    pub variant: ReiVariant,
    pub fmin: Option<FminContext>,
}

impl AcquisitionSpec {
    pub fn rei(zeta: Vec<GeneralizedPoint>, eta: Vec<GeneralizedPoint>, fmin: FminContext) -> Self {
        Self { zeta, eta, variant: ReiVariant::Rei, fmin: Some(fmin) }
    }

    pub fn rei_m(zeta: Vec<GeneralizedPoint>, eta: Vec<GeneralizedPoint>) -> Self {
        Self { zeta, eta, variant: ReiVariant::ReiM, fmin: None }
    }

    fn clamp(&self) -> Result<Option<f64>> {
        match self.variant {
            ReiVariant::Rei => self
                .fmin
                .as_ref()
                .map(|f| Some(f.value))
                .ok_or_else(|| Error::InvalidAcquisition("REI requires an F_min context".into())),
            ReiVariant::ReiM => Ok(None),
        }
    }

    fn validate(&self, field: &PosteriorField) -> Result<()> {
        if self.zeta.is_empty() || self.eta.is_empty() {
            return Err(Error::InvalidAcquisition("need at least one response and one measurement point".into()));
        }
        for p in self.zeta.iter().chain(&self.eta) {
            field.domain().check(&p.location)?;
            field.prior().check_tag(&p.op)?;
        }
        self.clamp().map(|_| ())
    }
}

/// Reduces `REI(ζ, η)` to `Ψ_{μ,Σ}` with `μ = μ_M(ζ)` and
/// `Σ = K_M(ζ,η) K_M(η,η)⁻¹ K_M(η,ζ)`.
pub fn reduce_rei(field: &PosteriorField, spec: &AcquisitionSpec) -> Result<GaussianMinProblem> {
    spec.validate(field)?;
    if let Some(index) = singular_eta(field, &spec.eta)?.first() {
        return Err(Error::SingularEta { index: *index });
    }
    reduce_unchecked(field, spec)
}

/// Indices of η points whose posterior variance is negligible.
fn singular_eta(field: &PosteriorField, eta: &[GeneralizedPoint]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, p) in eta.iter().enumerate() {
        let prior_var = kernel::kernel_eval(field.prior(), p, p)?;
        let post_var = field.variance(p)?;
        if prior_var <= 0.0 || post_var <= SINGULAR_ETA_RELATIVE * prior_var {
            out.push(i);
        }
    }
    Ok(out)
}

fn reduce_unchecked(field: &PosteriorField, spec: &AcquisitionSpec) -> Result<GaussianMinProblem> {
    let clamp = spec.clamp()?;
    let k = spec.zeta.len();
    let l = spec.eta.len();
    let mu = field.means(&spec.zeta)?;
    if l == 0 {
        return GaussianMinProblem::from_factor(mu, nalgebra::DMatrix::zeros(k, 1), clamp);
    }
    let mut all = spec.zeta.clone();
    all.extend(spec.eta.iter().cloned());
    let joint = field.cov(&all)?;
    let k_ee = joint.view((k, k), (l, l)).into_owned();
    let k_ez = joint.view((k, 0), (l, k)).into_owned();
    let scale = (0..l).map(|i| k_ee[(i, i)]).fold(0.0, f64::max);
    let chol = match k_ee.clone().cholesky() {
        Some(c) => c,
        None => cholesky_jittered(&k_ee, scale).ok_or(Error::SingularEta { index: 0 })?.0,
    };
    let w = chol.l().solve_lower_triangular(&k_ez).ok_or(Error::SingularEta { index: 0 })?;
    GaussianMinProblem::from_factor(mu, w.transpose(), clamp)
}

/// Reduction with the degenerate-η policy: η points that are already known
/// are nudged by `1e-6·ℓ` along successive axes; points that remain known
/// carry no information and are dropped from the conditioning set.
pub(crate) fn reduce_with_policy(field: &PosteriorField, spec: &AcquisitionSpec) -> Result<GaussianMinProblem> {
    spec.validate(field)?;
    let mut singular = singular_eta(field, &spec.eta)?;
    if singular.is_empty() {
        return reduce_unchecked(field, spec);
    }
    let domain = field.domain();
    let ls = field.prior().objective_lengthscales();
    let mut eta = spec.eta.clone();
    for axis in 0..domain.dim() {
        for &i in &singular {
            let loc = &mut eta[i].location;
            let step = 1e-6 * ls[axis];
            loc[axis] = if loc[axis] + step <= domain.upper()[axis] { loc[axis] + step } else { loc[axis] - step };
        }
        let still = singular_eta(field, &eta)?;
        if still.is_empty() {
            log::warn!("eta points {singular:?} coincide with known values; perturbed along axis {axis}");
            let moved = AcquisitionSpec { eta, ..spec.clone() };
            return reduce_unchecked(field, &moved);
        }
        singular = still;
    }
    log::debug!("eta points {singular:?} carry no information; dropped");
    let kept: Vec<GeneralizedPoint> =
        eta.into_iter().enumerate().filter(|(i, _)| !singular.contains(i)).map(|(_, p)| p).collect();
    let reduced = AcquisitionSpec { eta: kept, ..spec.clone() };
    reduce_unchecked(field, &reduced)
}

/// Estimates `REI(ζ, η)` (or `REI_m`).  A single response uses the closed
/// form; otherwise antithetic Monte Carlo with `n` draws.
pub fn rei(field: &PosteriorField, spec: &AcquisitionSpec, n: usize, seed: u64) -> Result<PsiEstimate> {
    let problem = reduce_with_policy(field, spec)?;
    match psi_exact_1d(&problem) {
        Some(e) => Ok(e),
        None => psi_monte_carlo(&problem, n, seed),
    }
}

/// Classical expected improvement in minimization form,
/// `EI(x) = E_M min{F_min, F(x)}`.
pub fn ei(field: &PosteriorField, x: &GeneralizedPoint, fmin: f64) -> Result<f64> {
    let mu = field.mean(x)?;
    let var = field.variance(x)?;
    Ok(psi_closed_form_1d(mu, var, fmin))
}
