//! Acquisition specs for the standard application patterns.

use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionSpec, PsiEstimate};
use crate::error::{Error, Result};
use crate::field::FminContext;
use crate::kernel::{CovMatrix, GeneralizedPoint, OperatorTag};

/// A population of simultaneous measurements: `ζ = η`, identity-tagged.
pub fn build_batch_spec(points: &[Vec<f64>], fmin: FminContext) -> Result<AcquisitionSpec> {
    if points.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let pts: Vec<GeneralizedPoint> = points.iter().map(|x| GeneralizedPoint::value(x.clone())).collect();
    Ok(AcquisitionSpec::rei(pts.clone(), pts, fmin))
}

/// Value and full gradient measured at `x`, judged by `d + 1` free
/// identity-tagged responses.
pub fn build_gradient_spec(x: &[f64], zeta: &[Vec<f64>], fmin: FminContext) -> Result<AcquisitionSpec> {
    let d = x.len();
    if zeta.len() != d + 1 {
        return Err(Error::InvalidAcquisition(format!("gradient spec needs {} responses, got {}", d + 1, zeta.len())));
    }
    let mut eta = vec![GeneralizedPoint::value(x.to_vec())];
    eta.extend((0..d).map(|a| GeneralizedPoint::new(x.to_vec(), OperatorTag::PartialDerivative(a))));
    let zeta = zeta.iter().map(|z| GeneralizedPoint::value(z.clone())).collect();
    Ok(AcquisitionSpec::rei(zeta, eta, fmin))
}

/// High- and low-fidelity candidates sharing the responses `ζ` (observed
/// through `hi`); they differ only in the operator measured at `x`.
pub fn build_fidelity_specs(
    x: &[f64],
    zeta: &[Vec<f64>],
    hi: &OperatorTag,
    lo: &OperatorTag,
    fmin: FminContext,
) -> Result<(AcquisitionSpec, AcquisitionSpec)> {
    if zeta.is_empty() {
        return Err(Error::InvalidAcquisition("fidelity specs need at least one response".into()));
    }
    let responses: Vec<GeneralizedPoint> = zeta.iter().map(|z| GeneralizedPoint::new(z.clone(), hi.clone())).collect();
    let hi_spec =
        AcquisitionSpec::rei(responses.clone(), vec![GeneralizedPoint::new(x.to_vec(), hi.clone())], fmin.clone());
    let lo_spec = AcquisitionSpec::rei(responses, vec![GeneralizedPoint::new(x.to_vec(), lo.clone())], fmin);
    Ok((hi_spec, lo_spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    High,
    Low,
}

/// Picks the fidelity with the better improvement-to-cost ratio
/// `(REI − F_min) / cost` (more negative is better); ties go to high
/// fidelity.
pub fn select_fidelity(hi: &PsiEstimate, lo: &PsiEstimate, fmin: f64, cost_hi: f64, cost_lo: f64) -> Fidelity {
    let ratio = |e: &PsiEstimate, cost: f64| {
        let gain = e.value - fmin;
        if gain >= 0.0 {
            0.0
        } else if cost <= 0.0 {
            f64::NEG_INFINITY
        } else {
            gain / cost
        }
    };
    if ratio(lo, cost_lo) < ratio(hi, cost_hi) {
        Fidelity::Low
    } else {
        Fidelity::High
    }
}

/// Optimize `objective` while only `objective + noise` is observable.
pub fn build_noisy_spec(x: &[f64], objective: &str, noise: &str, fmin: FminContext) -> Result<AcquisitionSpec> {
    let measured = OperatorTag::sum(vec![OperatorTag::component(objective), OperatorTag::component(noise)])?;
    Ok(AcquisitionSpec::rei(
        vec![GeneralizedPoint::new(x.to_vec(), OperatorTag::component(objective))],
        vec![GeneralizedPoint::new(x.to_vec(), measured)],
        fmin,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustKind {
    Convolution,
    CurvaturePenalty,
}

impl RobustKind {
    pub fn tag(self, cov: &CovMatrix) -> OperatorTag {
        match self {
            RobustKind::Convolution => OperatorTag::Convolution(cov.clone()),
            RobustKind::CurvaturePenalty => OperatorTag::CurvaturePenalty(cov.clone()),
        }
    }
}

/// Robust response at `zeta_loc` (perturbation-averaged objective) after
/// measuring the plain value at `eta_loc`.
pub fn build_robust_spec(
    zeta_loc: &[f64],
    eta_loc: &[f64],
    robust_cov: &CovMatrix,
    kind: RobustKind,
    fmin: FminContext,
) -> Result<AcquisitionSpec> {
    if robust_cov.dim() != zeta_loc.len() || eta_loc.len() != zeta_loc.len() {
        return Err(Error::DomainMismatch { expected: zeta_loc.len(), found: robust_cov.dim() });
    }
    Ok(AcquisitionSpec::rei(
        vec![GeneralizedPoint::new(zeta_loc.to_vec(), kind.tag(robust_cov))],
        vec![GeneralizedPoint::value(eta_loc.to_vec())],
        fmin,
    ))
}
