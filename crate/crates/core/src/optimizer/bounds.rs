use serde::{Deserialize, Serialize};

use crate::acquisition::{psi_bounds, reduce_with_policy};
use crate::error::{Error, Result};
use crate::field::{FminContext, PosteriorField};
use crate::kernel::{self, GeneralizedPoint, OperatorTag, Prior};
use crate::optimizer::template::Template;
use crate::optimizer::AcquisitionMode;

/// Hyperrectangle in the joint search space: one `[lower, upper]` pair per
/// free location of the mode's spec, in domain coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl SearchBox {
    pub fn point(locs: &[Vec<f64>]) -> Self {
        Self { lower: locs.to_vec(), upper: locs.to_vec() }
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower == self.upper
    }
}

/// Lower bound on REI over every point of `bx`.
///
/// The response means are bounded below by interval arithmetic on the
/// kernel-weighted data sums (Cauchy–Schwarz for operators without an
/// interval form), the response variances above by
/// `K(ζ,ζ) − |k(ζ)|² / λ_max(K_M)`, and the pair is fed into the Gaussian
/// maximal inequality.  A degenerate box gives the exact `psi_bounds` lower
/// end at that point.
pub fn regional_lower_bound(
    field: &PosteriorField,
    mode: &AcquisitionMode,
    fmin: &FminContext,
    bx: &SearchBox,
) -> Result<f64> {
    let mut best = f64::INFINITY;
    for (t, _) in mode.templates(field, fmin)? {
        if bx.lower.len() != t.slots.len() || bx.upper.len() != t.slots.len() {
            return Err(Error::DomainMismatch { expected: t.slots.len(), found: bx.lower.len() });
        }
        for (lo, hi) in bx.lower.iter().zip(&bx.upper) {
            field.domain().check(lo)?;
            field.domain().check(hi)?;
        }
        best = best.min(template_lower_bound(field, &t, bx)?);
    }
    Ok(best)
}

pub(crate) fn template_lower_bound(field: &PosteriorField, t: &Template, bx: &SearchBox) -> Result<f64> {
    if bx.is_degenerate() {
        let locs: Vec<Vec<f64>> = t.slots.iter().zip(&bx.lower).map(|(s, x)| s.project(x)).collect();
        let problem = reduce_with_policy(field, &t.spec(&locs)?)?;
        return Ok(psi_bounds(&problem).0);
    }
    let objective = field.prior().objective_tag();
    let mut mu_lo = t.fmin.value;
    let mut sd_hi = 0.0f64;
    let mut count = 1;
    for (slot, tag) in t.response_slots(&objective) {
        let (m, v) = response_bounds(field, &tag, &bx.lower[slot], &bx.upper[slot])?;
        mu_lo = mu_lo.min(m);
        sd_hi = sd_hi.max(v.max(0.0).sqrt());
        count += 1;
    }
    for x in t.fixed_responses() {
        let (m, v) = response_bounds(field, &objective, x, x)?;
        mu_lo = mu_lo.min(m);
        sd_hi = sd_hi.max(v.max(0.0).sqrt());
        count += 1;
    }
    Ok(mu_lo - (2.0 * (2.0 * count as f64).ln()).sqrt() * sd_hi)
}

/// Bounds `(min μ_M, max K_M)` of one response over `[lower, upper]`.
fn response_bounds(field: &PosteriorField, tag: &OperatorTag, lower: &[f64], upper: &[f64]) -> Result<(f64, f64)> {
    let probe = GeneralizedPoint::new(lower.to_vec(), tag.clone());
    let prior_var = kernel::kernel_eval(field.prior(), &probe, &probe)?;
    let m0 = kernel::prior_mean(field.prior(), &probe)?;
    if let (Prior::Single(k), true) = (field.prior(), tag.is_identity()) {
        let simple = field
            .data()
            .iter()
            .all(|m| matches!(m.point.op, OperatorTag::Identity | OperatorTag::PartialDerivative(_)));
        if simple {
            let alpha = field.weights();
            let mut mu = m0;
            let mut k_norm2 = 0.0;
            for (i, m) in field.data().iter().enumerate() {
                let (lo, hi) = cross_interval(k.variance, &k.lengthscales, lower, upper, &m.point);
                mu += (alpha[i] * lo).min(alpha[i] * hi);
                let floor = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
                k_norm2 += floor * floor;
            }
            let var = (prior_var - k_norm2 / field.gram_max_eigen()).max(0.0);
            return Ok((mu, var));
        }
    }
    // |k(ζ)ᵀ K⁻¹ r| ≤ √(K(ζ,ζ)) · √(rᵀ K⁻¹ r)
    let whitened = field.cholesky_factor().transpose() * field.weights();
    Ok((m0 - (prior_var * whitened.norm_squared()).sqrt(), prior_var))
}

/// Range of `K(ζ, ·; data point)` for identity `ζ` anywhere in the box.
fn cross_interval(variance: f64, ls: &[f64], lower: &[f64], upper: &[f64], p: &GeneralizedPoint) -> (f64, f64) {
    let mut near = 0.0;
    let mut far = 0.0;
    for a in 0..ls.len() {
        let (t_lo, t_hi) = (lower[a] - p.location[a], upper[a] - p.location[a]);
        let sq_max = (t_lo * t_lo).max(t_hi * t_hi);
        let sq_min = if t_lo <= 0.0 && t_hi >= 0.0 { 0.0 } else { (t_lo * t_lo).min(t_hi * t_hi) };
        near += sq_min / (ls[a] * ls[a]);
        far += sq_max / (ls[a] * ls[a]);
    }
    let (e_lo, e_hi) = (variance * (-0.5 * far).exp(), variance * (-0.5 * near).exp());
    match p.op {
        OperatorTag::PartialDerivative(a) => {
            let l2 = ls[a] * ls[a];
            let (r_lo, r_hi) = ((lower[a] - p.location[a]) / l2, (upper[a] - p.location[a]) / l2);
            let products = [e_lo * r_lo, e_lo * r_hi, e_hi * r_lo, e_hi * r_hi];
            (
                products.iter().copied().fold(f64::INFINITY, f64::min),
                products.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            )
        }
        _ => (e_lo, e_hi),
    }
}
