use crate::acquisition::{
    build_batch_spec, build_gradient_spec, build_noisy_spec, build_robust_spec, ei, rei, AcquisitionSpec, RobustKind,
};
use crate::error::Result;
use crate::field::{FminContext, PosteriorField};
use crate::kernel::{CovMatrix, Domain, GeneralizedPoint, OperatorTag};
use crate::optimizer::BoxRegion;

/// One free location in the joint search space.
#[derive(Debug, Clone)]
pub(crate) struct Slot {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Points falling inside this box are pushed onto its nearest face.
    pub exclude: Option<BoxRegion>,
}

impl Slot {
    fn whole(domain: &Domain) -> Self {
        Self { lower: domain.lower().to_vec(), upper: domain.upper().to_vec(), exclude: None }
    }

    /// Affine image of `u ∈ [0, 1]^d`, before exclusion.
    pub fn map_linear(&self, u: &[f64]) -> Vec<f64> {
        (0..u.len()).map(|a| self.lower[a] + u[a].clamp(0.0, 1.0) * (self.upper[a] - self.lower[a])).collect()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut x = x.to_vec();
        if let Some(region) = &self.exclude {
            region.push_out(&mut x, &self.lower, &self.upper);
        }
        x
    }

    pub fn map(&self, u: &[f64]) -> Vec<f64> {
        self.project(&self.map_linear(u))
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Shape {
    Ei,
    /// `fixed` points already chosen by the greedy fallback plus `free` new ones.
    Batch {
        fixed: Vec<Vec<f64>>,
        free: usize,
    },
    Gradient,
    Noisy {
        objective: String,
        noise: String,
    },
    Fidelity {
        measured: OperatorTag,
        response: OperatorTag,
        responses: usize,
    },
    Robust {
        cov: CovMatrix,
        kind: RobustKind,
    },
    Region,
}

/// Maps a point of the unit cube `[0, 1]^D` to an acquisition spec.
#[derive(Debug, Clone)]
pub(crate) struct Template {
    pub slots: Vec<Slot>,
    pub shape: Shape,
    pub fmin: FminContext,
    pub dim: usize,
}

impl Template {
    pub fn new(domain: &Domain, shape: Shape, fmin: FminContext, region: Option<&BoxRegion>) -> Self {
        let d = domain.dim();
        let whole = Slot::whole(domain);
        let slots = match &shape {
            Shape::Ei | Shape::Noisy { .. } => vec![whole],
            Shape::Batch { free, .. } => vec![whole; *free],
            Shape::Gradient => vec![whole; d + 2],
            Shape::Fidelity { responses, .. } => vec![whole; responses + 1],
            Shape::Robust { .. } => vec![whole; 2],
            Shape::Region => {
                let region = region.expect("region template needs a region").clone();
                let zeta = Slot { lower: region.lower.clone(), upper: region.upper.clone(), exclude: None };
                let eta = Slot { exclude: Some(region), ..whole };
                vec![zeta, eta]
            }
        };
        Self { slots, shape, fmin, dim: d }
    }

    pub fn free_dim(&self) -> usize {
        self.slots.len() * self.dim
    }

    pub fn locations(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        self.slots.iter().enumerate().map(|(i, s)| s.map(&theta[i * self.dim..(i + 1) * self.dim])).collect()
    }

    pub fn spec(&self, locs: &[Vec<f64>]) -> Result<AcquisitionSpec> {
        let fmin = self.fmin.clone();
        match &self.shape {
            Shape::Ei => {
                let p = GeneralizedPoint::value(locs[0].clone());
                Ok(AcquisitionSpec::rei(vec![p.clone()], vec![p], fmin))
            }
            Shape::Batch { fixed, .. } => {
                let mut all = fixed.clone();
                all.extend(locs.iter().cloned());
                build_batch_spec(&all, fmin)
            }
            Shape::Gradient => build_gradient_spec(&locs[0], &locs[1..], fmin),
            Shape::Noisy { objective, noise } => build_noisy_spec(&locs[0], objective, noise, fmin),
            Shape::Fidelity { measured, response, .. } => {
                let zeta = locs[1..].iter().map(|z| GeneralizedPoint::new(z.clone(), response.clone())).collect();
                Ok(AcquisitionSpec::rei(zeta, vec![GeneralizedPoint::new(locs[0].clone(), measured.clone())], fmin))
            }
            Shape::Robust { cov, kind } => build_robust_spec(&locs[0], &locs[1], cov, *kind, fmin),
            Shape::Region => Ok(AcquisitionSpec::rei(
                vec![GeneralizedPoint::value(locs[0].clone())],
                vec![GeneralizedPoint::value(locs[1].clone())],
                fmin,
            )),
        }
    }

    /// Locations that get measured, in request order.
    pub fn measured_locations(&self, locs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match &self.shape {
            Shape::Batch { fixed, .. } => fixed.iter().chain(locs).cloned().collect(),
            Shape::Robust { .. } | Shape::Region => vec![locs[1].clone()],
            _ => vec![locs[0].clone()],
        }
    }

    /// Response slots with the operator they are read through; fixed batch
    /// points are returned separately.
    pub fn response_slots(&self, prior_objective: &OperatorTag) -> Vec<(usize, OperatorTag)> {
        match &self.shape {
            Shape::Ei | Shape::Region => vec![(0, prior_objective.clone())],
            Shape::Batch { free, .. } => (0..*free).map(|i| (i, prior_objective.clone())).collect(),
            Shape::Gradient => (1..self.slots.len()).map(|i| (i, prior_objective.clone())).collect(),
            Shape::Noisy { objective, .. } => vec![(0, OperatorTag::component(objective.clone()))],
            Shape::Fidelity { response, .. } => (1..self.slots.len()).map(|i| (i, response.clone())).collect(),
            Shape::Robust { cov, kind } => vec![(0, kind.tag(cov))],
        }
    }

    pub fn fixed_responses(&self) -> &[Vec<f64>] {
        match &self.shape {
            Shape::Batch { fixed, .. } => fixed,
            _ => &[],
        }
    }

    /// Acquisition value at `theta`; failures score `+∞`.
    pub fn score(&self, field: &PosteriorField, theta: &[f64], samples: usize, seed: u64) -> f64 {
        let locs = self.locations(theta);
        if let Shape::Ei = self.shape {
            return ei(field, &GeneralizedPoint::value(locs[0].clone()), self.fmin.value).unwrap_or(f64::INFINITY);
        }
        match self.spec(&locs).and_then(|s| rei(field, &s, samples, seed)) {
            Ok(e) => e.value,
            Err(_) => f64::INFINITY,
        }
    }
}
