//! The EGO outer loop and the inner acquisition minimizer.
//!
//! Each iteration conditions the prior on all measurements so far
//! (optionally refitting hyperparameters), minimizes the mode's acquisition
//! over its joint free variables, and evaluates every operator the mode
//! demands at the selected measurement locations.  A proposal is a pure
//! function of the configuration and the measurements, so a run can be
//! replayed from its transcript and resumed in ask-tell fashion.

mod bounds;
mod inner;
mod template;

pub use bounds::{regional_lower_bound, SearchBox};
pub use inner::{inner_minimize, InnerOptConfig, InnerResult, GREEDY_BATCH_DIM};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acquisition::{Fidelity, RobustKind};
use crate::error::{Error, Result};
use crate::field::{fit_hyperparameters, FitBounds, FminContext, FminMethod, Measurement, PosteriorField};
use crate::kernel::{CovMatrix, Domain, GeneralizedPoint, OperatorTag, Prior};
use crate::protocol::{match_responses, Evaluator, EvaluatorRequest, EvaluatorResponse, WireOp};
use crate::search::{derive_seed, latin_hypercube, latin_hypercube_unit, PatternSearch};
use template::{Shape, Template};

/// Minimum scaled distance between two measurements with the same operator.
pub const DUPLICATE_RADIUS: f64 = 1e-6;

/// Axis-aligned box, used for response regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn margin(&self, axis: usize) -> f64 {
        1e-6 * (self.upper[axis] - self.lower[axis])
    }

    /// Moves `x` just outside the nearest face that stays within
    /// `[lo, hi]`; points outside the box are left alone.
    pub fn push_out(&self, x: &mut [f64], lo: &[f64], hi: &[f64]) {
        if !self.contains(x) {
            return;
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for a in 0..x.len() {
            let m = self.margin(a);
            for target in [self.lower[a] - m, self.upper[a] + m] {
                if target < lo[a] || target > hi[a] {
                    continue;
                }
                let shift = (target - x[a]).abs();
                if best.is_none_or(|(s, _, _)| shift < s) {
                    best = Some((shift, a, target));
                }
            }
        }
        if let Some((_, a, target)) = best {
            x[a] = target;
        }
    }

    fn validate(&self, domain: &Domain) -> Result<()> {
        let d = domain.dim();
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::DomainMismatch { expected: d, found: self.lower.len() });
        }
        for a in 0..d {
            if !(self.lower[a] < self.upper[a]) {
                return Err(Error::InvalidConfig(format!("region axis {a}: need lower < upper")));
            }
        }
        domain.check(&self.lower)?;
        domain.check(&self.upper)?;
        let escapable = (0..d).any(|a| {
            self.lower[a] - self.margin(a) >= domain.lower()[a] || self.upper[a] + self.margin(a) <= domain.upper()[a]
        });
        if !escapable {
            return Err(Error::InvalidConfig("region covers the whole domain; nothing left to measure".into()));
        }
        Ok(())
    }
}

fn default_responses() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AcquisitionMode {
    /// Classical expected improvement, one value per iteration.
    Ei,
    /// `k` simultaneous value measurements scored jointly.
    BatchRei { batch_size: usize },
    /// Value and full gradient at one point, judged by `d + 1` responses.
    GradientRei,
    /// Only `objective + noise` is observable; improvement is sought in
    /// `objective`.
    NoisyRei { objective: String, noise: String },
    /// Choose between measuring `hi` or the cheaper `lo` by
    /// improvement-to-cost ratio.
    FidelityRei {
        hi: OperatorTag,
        lo: OperatorTag,
        hi_wire: String,
        lo_wire: String,
        #[serde(default = "default_responses")]
        responses: usize,
        cost_hi: f64,
        cost_lo: f64,
    },
    /// Improvement of a perturbation-averaged objective.
    RobustRei { cov: CovMatrix, kind: RobustKind },
    /// Improvement sought inside `region` while measurements stay outside.
    RegionRei { region: BoxRegion },
}

impl AcquisitionMode {
    fn batch_size(&self) -> usize {
        match self {
            AcquisitionMode::BatchRei { batch_size } => *batch_size,
            _ => 1,
        }
    }

    pub(crate) fn templates(
        &self,
        field: &PosteriorField,
        fmin: &FminContext,
    ) -> Result<Vec<(Template, Option<Fidelity>)>> {
        let domain = field.domain();
        let t = |shape| Template::new(domain, shape, fmin.clone(), None);
        Ok(match self {
            AcquisitionMode::Ei => vec![(t(Shape::Ei), None)],
            AcquisitionMode::BatchRei { batch_size } => {
                vec![(t(Shape::Batch { fixed: vec![], free: *batch_size }), None)]
            }
            AcquisitionMode::GradientRei => vec![(t(Shape::Gradient), None)],
            AcquisitionMode::NoisyRei { objective, noise } => {
                vec![(t(Shape::Noisy { objective: objective.clone(), noise: noise.clone() }), None)]
            }
            AcquisitionMode::FidelityRei { hi, lo, responses, .. } => vec![
                (
                    t(Shape::Fidelity { measured: hi.clone(), response: hi.clone(), responses: *responses }),
                    Some(Fidelity::High),
                ),
                (
                    t(Shape::Fidelity { measured: lo.clone(), response: hi.clone(), responses: *responses }),
                    Some(Fidelity::Low),
                ),
            ],
            AcquisitionMode::RobustRei { cov, kind } => {
                vec![(t(Shape::Robust { cov: cov.clone(), kind: *kind }), None)]
            }
            AcquisitionMode::RegionRei { region } => {
                vec![(Template::new(domain, Shape::Region, fmin.clone(), Some(region)), None)]
            }
        })
    }

    /// Wire descriptors and model operators requested per location.
    pub fn wires(&self, prior: &Prior, fidelity: Option<Fidelity>) -> Result<Vec<(String, OperatorTag)>> {
        let value = || ("value".to_string(), prior.objective_tag());
        Ok(match self {
            AcquisitionMode::Ei
            | AcquisitionMode::BatchRei { .. }
            | AcquisitionMode::RobustRei { .. }
            | AcquisitionMode::RegionRei { .. } => vec![value()],
            AcquisitionMode::GradientRei => {
                let mut w = vec![value()];
                w.extend((0..prior.dim()).map(|a| (WireOp::Grad(a).to_string(), OperatorTag::PartialDerivative(a))));
                w
            }
            AcquisitionMode::NoisyRei { objective, noise } => vec![(
                "value".to_string(),
                OperatorTag::sum(vec![
                    OperatorTag::component(objective.clone()),
                    OperatorTag::component(noise.clone()),
                ])?,
            )],
            AcquisitionMode::FidelityRei { hi, lo, hi_wire, lo_wire, .. } => match fidelity {
                Some(Fidelity::High) => vec![(hi_wire.clone(), hi.clone())],
                Some(Fidelity::Low) => vec![(lo_wire.clone(), lo.clone())],
                None => vec![(hi_wire.clone(), hi.clone()), (lo_wire.clone(), lo.clone())],
            },
        })
    }

    /// The operator whose measured values define the measured minimum.
    fn primary_tag(&self, prior: &Prior) -> Result<OperatorTag> {
        Ok(self.wires(prior, None)?.remove(0).1)
    }

    /// The incumbent that clamps this mode's acquisition.
    pub fn fmin(&self, field: &PosteriorField, method: FminMethod) -> Result<FminContext> {
        match self {
            AcquisitionMode::Ei | AcquisitionMode::BatchRei { .. } | AcquisitionMode::GradientRei => {
                field.find_fmin(method)
            }
            AcquisitionMode::NoisyRei { objective, .. } => {
                field.find_fmin_for(FminMethod::PosteriorMeanMin, &OperatorTag::component(objective.clone()))
            }
            AcquisitionMode::FidelityRei { hi, .. } => field.find_fmin_for(method, hi),
            AcquisitionMode::RobustRei { cov, kind } => {
                field.find_fmin_for(FminMethod::PosteriorMeanMin, &kind.tag(cov))
            }
            AcquisitionMode::RegionRei { region } => Ok(region_mean_min(field, region)),
        }
    }

    fn validate(&self, domain: &Domain, prior: &Prior) -> Result<()> {
        match self {
            AcquisitionMode::BatchRei { batch_size } if *batch_size == 0 => {
                Err(Error::InvalidConfig("batch_size must be at least 1".into()))
            }
            AcquisitionMode::NoisyRei { objective, noise } => {
                if objective == noise {
                    return Err(Error::InvalidConfig("objective and noise components must differ".into()));
                }
                prior.check_tag(&OperatorTag::component(objective.clone()))?;
                prior.check_tag(&OperatorTag::component(noise.clone()))
            }
            AcquisitionMode::FidelityRei { hi, lo, hi_wire, lo_wire, responses, cost_hi, cost_lo } => {
                prior.check_tag(hi)?;
                prior.check_tag(lo)?;
                hi_wire.parse::<WireOp>()?;
                lo_wire.parse::<WireOp>()?;
                if *responses == 0 {
                    return Err(Error::InvalidConfig("fidelity mode needs at least one response".into()));
                }
                if !(cost_hi.is_finite() && cost_lo.is_finite() && *cost_hi >= 0.0 && *cost_lo >= 0.0) {
                    return Err(Error::InvalidConfig("fidelity costs must be finite and non-negative".into()));
                }
                Ok(())
            }
            AcquisitionMode::RobustRei { cov, kind } => {
                if cov.dim() != domain.dim() {
                    return Err(Error::DomainMismatch { expected: domain.dim(), found: cov.dim() });
                }
                prior.check_tag(&kind.tag(cov))
            }
            AcquisitionMode::RegionRei { region } => region.validate(domain),
            _ => Ok(()),
        }
    }
}

fn default_mc_samples() -> usize {
    1000
}

fn default_fmin_method() -> FminMethod {
    FminMethod::PosteriorMeanMin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoConfig {
    pub domain: Domain,
    pub prior: Prior,
    /// Maximum number of evaluator requests (locations), design included.
    pub budget: usize,
    pub mode: AcquisitionMode,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub refit_hyperparameters: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_bounds: Option<FitBounds>,
    #[serde(default = "default_fmin_method")]
    pub fmin_method: FminMethod,
    #[serde(default)]
    pub inner: InnerOptConfig,
    /// Overrides the default initial design size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_design: Option<usize>,
}

impl EgoConfig {
    pub fn new(domain: Domain, prior: Prior, budget: usize, mode: AcquisitionMode) -> Self {
        Self {
            domain,
            prior,
            budget,
            mode,
            mc_samples: default_mc_samples(),
            seed: 0,
            refit_hyperparameters: false,
            fit_bounds: None,
            fmin_method: default_fmin_method(),
            inner: InnerOptConfig::default(),
            initial_design: None,
        }
    }

    /// Initial design size in requests: `max(2d + 2, 6)` scalar values,
    /// spread over requests of `d + 1` values in gradient mode.
    pub fn design_size(&self) -> usize {
        if let Some(n) = self.initial_design {
            return n;
        }
        let d = self.domain.dim();
        let values = (2 * d + 2).max(6);
        match self.mode {
            AcquisitionMode::GradientRei => values.div_ceil(d + 1),
            _ => values,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Domain::new(self.domain.lower().to_vec(), self.domain.upper().to_vec())?;
        self.prior.validate()?;
        if self.prior.dim() != self.domain.dim() {
            return Err(Error::DomainMismatch { expected: self.domain.dim(), found: self.prior.dim() });
        }
        self.mode.validate(&self.domain, &self.prior)?;
        if self.mc_samples < 100 {
            return Err(Error::InvalidConfig(format!("mc_samples must be at least 100, got {}", self.mc_samples)));
        }
        if self.inner.multistarts == 0 {
            return Err(Error::InvalidConfig("inner.multistarts must be at least 1".into()));
        }
        if !(self.inner.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("inner.tolerance must be non-negative".into()));
        }
        if self.design_size() == 0 {
            return Err(Error::InvalidConfig("initial design must contain at least one point".into()));
        }
        if self.budget < self.design_size() {
            return Err(Error::InvalidConfig(format!(
                "budget {} is smaller than the initial design ({})",
                self.budget,
                self.design_size()
            )));
        }
        if self.refit_hyperparameters {
            if let Some(b) = &self.fit_bounds {
                if b.lengthscales.len() != self.domain.dim() {
                    return Err(Error::DomainMismatch { expected: self.domain.dim(), found: b.lengthscales.len() });
                }
            }
        }
        Ok(())
    }

    pub fn design_locations(&self) -> Vec<Vec<f64>> {
        let mut pts = latin_hypercube(&self.domain, self.design_size(), derive_seed(self.seed, 0));
        if let AcquisitionMode::RegionRei { region } = &self.mode {
            for p in &mut pts {
                region.push_out(p, self.domain.lower(), self.domain.upper());
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Design,
    Acquisition,
}

/// Requests for the next evaluation round and what led to them.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub phase: Phase,
    pub requests: Vec<EvaluatorRequest>,
    /// Model operator for every requested descriptor.
    pub tags: Vec<Vec<OperatorTag>>,
    pub hyperparameters: Prior,
    pub fmin: Option<FminContext>,
    pub rei_value: Option<f64>,
    pub rei_stderr: Option<f64>,
    pub fidelity: Option<Fidelity>,
    pub pruned_boxes: usize,
    pub processed_boxes: usize,
    pub guard_replacements: usize,
    /// The acquisition promised no improvement and the incumbent location
    /// was proposed instead.
    pub exploit_fallback: bool,
}

impl Proposal {
    /// Pairs matched responses with the requested operators.
    pub fn measurements(&self, responses: &[EvaluatorResponse]) -> Vec<Measurement> {
        let mut out = Vec::new();
        for ((q, r), tags) in self.requests.iter().zip(responses).zip(&self.tags) {
            for (tag, v) in tags.iter().zip(&r.values) {
                out.push(Measurement::new(q.location.clone(), tag.clone(), *v));
            }
        }
        out
    }
}

fn scaled_distance(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).abs()).fold(0.0, f64::max)
}

/// Posterior-mean minimum of the objective within `region`.
fn region_mean_min(field: &PosteriorField, region: &BoxRegion) -> FminContext {
    let d = region.lower.len();
    let surface = |x: &[f64]| field.mean(&GeneralizedPoint::value(x.to_vec())).unwrap_or(f64::INFINITY);
    let inside = Domain::new(region.lower.clone(), region.upper.clone()).expect("validated region");
    let mut starts: Vec<(f64, Vec<f64>)> =
        latin_hypercube(&inside, 4 * d + 4, 0x5eed_b0c5).into_iter().map(|x| (surface(&x), x)).collect();
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let search = PatternSearch { initial_step: 0.05, min_step: 1e-7, max_iters: 400 };
    let mut best = (f64::INFINITY, region.lower.clone());
    for (_, x0) in starts.into_iter().take(4) {
        let r = search.minimize(surface, &x0, &region.lower, &region.upper);
        if r.value < best.0 {
            best = (r.value, r.x);
        }
    }
    FminContext { value: best.0, location: best.1, method: FminMethod::PosteriorMeanMin }
}

fn distinct_locations(data: &[Measurement]) -> usize {
    let mut seen: Vec<&[f64]> = Vec::new();
    for m in data {
        if !seen.contains(&m.point.location.as_slice()) {
            seen.push(&m.point.location);
        }
    }
    seen.len()
}

/// Prior used for the next acquisition: the configured one, or its
/// maximum-likelihood refit on `data`.
pub fn working_prior(config: &EgoConfig, data: &[Measurement]) -> Prior {
    match (&config.prior, config.refit_hyperparameters) {
        (Prior::Single(initial), true) if data.len() >= 2 => {
            let bounds = config.fit_bounds.clone().unwrap_or_else(|| FitBounds::default_for(&config.domain, data));
            match fit_hyperparameters(initial, data, &bounds, derive_seed(config.seed, 2_000_000 + data.len() as u64)) {
                Ok(fit) => Prior::Single(fit.spec),
                Err(e) => {
                    log::warn!("hyperparameter refit failed ({e}); keeping the configured prior");
                    config.prior.clone()
                }
            }
        }
        _ => config.prior.clone(),
    }
}

/// Next requests for `data`: the initial design when nothing has been
/// measured yet, otherwise one acquisition round of `batch` requests.
pub fn suggest(config: &EgoConfig, data: &[Measurement]) -> Result<Proposal> {
    suggest_with(config, &config.mode, data)
}

fn suggest_with(config: &EgoConfig, mode: &AcquisitionMode, data: &[Measurement]) -> Result<Proposal> {
    config.validate()?;
    let id_base = distinct_locations(data) as u64;
    if data.is_empty() {
        let wires = mode.wires(&config.prior, None)?;
        let locs = config.design_locations();
        return Ok(Proposal {
            phase: Phase::Design,
            requests: requests(id_base, &locs, &wires),
            tags: vec![wires.iter().map(|w| w.1.clone()).collect(); locs.len()],
            hyperparameters: config.prior.clone(),
            fmin: None,
            rei_value: None,
            rei_stderr: None,
            fidelity: None,
            pruned_boxes: 0,
            processed_boxes: 0,
            guard_replacements: 0,
            exploit_fallback: false,
        });
    }

    let prior = working_prior(config, data);
    let field = PosteriorField::condition(&config.domain, &prior, data.to_vec())?;
    let fmin = mode.fmin(&field, config.fmin_method)?;
    let seed = derive_seed(config.seed, 1_000_000 + data.len() as u64);
    let found = inner_minimize(&field, mode, &fmin, &config.inner, config.mc_samples, seed)?;
    let wires = mode.wires(&prior, found.fidelity)?;
    let tags: Vec<OperatorTag> = wires.iter().map(|w| w.1.clone()).collect();
    let mut locations = found.locations;
    let exploit_fallback = stalled(config, mode, &fmin, found.estimate.value);
    if exploit_fallback {
        log::debug!("acquisition is flat; measuring at the incumbent {:?}", fmin.location);
        locations[0] = fmin.location.clone();
    }
    let (locs, guard_replacements) = guard_duplicates(config, data, &tags, locations, seed);
    Ok(Proposal {
        phase: Phase::Acquisition,
        requests: requests(id_base, &locs, &wires),
        tags: vec![tags; locs.len()],
        hyperparameters: prior,
        fmin: Some(fmin),
        rei_value: Some(found.estimate.value),
        rei_stderr: Some(found.estimate.stderr),
        fidelity: found.fidelity,
        pruned_boxes: found.pruned_boxes,
        processed_boxes: found.processed_boxes,
        guard_replacements,
        exploit_fallback,
    })
}

/// Whether the best acquisition value improves on `F_min` by less than
/// `inner.tolerance · σ`.  Region mode never falls back: its incumbent lies
/// where measuring is not allowed.
fn stalled(config: &EgoConfig, mode: &AcquisitionMode, fmin: &FminContext, value: f64) -> bool {
    if matches!(mode, AcquisitionMode::RegionRei { .. }) {
        return false;
    }
    fmin.value - value <= config.inner.tolerance * config.prior.variance_scale().sqrt()
}

fn requests(id_base: u64, locs: &[Vec<f64>], wires: &[(String, OperatorTag)]) -> Vec<EvaluatorRequest> {
    locs.iter()
        .enumerate()
        .map(|(i, x)| EvaluatorRequest {
            id: id_base + i as u64,
            location: x.clone(),
            operators: wires.iter().map(|w| w.0.clone()).collect(),
        })
        .collect()
}

/// Replaces proposals that repeat a measured (location, operator) pair, or
/// each other, by the most space-filling point of a seeded candidate set.
fn guard_duplicates(
    config: &EgoConfig,
    data: &[Measurement],
    tags: &[OperatorTag],
    proposed: Vec<Vec<f64>>,
    seed: u64,
) -> (Vec<Vec<f64>>, usize) {
    let ls = config.prior.objective_lengthscales();
    let clashes = |x: &[f64], chosen: &[Vec<f64>]| {
        data.iter().any(|m| tags.contains(&m.point.op) && scaled_distance(x, &m.point.location, ls) < DUPLICATE_RADIUS)
            || chosen.iter().any(|c| scaled_distance(x, c, ls) < DUPLICATE_RADIUS)
    };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(proposed.len());
    let mut replaced = 0;
    for (j, x) in proposed.into_iter().enumerate() {
        if !clashes(&x, &out) {
            out.push(x);
            continue;
        }
        replaced += 1;
        let d = config.domain.dim();
        let mut candidates: Vec<Vec<f64>> = latin_hypercube_unit(d, 64, derive_seed(seed, 50 + j as u64))
            .iter()
            .map(|u| config.domain.from_unit(u))
            .collect();
        if let AcquisitionMode::RegionRei { region } = &config.mode {
            for c in &mut candidates {
                region.push_out(c, config.domain.lower(), config.domain.upper());
            }
        }
        let spread = |c: &Vec<f64>| {
            data.iter()
                .map(|m| m.point.location.as_slice())
                .chain(out.iter().map(|o| o.as_slice()))
                .map(|o| scaled_distance(c, o, ls))
                .fold(f64::INFINITY, f64::min)
        };
        let pick = candidates
            .into_iter()
            .map(|c| (spread(&c), c))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, c)| c)
            .expect("non-empty candidate set");
        log::debug!("duplicate guard replaced proposal {j}");
        out.push(pick);
    }
    (out, replaced)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub requests: Vec<EvaluatorRequest>,
    pub responses: Vec<EvaluatorResponse>,
    pub measurements: Vec<Measurement>,
    /// Requests issued so far, this round included.
    pub evaluations: usize,
    pub total_cost: f64,
    pub fmin: Option<FminContext>,
    pub measured_min: Option<f64>,
    pub rei_value: Option<f64>,
    pub rei_stderr: Option<f64>,
    pub hyperparameters: Prior,
    pub fidelity: Option<Fidelity>,
    pub pruned_boxes: usize,
    pub processed_boxes: usize,
    pub guard_replacements: usize,
    pub exploit_fallback: bool,
    pub timing: Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub iterations: usize,
    pub evaluations: usize,
    pub total_cost: f64,
    pub best_value: f64,
    pub best_location: Vec<f64>,
    /// Incumbent of the final posterior under the mode's F_min rule.
    pub recommended: FminContext,
    pub termination: Termination,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Config(EgoConfig),
    Iteration(IterationRecord),
    Summary(Summary),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<LogRecord>,
}

impl RunLog {
    pub fn iterations(&self) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Iteration(it) => Some(it),
            _ => None,
        })
    }

    pub fn summary(&self) -> Option<&Summary> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Summary(s) => Some(s),
            _ => None,
        })
    }

    pub fn measurements(&self) -> Vec<Measurement> {
        self.iterations().flat_map(|it| it.measurements.iter().cloned()).collect()
    }
}

fn best_measured<'a>(data: &'a [Measurement], tag: &OperatorTag) -> Option<&'a Measurement> {
    data.iter().filter(|m| &m.point.op == tag).min_by(|a, b| a.value.total_cmp(&b.value))
}

/// Runs EGO against `evaluator` until the budget is spent.  Every record is
/// handed to `sink` as soon as it exists.
pub fn ego_run<E: Evaluator + ?Sized>(
    evaluator: &mut E,
    config: &EgoConfig,
    sink: &mut dyn FnMut(&LogRecord) -> Result<()>,
) -> Result<RunLog> {
    config.validate()?;
    let mut log = RunLog::default();
    let mut emit = |log: &mut RunLog, r: LogRecord| -> Result<()> {
        sink(&r)?;
        log.records.push(r);
        Ok(())
    };
    emit(&mut log, LogRecord::Config(config.clone()))?;

    let primary = config.mode.primary_tag(&config.prior)?;
    let mut mode = config.mode.clone();
    let mut data: Vec<Measurement> = Vec::new();
    let mut evaluations = 0;
    let mut total_cost = 0.0;
    let mut iteration = 0;
    while evaluations < config.budget {
        let started = Instant::now();
        if let AcquisitionMode::BatchRei { batch_size } = &mut mode {
            *batch_size = config.mode.batch_size().min(config.budget - evaluations);
        }
        let proposal = suggest_with(config, &mode, &data)?;
        let responses = match_responses(&proposal.requests, evaluator.evaluate(&proposal.requests)?)?;
        let fresh = proposal.measurements(&responses);
        evaluations += proposal.requests.len();
        for (r, q) in responses.iter().zip(&proposal.requests) {
            let cost = r.cost.unwrap_or(1.0);
            total_cost += cost;
            update_costs(&mut mode, q, r);
        }
        data.extend(fresh.iter().cloned());
        let record = IterationRecord {
            iteration,
            phase: proposal.phase,
            requests: proposal.requests,
            responses,
            measurements: fresh,
            evaluations,
            total_cost,
            fmin: proposal.fmin,
            measured_min: best_measured(&data, &primary).map(|m| m.value),
            rei_value: proposal.rei_value,
            rei_stderr: proposal.rei_stderr,
            hyperparameters: proposal.hyperparameters,
            fidelity: proposal.fidelity,
            pruned_boxes: proposal.pruned_boxes,
            processed_boxes: proposal.processed_boxes,
            guard_replacements: proposal.guard_replacements,
            exploit_fallback: proposal.exploit_fallback,
            timing: Timing { wall_ms: started.elapsed().as_secs_f64() * 1e3 },
        };
        log::info!(
            "iteration {iteration}: {} request(s), measured min {:?}",
            record.requests.len(),
            record.measured_min
        );
        emit(&mut log, LogRecord::Iteration(record))?;
        iteration += 1;
    }

    let started = Instant::now();
    let prior = working_prior(config, &data);
    let field = PosteriorField::condition(&config.domain, &prior, data.clone())?;
    let recommended = mode.fmin(&field, config.fmin_method)?;
    let best = best_measured(&data, &primary);
    let summary = Summary {
        iterations: iteration,
        evaluations,
        total_cost,
        best_value: best.map_or(f64::NAN, |m| m.value),
        best_location: best.map(|m| m.point.location.clone()).unwrap_or_default(),
        recommended,
        termination: Termination::BudgetExhausted,
        timing: Timing { wall_ms: started.elapsed().as_secs_f64() * 1e3 },
    };
    emit(&mut log, LogRecord::Summary(summary))?;
    Ok(log)
}

fn update_costs(mode: &mut AcquisitionMode, q: &EvaluatorRequest, r: &EvaluatorResponse) {
    if let (AcquisitionMode::FidelityRei { hi_wire, lo_wire, cost_hi, cost_lo, .. }, Some(c)) = (mode, r.cost) {
        if q.operators.len() == 1 {
            if q.operators[0] == *hi_wire {
                *cost_hi = c;
            } else if q.operators[0] == *lo_wire {
                *cost_lo = c;
            }
        }
    }
}
