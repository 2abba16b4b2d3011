use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{rei, select_fidelity, AcquisitionSpec, Fidelity, PsiEstimate};
use crate::error::Result;
use crate::field::{FminContext, PosteriorField};
use crate::optimizer::bounds::{template_lower_bound, SearchBox};
use crate::optimizer::template::{Shape, Template};
use crate::optimizer::AcquisitionMode;
use crate::search::{derive_seed, latin_hypercube_unit, PatternSearch};

/// Joint dimension above which batches are chosen one point at a time.
pub const GREEDY_BATCH_DIM: usize = 20;

const POLL_STEP: f64 = 0.1;
const MIN_POLL_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerOptConfig {
    #[serde(default = "default_multistarts")]
    pub multistarts: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub bb_enabled: bool,
    #[serde(default = "default_bb_max_boxes")]
    pub bb_max_boxes: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_multistarts() -> usize {
    8
}
fn default_max_iters() -> usize {
    200
}
fn default_bb_max_boxes() -> usize {
    256
}
fn default_tolerance() -> f64 {
    1e-6
}

impl Default for InnerOptConfig {
    fn default() -> Self {
        Self {
            multistarts: default_multistarts(),
            max_iters: default_max_iters(),
            bb_enabled: false,
            bb_max_boxes: default_bb_max_boxes(),
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub spec: AcquisitionSpec,
    pub estimate: PsiEstimate,
    /// Locations to measure, in request order.
    pub locations: Vec<Vec<f64>>,
    /// Winning point in the unit cube of the joint search space.
    pub theta: Vec<f64>,
    /// The multistart point the winner was reached from.
    pub start: Vec<f64>,
    pub fidelity: Option<Fidelity>,
    pub pruned_boxes: usize,
    pub processed_boxes: usize,
}

struct Minimized {
    theta: Vec<f64>,
    value: f64,
    start: Vec<f64>,
    pruned: usize,
    processed: usize,
}

/// Minimizes the mode's acquisition over its joint free variables.
///
/// Seeded Latin-hypercube screening picks the starts, each start runs a
/// compass search (in parallel; common random numbers inside one call), and
/// optionally a best-first branch-and-bound pass over the unit cube prunes
/// boxes whose regional lower bound cannot beat the incumbent by more than
/// `tolerance`.
pub fn inner_minimize(
    field: &PosteriorField,
    mode: &AcquisitionMode,
    fmin: &FminContext,
    config: &InnerOptConfig,
    samples: usize,
    seed: u64,
) -> Result<InnerResult> {
    let templates = mode.templates(field, fmin)?;
    let mut results = Vec::with_capacity(templates.len());
    for (i, (template, fidelity)) in templates.into_iter().enumerate() {
        let seed = derive_seed(seed, i as u64);
        let r = match (&template.shape, mode) {
            (Shape::Batch { free, .. }, _) if free * template.dim > GREEDY_BATCH_DIM => {
                greedy_batch(field, &template, *free, config, samples, seed)?
            }
            _ => {
                let m = minimize_template(field, &template, config, samples, seed);
                finish(field, &template, m, samples, seed)?
            }
        };
        results.push(InnerResult { fidelity, ..r });
    }
    if let AcquisitionMode::FidelityRei { cost_hi, cost_lo, .. } = mode {
        let lo = results.pop().expect("low-fidelity candidate");
        let hi = results.pop().expect("high-fidelity candidate");
        let choice = select_fidelity(&hi.estimate, &lo.estimate, fmin.value, *cost_hi, *cost_lo);
        let mut chosen = if choice == Fidelity::High { hi } else { lo };
        chosen.fidelity = Some(choice);
        return Ok(chosen);
    }
    Ok(results.pop().expect("one template per mode"))
}

fn finish(field: &PosteriorField, t: &Template, m: Minimized, samples: usize, seed: u64) -> Result<InnerResult> {
    let locs = t.locations(&m.theta);
    let spec = t.spec(&locs)?;
    let estimate = rei(field, &spec, samples, derive_seed(seed, 3))?;
    Ok(InnerResult {
        locations: t.measured_locations(&locs),
        spec,
        estimate,
        theta: m.theta,
        start: m.start,
        fidelity: None,
        pruned_boxes: m.pruned,
        processed_boxes: m.processed,
    })
}

fn greedy_batch(
    field: &PosteriorField,
    joint: &Template,
    k: usize,
    config: &InnerOptConfig,
    samples: usize,
    seed: u64,
) -> Result<InnerResult> {
    let mut fixed: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut last = None;
    let (mut pruned, mut processed) = (0, 0);
    for j in 0..k {
        let t = Template::new(field.domain(), Shape::Batch { fixed: fixed.clone(), free: 1 }, joint.fmin.clone(), None);
        let m = minimize_template(field, &t, config, samples, derive_seed(seed, 100 + j as u64));
        pruned += m.pruned;
        processed += m.processed;
        fixed.push(t.locations(&m.theta).remove(0));
        last = Some(m);
    }
    let last = last.expect("k >= 1");
    let spec = crate::acquisition::build_batch_spec(&fixed, joint.fmin.clone())?;
    let estimate = rei(field, &spec, samples, derive_seed(seed, 3))?;
    Ok(InnerResult {
        spec,
        estimate,
        locations: fixed,
        theta: last.theta,
        start: last.start,
        fidelity: None,
        pruned_boxes: pruned,
        processed_boxes: processed,
    })
}

fn minimize_template(
    field: &PosteriorField,
    t: &Template,
    config: &InnerOptConfig,
    samples: usize,
    seed: u64,
) -> Minimized {
    let dim = t.free_dim();
    let crn = derive_seed(seed, 2);
    let objective = |theta: &[f64]| t.score(field, theta, samples, crn);

    let n_screen = (16 * dim).max(8 * config.multistarts);
    let candidates = latin_hypercube_unit(dim, n_screen, derive_seed(seed, 1));
    let scores: Vec<f64> = candidates.par_iter().map(|c| objective(c)).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    let lower = vec![0.0; dim];
    let upper = vec![1.0; dim];
    let search = PatternSearch { initial_step: POLL_STEP, min_step: MIN_POLL_STEP, max_iters: config.max_iters };
    let runs: Vec<(Vec<f64>, f64, usize)> = order
        .iter()
        .take(config.multistarts.max(1))
        .copied()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&i| {
            let r = search.minimize(objective, &candidates[i], &lower, &upper);
            (r.x, r.value, i)
        })
        .collect();
    let (theta, value, start) = runs.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("at least one start");
    let mut best = Minimized { theta, value, start: candidates[start].clone(), pruned: 0, processed: 0 };

    if config.bb_enabled {
        let bound = |lo: &[f64], hi: &[f64]| {
            let bx = SearchBox {
                lower: (0..t.slots.len()).map(|s| t.slots[s].map_linear(&lo[s * t.dim..(s + 1) * t.dim])).collect(),
                upper: (0..t.slots.len()).map(|s| t.slots[s].map_linear(&hi[s * t.dim..(s + 1) * t.dim])).collect(),
            };
            template_lower_bound(field, t, &bx).unwrap_or(f64::NEG_INFINITY)
        };
        let improved = branch_and_bound(&objective, &bound, &mut best, dim, config);
        if improved && config.max_iters > 0 {
            let r = search.minimize(objective, &best.theta, &lower, &upper);
            if r.value < best.value {
                best.theta = r.x;
                best.value = r.value;
            }
        }
    }
    best
}

struct Node {
    bound: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // reversed: the max-heap pops the smallest bound first
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.lower.partial_cmp(&self.lower).unwrap_or(Ordering::Equal))
    }
}

/// Best-first search over boxes of the unit cube.  Returns whether the
/// incumbent improved.
fn branch_and_bound<F, B>(objective: &F, bound: &B, best: &mut Minimized, dim: usize, config: &InnerOptConfig) -> bool
where
    F: Fn(&[f64]) -> f64 + Sync,
    B: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let mut improved = false;
    let mut heap = BinaryHeap::new();
    let root = (vec![0.0; dim], vec![1.0; dim]);
    heap.push(Node { bound: bound(&root.0, &root.1), lower: root.0, upper: root.1 });
    while let Some(node) = heap.pop() {
        if node.bound >= best.value - config.tolerance {
            // every queued box has a bound at least this large
            best.pruned += 1 + heap.len();
            break;
        }
        if best.processed >= config.bb_max_boxes {
            break;
        }
        best.processed += 1;
        let axis = (0..dim)
            .max_by(|&a, &b| {
                (node.upper[a] - node.lower[a]).total_cmp(&(node.upper[b] - node.lower[b])).then(b.cmp(&a))
            })
            .expect("dim >= 1");
        let mid = 0.5 * (node.lower[axis] + node.upper[axis]);
        let mut left_hi = node.upper.clone();
        left_hi[axis] = mid;
        let mut right_lo = node.lower.clone();
        right_lo[axis] = mid;
        let children = [(node.lower.clone(), left_hi), (right_lo, node.upper.clone())];
        let evaluated: Vec<(f64, Vec<f64>, f64)> = children
            .par_iter()
            .map(|(lo, hi)| {
                let centre: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
                (objective(&centre), centre, bound(lo, hi))
            })
            .collect();
        for ((value, centre, _), _) in evaluated.iter().zip(&children) {
            if *value < best.value {
                best.value = *value;
                best.theta = centre.clone();
                improved = true;
            }
        }
        for ((_, _, b), (lo, hi)) in evaluated.into_iter().zip(children) {
            if b < best.value - config.tolerance {
                heap.push(Node { bound: b, lower: lo, upper: hi });
            } else {
                best.pruned += 1;
            }
        }
    }
    improved
}
