//! Derivative-free local search and space-filling designs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kernel::Domain;

#[derive(Debug, Clone, Copy)]
pub struct PatternSearch {
    /// Initial poll step as a fraction of each axis width.
    pub initial_step: f64,
    /// Terminates once the step falls below this fraction.
    pub min_step: f64,
    /// Maximum number of poll rounds.
    pub max_iters: usize,
}

impl Default for PatternSearch {
    fn default() -> Self {
        Self { initial_step: 0.25, min_step: 1e-6, max_iters: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

impl PatternSearch {
    /// Compass search inside `[lower, upper]`, starting from `x0`.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], lower: &[f64], upper: &[f64]) -> SearchResult
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut x = x0.to_vec();
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(lower[i], upper[i]);
        }
        let mut fx = sanitize(f(&x));
        let mut evaluations = 1;
        let mut step = self.initial_step;
        let mut trial = x.clone();
        for _ in 0..self.max_iters {
            if step < self.min_step {
                break;
            }
            let mut improved = false;
            for axis in 0..x.len() {
                let width = upper[axis] - lower[axis];
                if width <= 0.0 {
                    continue;
                }
                for dir in [1.0, -1.0] {
                    trial.copy_from_slice(&x);
                    trial[axis] = (x[axis] + dir * step * width).clamp(lower[axis], upper[axis]);
                    if trial[axis] == x[axis] {
                        continue;
                    }
                    let ft = sanitize(f(&trial));
                    evaluations += 1;
                    if ft < fx {
                        x.copy_from_slice(&trial);
                        fx = ft;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        SearchResult { x, value: fx, evaluations }
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

pub(crate) fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Latin-hypercube sample of `n` points in the unit cube `[0, 1]^dim`.
///
/// Ten candidate designs are drawn and the one with the largest minimum
/// pairwise distance is kept.
pub fn latin_hypercube_unit(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    if n == 0 {
        return Vec::new();
    }
    let mut rng = rng_from(seed);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for _ in 0..10 {
        let mut pts = vec![vec![0.0; dim]; n];
        for axis in 0..dim {
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(&mut rng);
            for (p, s) in pts.iter_mut().zip(&strata) {
                p[axis] = (*s as f64 + rng.random::<f64>()) / n as f64;
            }
        }
        let score = min_pairwise_distance(&pts);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, pts));
        }
    }
    best.map(|(_, p)| p).unwrap_or_default()
}

pub fn latin_hypercube(domain: &Domain, n: usize, seed: u64) -> Vec<Vec<f64>> {
    latin_hypercube_unit(domain.dim(), n, seed).iter().map(|u| domain.from_unit(u)).collect()
}

fn min_pairwise_distance(pts: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in 0..i {
            let d: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(d);
        }
    }
    best
}
