#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rei_core::kernel::{Component, ComponentSpec};
use rei_core::{CovMatrix, Domain, GeneralizedPoint, KernelSpec, Measurement, OperatorTag, PosteriorField, Prior};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_domain(d: usize) -> Domain {
    Domain::new(vec![0.0; d], vec![1.0; d]).unwrap()
}

pub fn random_spec(r: &mut ChaCha8Rng, d: usize) -> KernelSpec {
    let ls = (0..d).map(|_| r.random_range(0.15..0.6)).collect();
    KernelSpec::new(r.random_range(0.3..3.0), ls, r.random_range(-1.0..1.0)).unwrap()
}

pub fn random_location(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| r.random::<f64>()).collect()
}

/// Symmetric positive definite covariance with standard deviations up to
/// `scale` per axis.
pub fn random_cov(r: &mut ChaCha8Rng, d: usize, scale: f64) -> CovMatrix {
    let sd: Vec<f64> = (0..d).map(|_| r.random_range(0.05..1.0) * scale).collect();
    let rho = if d == 2 { r.random_range(-0.7..0.7) } else { 0.0 };
    let mut rows = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            rows[i][j] = if i == j { sd[i] * sd[i] } else { rho * sd[i] * sd[j] };
        }
    }
    CovMatrix::from_rows(&rows).unwrap()
}

/// A single-field operator: identity, derivative, convolution or curvature.
pub fn random_tag(r: &mut ChaCha8Rng, d: usize) -> OperatorTag {
    match r.random_range(0..4) {
        0 => OperatorTag::Identity,
        1 => OperatorTag::PartialDerivative(r.random_range(0..d)),
        2 => OperatorTag::Convolution(random_cov(r, d, 0.2)),
        _ => OperatorTag::CurvaturePenalty(random_cov(r, d, 0.1)),
    }
}

pub fn two_components(d: usize) -> Prior {
    Prior::Components(
        ComponentSpec::new(vec![
            Component { id: "Z".into(), kernel: KernelSpec::new(1.0, vec![0.3; d], 0.2).unwrap() },
            Component { id: "eps".into(), kernel: KernelSpec::new(0.05, vec![0.1; d], 0.0).unwrap() },
        ])
        .unwrap(),
    )
}

/// Stratified points: axis coordinates fall in distinct cells of width
/// `1/n`, so any two points are at least `0.5/n` apart.
pub fn spaced_points(r: &mut ChaCha8Rng, d: usize, n: usize) -> Vec<Vec<f64>> {
    let mut axes: Vec<Vec<usize>> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut cells: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            cells.swap(i, r.random_range(0..=i));
        }
        axes.push(cells);
    }
    (0..n).map(|i| (0..d).map(|a| (axes[a][i] as f64 + 0.25 + 0.5 * r.random::<f64>()) / n as f64).collect()).collect()
}

pub fn value_field(prior: &Prior, pts: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> PosteriorField {
    let d = prior.dim();
    let data = pts.iter().map(|x| Measurement::new(x.clone(), OperatorTag::Identity, f(x))).collect();
    PosteriorField::condition(&unit_domain(d), prior, data).unwrap()
}

pub fn gp(x: &[f64], op: OperatorTag) -> GeneralizedPoint {
    GeneralizedPoint::new(x.to_vec(), op)
}
