mod common;

use common::*;
use rand::Rng;
use rei_core::acquisition::{
    build_batch_spec, build_gradient_spec, build_noisy_spec, build_robust_spec, ei, rei, AcquisitionSpec, RobustKind,
};
use rei_core::optimizer::{
    inner_minimize, regional_lower_bound, suggest, AcquisitionMode, BoxRegion, EgoConfig, InnerOptConfig, SearchBox,
};
use rei_core::{CovMatrix, FminMethod, GeneralizedPoint, KernelSpec, Measurement, OperatorTag, PosteriorField, Prior};
use rei_oracles::grid_argmin;

fn wiggly_field() -> PosteriorField {
    let prior = Prior::Single(KernelSpec::new(1.0, vec![0.12], 0.0).unwrap());
    let xs: Vec<Vec<f64>> = [0.05, 0.3, 0.45, 0.8, 0.95].iter().map(|&x| vec![x]).collect();
    value_field(&prior, &xs, |x| (9.0 * x[0]).sin() * (1.0 + x[0]))
}

#[test]
fn ei_optimum_matches_dense_grid() {
    let field = wiggly_field();
    let fmin = field.find_fmin(FminMethod::MeasuredMin).unwrap();
    let surface = |x: f64| ei(&field, &GeneralizedPoint::value(vec![x]), fmin.value).unwrap();
    let (gx, gv) = grid_argmin(surface, 0.0, 1.0, 10_000);
    let r = inner_minimize(&field, &AcquisitionMode::Ei, &fmin, &InnerOptConfig::default(), 1000, 4).unwrap();
    assert!(r.estimate.value <= gv + 1e-9, "{} vs grid {gv}", r.estimate.value);
    assert!((r.locations[0][0] - gx).abs() < 1e-3);
}

#[test]
fn branch_and_bound_never_loses_to_the_multistart() {
    let field = wiggly_field();
    let fmin = field.find_fmin(FminMethod::MeasuredMin).unwrap();
    let plain = InnerOptConfig { multistarts: 2, max_iters: 20, ..InnerOptConfig::default() };
    let bb = InnerOptConfig { bb_enabled: true, ..plain.clone() };
    let a = inner_minimize(&field, &AcquisitionMode::Ei, &fmin, &plain, 500, 9).unwrap();
    let b = inner_minimize(&field, &AcquisitionMode::Ei, &fmin, &bb, 500, 9).unwrap();
    assert!(b.estimate.value <= a.estimate.value + 1e-12);
    assert!(b.processed_boxes > 0);
    assert!(b.processed_boxes <= bb.bb_max_boxes);
    assert_eq!(a.processed_boxes + a.pruned_boxes, 0);
}

#[test]
fn zero_iterations_return_the_start() {
    let field = wiggly_field();
    let fmin = field.find_fmin(FminMethod::MeasuredMin).unwrap();
    let cfg = InnerOptConfig { multistarts: 1, max_iters: 0, ..InnerOptConfig::default() };
    for mode in [AcquisitionMode::Ei, AcquisitionMode::BatchRei { batch_size: 2 }] {
        let r = inner_minimize(&field, &mode, &fmin, &cfg, 200, 1).unwrap();
        assert_eq!(r.theta, r.start);
    }
}

fn random_box(r: &mut impl Rng, d: usize, width: f64) -> (Vec<f64>, Vec<f64>) {
    let lo: Vec<f64> = (0..d).map(|_| r.random_range(0.0..1.0 - width)).collect();
    let hi = lo.iter().map(|l| l + r.random_range(0.0..width)).collect();
    (lo, hi)
}

fn inside(r: &mut impl Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(l, h)| l + r.random::<f64>() * (h - l)).collect()
}

#[test]
fn regional_bounds_sit_below_sampled_rei() {
    let mut r = rng(31);
    let region = BoxRegion { lower: vec![0.3, 0.3], upper: vec![0.6, 0.6] };
    for case in 0..1000u64 {
        let d = 2;
        let prior = Prior::Single(random_spec(&mut r, d));
        let n = r.random_range(2..=6);
        let mut data = Vec::new();
        for x in spaced_points(&mut r, d, n) {
            data.push(Measurement::new(x.clone(), OperatorTag::Identity, r.random_range(-1.0..1.0)));
            if r.random::<bool>() {
                data.push(Measurement::new(x, OperatorTag::PartialDerivative(0), r.random_range(-1.0..1.0)));
            }
        }
        let field = PosteriorField::condition(&unit_domain(d), &prior, data).unwrap();
        let fmin = field.find_fmin(FminMethod::MeasuredMin).unwrap();
        let cov = CovMatrix::diagonal(&[0.01, 0.02]).unwrap();
        let (mode, slots) = match case % 5 {
            0 => (AcquisitionMode::Ei, 1),
            1 => (AcquisitionMode::BatchRei { batch_size: 2 }, 2),
            2 => (AcquisitionMode::GradientRei, d + 2),
            3 => (AcquisitionMode::RobustRei { cov: cov.clone(), kind: RobustKind::Convolution }, 2),
            _ => (AcquisitionMode::RegionRei { region: region.clone() }, 2),
        };
        let fmin = if case % 5 >= 3 { mode.fmin(&field, FminMethod::PosteriorMeanMin).unwrap() } else { fmin };
        let boxes: Vec<(Vec<f64>, Vec<f64>)> = (0..slots)
            .map(|s| {
                if case % 5 == 4 && s == 0 {
                    (region.lower.clone(), region.upper.clone())
                } else {
                    random_box(&mut r, d, 0.3)
                }
            })
            .collect();
        let bx = SearchBox {
            lower: boxes.iter().map(|b| b.0.clone()).collect(),
            upper: boxes.iter().map(|b| b.1.clone()).collect(),
        };
        let bound = regional_lower_bound(&field, &mode, &fmin, &bx).unwrap();
        for k in 0..4u64 {
            let locs: Vec<Vec<f64>> = boxes.iter().map(|(lo, hi)| inside(&mut r, lo, hi)).collect();
            let spec: AcquisitionSpec = match &mode {
                AcquisitionMode::Ei => AcquisitionSpec::rei(
                    vec![GeneralizedPoint::value(locs[0].clone())],
                    vec![GeneralizedPoint::value(locs[0].clone())],
                    fmin.clone(),
                ),
                AcquisitionMode::BatchRei { .. } => build_batch_spec(&locs, fmin.clone()).unwrap(),
                AcquisitionMode::GradientRei => build_gradient_spec(&locs[0], &locs[1..], fmin.clone()).unwrap(),
                AcquisitionMode::RobustRei { .. } => {
                    build_robust_spec(&locs[0], &locs[1], &cov, RobustKind::Convolution, fmin.clone()).unwrap()
                }
                _ => {
                    let mut eta = locs[1].clone();
                    region.push_out(&mut eta, &[0.0, 0.0], &[1.0, 1.0]);
                    AcquisitionSpec::rei(
                        vec![GeneralizedPoint::value(locs[0].clone())],
                        vec![GeneralizedPoint::value(eta)],
                        fmin.clone(),
                    )
                }
            };
            let est = rei(&field, &spec, 2000, case * 10 + k).unwrap();
            assert!(bound <= est.value + 4.0 * est.stderr + 1e-12, "case {case}: bound {bound} above {}", est.value);
        }
        // whole-domain box bounds from below the incumbent too
        let whole = SearchBox { lower: vec![vec![0.0; d]; slots], upper: vec![vec![1.0; d]; slots] };
        assert!(regional_lower_bound(&field, &mode, &fmin, &whole).unwrap() <= fmin.value);
    }
}

#[test]
fn noisy_bounds_use_the_fallback() {
    let prior = two_components(1);
    let sum = OperatorTag::sum(vec![OperatorTag::component("Z"), OperatorTag::component("eps")]).unwrap();
    let data: Vec<Measurement> =
        (0..5).map(|i| Measurement::new(vec![i as f64 / 4.0], sum.clone(), (i as f64).cos())).collect();
    let field = PosteriorField::condition(&unit_domain(1), &prior, data).unwrap();
    let mode = AcquisitionMode::NoisyRei { objective: "Z".into(), noise: "eps".into() };
    let fmin = mode.fmin(&field, FminMethod::PosteriorMeanMin).unwrap();
    let bx = SearchBox { lower: vec![vec![0.1]], upper: vec![vec![0.4]] };
    let bound = regional_lower_bound(&field, &mode, &fmin, &bx).unwrap();
    for x in [0.1, 0.2, 0.33, 0.4] {
        let est = rei(&field, &build_noisy_spec(&[x], "Z", "eps", fmin.clone()).unwrap(), 1000, 0).unwrap();
        assert!(bound <= est.value);
    }
    let bad = SearchBox { lower: vec![vec![0.1], vec![0.2]], upper: vec![vec![0.4], vec![0.3]] };
    assert!(regional_lower_bound(&field, &mode, &fmin, &bad).is_err());
}

#[test]
fn degenerate_box_gives_the_elementary_bracket() {
    let field = wiggly_field();
    let fmin = field.find_fmin(FminMethod::MeasuredMin).unwrap();
    let x = vec![0.6];
    let bound = regional_lower_bound(&field, &AcquisitionMode::Ei, &fmin, &SearchBox::point(std::slice::from_ref(&x))).unwrap();
    let spec = AcquisitionSpec::rei(vec![GeneralizedPoint::value(x.clone())], vec![GeneralizedPoint::value(x)], fmin);
    let est = rei(&field, &spec, 100, 0).unwrap();
    assert_eq!(bound, est.lower_bound);
}

fn quadratic_config() -> EgoConfig {
    let domain = rei_core::Domain::new(vec![-2.0], vec![2.0]).unwrap();
    let prior = Prior::Single(KernelSpec::new(1.0, vec![0.8], 0.0).unwrap());
    EgoConfig::new(domain, prior, 12, AcquisitionMode::Ei)
}

#[test]
fn proposals_are_pure_functions_of_config_and_data() {
    let config = quadratic_config();
    let data: Vec<Measurement> = config
        .design_locations()
        .into_iter()
        .map(|x| {
            let v = (x[0] - 0.6).powi(2);
            Measurement::new(x, OperatorTag::Identity, v)
        })
        .collect();
    let a = suggest(&config, &data).unwrap();
    let b = suggest(&config, &data).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.requests[0].id, data.len() as u64);
    let fresh = suggest(&config, &[]).unwrap();
    assert_eq!(fresh.requests.len(), config.design_size());
}

#[test]
fn proposals_never_repeat_a_measured_location() {
    let mut config = quadratic_config();
    config.mode = AcquisitionMode::BatchRei { batch_size: 3 };
    let mut data: Vec<Measurement> = Vec::new();
    for x in config.design_locations() {
        data.push(Measurement::new(x.clone(), OperatorTag::Identity, (x[0] - 0.6).powi(2)));
    }
    for _ in 0..3 {
        let p = suggest(&config, &data).unwrap();
        for q in &p.requests {
            assert!(data.iter().all(|m| (m.point.location[0] - q.location[0]).abs() > 1e-7));
            data.push(Measurement::new(q.location.clone(), OperatorTag::Identity, (q.location[0] - 0.6).powi(2)));
        }
    }
}

#[test]
fn more_responses_never_raise_rei() {
    // statistical check, not an invariant: the two estimates are independent MC runs
    let mut r = rng(77);
    let mut violations = 0;
    for case in 0..100 {
        let d = r.random_range(1..=2);
        let prior = Prior::Single(random_spec(&mut r, d));
        let n = r.random_range(2..=5);
        let pts = spaced_points(&mut r, d, n);
        let field = value_field(&prior, &pts, |x| x.iter().map(|v| (5.0 * v).sin()).sum());
        let fmin = field.find_fmin(FminMethod::PosteriorMeanMin).unwrap();
        let zeta: Vec<GeneralizedPoint> =
            (0..r.random_range(1..=2)).map(|_| gp(&random_location(&mut r, d), OperatorTag::Identity)).collect();
        let mut wider = zeta.clone();
        wider.push(gp(&random_location(&mut r, d), random_tag(&mut r, d)));
        let a = rei(&field, &AcquisitionSpec::rei(zeta.clone(), zeta.clone(), fmin.clone()), 4000, case).unwrap();
        let b = rei(&field, &AcquisitionSpec::rei(zeta, wider, fmin), 4000, 1000 + case).unwrap();
        if b.value > a.value + 4.0 * a.stderr.hypot(b.stderr) + 1e-12 {
            violations += 1;
        }
    }
    assert!(violations <= 1, "{violations} of 100 cases gained REI from extra responses");
}
