//! Acceptance criteria, one PASS/FAIL line each.  Every reference value is
//! computed by brute force in `rei-oracles` or by a grid scan.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use common::*;
use rei_cli::config::RunConfig;
use rei_cli::demo::{ei_choice, robust_choice, run_scenario, Scenario};
use rei_cli::runlog::without_timing;
use rei_core::acquisition::{
    ei, psi_bounds, psi_closed_form_1d, psi_monte_carlo, rei, AcquisitionSpec, GaussianMinProblem,
};
use rei_core::kernel::{gram, kernel_eval, prior_mean};
use rei_core::optimizer::{ego_run, AcquisitionMode, EgoConfig, RunLog};
use rei_core::problems::{builtin, BuiltinEvaluator};
use rei_core::{Domain, FminMethod, GeneralizedPoint, KernelSpec, Measurement, OperatorTag, PosteriorField, Prior};
use rei_oracles::{
    central_diff, expected_min_2d, grid_argmin, normal_expectation, schur_posterior, second_diff, simpson,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// `|a − e| ≤ rel · max(|e|, 1e-3 · scale)`: relative error, with a floor at
/// a thousandth of the natural magnitude so exact zeros are not divided by.
fn rel_err(actual: f64, expected: f64, scale: f64) -> f64 {
    (actual - expected).abs() / expected.abs().max(1e-3 * scale)
}

fn kscale(prior: &Prior, s: &GeneralizedPoint, t: &GeneralizedPoint) -> f64 {
    (kernel_eval(prior, s, s).unwrap() * kernel_eval(prior, t, t).unwrap()).sqrt()
}

/// `E min{c, X}` for `X ~ N(mu, sd²)` by Simpson split at the kink.
fn min_oracle(mu: f64, sd: f64, c: f64) -> f64 {
    let g = |x: f64| x.min(c) * (-0.5 * ((x - mu) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let (lo, hi) = (mu - 14.0 * sd, mu + 14.0 * sd);
    let k = c.clamp(lo, hi);
    simpson(&g, lo, k, 1e-14) + simpson(&g, k, hi, 1e-14)
}

fn random_value_field(r: &mut rand_chacha::ChaCha8Rng) -> PosteriorField {
    let d = r.random_range(1..=2);
    let prior = Prior::Single(random_spec(r, d));
    let n = r.random_range(1..=8);
    let data = spaced_points(r, d, n)
        .into_iter()
        .map(|x| Measurement::new(x, OperatorTag::Identity, r.random_range(-2.0..2.0)))
        .collect();
    PosteriorField::condition(&unit_domain(d), &prior, data).unwrap()
}

fn c1_identity_rei_is_ei() -> Outcome {
    let mut r = rng(1001);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let field = random_value_field(&mut r);
        let d = field.domain().dim();
        let fmin = field.find_fmin(FminMethod::PosteriorMeanMin).unwrap();
        let x = GeneralizedPoint::value(random_location(&mut r, d));
        let spec = AcquisitionSpec::rei(vec![x.clone()], vec![x.clone()], fmin.clone());
        let est = rei(&field, &spec, 10, 0).unwrap();
        let closed = ei(&field, &x, fmin.value).unwrap();
        let sd = field.variance(&x).unwrap().max(0.0).sqrt();
        let quad = if sd > 0.0 { min_oracle(field.mean(&x).unwrap(), sd, fmin.value) } else { closed };
        worst.0 = worst.0.max((est.value - closed).abs());
        worst.1 = worst.1.max((est.value - quad).abs());
    }
    check(
        worst.0 <= 1e-9 && worst.1 <= 1e-9,
        format!("200 posteriors, max |REI - EI| {:.1e}, vs quadrature {:.1e}", worst.0, worst.1),
    )
}

fn c2_kernel_algebra() -> Outcome {
    let mut r = rng(1002);
    let (mut deriv, mut conv, mut curv) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..500 {
        let d = r.random_range(1..=2);
        let prior = Prior::Single(random_spec(&mut r, d));
        let x = random_location(&mut r, d);
        let t = gp(&random_location(&mut r, d), random_tag(&mut r, d));
        let a = r.random_range(0..d);
        let h = 1e-5 * prior.objective_lengthscales()[a];
        let f = |y: &[f64]| kernel_eval(&prior, &GeneralizedPoint::value(y.to_vec()), &t).unwrap();
        let expected = central_diff(&f, &x, a, h);
        let s = gp(&x, OperatorTag::PartialDerivative(a));
        let sc = kscale(&prior, &s, &t);
        deriv = deriv.max(rel_err(kernel_eval(&prior, &s, &t).unwrap(), expected, sc));
        deriv = deriv.max(rel_err(kernel_eval(&prior, &t, &s).unwrap(), expected, sc));
    }
    for _ in 0..500 {
        let prior = Prior::Single(random_spec(&mut r, 1));
        let sd = r.random_range(0.02..0.4f64);
        let x = r.random::<f64>();
        let t = gp(&[r.random::<f64>()], random_tag(&mut r, 1));
        let phi = |e: f64| (-0.5 * (e / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let k = |u: f64| kernel_eval(&prior, &GeneralizedPoint::value(vec![u]), &t).unwrap();
        let expected = simpson(&|e: f64| phi(e) * k(x + e), -12.0 * sd, 12.0 * sd, 1e-13);
        let s = gp(&[x], OperatorTag::Convolution(rei_core::CovMatrix::diagonal(&[sd * sd]).unwrap()));
        conv = conv.max(rel_err(kernel_eval(&prior, &s, &t).unwrap(), expected, kscale(&prior, &s, &t)));
    }
    for _ in 0..500 {
        let d = r.random_range(1..=2);
        let prior = Prior::Single(random_spec(&mut r, d));
        let cov = random_cov(&mut r, d, 0.1);
        let x = random_location(&mut r, d);
        let t = gp(&random_location(&mut r, d), random_tag(&mut r, d));
        let f = |y: &[f64]| kernel_eval(&prior, &GeneralizedPoint::value(y.to_vec()), &t).unwrap();
        let h = 1e-3 * prior.objective_lengthscales().iter().copied().fold(f64::INFINITY, f64::min);
        let mut expected = f(&x);
        for i in 0..d {
            for j in 0..d {
                expected += 0.5 * cov.matrix()[(i, j)] * second_diff(&f, &x, i, j, h);
            }
        }
        let s = gp(&x, OperatorTag::CurvaturePenalty(cov));
        curv = curv.max(rel_err(kernel_eval(&prior, &s, &t).unwrap(), expected, kscale(&prior, &s, &t)));
    }
    check(
        deriv < 1e-4 && conv < 1e-5 && curv < 1e-3,
        format!("500 cases each, max rel err derivative {deriv:.1e}, convolution {conv:.1e}, curvature {curv:.1e}"),
    )
}

fn c3_gaussian_min() -> Outcome {
    let mut r = rng(1003);
    // 1e-12 absorbs rounding where the antithetic pairs cancel exactly
    let tol = |stderr: f64| 4.0 * stderr + 1e-12;
    let mut worst_1d = 0.0f64;
    for case in 0..100 {
        let (mu, sd) = (r.random_range(-2.0..2.0), r.random_range(0.05..3.0));
        // beyond a few sd from the mean too few draws cross the clamp for the
        // sample stderr to mean anything
        let clamp = if r.random::<bool>() { Some(mu + sd * r.random_range(-2.5..2.5)) } else { None };
        let p =
            GaussianMinProblem::new(DVector::from_element(1, mu), DMatrix::from_element(1, 1, sd * sd), clamp).unwrap();
        let est = psi_monte_carlo(&p, 20_000, case).unwrap();
        let exact = clamp.map_or(mu, |c| psi_closed_form_1d(mu, sd * sd, c));
        worst_1d = worst_1d.max((est.value - exact).abs() / tol(est.stderr));
    }
    let mut worst_2d = 0.0f64;
    let mut pairs: Vec<([f64; 2], [[f64; 2]; 2], Option<f64>)> = vec![([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], None)];
    for _ in 0..20 {
        let mu = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let (s1, s2, rho) = (r.random_range(0.1..2.0), r.random_range(0.1..2.0), r.random_range(-0.9..0.9));
        let clamp = if r.random::<bool>() { Some(r.random_range(-1.5..1.5)) } else { None };
        pairs.push((mu, [[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]], clamp));
    }
    let mut standard = (0.0, 0.0, 0.0);
    for (i, (mu, cov, clamp)) in pairs.iter().enumerate() {
        let p = GaussianMinProblem::new(
            DVector::from_row_slice(mu),
            DMatrix::from_row_slice(2, 2, &[cov[0][0], cov[0][1], cov[1][0], cov[1][1]]),
            *clamp,
        )
        .unwrap();
        let est = psi_monte_carlo(&p, 100_000, 50 + i as u64).unwrap();
        let oracle = expected_min_2d(*mu, *cov, *clamp);
        if i == 0 {
            standard = (est.value, est.stderr, oracle);
        }
        worst_2d = worst_2d.max((est.value - oracle).abs() / tol(est.stderr));
    }
    let inv_root_pi = -1.0 / std::f64::consts::PI.sqrt();
    let standard_ok = (standard.2 - inv_root_pi).abs() < 1e-8 && (standard.0 - inv_root_pi).abs() <= tol(standard.1);

    let mut bracket_misses = 0;
    for case in 0..1000 {
        let p = r.random_range(1..=6);
        let mu = DVector::from_fn(p, |_, _| r.random_range(-2.0..2.0));
        let a = DMatrix::from_fn(p, p, |_, _| r.random_range(-1.0..1.0));
        let sigma = &a * a.transpose() + DMatrix::identity(p, p) * 1e-3;
        let clamp = if r.random::<bool>() { Some(r.random_range(-2.0..2.0)) } else { None };
        let problem = GaussianMinProblem::new(mu, sigma, clamp).unwrap();
        let est = psi_monte_carlo(&problem, 2000, 2000 + case).unwrap();
        let (lo, hi) = psi_bounds(&problem);
        if est.value < lo - tol(est.stderr) || est.value > hi + tol(est.stderr) {
            bracket_misses += 1;
        }
    }
    check(
        worst_1d <= 1.0 && worst_2d <= 1.0 && standard_ok && bracket_misses == 0,
        format!(
            "1-d worst {worst_1d:.2} of 4 stderr; 2-d worst {worst_2d:.2} of 4 stderr; standard pair {:.6} ± {:.1e} (oracle {:.8}); {bracket_misses}/1000 outside bounds",
            standard.0, standard.1, standard.2
        ),
    )
}

/// Random smooth test function `Σ a_k sin(w_k · x + b_k)` with its gradient.
struct Waves(Vec<(f64, Vec<f64>, f64)>);

impl Waves {
    fn new(r: &mut rand_chacha::ChaCha8Rng, d: usize) -> Self {
        Waves(
            (0..3)
                .map(|_| {
                    (
                        r.random_range(-1.0..1.0),
                        (0..d).map(|_| r.random_range(-4.0..4.0)).collect(),
                        r.random_range(0.0..6.0),
                    )
                })
                .collect(),
        )
    }
    fn phase(w: &[f64], b: f64, x: &[f64]) -> f64 {
        w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.iter().map(|(a, w, b)| a * Self::phase(w, *b, x).sin()).sum()
    }
    fn grad(&self, x: &[f64], axis: usize) -> f64 {
        self.0.iter().map(|(a, w, b)| a * w[axis] * Self::phase(w, *b, x).cos()).sum()
    }
}

/// Condition number of the data covariance.  Comparisons at tolerance `tol`
/// are only judged when `cond · ε ≤ tol`: beyond that no double-precision
/// computation is determined to `tol`.
fn condition_number(field: &PosteriorField) -> f64 {
    let pts: Vec<GeneralizedPoint> = field.data().iter().map(|m| m.point.clone()).collect();
    let e = gram(field.prior(), &pts).unwrap().symmetric_eigen().eigenvalues;
    e.max() / e.min().max(f64::MIN_POSITIVE)
}

fn well_posed(field: &PosteriorField, tol: f64) -> bool {
    condition_number(field) * f64::EPSILON <= tol
}

fn c4_gradient_conditioning() -> Outcome {
    let mut r = rng(1004);
    let (mut value_err, mut grad_err) = (0.0f64, 0.0f64);
    let (mut judged, mut skipped, mut skipped_err) = (0, 0, 0.0f64);
    while judged < 100 {
        let d = r.random_range(1..=2);
        let prior = Prior::Single(random_spec(&mut r, d));
        let f = Waves::new(&mut r, d);
        let n = r.random_range(1..=5);
        let pts = spaced_points(&mut r, d, n);
        let mut data = Vec::new();
        for x in &pts {
            data.push(Measurement::new(x.clone(), OperatorTag::Identity, f.value(x)));
            for a in 0..d {
                data.push(Measurement::new(x.clone(), OperatorTag::PartialDerivative(a), f.grad(x, a)));
            }
        }
        let field = PosteriorField::condition(&unit_domain(d), &prior, data).unwrap();
        let mean = |y: &[f64]| field.mean(&GeneralizedPoint::value(y.to_vec())).unwrap();
        let sd = prior.variance_scale().sqrt();
        let (mut ve, mut ge) = (0.0f64, 0.0f64);
        for x in &pts {
            ve = ve.max(rel_err(mean(x), f.value(x), sd));
            for a in 0..d {
                let g = f.grad(x, a);
                ge = ge.max((central_diff(&mean, x, a, 1e-4) - g).abs() / g.abs().max(1.0));
            }
        }
        if !well_posed(&field, 1e-6) {
            skipped += 1;
            skipped_err = skipped_err.max(ve);
            continue;
        }
        judged += 1;
        value_err = value_err.max(ve);
        grad_err = grad_err.max(ge);
    }
    check(
        value_err < 1e-6 && grad_err < 1e-3,
        format!(
            "100 fields, max value rel err {value_err:.1e}, max gradient err {grad_err:.1e} (relative above 1); \
             {skipped} draws with cond·ε > 1e-6 not judged (their worst value err {skipped_err:.1e})"
        ),
    )
}

fn c5_schur_oracle() -> Outcome {
    let mut r = rng(1005);
    let (mut mean_err, mut cov_err) = (0.0f64, 0.0f64);
    let (mut judged, mut skipped, mut skipped_err) = (0, 0, 0.0f64);
    while judged < 200 {
        let d = r.random_range(1..=2);
        let prior = Prior::Single(random_spec(&mut r, d));
        let n = r.random_range(1..=8);
        let data: Vec<Measurement> = spaced_points(&mut r, d, n)
            .into_iter()
            .map(|x| {
                let op = random_tag(&mut r, d);
                Measurement::new(x, op, r.random_range(-2.0..2.0))
            })
            .collect();
        let field = PosteriorField::condition(&unit_domain(d), &prior, data).unwrap();
        let q: Vec<GeneralizedPoint> = (0..3).map(|_| gp(&random_location(&mut r, d), random_tag(&mut r, d))).collect();
        let pts: Vec<GeneralizedPoint> = field.data().iter().map(|m| m.point.clone()).collect();
        let k_dd = DMatrix::from_fn(n, n, |i, j| {
            kernel_eval(&prior, &pts[i], &pts[j]).unwrap() + if i == j { field.jitter() } else { 0.0 }
        });
        let k_sd = DMatrix::from_fn(q.len(), n, |i, j| kernel_eval(&prior, &q[i], &pts[j]).unwrap());
        let k_ss = DMatrix::from_fn(q.len(), q.len(), |i, j| kernel_eval(&prior, &q[i], &q[j]).unwrap());
        let resid = DVector::from_fn(n, |i, _| field.data()[i].value - prior_mean(&prior, &pts[i]).unwrap());
        let m0 = DVector::from_fn(q.len(), |i, _| prior_mean(&prior, &q[i]).unwrap());
        let (mean, cov) = schur_posterior(&k_dd, &k_sd, &k_ss, &resid, &m0);
        let (got_mean, got_cov) = (field.means(&q).unwrap(), field.cov(&q).unwrap());
        let sc = k_ss.diagonal().max().sqrt();
        let (mut me, mut ce) = (0.0f64, 0.0f64);
        for i in 0..q.len() {
            me = me.max((got_mean[i] - mean[i]).abs() / mean[i].abs().max(sc));
            for j in 0..q.len() {
                ce = ce.max((got_cov[(i, j)] - cov[(i, j)]).abs() / (sc * sc));
            }
        }
        if !well_posed(&field, 1e-8) {
            skipped += 1;
            skipped_err = skipped_err.max(me.max(ce));
            continue;
        }
        judged += 1;
        mean_err = mean_err.max(me);
        cov_err = cov_err.max(ce);
    }
    check(
        mean_err < 1e-8 && cov_err < 1e-8,
        format!(
            "200 mixed-operator cases, max rel err mean {mean_err:.1e}, covariance {cov_err:.1e}; \
             {skipped} draws with cond·ε > 1e-8 not judged (their worst err {skipped_err:.1e})"
        ),
    )
}

fn ego(problem: &str, domain: Domain, ls: Vec<f64>, mode: AcquisitionMode, seed: u64) -> RunLog {
    let prior = Prior::Single(KernelSpec::new(1.0, ls, 0.0).unwrap());
    let mut c = EgoConfig::new(domain, prior, 30, mode);
    c.seed = seed;
    c.refit_hyperparameters = true;
    let mut ev = BuiltinEvaluator::by_name(problem).unwrap();
    ego_run(&mut ev, &c, &mut |_| Ok(())).unwrap()
}

fn evaluations_to(log: &RunLog, target: f64) -> Option<usize> {
    log.iterations().find(|it| it.measured_min.is_some_and(|m| m <= target)).map(|it| it.evaluations)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn c6_ego_end_to_end() -> Outcome {
    let quad = builtin("quadratic").unwrap();
    let (_, quad_min) = grid_argmin(|x| quad.value(&[x]), -2.0, 2.0, 40_001);
    let branin = builtin("branin").unwrap();
    let n = 2001;
    let (mut bmin, mut bmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            let v = branin.value(&[-5.0 + 15.0 * i as f64 / (n - 1) as f64, 15.0 * j as f64 / (n - 1) as f64]);
            bmin = bmin.min(v);
            bmax = bmax.max(v);
        }
    }
    let target = quad_min + 1e-2;
    let line = || Domain::new(vec![-2.0], vec![2.0]).unwrap();
    let (mut quad_worst, mut branin_worst) = (0.0f64, 0.0f64);
    let (mut ei_evals, mut grad_evals) = (Vec::new(), Vec::new());
    for seed in 0..10 {
        let a = ego("quadratic", line(), vec![1.0], AcquisitionMode::Ei, seed);
        let g = ego("quadratic", line(), vec![1.0], AcquisitionMode::GradientRei, seed);
        let b = ego(
            "branin",
            Domain::new(vec![-5.0, 0.0], vec![10.0, 15.0]).unwrap(),
            vec![3.0, 3.0],
            AcquisitionMode::Ei,
            seed,
        );
        quad_worst = quad_worst.max(a.summary().unwrap().best_value - quad_min);
        branin_worst = branin_worst.max((b.summary().unwrap().best_value - bmin) / (bmax - bmin));
        ei_evals.push(evaluations_to(&a, target).map_or(f64::INFINITY, |e| e as f64));
        grad_evals.push(evaluations_to(&g, target).map_or(f64::INFINITY, |e| e as f64));
    }
    let (me, mg) = (median(ei_evals), median(grad_evals));
    check(
        quad_worst <= 1e-2 && branin_worst <= 5e-2 && mg <= 2.0 / 3.0 * me,
        format!(
            "10 seeds: quadratic gap {quad_worst:.1e}, Branin gap {branin_worst:.1e} of range; median evaluations to target gradient {mg} vs EI {me}"
        ),
    )
}

fn averaged(x: f64) -> f64 {
    let f = builtin("two_wells").unwrap();
    normal_expectation(|y| f.value(&[y]), x, rei_cli::demo::ROBUST_VARIANCE.sqrt(), 120)
}

fn c7_scenarios() -> Outcome {
    let region = rei_cli::demo::estate();
    let mut inside = 0;
    let mut duplicates = 0;
    let mut wins = 0;
    for seed in 0..10 {
        let drill = run_scenario(Scenario::Drilling, seed, None, None).map_err(|e| e.to_string())?;
        let mut proposed: Vec<Vec<f64>> =
            drill.log.iterations().flat_map(|it| it.requests.iter().map(|q| q.location.clone())).collect();
        inside += proposed.iter().filter(|x| region.contains(x)).count();

        let noisy = run_scenario(Scenario::Noisy, seed, None, None).map_err(|e| e.to_string())?;
        proposed = noisy.log.iterations().flat_map(|it| it.requests.iter().map(|q| q.location.clone())).collect();
        proposed.sort_by(|a, b| a[0].total_cmp(&b[0]));
        duplicates += proposed.windows(2).filter(|w| w[0] == w[1]).count();

        let robust = run_scenario(Scenario::Robust, seed, None, None).map_err(|e| e.to_string())?;
        let base = robust.baseline.as_ref().expect("robust runs carry an EI baseline");
        if averaged(robust_choice(&robust.log)) < averaged(ei_choice(base)) {
            wins += 1;
        }
    }
    check(
        inside == 0 && duplicates == 0 && wins >= 8,
        format!("10 seeds: {inside} drilling proposals inside the estate, {duplicates} repeated noisy locations, robust wins {wins}/10"),
    )
}

fn c8_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut checked = Vec::new();
    for name in ["quadratic_ei", "drilling", "fidelity", "noisy", "robust"] {
        let cfg = RunConfig::load(&root.join(format!("{name}.toml"))).map_err(|e| e.to_string())?;
        let mut texts = Vec::new();
        for k in 0..2 {
            let path = dir.path().join(format!("{name}-{k}.jsonl"));
            rei_cli::run(&cfg, Some(&path)).map_err(|e| e.to_string())?;
            texts.push(std::fs::read_to_string(&path).map_err(|e| e.to_string())?);
        }
        if without_timing(&texts[0]) != without_timing(&texts[1]) || !texts[0].contains("\"timing\"") {
            return Err(format!("{name}: logs differ outside timing"));
        }
        checked.push(name);
    }
    Ok(format!("byte-identical logs without timing for {}", checked.join(", ")))
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "REI of a single point equals EI",
            limit: Duration::from_secs(10),
            run: c1_identity_rei_is_ei,
        },
        Criterion { name: "kernel operator algebra", limit: Duration::from_secs(30), run: c2_kernel_algebra },
        Criterion { name: "Gaussian minimum estimation", limit: Duration::from_secs(60), run: c3_gaussian_min },
        Criterion {
            name: "gradient-enhanced conditioning",
            limit: Duration::from_secs(10),
            run: c4_gradient_conditioning,
        },
        Criterion {
            name: "posterior equals dense Schur complement",
            limit: Duration::from_secs(10),
            run: c5_schur_oracle,
        },
        Criterion { name: "EGO end to end", limit: Duration::from_secs(300), run: c6_ego_end_to_end },
        Criterion { name: "scenario constraints", limit: Duration::from_secs(300), run: c7_scenarios },
        Criterion { name: "determinism", limit: Duration::from_secs(60), run: c8_determinism },
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {:?} limit", c.limit)),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "{} {}. {}: {} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            c.name,
            detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
