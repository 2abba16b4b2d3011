//! Seeded desk-scale scenarios with plot data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;

use rei_core::acquisition::{build_noisy_spec, rei, AcquisitionSpec, Fidelity, RobustKind};
use rei_core::kernel::{Component, ComponentSpec};
use rei_core::optimizer::{ego_run, working_prior, AcquisitionMode, BoxRegion, EgoConfig, LogRecord, Phase, RunLog};
use rei_core::problems::{BuiltinEvaluator, TwoWells};
use rei_core::search::derive_seed;
use rei_core::{CovMatrix, Domain, FminContext, GeneralizedPoint, KernelSpec, OperatorTag, PosteriorField, Prior};

use crate::runlog::LogWriter;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Find the richest spot inside the estate while drilling only outside it.
    Drilling,
    /// Three simultaneous measurements per round on Branin.
    Batch,
    /// Value and gradient per measurement on Branin.
    Gradient,
    /// The objective is only seen through an additive contamination field.
    Noisy,
    /// Cheap biased measurements alongside expensive exact ones.
    Fidelity,
    /// Lowest average under input perturbation; compared with plain EI.
    Robust,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Drilling,
        Scenario::Batch,
        Scenario::Gradient,
        Scenario::Noisy,
        Scenario::Fidelity,
        Scenario::Robust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Drilling => "drilling",
            Scenario::Batch => "batch",
            Scenario::Gradient => "gradient",
            Scenario::Noisy => "noisy",
            Scenario::Fidelity => "fidelity",
            Scenario::Robust => "robust",
        }
    }
}

/// The estate: responses live here, measurements may not.
pub fn estate() -> BoxRegion {
    BoxRegion { lower: vec![0.35, 0.35], upper: vec![0.65, 0.65] }
}

/// Perturbation variance of the robust scenario.
pub const ROBUST_VARIANCE: f64 = 0.16;

fn single(variance: f64, ls: Vec<f64>) -> Prior {
    Prior::Single(KernelSpec::new(variance, ls, 0.0).expect("static kernel"))
}

fn components(parts: &[(&str, f64, f64)]) -> Prior {
    let comps = parts
        .iter()
        .map(|(id, v, l)| Component {
            id: id.to_string(),
            kernel: KernelSpec::new(*v, vec![*l], 0.0).expect("static kernel"),
        })
        .collect();
    Prior::Components(ComponentSpec::new(comps).expect("static components"))
}

fn domain(lower: &[f64], upper: &[f64]) -> Domain {
    Domain::new(lower.to_vec(), upper.to_vec()).expect("static domain")
}

/// Optimizer configuration and builtin problem of a scenario.
pub fn scenario_config(s: Scenario, seed: u64) -> (EgoConfig, &'static str) {
    let branin = || domain(&[-5.0, 0.0], &[10.0, 15.0]);
    let (mut c, problem) = match s {
        Scenario::Drilling => (
            EgoConfig::new(
                domain(&[0.0, 0.0], &[1.0, 1.0]),
                single(0.5, vec![0.15, 0.15]),
                20,
                AcquisitionMode::RegionRei { region: estate() },
            ),
            "mineral",
        ),
        Scenario::Batch => (
            EgoConfig::new(branin(), single(1.0, vec![3.0, 3.0]), 30, AcquisitionMode::BatchRei { batch_size: 3 }),
            "branin",
        ),
        Scenario::Gradient => {
            (EgoConfig::new(branin(), single(1.0, vec![3.0, 3.0]), 12, AcquisitionMode::GradientRei), "branin")
        }
        Scenario::Noisy => (
            EgoConfig::new(
                domain(&[0.0], &[1.0]),
                components(&[("Z", 0.3, 0.1), ("eps", 0.0032, 0.02)]),
                20,
                AcquisitionMode::NoisyRei { objective: "Z".into(), noise: "eps".into() },
            ),
            "noisy_mineral",
        ),
        Scenario::Fidelity => {
            let mode = AcquisitionMode::FidelityRei {
                hi: OperatorTag::component("Z"),
                lo: OperatorTag::sum(vec![OperatorTag::component("Z"), OperatorTag::component("D")])
                    .expect("two terms"),
                hi_wire: "component:Z".into(),
                lo_wire: "component:W".into(),
                responses: 1,
                cost_hi: 1.0,
                cost_lo: 0.1,
            };
            (
                EgoConfig::new(domain(&[0.0], &[1.0]), components(&[("Z", 40.0, 0.12), ("D", 4.0, 0.6)]), 20, mode),
                "forrester",
            )
        }
        Scenario::Robust => (
            EgoConfig::new(
                domain(&[0.0], &[4.0]),
                single(1.0, vec![0.4]),
                25,
                AcquisitionMode::RobustRei {
                    cov: CovMatrix::diagonal(&[ROBUST_VARIANCE]).expect("positive variance"),
                    kind: RobustKind::Convolution,
                },
            ),
            "two_wells",
        ),
    };
    c.seed = seed;
    c.refit_hyperparameters = matches!(c.prior, Prior::Single(_));
    (c, problem)
}

/// The same settings with plain EI, for comparison with the robust run.
pub fn robust_baseline(seed: u64) -> (EgoConfig, &'static str) {
    let (mut c, p) = scenario_config(Scenario::Robust, seed);
    c.mode = AcquisitionMode::Ei;
    (c, p)
}

pub struct DemoReport {
    pub scenario: Scenario,
    pub config: EgoConfig,
    pub log: RunLog,
    /// Plain EI run of the robust scenario.
    pub baseline: Option<RunLog>,
    pub files: Vec<PathBuf>,
    /// Named scenario properties and whether they held.
    pub checks: Vec<(String, bool)>,
    pub notes: Vec<String>,
}

pub fn run_logged(config: &EgoConfig, problem: &str, log_path: Option<&Path>) -> Result<RunLog, CliError> {
    let mut evaluator = BuiltinEvaluator::by_name(problem)?;
    let mut writer = log_path.map(LogWriter::create).transpose()?;
    let mut sink = |r: &LogRecord| -> rei_core::Result<()> {
        if let Some(w) = writer.as_mut() {
            w.write(r).map_err(|e| rei_core::Error::InvalidConfig(format!("cannot write run log: {e}")))?;
        }
        Ok(())
    };
    Ok(ego_run(&mut evaluator, config, &mut sink)?)
}

/// Runs a scenario; with `out`, writes its log and plot data there.
pub fn run_scenario(
    s: Scenario,
    seed: u64,
    samples: Option<usize>,
    out: Option<&Path>,
) -> Result<DemoReport, CliError> {
    let (mut config, problem) = scenario_config(s, seed);
    if let Some(n) = samples {
        config.mc_samples = n;
    }
    let path = |suffix: &str| out.map(|d| d.join(format!("{}{suffix}", s.name())));
    let log = run_logged(&config, problem, path(".jsonl").as_deref())?;
    let mut report = DemoReport {
        scenario: s,
        config: config.clone(),
        log,
        baseline: None,
        files: path(".jsonl").into_iter().collect(),
        checks: Vec::new(),
        notes: Vec::new(),
    };
    if s == Scenario::Robust {
        let (mut base, _) = robust_baseline(seed);
        base.mc_samples = config.mc_samples;
        report.baseline = Some(run_logged(&base, problem, path("_ei.jsonl").as_deref())?);
        report.files.extend(path("_ei.jsonl"));
    }
    report.checks = checks(&report);
    report.notes = notes(&report);
    if let Some(dir) = out {
        report.files.extend(write_plot_data(&report, dir)?);
    }
    Ok(report)
}

fn scaled_gap(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).abs()).fold(0.0, f64::max)
}

fn checks(r: &DemoReport) -> Vec<(String, bool)> {
    let log = &r.log;
    let measured = log.measurements();
    match r.scenario {
        Scenario::Drilling => {
            let a = estate();
            let inside = measured.iter().filter(|m| a.contains(&m.point.location)).count();
            vec![(format!("measurements inside the estate: {inside}"), inside == 0)]
        }
        Scenario::Batch => {
            let ok = log.iterations().filter(|it| it.phase == Phase::Acquisition).all(|it| {
                let ls = it.hyperparameters.objective_lengthscales();
                let k = it.requests.len();
                (0..k)
                    .all(|i| (0..i).all(|j| scaled_gap(&it.requests[i].location, &it.requests[j].location, ls) > 1e-6))
            });
            vec![("batch points pairwise distinct".into(), ok)]
        }
        Scenario::Gradient => {
            let d = r.config.domain.dim();
            let ok = log.iterations().all(|it| it.requests.iter().all(|q| q.operators.len() == d + 1));
            vec![(format!("every request carries {} operators", d + 1), ok)]
        }
        Scenario::Noisy => {
            let mut locs: Vec<&[f64]> = measured.iter().map(|m| m.point.location.as_slice()).collect();
            locs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let dup = locs.windows(2).any(|w| w[0] == w[1]);
            vec![("no location measured twice".into(), !dup)]
        }
        Scenario::Fidelity => {
            let lows = log.iterations().filter(|it| it.fidelity == Some(Fidelity::Low)).count();
            vec![(format!("low-fidelity rounds: {lows}"), true)]
        }
        Scenario::Robust => {
            let robust = robust_choice(log);
            let ei = ei_choice(r.baseline.as_ref().expect("baseline run"));
            let (a, b) = (TwoWells::smoothed(robust, ROBUST_VARIANCE), TwoWells::smoothed(ei, ROBUST_VARIANCE));
            vec![(format!("averaged objective robust {a:.4} vs EI {b:.4}"), a <= b)]
        }
    }
}

/// Location recommended by a robust run.
pub fn robust_choice(log: &RunLog) -> f64 {
    log.summary().expect("finished run").recommended.location[0]
}

/// Best measured location of a plain EI run.
pub fn ei_choice(log: &RunLog) -> f64 {
    log.summary().expect("finished run").best_location[0]
}

fn notes(r: &DemoReport) -> Vec<String> {
    let s = r.log.summary().expect("finished run");
    vec![
        format!("evaluations {} cost {:.2}", s.evaluations, s.total_cost),
        format!("best measured {:.6} at {:?}", s.best_value, s.best_location),
        format!("recommended {:.6} at {:?}", s.recommended.value, s.recommended.location),
    ]
}

fn final_field(r: &DemoReport) -> Result<PosteriorField, CliError> {
    let data = r.log.measurements();
    let prior = working_prior(&r.config, &data);
    Ok(PosteriorField::condition(&r.config.domain, &prior, data)?)
}

fn grid(domain: &Domain) -> Vec<Vec<f64>> {
    let n = if domain.dim() == 1 { 201 } else { 41 };
    let axis = |a: usize| -> Vec<f64> {
        (0..n).map(|i| domain.lower()[a] + domain.width(a) * i as f64 / (n - 1) as f64).collect()
    };
    match domain.dim() {
        1 => axis(0).into_iter().map(|x| vec![x]).collect(),
        _ => {
            let (xs, ys) = (axis(0), axis(1));
            xs.iter().flat_map(|x| ys.iter().map(move |y| vec![*x, *y])).collect()
        }
    }
}

/// Single-response acquisition specs at `x`, one per plotted column.
fn surface_specs(mode: &AcquisitionMode, prior: &Prior, x: &[f64], fmin: &FminContext) -> Vec<Option<AcquisitionSpec>> {
    let v = |p: &[f64]| GeneralizedPoint::new(p.to_vec(), prior.objective_tag());
    let same = |op: OperatorTag| {
        Some(AcquisitionSpec::rei(
            vec![GeneralizedPoint::new(x.to_vec(), op.clone())],
            vec![GeneralizedPoint::new(x.to_vec(), op)],
            fmin.clone(),
        ))
    };
    match mode {
        AcquisitionMode::Ei | AcquisitionMode::BatchRei { .. } => vec![same(prior.objective_tag())],
        AcquisitionMode::GradientRei => {
            let mut eta = vec![v(x)];
            eta.extend((0..x.len()).map(|a| GeneralizedPoint::new(x.to_vec(), OperatorTag::PartialDerivative(a))));
            vec![Some(AcquisitionSpec::rei(vec![v(x)], eta, fmin.clone()))]
        }
        AcquisitionMode::NoisyRei { objective, noise } => {
            vec![build_noisy_spec(x, objective, noise, fmin.clone()).ok()]
        }
        AcquisitionMode::FidelityRei { hi, lo, .. } => {
            let z = vec![GeneralizedPoint::new(x.to_vec(), hi.clone())];
            vec![
                Some(AcquisitionSpec::rei(
                    z.clone(),
                    vec![GeneralizedPoint::new(x.to_vec(), hi.clone())],
                    fmin.clone(),
                )),
                Some(AcquisitionSpec::rei(z, vec![GeneralizedPoint::new(x.to_vec(), lo.clone())], fmin.clone())),
            ]
        }
        AcquisitionMode::RobustRei { cov, kind } => {
            vec![Some(AcquisitionSpec::rei(
                vec![GeneralizedPoint::new(x.to_vec(), kind.tag(cov))],
                vec![v(x)],
                fmin.clone(),
            ))]
        }
        AcquisitionMode::RegionRei { region } => {
            if region.contains(x) {
                vec![None]
            } else {
                vec![Some(AcquisitionSpec::rei(vec![v(&fmin.location)], vec![v(x)], fmin.clone()))]
            }
        }
    }
}

fn coord_header(d: usize) -> String {
    (0..d).map(|a| format!("x{a}")).collect::<Vec<_>>().join("\t")
}

fn fmt_row(x: &[f64], rest: &[f64]) -> String {
    x.iter().chain(rest).map(|v| format!("{v}")).collect::<Vec<_>>().join("\t")
}

fn write_file(path: PathBuf, body: &str) -> Result<PathBuf, CliError> {
    std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn write_plot_data(r: &DemoReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let name = r.scenario.name();
    let field = final_field(r)?;
    let prior = field.prior().clone();
    let mode = &r.config.mode;
    let fmin = mode.fmin(&field, r.config.fmin_method)?;
    let d = r.config.domain.dim();
    let pts = grid(&r.config.domain);
    let mut files = Vec::new();

    let mut post = format!("{}\tmean\tvariance\n", coord_header(d));
    for x in &pts {
        let p = GeneralizedPoint::new(x.clone(), prior.objective_tag());
        writeln!(post, "{}", fmt_row(x, &[field.mean(&p)?, field.variance(&p)?])).expect("string write");
    }
    files.push(write_file(dir.join(format!("{name}_posterior.tsv")), &post)?);

    let columns = match mode {
        AcquisitionMode::FidelityRei { .. } => "rei_high\trei_low",
        _ => "rei",
    };
    let mut surf = format!("{}\t{columns}\n", coord_header(d));
    for (i, x) in pts.iter().enumerate() {
        let values: Vec<f64> = surface_specs(mode, &prior, x, &fmin)
            .into_iter()
            .map(|spec| {
                spec.and_then(|s| rei(&field, &s, r.config.mc_samples, derive_seed(r.config.seed, i as u64)).ok())
                    .map_or(f64::NAN, |e| e.value)
            })
            .collect();
        writeln!(surf, "{}", fmt_row(x, &values)).expect("string write");
    }
    files.push(write_file(dir.join(format!("{name}_rei.tsv")), &surf)?);

    let mut traj = String::from(
        "iteration\tphase\tevaluations\ttotal_cost\tfmin\tmeasured_min\trei_value\trei_stderr\tfidelity\n",
    );
    let opt = |v: Option<f64>| v.map_or("NaN".to_string(), |x| format!("{x}"));
    for it in r.log.iterations() {
        writeln!(
            traj,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            it.iteration,
            match it.phase {
                Phase::Design => "design",
                Phase::Acquisition => "acquisition",
            },
            it.evaluations,
            it.total_cost,
            opt(it.fmin.as_ref().map(|f| f.value)),
            opt(it.measured_min),
            opt(it.rei_value),
            opt(it.rei_stderr),
            match it.fidelity {
                Some(Fidelity::High) => "high",
                Some(Fidelity::Low) => "low",
                None => "-",
            }
        )
        .expect("string write");
    }
    files.push(write_file(dir.join(format!("{name}_trajectory.tsv")), &traj)?);

    if let Some(base) = &r.baseline {
        let (a, b) = (robust_choice(&r.log), ei_choice(base));
        let mut cmp = String::from("run\tx\tobjective\taveraged_objective\n");
        for (label, x) in [("robust", a), ("ei", b)] {
            let raw = rei_core::problems::builtin("two_wells").expect("builtin").value(&[x]);
            writeln!(cmp, "{label}\t{x}\t{raw}\t{}", TwoWells::smoothed(x, ROBUST_VARIANCE)).expect("string write");
        }
        files.push(write_file(dir.join(format!("{name}_comparison.tsv")), &cmp)?);
    }
    Ok(files)
}
