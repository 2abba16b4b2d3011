//! Python bindings: domains, priors, operators, posterior fields, the REI
//! estimators and the EGO loop with a Python callable as evaluator.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rei_core::acquisition::{self, AcquisitionSpec, GaussianMinProblem, PsiEstimate};
use rei_core::kernel::{Component, ComponentSpec};
use rei_core::optimizer::{self, EgoConfig, LogRecord};
use rei_core::{
    CovMatrix, Evaluator, EvaluatorRequest, EvaluatorResponse, FminContext, FminMethod, GeneralizedPoint, KernelSpec,
    Measurement, OperatorTag,
};

fn err(e: rei_core::Error) -> PyErr {
    match e {
        rei_core::Error::EvaluatorFailure { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cov(rows: Vec<Vec<f64>>) -> PyResult<CovMatrix> {
    CovMatrix::from_rows(&rows).map_err(err)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[pyclass(name = "Domain", frozen, from_py_object)]
#[derive(Clone)]
struct PyDomain(rei_core::Domain);

#[pymethods]
impl PyDomain {
    #[new]
    fn new(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        rei_core::Domain::new(lower, upper).map(Self).map_err(err)
    }

    #[getter]
    fn lower(&self) -> Vec<f64> {
        self.0.lower().to_vec()
    }

    #[getter]
    fn upper(&self) -> Vec<f64> {
        self.0.upper().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn contains(&self, x: Vec<f64>) -> bool {
        self.0.contains(&x)
    }

    fn __repr__(&self) -> String {
        format!("Domain(lower={:?}, upper={:?})", self.0.lower(), self.0.upper())
    }
}

/// Squared-exponential prior, single field or independent components.
#[pyclass(name = "Prior", frozen, from_py_object)]
#[derive(Clone)]
struct PyPrior(rei_core::Prior);

#[pymethods]
impl PyPrior {
    #[new]
    #[pyo3(signature = (variance, lengthscales, mean=0.0))]
    fn new(variance: f64, lengthscales: Vec<f64>, mean: f64) -> PyResult<Self> {
        let spec = KernelSpec::new(variance, lengthscales, mean).map_err(err)?;
        Ok(Self(rei_core::Prior::Single(spec)))
    }

    /// `components` is a list of `(id, variance, lengthscales, mean)`; the
    /// first one is the objective.
    #[staticmethod]
    fn components(components: Vec<(String, f64, Vec<f64>, f64)>) -> PyResult<Self> {
        let list = components
            .into_iter()
            .map(|(id, v, l, m)| Ok(Component { id, kernel: KernelSpec::new(v, l, m).map_err(err)? }))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self(rei_core::Prior::Components(ComponentSpec::new(list).map_err(err)?)))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Self).map_err(json_err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("prior serializes")
    }

    fn __repr__(&self) -> String {
        format!("Prior({})", self.to_json())
    }
}

#[pyclass(name = "Operator", frozen, from_py_object)]
#[derive(Clone)]
struct PyOperator(OperatorTag);

#[pymethods]
impl PyOperator {
    #[staticmethod]
    fn value() -> Self {
        Self(OperatorTag::Identity)
    }

    #[staticmethod]
    fn grad(axis: usize) -> Self {
        Self(OperatorTag::PartialDerivative(axis))
    }

    #[staticmethod]
    fn convolution(cov_rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self(OperatorTag::Convolution(cov(cov_rows)?)))
    }

    #[staticmethod]
    fn curvature(cov_rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self(OperatorTag::CurvaturePenalty(cov(cov_rows)?)))
    }

    #[staticmethod]
    fn component(id: String) -> Self {
        Self(OperatorTag::Component(id))
    }

    #[staticmethod]
    fn sum(terms: Vec<PyOperator>) -> PyResult<Self> {
        OperatorTag::sum(terms.into_iter().map(|t| t.0).collect()).map(Self).map_err(err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("operator serializes")
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Operator({})", self.to_json())
    }
}

fn point(x: Vec<f64>, op: Option<&PyOperator>) -> GeneralizedPoint {
    GeneralizedPoint::new(x, op.map_or(OperatorTag::Identity, |o| o.0.clone()))
}

fn points(pts: Vec<(Vec<f64>, PyOperator)>) -> Vec<GeneralizedPoint> {
    pts.into_iter().map(|(x, op)| GeneralizedPoint::new(x, op.0)).collect()
}

/// Prior conditioned on `(location, operator, value)` measurements.
#[pyclass(name = "PosteriorField", frozen)]
struct PyField(rei_core::PosteriorField);

#[pymethods]
impl PyField {
    #[new]
    fn new(domain: &PyDomain, prior: &PyPrior, data: Vec<(Vec<f64>, PyOperator, f64)>) -> PyResult<Self> {
        let data = data.into_iter().map(|(x, op, v)| Measurement::new(x, op.0, v)).collect();
        rei_core::PosteriorField::condition(&domain.0, &prior.0, data).map(Self).map_err(err)
    }

    #[pyo3(signature = (x, op=None))]
    fn mean(&self, x: Vec<f64>, op: Option<&PyOperator>) -> PyResult<f64> {
        self.0.mean(&point(x, op)).map_err(err)
    }

    #[pyo3(signature = (x, op=None))]
    fn variance(&self, x: Vec<f64>, op: Option<&PyOperator>) -> PyResult<f64> {
        self.0.variance(&point(x, op)).map_err(err)
    }

    /// Joint mean vector and covariance rows at `(location, operator)` pairs.
    fn joint(&self, pts: Vec<(Vec<f64>, PyOperator)>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let pts = points(pts);
        let m = self.0.means(&pts).map_err(err)?;
        let c = self.0.cov(&pts).map_err(err)?;
        Ok((m.iter().copied().collect(), rows(&c)))
    }

    /// Minimum of the posterior mean as `(value, location)`.
    fn fmin(&self) -> PyResult<(f64, Vec<f64>)> {
        let c = self.0.find_fmin(FminMethod::PosteriorMeanMin).map_err(err)?;
        Ok((c.value, c.location))
    }

    #[getter]
    fn jitter(&self) -> f64 {
        self.0.jitter()
    }

    #[getter]
    fn n_data(&self) -> usize {
        self.0.data().len()
    }
}

#[pyclass(name = "PsiEstimate", frozen, get_all)]
struct PyPsi {
    value: f64,
    stderr: f64,
    n_samples: usize,
    lower_bound: f64,
    upper_bound: f64,
}

#[pymethods]
impl PyPsi {
    fn __repr__(&self) -> String {
        format!(
            "PsiEstimate(value={}, stderr={}, n_samples={}, bounds=[{}, {}])",
            self.value, self.stderr, self.n_samples, self.lower_bound, self.upper_bound
        )
    }
}

impl From<PsiEstimate> for PyPsi {
    fn from(e: PsiEstimate) -> Self {
        Self {
            value: e.value,
            stderr: e.stderr,
            n_samples: e.n_samples,
            lower_bound: e.lower_bound,
            upper_bound: e.upper_bound,
        }
    }
}

/// `E min{clamp, X_1, .., X_p}` for `X ~ N(mu, sigma)`.
#[pyfunction]
#[pyo3(signature = (mu, sigma, clamp=None, samples=10_000, seed=0))]
fn psi(mu: Vec<f64>, sigma: Vec<Vec<f64>>, clamp: Option<f64>, samples: usize, seed: u64) -> PyResult<PyPsi> {
    let p = mu.len();
    if sigma.len() != p || sigma.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err(format!("sigma must be {p}x{p}")));
    }
    let s = DMatrix::from_fn(p, p, |i, j| sigma[i][j]);
    let problem = GaussianMinProblem::new(DVector::from_vec(mu), s, clamp).map_err(err)?;
    let est = match acquisition::psi_exact_1d(&problem) {
        Some(e) => e,
        None => acquisition::psi_monte_carlo(&problem, samples, seed).map_err(err)?,
    };
    Ok(est.into())
}

/// Expected improvement of a value measurement at `x` below `fmin`.
#[pyfunction]
fn ei(field: &PyField, x: Vec<f64>, fmin: f64) -> PyResult<f64> {
    acquisition::ei(&field.0, &GeneralizedPoint::value(x), fmin).map_err(err)
}

/// REI of measuring `zeta` judged by the responses `eta`, relative to the
/// incumbent `(fmin, location)`.
#[pyfunction(name = "rei")]
#[pyo3(signature = (field, zeta, eta, fmin, samples=10_000, seed=0))]
fn rei_value(
    field: &PyField,
    zeta: Vec<(Vec<f64>, PyOperator)>,
    eta: Vec<(Vec<f64>, PyOperator)>,
    fmin: (f64, Vec<f64>),
    samples: usize,
    seed: u64,
) -> PyResult<PyPsi> {
    let ctx = FminContext { value: fmin.0, location: fmin.1, method: FminMethod::PosteriorMeanMin };
    let spec = AcquisitionSpec::rei(points(zeta), points(eta), ctx);
    acquisition::rei(&field.0, &spec, samples, seed).map(Into::into).map_err(err)
}

fn config(json: &str) -> PyResult<EgoConfig> {
    let c: EgoConfig = serde_json::from_str(json).map_err(json_err)?;
    c.validate().map_err(err)?;
    Ok(c)
}

type Request = (u64, Vec<f64>, Vec<String>);

/// Next evaluation round for an optimizer config (JSON) and data, as
/// `(id, location, operators)` requests.
#[pyfunction]
fn suggest(config_json: &str, data: Vec<(Vec<f64>, PyOperator, f64)>) -> PyResult<Vec<Request>> {
    let c = config(config_json)?;
    let data: Vec<Measurement> = data.into_iter().map(|(x, op, v)| Measurement::new(x, op.0, v)).collect();
    let p = optimizer::suggest(&c, &data).map_err(err)?;
    Ok(p.requests.into_iter().map(|q| (q.id, q.location, q.operators)).collect())
}

struct Callback<'py> {
    py: Python<'py>,
    f: Bound<'py, PyAny>,
}

impl Evaluator for Callback<'_> {
    fn evaluate(&mut self, requests: &[EvaluatorRequest]) -> rei_core::Result<Vec<EvaluatorResponse>> {
        let fail = |message: String| rei_core::Error::EvaluatorFailure { attempts: 1, message };
        let mut out = Vec::with_capacity(requests.len());
        for q in requests {
            let r = self
                .f
                .call1((q.location.clone(), q.operators.clone()))
                .and_then(|v| v.extract::<Vec<f64>>())
                .map_err(|e| fail(format!("request {}: {}", q.id, e.value(self.py))))?;
            out.push(EvaluatorResponse { id: q.id, values: r, cost: None, error: None });
        }
        Ok(out)
    }
}

/// Runs the optimizer.  `evaluator(location, operators)` returns one value
/// per operator descriptor; the result is the run log as JSON lines.
#[pyfunction]
fn run(py: Python<'_>, config_json: &str, evaluator: Bound<'_, PyAny>) -> PyResult<String> {
    let c = config(config_json)?;
    let mut cb = Callback { py, f: evaluator };
    let log = optimizer::ego_run(&mut cb, &c, &mut |_| Ok(())).map_err(err)?;
    Ok(log.records.iter().map(|r: &LogRecord| serde_json::to_string(r).expect("record serializes") + "\n").collect())
}

/// Runs the optimizer against a builtin objective.
#[pyfunction]
fn run_builtin(config_json: &str, objective: &str) -> PyResult<String> {
    let c = config(config_json)?;
    let mut e = rei_core::problems::BuiltinEvaluator::by_name(objective).map_err(err)?;
    let log = optimizer::ego_run(&mut e, &c, &mut |_| Ok(())).map_err(err)?;
    Ok(log.records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect())
}

#[pymodule]
fn rei(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDomain>()?;
    m.add_class::<PyPrior>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyPsi>()?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(ei, m)?)?;
    m.add_function(wrap_pyfunction!(rei_value, m)?)?;
    m.add_function(wrap_pyfunction!(suggest, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_builtin, m)?)?;
    Ok(())
}
