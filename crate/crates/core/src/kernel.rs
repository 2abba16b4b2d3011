//! Design domain, prior covariance family and the operator algebra on
//! generalized points.
//!
//! The base covariance is the squared-exponential kernel
//! `K(x, y) = σ² exp(-½ Σ_a (x_a - y_a)² / ℓ_a²)`.  A generalized point
//! `(x, P)` observes `(P f)(x)` for a linear operator `P`, and
//! `K(x, P; y, S) = P_x S_y K(x, y)`.  Every supported operator pair has a
//! closed form: Gaussian convolutions inflate the lengthscale metric, and
//! derivatives (including the curvature penalty) reduce to Hermite-type
//! polynomials of the scaled offset.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Axis-aligned hyperrectangle `[lower, upper]` housing the design variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("domain must have at least one axis".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DomainMismatch { expected: lower.len(), found: upper.len() });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidDomain(format!("axis {i}: need lower < upper, got [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Componentwise containment, with a relative slack of `1e-12` per axis.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, &v)| {
                let slack = 1e-12 * self.width(i);
                v >= self.lower[i] - slack && v <= self.upper[i] + slack
            })
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DomainMismatch { expected: self.dim(), found: x.len() });
        }
        if !self.contains(x) {
            return Err(Error::OutOfDomain { location: x.to_vec() });
        }
        Ok(())
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Maps a point of the unit cube onto the domain.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(i, &t)| self.lower[i] + t * self.width(i)).collect()
    }
}

/// Symmetric positive semi-definite `d × d` matrix attached to the
/// convolution and curvature-penalty operators.
///
/// Serialized as a list of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidOperator(format!("covariance must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..m.nrows() {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidOperator("covariance must be symmetric".into()));
                }
            }
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidOperator("covariance must be finite".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        if m.nrows() > 0 {
            let min_eig = sym.clone().symmetric_eigen().eigenvalues.min();
            if min_eig < -1e-12 * scale {
                return Err(Error::InvalidOperator(format!(
                    "covariance must be positive semi-definite (min eigenvalue {min_eig})"
                )));
            }
        }
        Ok(Self(sym))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidOperator("covariance rows must form a square matrix".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.0.nrows()).map(|i| (0..self.0.ncols()).map(|j| self.0[(i, j)]).collect()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * factor)
    }
}

impl Serialize for CovMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CovMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        CovMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Linear operator attached to a generalized point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorTag {
    Identity,
    PartialDerivative(usize),
    /// Expectation under a centred Gaussian perturbation with this covariance.
    Convolution(CovMatrix),
    /// `h + ½ Σ_ij Σ_ij ∂²h/∂x_i∂x_j`.
    CurvaturePenalty(CovMatrix),
    Component(String),
    Sum(Vec<OperatorTag>),
}

impl OperatorTag {
    /// Builds a flattened sum; nested sums are spliced in place.
    pub fn sum(terms: Vec<OperatorTag>) -> Result<Self> {
        let mut flat = Vec::with_capacity(terms.len());
        for t in terms {
            match t {
                OperatorTag::Sum(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.is_empty() {
            return Err(Error::InvalidOperator("sum of zero operators".into()));
        }
        Ok(OperatorTag::Sum(flat))
    }

    pub fn component(id: impl Into<String>) -> Self {
        OperatorTag::Component(id.into())
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, OperatorTag::Identity)
    }
}

/// A location paired with the operator that is observed (or predicted) there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedPoint {
    pub location: Vec<f64>,
    pub op: OperatorTag,
}

impl GeneralizedPoint {
    pub fn new(location: Vec<f64>, op: OperatorTag) -> Self {
        Self { location, op }
    }

    pub fn value(location: Vec<f64>) -> Self {
        Self { location, op: OperatorTag::Identity }
    }
}

/// Squared-exponential prior with constant mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub variance: f64,
    pub lengthscales: Vec<f64>,
    #[serde(default)]
    pub mean_const: f64,
}

impl KernelSpec {
    pub fn new(variance: f64, lengthscales: Vec<f64>, mean_const: f64) -> Result<Self> {
        let spec = Self { variance, lengthscales, mean_const };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::InvalidKernel(format!("variance must be positive, got {}", self.variance)));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidKernel("at least one lengthscale required".into()));
        }
        if let Some(l) = self.lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidKernel(format!("lengthscales must be positive, got {l}")));
        }
        if !self.mean_const.is_finite() {
            return Err(Error::InvalidKernel("mean must be finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: String,
    #[serde(flatten)]
    pub kernel: KernelSpec,
}

/// Independent latent fields.  The first component is the objective: the
/// non-selecting operators (identity, derivatives, convolution, curvature)
/// act on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub components: Vec<Component>,
}

impl ComponentSpec {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let spec = Self { components };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let first = self.components.first().ok_or_else(|| Error::InvalidKernel("component list is empty".into()))?;
        for (i, c) in self.components.iter().enumerate() {
            c.kernel.validate()?;
            if c.kernel.dim() != first.kernel.dim() {
                return Err(Error::DomainMismatch { expected: first.kernel.dim(), found: c.kernel.dim() });
            }
            if self.components[..i].iter().any(|o| o.id == c.id) {
                return Err(Error::InvalidKernel(format!("duplicate component id `{}`", c.id)));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.components.iter().position(|c| c.id == id).ok_or_else(|| Error::UnknownComponent(id.to_string()))
    }
}

/// Prior Gaussian field: a single squared-exponential process or a set of
/// independent components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    Single(KernelSpec),
    Components(ComponentSpec),
}

impl From<KernelSpec> for Prior {
    fn from(k: KernelSpec) -> Self {
        Prior::Single(k)
    }
}

impl From<ComponentSpec> for Prior {
    fn from(c: ComponentSpec) -> Self {
        Prior::Components(c)
    }
}

#[derive(Debug, Clone, Copy)]
enum LocalOp<'a> {
    Identity,
    Derivative(usize),
    Convolution(&'a DMatrix<f64>),
    Curvature(&'a DMatrix<f64>),
}

#[derive(Debug, Clone, Copy)]
struct Term<'a> {
    component: usize,
    op: LocalOp<'a>,
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::Single(k) => k.validate(),
            Prior::Components(c) => c.validate(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::Single(k) => k.dim(),
            Prior::Components(c) => c.components[0].kernel.dim(),
        }
    }

    fn kernel(&self, component: usize) -> &KernelSpec {
        match self {
            Prior::Single(k) => k,
            Prior::Components(c) => &c.components[component].kernel,
        }
    }

    /// Largest component variance; the reference scale for jitter.
    pub fn variance_scale(&self) -> f64 {
        match self {
            Prior::Single(k) => k.variance,
            Prior::Components(c) => c.components.iter().map(|c| c.kernel.variance).fold(0.0, f64::max),
        }
    }

    /// Lengthscales of the objective component.
    pub fn objective_lengthscales(&self) -> &[f64] {
        &self.kernel(0).lengthscales
    }

    /// The operator that selects the objective field.
    pub fn objective_tag(&self) -> OperatorTag {
        match self {
            Prior::Single(_) => OperatorTag::Identity,
            Prior::Components(c) => OperatorTag::Component(c.components[0].id.clone()),
        }
    }

    /// Whether `tag` observes the plain objective value.
    pub fn is_value_tag(&self, tag: &OperatorTag) -> bool {
        match (self, tag) {
            (_, OperatorTag::Identity) => true,
            (Prior::Components(c), OperatorTag::Component(id)) => c.components[0].id == *id,
            _ => false,
        }
    }

    fn terms<'a>(&self, tag: &'a OperatorTag, out: &mut Vec<Term<'a>>, nested: bool) -> Result<()> {
        let d = self.dim();
        match tag {
            OperatorTag::Identity => out.push(Term { component: 0, op: LocalOp::Identity }),
            OperatorTag::PartialDerivative(a) => {
                if *a >= d {
                    return Err(Error::InvalidOperator(format!("derivative axis {a} out of range for d = {d}")));
                }
                out.push(Term { component: 0, op: LocalOp::Derivative(*a) })
            }
            OperatorTag::Convolution(m) | OperatorTag::CurvaturePenalty(m) => {
                if m.dim() != d {
                    return Err(Error::DomainMismatch { expected: d, found: m.dim() });
                }
                let op = match tag {
                    OperatorTag::Convolution(_) => LocalOp::Convolution(m.matrix()),
                    _ => LocalOp::Curvature(m.matrix()),
                };
                out.push(Term { component: 0, op });
            }
            OperatorTag::Component(id) => {
                let component = match self {
                    Prior::Components(c) => c.index_of(id)?,
                    Prior::Single(_) => return Err(Error::UnknownComponent(id.clone())),
                };
                out.push(Term { component, op: LocalOp::Identity });
            }
            OperatorTag::Sum(list) => {
                if nested {
                    return Err(Error::InvalidOperator("nested sum; flatten with OperatorTag::sum".into()));
                }
                if list.is_empty() {
                    return Err(Error::InvalidOperator("sum of zero operators".into()));
                }
                for t in list {
                    self.terms(t, out, true)?;
                }
            }
        }
        Ok(())
    }

    fn expand<'a>(&self, tag: &'a OperatorTag) -> Result<Vec<Term<'a>>> {
        let mut out = Vec::with_capacity(1);
        self.terms(tag, &mut out, false)?;
        Ok(out)
    }

    /// Validates the operator against this prior without evaluating anything.
    pub fn check_tag(&self, tag: &OperatorTag) -> Result<()> {
        self.expand(tag).map(|_| ())
    }

    fn check_point(&self, p: &GeneralizedPoint) -> Result<()> {
        if p.location.len() != self.dim() {
            return Err(Error::DomainMismatch { expected: self.dim(), found: p.location.len() });
        }
        Ok(())
    }
}

/// Covariance `K(s, t) = P_x S_y K(x, y)` between two generalized points.
pub fn kernel_eval(prior: &Prior, s: &GeneralizedPoint, t: &GeneralizedPoint) -> Result<f64> {
    prior.check_point(s)?;
    prior.check_point(t)?;
    let left = prior.expand(&s.op)?;
    let right = prior.expand(&t.op)?;
    let mut total = 0.0;
    for l in &left {
        for r in &right {
            if l.component == r.component {
                total += se_cross(prior.kernel(l.component), &s.location, l.op, &t.location, r.op);
            }
        }
    }
    Ok(total)
}

/// Prior mean `(P μ)(x)` for a constant-mean prior.
pub fn prior_mean(prior: &Prior, s: &GeneralizedPoint) -> Result<f64> {
    prior.check_point(s)?;
    let terms = prior.expand(&s.op)?;
    Ok(terms
        .iter()
        .map(|t| match t.op {
            LocalOp::Derivative(_) => 0.0,
            _ => prior.kernel(t.component).mean_const,
        })
        .sum())
}

/// Inverse metric of the (possibly smoothed) Gaussian kernel.
enum Metric {
    Diagonal(Vec<f64>),
    Full(DMatrix<f64>),
}

impl Metric {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            Metric::Diagonal(v) => {
                if i == j {
                    v[i]
                } else {
                    0.0
                }
            }
            Metric::Full(m) => m[(i, j)],
        }
    }
}

/// Differential monomial `coef · ∂_{idx...}` acting on the offset `r = x - y`.
type Monomial = (f64, Vec<usize>);

fn monomials(op: LocalOp<'_>, sign: f64) -> Vec<Monomial> {
    match op {
        LocalOp::Identity | LocalOp::Convolution(_) => vec![(1.0, Vec::new())],
        LocalOp::Derivative(a) => vec![(sign, vec![a])],
        LocalOp::Curvature(m) => {
            let d = m.nrows();
            let mut out = vec![(1.0, Vec::new())];
            for i in 0..d {
                for j in 0..d {
                    let c = m[(i, j)];
                    if c != 0.0 {
                        // two derivatives in the same argument: sign² = 1
                        out.push((0.5 * c, vec![i, j]));
                    }
                }
            }
            out
        }
    }
}

/// `∂^{idx} exp(-½ rᵀ A r) / exp(-½ rᵀ A r)`, summed over partial pairings:
/// a paired `(p, q)` contributes `-A_pq`, an unpaired `s` contributes `-g_s`
/// with `g = A r`.
fn hermite(idx: &[usize], g: &[f64], metric: &Metric) -> f64 {
    match idx.split_first() {
        None => 1.0,
        Some((&first, rest)) => {
            let mut total = -g[first] * hermite(rest, g, metric);
            for k in 0..rest.len() {
                let a = metric.at(first, rest[k]);
                if a != 0.0 {
                    let mut remaining = Vec::with_capacity(rest.len() - 1);
                    remaining.extend_from_slice(&rest[..k]);
                    remaining.extend_from_slice(&rest[k + 1..]);
                    total -= a * hermite(&remaining, g, metric);
                }
            }
            total
        }
    }
}

fn se_cross(k: &KernelSpec, x: &[f64], left: LocalOp<'_>, y: &[f64], right: LocalOp<'_>) -> f64 {
    let d = x.len();
    let r: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();

    let mut smoothing: Option<DMatrix<f64>> = None;
    for op in [left, right] {
        if let LocalOp::Convolution(m) = op {
            smoothing = Some(match smoothing {
                None => m.clone(),
                Some(acc) => acc + m,
            });
        }
    }

    let (amplitude, metric) = match smoothing {
        None => (k.variance, Metric::Diagonal(k.lengthscales.iter().map(|l| 1.0 / (l * l)).collect())),
        Some(extra) => {
            // φ_Σ * N(·; 0, Λ) = N(·; 0, Λ + Σ)
            let mut m = extra;
            for (a, l) in k.lengthscales.iter().enumerate() {
                m[(a, a)] += l * l;
            }
            let chol = m.clone().cholesky().expect("diag(ℓ²) + PSD is positive definite");
            let log_det_m: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
            let log_det_lambda: f64 = k.lengthscales.iter().map(|l| 2.0 * l.ln()).sum();
            let amplitude = k.variance * (0.5 * (log_det_lambda - log_det_m)).exp();
            (amplitude, Metric::Full(chol.inverse()))
        }
    };

    let g: Vec<f64> = (0..d).map(|i| (0..d).map(|j| metric.at(i, j) * r[j]).sum()).collect();
    let quad: f64 = g.iter().zip(&r).map(|(a, b)| a * b).sum();
    let base = amplitude * (-0.5 * quad).exp();
    if base == 0.0 {
        return 0.0;
    }

    let lm = monomials(left, 1.0);
    let rm = monomials(right, -1.0);
    let mut poly = 0.0;
    let mut idx = Vec::with_capacity(4);
    for (cl, il) in &lm {
        for (cr, ir) in &rm {
            idx.clear();
            idx.extend_from_slice(il);
            idx.extend_from_slice(ir);
            poly += cl * cr * hermite(&idx, &g, &metric);
        }
    }
    base * poly
}

/// Gram matrix `K(points_i, points_j)`.
pub fn gram(prior: &Prior, points: &[GeneralizedPoint]) -> Result<DMatrix<f64>> {
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_eval(prior, &points[i], &points[j])?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Cross-covariance block `K(a_i, b_j)`.
pub fn cross(prior: &Prior, a: &[GeneralizedPoint], b: &[GeneralizedPoint]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(a.len(), b.len());
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            m[(i, j)] = kernel_eval(prior, p, q)?;
        }
    }
    Ok(m)
}
