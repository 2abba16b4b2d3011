//! The a-posteriori Gaussian field: conditioning on generalized measurements
//! and querying the conditional mean and covariance.

mod fit;

pub use fit::{fit_hyperparameters, log_marginal_likelihood, FitBounds, FitResult};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, Domain, GeneralizedPoint, OperatorTag, Prior};
use crate::linalg::{self, cholesky_jittered, psd_factor};
use crate::search::{latin_hypercube, rng_from, PatternSearch};

/// An observed value of a generalized point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub point: GeneralizedPoint,
    pub value: f64,
}

impl Measurement {
    pub fn new(location: Vec<f64>, op: OperatorTag, value: f64) -> Self {
        Self { point: GeneralizedPoint::new(location, op), value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FminMethod {
    MeasuredMin,
    PosteriorMeanMin,
}

/// The incumbent minimum used to clamp EI and REI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FminContext {
    pub value: f64,
    pub location: Vec<f64>,
    pub method: FminMethod,
}

/// Gaussian field conditioned on a set of measurements.  Immutable once
/// built.
#[derive(Debug, Clone)]
pub struct PosteriorField {
    domain: Domain,
    prior: Prior,
    data: Vec<Measurement>,
    points: Vec<GeneralizedPoint>,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
    gram_max_eigen: f64,
}

impl PosteriorField {
    /// Conditions `prior` on `data`.
    pub fn condition(domain: &Domain, prior: &Prior, data: Vec<Measurement>) -> Result<Self> {
        prior.validate()?;
        if prior.dim() != domain.dim() {
            return Err(Error::DomainMismatch { expected: domain.dim(), found: prior.dim() });
        }
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        for (i, m) in data.iter().enumerate() {
            domain.check(&m.point.location)?;
            prior.check_tag(&m.point.op)?;
            if !m.value.is_finite() {
                return Err(Error::NonFiniteValue { index: i });
            }
            if data[..i].iter().any(|o| o.point == m.point) {
                return Err(Error::DuplicateMeasurement { index: i });
            }
        }

        let points: Vec<GeneralizedPoint> = data.iter().map(|m| m.point.clone()).collect();
        let gram = kernel::gram(prior, &points)?;
        let (chol, jitter) = cholesky_jittered(&gram, prior.variance_scale()).ok_or(Error::SingularGram)?;
        let residual = DVector::from_iterator(
            data.len(),
            data.iter()
                .map(|m| kernel::prior_mean(prior, &m.point).map(|mu| m.value - mu))
                .collect::<Result<Vec<_>>>()?,
        );
        let alpha = chol.solve(&residual);
        let mut regularized = gram;
        for i in 0..regularized.nrows() {
            regularized[(i, i)] += jitter;
        }
        let gram_max_eigen = linalg::gershgorin_max(&regularized);
        Ok(Self {
            domain: domain.clone(),
            prior: prior.clone(),
            data,
            points,
            chol_l: chol.l(),
            alpha,
            jitter,
            gram_max_eigen,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn data(&self) -> &[Measurement] {
        &self.data
    }

    /// Diagonal regularization that made the Gram matrix factorizable.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    /// Weights `α = (K + jitter·I)⁻¹ (f − μ(X))` of the posterior mean.
    pub fn weights(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Upper bound on the largest eigenvalue of the regularized Gram matrix.
    pub fn gram_max_eigen(&self) -> f64 {
        self.gram_max_eigen
    }

    fn check(&self, s: &GeneralizedPoint) -> Result<()> {
        if s.location.len() != self.domain.dim() {
            return Err(Error::DomainMismatch { expected: self.domain.dim(), found: s.location.len() });
        }
        Ok(())
    }

    /// `K(s, X)` against every measured point.
    pub fn data_covariances(&self, s: &GeneralizedPoint) -> Result<DVector<f64>> {
        self.check(s)?;
        let mut v = DVector::zeros(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            v[i] = kernel::kernel_eval(&self.prior, s, p)?;
        }
        Ok(v)
    }

    /// Posterior mean `μ_M(s)`.
    pub fn mean(&self, s: &GeneralizedPoint) -> Result<f64> {
        let k = self.data_covariances(s)?;
        Ok(kernel::prior_mean(&self.prior, s)? + k.dot(&self.alpha))
    }

    pub fn means(&self, pts: &[GeneralizedPoint]) -> Result<DVector<f64>> {
        let v = pts.iter().map(|p| self.mean(p)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    }

    /// Posterior covariance matrix `K_M(S, S)`.
    pub fn cov(&self, pts: &[GeneralizedPoint]) -> Result<DMatrix<f64>> {
        for p in pts {
            self.check(p)?;
        }
        let kss = kernel::gram(&self.prior, pts)?;
        let kxs = kernel::cross(&self.prior, &self.points, pts)?;
        let v = self.chol_l.solve_lower_triangular(&kxs).ok_or(Error::SingularGram)?;
        let mut c = kss - v.transpose() * v;
        linalg::symmetrize(&mut c);
        Ok(c)
    }

    pub fn variance(&self, s: &GeneralizedPoint) -> Result<f64> {
        Ok(self.cov(std::slice::from_ref(s))?[(0, 0)])
    }

    /// `n` i.i.d. joint draws (rows) from `N(μ_M(S), K_M(S, S))`.
    pub fn sample_joint(&self, pts: &[GeneralizedPoint], n: usize, seed: u64) -> Result<DMatrix<f64>> {
        if pts.is_empty() || n == 0 {
            return Err(Error::InvalidConfig("sample_joint needs at least one point and one draw".into()));
        }
        let mu = self.means(pts)?;
        let cov = self.cov(pts)?;
        let factor = psd_factor(&cov).map_err(|_| Error::SingularGram)?;
        let m = pts.len();
        let mut rng = rng_from(seed);
        let mut out = DMatrix::zeros(n, m);
        let mut z = DVector::zeros(factor.ncols());
        for row in 0..n {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let draw = &mu + &factor * &z;
            for j in 0..m {
                out[(row, j)] = draw[j];
            }
        }
        Ok(out)
    }

    /// Incumbent minimum of the objective.
    pub fn find_fmin(&self, method: FminMethod) -> Result<FminContext> {
        self.find_fmin_for(method, &self.prior.objective_tag())
    }

    /// Incumbent minimum of the surface observed through `tag`.
    ///
    /// `PosteriorMeanMin` runs a multistart compass search on the posterior
    /// mean.  Measured values of value-tagged points are exact candidates, so
    /// the result never exceeds `MeasuredMin`.
    pub fn find_fmin_for(&self, method: FminMethod, tag: &OperatorTag) -> Result<FminContext> {
        self.prior.check_tag(tag)?;
        let measured = self
            .data
            .iter()
            .filter(|m| self.prior.is_value_tag(&m.point.op))
            .min_by(|a, b| a.value.total_cmp(&b.value));
        match method {
            FminMethod::MeasuredMin => {
                let m = measured.ok_or(Error::NoValueMeasurements)?;
                Ok(FminContext { value: m.value, location: m.point.location.clone(), method })
            }
            FminMethod::PosteriorMeanMin => self.posterior_mean_min(tag, measured),
        }
    }

    fn posterior_mean_min(&self, tag: &OperatorTag, measured: Option<&Measurement>) -> Result<FminContext> {
        let d = self.domain.dim();
        let surface = |x: &[f64]| self.mean(&GeneralizedPoint::new(x.to_vec(), tag.clone())).unwrap_or(f64::INFINITY);

        let mut starts: Vec<Vec<f64>> = Vec::new();
        for m in &self.data {
            if !starts.contains(&m.point.location) {
                starts.push(m.point.location.clone());
            }
        }
        starts.extend(latin_hypercube(&self.domain, 2 * d + 4, 0x5eed_f1e1d));

        let mut scored: Vec<(f64, Vec<f64>)> = starts.into_iter().map(|x| (surface(&x), x)).collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut best = FminContext {
            value: f64::INFINITY,
            location: self.domain.lower().to_vec(),
            method: FminMethod::PosteriorMeanMin,
        };
        if let Some(m) = measured.filter(|_| tag == &self.prior.objective_tag() || tag.is_identity()) {
            best.value = m.value;
            best.location = m.point.location.clone();
        }
        let search = PatternSearch { initial_step: 0.05, min_step: 1e-7, max_iters: 400 };
        for (_, x0) in scored.into_iter().take(8) {
            let r = search.minimize(surface, &x0, self.domain.lower(), self.domain.upper());
            if r.value < best.value {
                best.value = r.value;
                best.location = r.x;
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use approx::assert_relative_eq;

    fn setup() -> (Domain, Prior) {
        (Domain::new(vec![-1.0], vec![1.0]).unwrap(), Prior::Single(KernelSpec::new(1.0, vec![0.3], 0.0).unwrap()))
    }

    #[test]
    fn single_measurement_interpolates() {
        let (d, p) = setup();
        let f =
            PosteriorField::condition(&d, &p, vec![Measurement::new(vec![0.2], OperatorTag::Identity, 5.0)]).unwrap();
        let q = GeneralizedPoint::value(vec![0.2]);
        assert!((f.mean(&q).unwrap() - 5.0).abs() < 1e-6);
        assert!(f.variance(&q).unwrap() <= 1e-8);
    }

    #[test]
    fn far_away_variance_reverts_to_prior() {
        let d = Domain::new(vec![-10.0], vec![10.0]).unwrap();
        let p = Prior::Single(KernelSpec::new(2.0, vec![0.25], 0.0).unwrap());
        let f =
            PosteriorField::condition(&d, &p, vec![Measurement::new(vec![0.0], OperatorTag::Identity, 1.0)]).unwrap();
        let v = f.variance(&GeneralizedPoint::value(vec![5.0])).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn rejects_duplicates_and_bad_input() {
        let (d, p) = setup();
        let m = Measurement::new(vec![0.2], OperatorTag::Identity, 1.0);
        assert_eq!(
            PosteriorField::condition(&d, &p, vec![m.clone(), m.clone()]).unwrap_err(),
            Error::DuplicateMeasurement { index: 1 }
        );
        assert_eq!(PosteriorField::condition(&d, &p, vec![]).unwrap_err(), Error::EmptyData);
        let out = Measurement::new(vec![3.0], OperatorTag::Identity, 1.0);
        assert!(matches!(PosteriorField::condition(&d, &p, vec![out]), Err(Error::OutOfDomain { .. })));
        let nan = Measurement::new(vec![0.0], OperatorTag::Identity, f64::NAN);
        assert_eq!(PosteriorField::condition(&d, &p, vec![nan]).unwrap_err(), Error::NonFiniteValue { index: 0 });
        // same location, different operator is fine
        let g = Measurement::new(vec![0.2], OperatorTag::PartialDerivative(0), 0.5);
        assert!(PosteriorField::condition(&d, &p, vec![m, g]).is_ok());
    }

    #[test]
    fn measured_min_and_posterior_min() {
        let (d, p) = setup();
        let data = vec![
            Measurement::new(vec![-0.8], OperatorTag::Identity, 3.0),
            Measurement::new(vec![0.0], OperatorTag::Identity, 1.0),
            Measurement::new(vec![0.7], OperatorTag::Identity, 2.0),
        ];
        let f = PosteriorField::condition(&d, &p, data).unwrap();
        let mm = f.find_fmin(FminMethod::MeasuredMin).unwrap();
        assert_eq!(mm.value, 1.0);
        assert_eq!(mm.location, vec![0.0]);
        let pm = f.find_fmin(FminMethod::PosteriorMeanMin).unwrap();
        assert!(pm.value <= mm.value + 1e-9);
    }

    #[test]
    fn measured_min_needs_value_data() {
        let (d, p) = setup();
        let f = PosteriorField::condition(
            &d,
            &p,
            vec![Measurement::new(vec![0.0], OperatorTag::PartialDerivative(0), 1.0)],
        )
        .unwrap();
        assert_eq!(f.find_fmin(FminMethod::MeasuredMin).unwrap_err(), Error::NoValueMeasurements);
        assert!(f.find_fmin(FminMethod::PosteriorMeanMin).is_ok());
    }

    #[test]
    fn sampling_is_deterministic() {
        let (d, p) = setup();
        let f =
            PosteriorField::condition(&d, &p, vec![Measurement::new(vec![0.0], OperatorTag::Identity, 1.0)]).unwrap();
        let pts = vec![GeneralizedPoint::value(vec![0.5]), GeneralizedPoint::value(vec![-0.5])];
        let a = f.sample_joint(&pts, 50, 9).unwrap();
        let b = f.sample_joint(&pts, 50, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, f.sample_joint(&pts, 50, 10).unwrap());
    }
}
