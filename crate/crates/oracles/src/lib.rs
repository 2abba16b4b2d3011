//! Brute-force reference computations for tests.  Nothing here shares code
//! with the library under test: integrals are done by quadrature,
//! derivatives by finite differences and conditioning by dense inversion.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Normal};

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Gauss–Hermite nodes and weights for `∫ e^{-x²} f(x) dx` (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `E f(X)` for `X ~ N(mu, sd²)` by `n`-point Gauss–Hermite.
pub fn normal_expectation<F: Fn(f64) -> f64>(f: F, mu: f64, sd: f64, n: usize) -> f64 {
    let (x, w) = gauss_hermite(n);
    let s = std::f64::consts::SQRT_2 * sd;
    x.iter().zip(&w).map(|(xi, wi)| wi * f(mu + s * xi)).sum::<f64>() / std::f64::consts::PI.sqrt()
}

/// `E f(X)` for `X ~ N(mu, cov)` in 2-d by a tensor Gauss–Hermite rule on
/// the Cholesky-whitened variable.
pub fn normal_expectation_2d<F: Fn(f64, f64) -> f64>(f: F, mu: [f64; 2], cov: [[f64; 2]; 2], n: usize) -> f64 {
    let l11 = cov[0][0].sqrt();
    let l21 = cov[1][0] / l11;
    let l22 = (cov[1][1] - l21 * l21).max(0.0).sqrt();
    let (x, w) = gauss_hermite(n);
    let r2 = std::f64::consts::SQRT_2;
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        for (xj, wj) in x.iter().zip(&w) {
            let (z1, z2) = (r2 * xi, r2 * xj);
            total += wi * wj * f(mu[0] + l11 * z1, mu[1] + l21 * z1 + l22 * z2);
        }
    }
    total / std::f64::consts::PI
}

/// Central first difference along `axis`.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], axis: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    let mut m = x.to_vec();
    p[axis] += h;
    m[axis] -= h;
    (f(&p) - f(&m)) / (2.0 * h)
}

/// Central second difference `∂²f/∂x_i∂x_j`.
pub fn second_diff<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], i: usize, j: usize, h: f64) -> f64 {
    let at = |di: f64, dj: f64| {
        let mut y = x.to_vec();
        y[i] += di;
        y[j] += dj;
        f(&y)
    };
    if i == j {
        (at(h, 0.0) - 2.0 * f(x) + at(-h, 0.0)) / (h * h)
    } else {
        (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
    }
}

/// Gaussian conditioning by explicit inversion:
/// `μ = m_s + K_sd K_dd⁻¹ (y − m_d)`, `Σ = K_ss − K_sd K_dd⁻¹ K_ds`.
pub fn schur_posterior(
    k_dd: &DMatrix<f64>,
    k_sd: &DMatrix<f64>,
    k_ss: &DMatrix<f64>,
    residual: &DVector<f64>,
    prior_mean_s: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let inv = k_dd.clone().try_inverse().expect("invertible data covariance");
    let mean = prior_mean_s + k_sd * &inv * residual;
    let cov = k_ss - k_sd * &inv * k_sd.transpose();
    (mean, cov)
}

/// Grid point minimizing `f` over `n` equispaced points on `[lo, hi]`.
pub fn grid_argmin<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .map(|x| (x, f(x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("n >= 1")
}

/// `P(X₁ > t, X₂ > t)` for a bivariate normal, by 1-d quadrature over `X₁`.
fn joint_exceed(t: f64, mu: [f64; 2], cov: [[f64; 2]; 2]) -> f64 {
    let s1 = cov[0][0].sqrt();
    let beta = cov[1][0] / cov[0][0];
    let cond_sd = (cov[1][1] - beta * cov[1][0]).max(0.0).sqrt();
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let cond = |x1: f64| {
        let m = mu[1] + beta * (x1 - mu[0]);
        if cond_sd == 0.0 {
            if m > t {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 - std.cdf((t - m) / cond_sd)
        }
    };
    let z_lo = (t - mu[0]) / s1;
    if z_lo > 12.0 {
        return 0.0;
    }
    simpson(&|z: f64| phi(z) * cond(mu[0] + s1 * z), z_lo.max(-12.0), 12.0, 1e-11)
}

/// `E min{clamp, X₁, X₂}` for a bivariate normal by nested quadrature of
/// its distribution function.
pub fn expected_min_2d(mu: [f64; 2], cov: [[f64; 2]; 2], clamp: Option<f64>) -> f64 {
    let sd = cov[0][0].sqrt().max(cov[1][1].sqrt());
    let lo = mu[0].min(mu[1]) - 12.0 * sd;
    let mut hi = mu[0].max(mu[1]) + 12.0 * sd;
    if let Some(c) = clamp {
        hi = hi.min(c);
    }
    // E m = hi − ∫_{−∞}^{hi} P(m ≤ t) dt, and P(m ≤ lo) is negligible
    let below = |t: f64| 1.0 - joint_exceed(t, mu, cov);
    hi - simpson(&below, lo, hi, 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_integrates_polynomials() {
        assert!((normal_expectation(|x| x * x, 0.0, 1.0, 20) - 1.0).abs() < 1e-12);
        assert!((normal_expectation(|x| x.powi(4), 1.0, 2.0, 20) - (1.0 + 6.0 * 4.0 + 3.0 * 16.0)).abs() < 1e-9);
    }

    #[test]
    fn simpson_integrates_gaussian() {
        let v = simpson(&|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-12);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn standard_pair_minimum() {
        let v = expected_min_2d([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], None);
        assert!((v + 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-8, "{v}");
    }
}
