//! Dense linear-algebra helpers shared across the crate: symmetrization,
//! covariance factorization for sampling, robust SPD inversion, and spectral
//! radius computation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Replace `m` by its symmetric part `(m + m') / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let mt = m.transpose();
    *m += mt;
    *m *= 0.5;
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// A factor `L` of a covariance matrix with `L L' = cov`, used to sample
/// correlated Gaussian vectors as `L * eps`.
///
/// Cholesky is tried first; positive semi-definite but singular matrices
/// (zero covariance in tests, degenerate noise models) fall back to an
/// eigendecomposition with negative eigenvalues clamped at zero.
#[derive(Debug, Clone)]
pub struct CovFactor {
    l: DMatrix<f64>,
}

impl CovFactor {
    pub fn from_covariance(cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::Config(format!(
                "covariance must be square, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let asym = (cov - cov.transpose()).amax();
        let scale = cov.amax().max(1.0);
        if asym > 1e-9 * scale {
            return Err(Error::Config(format!(
                "covariance not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        if let Some(chol) = cov.clone().cholesky() {
            return Ok(Self { l: chol.l() });
        }
        let mut s = cov.clone();
        symmetrize(&mut s);
        let eig = s.symmetric_eigen();
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -1e-8 * scale {
            return Err(Error::Config(format!(
                "covariance not positive semi-definite (min eigenvalue {min:.3e})"
            )));
        }
        let sqrt = DVector::from_iterator(
            eig.eigenvalues.len(),
            eig.eigenvalues.iter().map(|&v| v.max(0.0).sqrt()),
        );
        let l = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt);
        Ok(Self { l })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            l: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Draws one sample from N(mean, L L').
    pub fn sample(&self, mean: &DVector<f64>, rng: &mut RngStream) -> DVector<f64> {
        mean + &self.l * rng.normal_vector(self.l.ncols())
    }

    /// Draws one zero-mean sample from N(0, L L').
    pub fn sample_centered(&self, rng: &mut RngStream) -> DVector<f64> {
        &self.l * rng.normal_vector(self.l.ncols())
    }
}

/// Robust inverse of a symmetric positive semi-definite matrix.
///
/// Eigenvalues below `1e-12 * lambda_max` are treated as exactly zero and
/// excluded (pseudo-inverse), so fully degenerate noiseless systems keep
/// working. Returns the inverse together with the effective condition number.
pub fn spd_pseudo_inverse(m: &DMatrix<f64>, context: &str) -> Result<(DMatrix<f64>, f64)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            context: context.to_string(),
            condition: f64::INFINITY,
        });
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 {
        // Entirely degenerate: the zero matrix is the pseudo-inverse.
        return Ok((DMatrix::zeros(m.nrows(), m.ncols()), 1.0));
    }
    let tol = 1e-12 * max;
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-8 * max {
        return Err(Error::Numerical {
            context: format!("{context}: matrix not PSD (min eigenvalue {min:.3e})"),
            condition: max / min.abs(),
        });
    }
    let mut min_kept = f64::INFINITY;
    let inv_diag = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&v| {
            if v > tol {
                min_kept = min_kept.min(v);
                1.0 / v
            } else {
                0.0
            }
        }),
    );
    let cond = if min_kept.is_finite() { max / min_kept } else { 1.0 };
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_diag) * eig.eigenvectors.transpose();
    Ok((inv, cond))
}

/// Spectral radius via a dense eigensolve.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Spectral radius estimate from the growth rate of `||M^k v||`.
///
/// Kept as an independent cross-check of the dense eigensolve; handles
/// complex dominant pairs through norm growth rather than vector
/// convergence.
pub fn spectral_radius_power(m: &DMatrix<f64>, max_iter: usize, tol: f64) -> Result<f64> {
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64) * 0.37).normalize();
    let mut log_growth = 0.0f64;
    let mut prev_estimate = f64::NAN;
    for k in 1..=max_iter {
        v = m * v;
        let norm = v.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        log_growth += norm.ln();
        v /= norm;
        let estimate = (log_growth / k as f64).exp();
        if k > 50 && (estimate - prev_estimate).abs() <= tol * estimate.max(1e-30) {
            return Ok(estimate);
        }
        prev_estimate = estimate;
    }
    Err(Error::NonConvergence(format!(
        "power iteration did not settle within {max_iter} iterations (last estimate {prev_estimate:.6e})"
    )))
}

/// Rank of the observability matrix `[H; HA; ...; H A^(q-1)]`.
pub fn observability_rank(a: &DMatrix<f64>, h: &DMatrix<f64>) -> usize {
    let q = a.nrows();
    let p = h.nrows();
    let mut stacked = DMatrix::zeros(p * q, q);
    let mut block = h.clone();
    for i in 0..q {
        stacked.view_mut((i * p, 0), (p, q)).copy_from(&block);
        block = &block * a;
    }
    let tol = 1e-10 * stacked.amax().max(1e-300);
    stacked.svd(false, false).rank(tol)
}

/// Least-squares solve of `a x = b` via SVD; also reports whether the system
/// was rank-deficient at the given relative tolerance.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let svd = a.clone().svd(true, true);
    let scale = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let eps = 1e-12 * scale.max(1e-300);
    let rank_deficient = svd.singular_values.iter().any(|&s| s <= eps);
    let x = svd
        .solve(b, eps)
        .map_err(|e| Error::NonConvergence(format!("SVD solve failed: {e}")))?;
    Ok((x, rank_deficient))
}
