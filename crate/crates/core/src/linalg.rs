//! Dense linear-algebra and finite-difference helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Numerically stable `log Σ exp(v_i)` with the max shifted out.
pub fn logsumexp(vals: &[f64]) -> f64 {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = vals.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// `log(1 - e^u)` for `u <= 0`, switching series at the usual `-ln 2` point.
pub fn log1m_exp(u: f64) -> f64 {
    if u >= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u > -std::f64::consts::LN_2 {
        (-u.exp_m1()).ln()
    } else {
        (-u.exp()).ln_1p()
    }
}

/// Per-coordinate central-difference step: `1e-6 * max(1, |x_i|)`.
pub fn fd_step(x_i: f64) -> f64 {
    1e-6 * x_i.abs().max(1.0)
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient<F: FnMut(&DVector<f64>) -> f64>(
    mut f: F,
    x: &DVector<f64>,
) -> DVector<f64> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut xp = x.clone();
    for i in 0..n {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central finite-difference Jacobian of a vector-valued function.
pub fn fd_jacobian<F: FnMut(&DVector<f64>) -> DVector<f64>>(
    mut f: F,
    x: &DVector<f64>,
    step: f64,
) -> DMatrix<f64> {
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for j in 0..n {
        let h = step * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Symmetrized finite-difference Hessian of `-log π` from its gradient.
///
/// `grad` is the gradient of the log-density; the returned matrix is the
/// observed-information-style `-(J + Jᵀ)/2`.
pub fn fd_hessian_from_grad<F: FnMut(&DVector<f64>) -> DVector<f64>>(
    grad: F,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let j = fd_jacobian(grad, x, 1e-5);
    let sym = (&j + j.transpose()) * 0.5;
    -sym
}

/// True iff the (symmetric) matrix admits a Cholesky factorization.
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    m.is_square() && m.clone().cholesky().is_some()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky factor (lower triangular) of an SPD matrix, with a relative ridge
/// retry for borderline-singular inputs.
pub fn cholesky_with_ridge(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let ridge = 1e-6 * m.trace() / m.nrows() as f64;
    let ridged = m + DMatrix::identity(m.nrows(), m.ncols()) * ridge.max(1e-12);
    ridged
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite { context })
}

/// Log-determinant from a lower-triangular Cholesky factor.
pub fn log_det_from_chol(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Vector of i.i.d. standard normals.
pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Draw from `N(mean, L Lᵀ)` given the Cholesky factor `L`.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    chol_l: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let z = standard_normal_vector(mean.len(), rng);
    mean + chol_l * z
}

/// Log-density of `N(mean, Σ)` given the Cholesky factor of `Σ` and its
/// log-determinant.
pub fn mvn_log_density(
    x: &DVector<f64>,
    mean: &DVector<f64>,
    chol_l: &DMatrix<f64>,
    log_det_cov: f64,
) -> f64 {
    let d = x.len() as f64;
    let diff = x - mean;
    // Solve L y = diff; the quadratic form is ‖y‖².
    let y = chol_l
        .clone()
        .solve_lower_triangular(&diff)
        .expect("cholesky factor is nonsingular");
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det_cov + y.norm_squared())
}

/// Random SPD matrix with a log-uniform spectrum on `[eig_lo, eig_hi]` and an
/// orthogonal eigenbasis from the QR factorization of a Gaussian matrix.
pub fn random_spd<R: Rng + ?Sized>(
    dim: usize,
    eig_lo: f64,
    eig_hi: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let eigs = DVector::from_fn(dim, |_, _| {
        let u: f64 = rng.random();
        (eig_lo.ln() + u * (eig_hi.ln() - eig_lo.ln())).exp()
    });
    &q * DMatrix::from_diagonal(&eigs) * q.transpose()
}

/// Invert an SPD matrix through its eigendecomposition, returning the inverse
/// and `log det` of the original matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let eig = m.clone().symmetric_eigen();
    let mut log_det = 0.0;
    for &l in eig.eigenvalues.iter() {
        if l <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                context: "spd_inverse",
            });
        }
        log_det += l.ln();
    }
    let inv_eigs = eig.eigenvalues.map(|l| 1.0 / l);
    let q = &eig.eigenvectors;
    Ok((q * DMatrix::from_diagonal(&inv_eigs) * q.transpose(), log_det))
}
