//! Dense linear algebra helpers on top of `nalgebra`.

use crate::field::{sgn, Scalar};
use nalgebra::{DMatrix, DVector};

/// Largest singular value.
pub(crate) fn spectral_norm(m: &DMatrix<Scalar>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Numerical rank with relative cutoff `rel_tol · σ_max`.
pub(crate) fn rank(m: &DMatrix<Scalar>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Minimum-norm least-squares solution of `A X = B`.
pub(crate) fn lstsq(a: &DMatrix<Scalar>, b: &DMatrix<Scalar>) -> DMatrix<Scalar> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = (smax * 1e-13).max(1e-300);
    svd.solve(b, eps).expect("both factors were requested")
}

/// Real least squares on plain vectors, used by the solvers.
pub(crate) fn lstsq_real(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = (smax * 1e-12).max(1e-300);
    svd.solve(b, eps).expect("both factors were requested")
}

/// Thin QR factor with the diagonal of R made real and non-negative.
pub(crate) fn qr_orthonormalize(m: &DMatrix<Scalar>) -> DMatrix<Scalar> {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols().min(r.nrows()) {
        let s = sgn(r[(j, j)]);
        for i in 0..q.nrows() {
            q[(i, j)] *= s;
        }
    }
    q
}
