//! Minimal ℓ∞ projection onto span(V) by direct minimization over the
//! affine family of all projections, without touching the LP code.
//!
//! Every projection onto span(V) is `P = V Wᵀ` with `W = W0 + Q Z`, where
//! `W0 = V (VᵀV)⁻¹` and the columns of `Q` span the orthogonal complement.
//! The max row sum is smoothed (`|x| ≈ √(x²+μ²)`, `max ≈ log-sum-exp`),
//! minimized by BFGS while `μ → 0`, and the result is polished by solving
//! the linear system fixed by its active rows, signs and zero entries.

use nalgebra::{DMatrix, DVector};

pub struct Family {
    v: DMatrix<f64>,
    p0: DMatrix<f64>,
    q: DMatrix<f64>,
}

pub fn max_row_sum(p: &DMatrix<f64>) -> f64 {
    p.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

impl Family {
    pub fn new(v: DMatrix<f64>) -> Self {
        let (big_n, n) = v.shape();
        let w0 = &v * (v.transpose() * &v).try_inverse().expect("V has full column rank");
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut q_cols = Vec::new();
        let candidates = (0..n)
            .map(|k| v.column(k).into_owned())
            .chain((0..big_n).map(|i| DVector::from_fn(big_n, |r, _| if r == i { 1.0 } else { 0.0 })));
        for (idx, c) in candidates.enumerate() {
            let mut x = c;
            for _ in 0..2 {
                for b in &basis {
                    let p = b.dot(&x);
                    x -= b * p;
                }
            }
            let norm = x.norm();
            if norm > 1e-8 {
                let u = x / norm;
                if idx >= n {
                    q_cols.push(u.clone());
                }
                basis.push(u);
            }
            if basis.len() == big_n {
                break;
            }
        }
        let q = DMatrix::from_columns(&q_cols);
        let p0 = &v * w0.transpose();
        Family { v, p0, q }
    }

    fn z_shape(&self) -> (usize, usize) {
        (self.q.ncols(), self.v.ncols())
    }

    pub fn projection(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let (r, c) = self.z_shape();
        let zm = DMatrix::from_column_slice(r, c, z.as_slice());
        &self.p0 + &self.v * zm.transpose() * self.q.transpose()
    }

    /// Smoothed objective and its gradient in `z`.
    fn smoothed(&self, z: &DVector<f64>, mu: f64) -> (f64, DVector<f64>) {
        let p = self.projection(z);
        let h = p.map(|x| (x * x + mu * mu).sqrt());
        let rows: Vec<f64> = h.row_iter().map(|r| r.sum()).collect();
        let m = rows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = rows.iter().map(|r| ((r - m) / mu).exp()).collect();
        let total: f64 = ex.iter().sum();
        let value = m + mu * total.ln();
        let g = DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| ex[i] / total * p[(i, j)] / h[(i, j)]);
        let gz = self.q.transpose() * g.transpose() * &self.v;
        (value, DVector::from_column_slice(gz.as_slice()))
    }

    /// Linear map `z ↦ P(z)_ij` as a coefficient row and offset.
    fn entry_row(&self, i: usize, j: usize) -> (DVector<f64>, f64) {
        let (r, c) = self.z_shape();
        let coeffs = DVector::from_fn(r * c, |idx, _| {
            let (b, a) = (idx % r, idx / r);
            self.v[(i, a)] * self.q[(j, b)]
        });
        (coeffs, self.p0[(i, j)])
    }

    fn polish(&self, z: &DVector<f64>, tau: f64) -> Option<DVector<f64>> {
        let p = self.projection(z);
        let f = max_row_sum(&p);
        let k = z.len();
        let mut eqs: Vec<(DVector<f64>, f64)> = Vec::new();
        for i in 0..p.nrows() {
            let row_sum: f64 = p.row(i).iter().map(|x| x.abs()).sum();
            if row_sum < f - tau {
                continue;
            }
            let mut sum_row = DVector::zeros(k + 1);
            let mut sum_rhs = 0.0;
            for j in 0..p.ncols() {
                let (c, off) = self.entry_row(i, j);
                if p[(i, j)].abs() < tau {
                    let mut e = DVector::zeros(k + 1);
                    e.rows_mut(0, k).copy_from(&c);
                    eqs.push((e, -off));
                } else {
                    let s = p[(i, j)].signum();
                    sum_row.rows_mut(0, k).axpy(s, &c, 1.0);
                    sum_rhs -= s * off;
                }
            }
            sum_row[k] = -1.0;
            eqs.push((sum_row, sum_rhs));
        }
        let a = DMatrix::from_fn(eqs.len(), k + 1, |r, c| eqs[r].0[c]);
        let b = DVector::from_iterator(eqs.len(), eqs.iter().map(|e| e.1));
        let mut x0 = DVector::zeros(k + 1);
        x0.rows_mut(0, k).copy_from(z);
        x0[k] = f;
        let resid = &b - &a * &x0;
        let dx = a.svd(true, true).solve(&resid, 1e-12).ok()?;
        Some((x0 + dx).rows(0, k).into_owned())
    }

    /// Best max row sum found.
    pub fn minimize(&self) -> f64 {
        let (r, c) = self.z_shape();
        let mut z = DVector::zeros(r * c);
        let mut best = max_row_sum(&self.projection(&z));
        let mut mu = 0.1;
        while mu > 1e-10 {
            z = bfgs(|x| self.smoothed(x, mu), z);
            best = best.min(max_row_sum(&self.projection(&z)));
            mu *= 0.1;
        }
        for tau in [1e-5, 1e-6, 1e-7, 1e-8] {
            if let Some(zp) = self.polish(&z, tau) {
                best = best.min(max_row_sum(&self.projection(&zp)));
            }
        }
        best
    }
}

fn bfgs(f: impl Fn(&DVector<f64>) -> (f64, DVector<f64>), x0: DVector<f64>) -> DVector<f64> {
    let k = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut h = DMatrix::<f64>::identity(k, k);
    for _ in 0..2000 {
        if g.norm() < 1e-13 {
            break;
        }
        let mut p = -(&h * &g);
        if p.dot(&g) >= 0.0 {
            h = DMatrix::identity(k, k);
            p = -g.clone();
        }
        let slope = g.dot(&p);
        let mut step = 1.0;
        let (xn, fn_, gn) = loop {
            let xn = &x + &p * step;
            let (fv, gv) = f(&xn);
            if fv <= fx + 1e-4 * step * slope {
                break (xn, fv, gv);
            }
            step *= 0.5;
            if step < 1e-20 {
                return x;
            }
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let id = DMatrix::<f64>::identity(k, k);
            let left = &id - &s * y.transpose() * rho;
            let right = &id - &y * s.transpose() * rho;
            h = left * h * right + &s * s.transpose() * rho;
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    x
}
