//! Maximal equiangular tight frames: builders for the small known cases and
//! a verifier for arbitrary user-supplied sets.

use crate::constants::{gerzon_bound, rescale_constant, welch_angle, ToleranceConfig};
use crate::error::{Error, Result};
use crate::field::{dot, sgn, KVector, Scalar, ScalarField, ONE, ZERO};
use crate::frames::WeightedFrame;
use crate::linalg::spectral_norm;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `d_K(n)` unit vectors in K^n with pairwise `|⟨w_i, w_j⟩| = φ_K(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaximalETF {
    field: ScalarField,
    n: usize,
    vectors: Vec<KVector>,
    angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtfReport {
    pub count: usize,
    pub dim: usize,
    /// Largest `| ‖w_i‖ − 1 |`.
    pub unit_residual: f64,
    /// Mean of `|⟨w_i, w_j⟩|` over pairs `i < j`.
    pub angle_value: f64,
    /// Max minus min of `|⟨w_i, w_j⟩|` over pairs.
    pub angle_spread: f64,
    /// Operator norm of `Σ w_i w_i^* − (N/n) I`.
    pub tightness_residual: f64,
    pub is_maximal: bool,
}

impl EtfReport {
    /// All residuals below `tol`, angle at the Welch value and count at the Gerzon bound.
    pub fn is_certified(&self, field: ScalarField, tol: f64) -> bool {
        let phi = match welch_angle(field, self.dim) {
            Ok(p) => p,
            Err(_) => return false,
        };
        self.is_maximal
            && self.unit_residual < tol
            && self.angle_spread < tol
            && (self.angle_value - phi).abs() < tol
            && self.tightness_residual < tol
    }
}

/// Checks norms, equiangularity and tightness of a finite vector set.
pub fn verify_etf(vectors: &[KVector]) -> Result<EtfReport> {
    if vectors.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two vectors, got {}",
            vectors.len()
        )));
    }
    let n = vectors[0].dim();
    let field = vectors.iter().fold(vectors[0].field(), |f, v| f.join(v.field()));
    for v in vectors {
        if v.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.dim(),
            });
        }
    }
    let count = vectors.len();
    let unit_residual = vectors
        .iter()
        .map(|v| (v.norm() - 1.0).abs())
        .fold(0.0, f64::max);

    let (mut lo, mut hi, mut sum) = (f64::INFINITY, 0.0f64, 0.0);
    let mut pairs = 0usize;
    for i in 0..count {
        for j in i + 1..count {
            let a = dot(vectors[i].entries(), vectors[j].entries()).norm();
            lo = lo.min(a);
            hi = hi.max(a);
            sum += a;
            pairs += 1;
        }
    }

    let mut s = DMatrix::<Scalar>::zeros(n, n);
    for v in vectors {
        let e = v.entries();
        for r in 0..n {
            for c in 0..n {
                s[(r, c)] += e[r] * e[c].conj();
            }
        }
    }
    let ratio = count as f64 / n as f64;
    for k in 0..n {
        s[(k, k)] -= Scalar::new(ratio, 0.0);
    }

    Ok(EtfReport {
        count,
        dim: n,
        unit_residual,
        angle_value: sum / pairs as f64,
        angle_spread: hi - lo,
        tightness_residual: spectral_norm(&s),
        is_maximal: gerzon_bound(field, n).map(|d| d == count).unwrap_or(false),
    })
}

/// Builds the maximal ETF for one of (R,2), (R,3), (R,7), (C,2), (C,3).
pub fn build_maximal_etf(field: ScalarField, n: usize) -> Result<MaximalETF> {
    let vectors = match (field, n) {
        (ScalarField::Real, 2) => real_plane(),
        (ScalarField::Real, 3) => icosahedral(),
        (ScalarField::Real, 7) => two_threes(),
        (ScalarField::Complex, 2) => sic_c2(),
        (ScalarField::Complex, 3) => hesse(),
        _ => return Err(Error::UnsupportedDimension { field, n }),
    };
    let etf = MaximalETF {
        field,
        n,
        angle: welch_angle(field, n)?,
        vectors,
    };
    debug_assert!(verify_etf(&etf.vectors)
        .map(|r| r.is_certified(field, 1e-12))
        .unwrap_or(false));
    Ok(etf)
}

fn real_plane() -> Vec<KVector> {
    (0..3)
        .map(|k| {
            let a = k as f64 * PI / 3.0;
            KVector::real(&[a.cos(), a.sin()])
        })
        .collect()
}

fn icosahedral() -> Vec<KVector> {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let s = (1.0 + g * g).sqrt();
    let mut out = Vec::with_capacity(6);
    for sign in [1.0, -1.0] {
        let base = [1.0 / s, sign * g / s, 0.0];
        for shift in 0..3 {
            let v: Vec<f64> = (0..3).map(|i| base[(i + 3 - shift) % 3]).collect();
            out.push(KVector::real(&v));
        }
    }
    out
}

fn two_threes() -> Vec<KVector> {
    // Householder reflection swapping the normalized all-ones vector with e_8;
    // its first seven columns span the sum-zero hyperplane.
    let m = 8;
    let mut h = DMatrix::<f64>::identity(m, m);
    let mut v = nalgebra::DVector::from_element(m, 1.0 / (m as f64).sqrt());
    v[m - 1] -= 1.0;
    let vv = v.dot(&v);
    h -= (&v * v.transpose()) * (2.0 / vv);

    let scale = 1.0 / 24f64.sqrt();
    let mut out = Vec::with_capacity(28);
    for a in 0..m {
        for b in a + 1..m {
            let mut x = nalgebra::DVector::from_element(m, -scale);
            x[a] = 3.0 * scale;
            x[b] = 3.0 * scale;
            let y = &h * x;
            let coords: Vec<f64> = (0..7).map(|i| y[i]).collect();
            out.push(KVector::real(&coords));
        }
    }
    out
}

fn omega(k: usize) -> Scalar {
    Scalar::from_polar(1.0, 2.0 * PI * (k % 3) as f64 / 3.0)
}

fn sic_c2() -> Vec<KVector> {
    let r = 1.0 / 3f64.sqrt();
    let mut out = vec![KVector::complex(vec![ONE, ZERO])];
    for k in 0..3 {
        out.push(KVector::complex(vec![
            Scalar::new(r, 0.0),
            omega(k) * (2f64.sqrt() * r),
        ]));
    }
    out
}

fn hesse() -> Vec<KVector> {
    let r = 1.0 / 2f64.sqrt();
    let mut out = Vec::with_capacity(9);
    for shift in 0..3 {
        for k in 0..3 {
            let base = [ZERO, ONE, -omega(k)];
            let mut v: Vec<Scalar> = (0..3).map(|i| base[(i + 3 - shift) % 3] * r).collect();
            let lead = *v.iter().find(|z| z.norm() > 0.0).expect("nonzero vector");
            let phase = sgn(lead).conj();
            v.iter_mut().for_each(|z| *z *= phase);
            out.push(KVector::complex(v));
        }
    }
    out
}

impl MaximalETF {
    /// Wraps user-supplied vectors (e.g. a real ETF in dimension 23) after
    /// certifying them at tolerance `tol`.
    pub fn from_vectors(vectors: Vec<KVector>, tol: f64) -> Result<Self> {
        let report = verify_etf(&vectors)?;
        let field = vectors.iter().fold(vectors[0].field(), |f, v| f.join(v.field()));
        if !report.is_certified(field, tol) {
            return Err(Error::VerificationFailed(format!(
                "not a maximal ETF: count {} (maximal: {}), unit residual {:.3e}, angle spread {:.3e}, tightness residual {:.3e}",
                report.count, report.is_maximal, report.unit_residual, report.angle_spread, report.tightness_residual
            )));
        }
        let vectors: Vec<KVector> = vectors.into_iter().map(|v| v.promote(field)).collect();
        Ok(MaximalETF {
            field,
            n: report.dim,
            angle: welch_angle(field, report.dim)?,
            vectors,
        })
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of vectors, `d_K(n)`.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[KVector] {
        &self.vectors
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// `‖w_j − C Σ_i sgn⟨w_j, w_i⟩ w_i‖` with `C = n/(dδ)`; `j` is 0-based.
    pub fn sign_reconstruction_residual(&self, j: usize) -> Result<f64> {
        let d = self.len();
        if j >= d {
            return Err(Error::IndexOutOfRange { index: j, len: d });
        }
        let c = rescale_constant(self.field, self.n)?;
        let wj = self.vectors[j].entries();
        let mut acc = vec![ZERO; self.n];
        for w in &self.vectors {
            let ip = dot(wj, w.entries());
            assert!(ip.norm() > 0.0, "ETF vectors are never orthogonal");
            let s = sgn(ip);
            for (a, x) in acc.iter_mut().zip(w.entries()) {
                *a += s * x;
            }
        }
        Ok(wj
            .iter()
            .zip(&acc)
            .map(|(w, a)| (w - a * c).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// Rescales to a tight frame with constant 1 and uniform weights `1/√d`.
    pub fn to_unit_tight_frame(&self) -> WeightedFrame {
        self.replicate(1).expect("k = 1 is valid")
    }

    /// Each vector repeated `k` times, scaled by `√(n/(kd))`, weights `1/√(kd)`.
    pub fn replicate(&self, k: usize) -> Result<WeightedFrame> {
        if k < 1 {
            return Err(Error::InvalidArgument("replication factor must be at least 1".into()));
        }
        let total = k * self.len();
        let scale = (self.n as f64 / total as f64).sqrt();
        let t = 1.0 / (total as f64).sqrt();
        let mut vectors = Vec::with_capacity(total);
        for w in &self.vectors {
            for _ in 0..k {
                vectors.push(w.scale(scale));
            }
        }
        WeightedFrame::new(self.field, self.n, vectors, vec![t; total])
    }

    /// Default tolerances under which builders are certified.
    pub fn verify(&self, tol: &ToleranceConfig) -> Result<EtfReport> {
        let report = verify_etf(&self.vectors)?;
        if !report.is_certified(self.field, tol.identity_tol) {
            return Err(Error::VerificationFailed(format!(
                "ETF residuals exceed {:e}",
                tol.identity_tol
            )));
        }
        Ok(report)
    }
}

/// The (field, n) pairs with a builder.
pub const SUPPORTED: [(ScalarField, usize); 5] = [
    (ScalarField::Real, 2),
    (ScalarField::Real, 3),
    (ScalarField::Real, 7),
    (ScalarField::Complex, 2),
    (ScalarField::Complex, 3),
];

/// Parses tags like `R2`, `C3`.
pub fn parse_tag(tag: &str) -> Result<(ScalarField, usize)> {
    let mut chars = tag.chars();
    let f = chars
        .next()
        .ok_or_else(|| Error::Parse("empty ETF tag".into()))?;
    let field = ScalarField::parse(&f.to_string())?;
    let n: usize = chars
        .as_str()
        .parse()
        .map_err(|_| Error::Parse(format!("bad ETF tag '{tag}'")))?;
    Ok((field, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::delta_bound;
    use ScalarField::*;

    #[test]
    fn all_builders_certify() {
        for (f, n) in SUPPORTED {
            let etf = build_maximal_etf(f, n).unwrap();
            let r = verify_etf(etf.vectors()).unwrap();
            assert!(r.is_certified(f, 1e-12), "{f}{n}: {r:?}");
            assert_eq!(etf.len(), gerzon_bound(f, n).unwrap());
            for j in 0..etf.len() {
                assert!(etf.sign_reconstruction_residual(j).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn unsupported() {
        assert_eq!(
            build_maximal_etf(Real, 23),
            Err(Error::UnsupportedDimension { field: Real, n: 23 })
        );
        assert!(build_maximal_etf(Complex, 4).is_err());
    }

    #[test]
    fn c2_matches_listing() {
        let etf = build_maximal_etf(Complex, 2).unwrap();
        let ip = dot(etf.vectors()[0].entries(), etf.vectors()[1].entries());
        assert!((ip - Scalar::new(1.0 / 3f64.sqrt(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn hesse_phase_convention() {
        let etf = build_maximal_etf(Complex, 3).unwrap();
        for v in etf.vectors() {
            let lead = v.entries().iter().find(|z| z.norm() > 1e-15).unwrap();
            assert!(lead.im.abs() < 1e-15 && lead.re > 0.0);
        }
    }

    #[test]
    fn orthonormal_basis_report() {
        let basis: Vec<KVector> = (0..3).map(|k| KVector::basis(Real, 3, k)).collect();
        let r = verify_etf(&basis).unwrap();
        assert_eq!(r.angle_value, 0.0);
        assert!(!r.is_maximal);
        assert!(r.tightness_residual < 1e-15);
    }

    #[test]
    fn index_out_of_range() {
        let etf = build_maximal_etf(Real, 2).unwrap();
        assert_eq!(
            etf.sign_reconstruction_residual(3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        );
    }

    #[test]
    fn replicate_value() {
        let etf = build_maximal_etf(Complex, 2).unwrap();
        let f = etf.replicate(3).unwrap();
        assert_eq!(f.len(), 12);
        let phi = f.objective_phi().unwrap();
        assert!((phi - delta_bound(Complex, 2).unwrap()).abs() < 1e-12);
        assert!(etf.replicate(0).is_err());
    }

    #[test]
    fn from_vectors_rejects_non_etf() {
        let basis: Vec<KVector> = (0..3).map(|k| KVector::basis(Real, 3, k)).collect();
        assert!(MaximalETF::from_vectors(basis, 1e-9).is_err());
        let etf = build_maximal_etf(Real, 7).unwrap();
        let again = MaximalETF::from_vectors(etf.vectors().to_vec(), 1e-12).unwrap();
        assert_eq!(again.n(), 7);
    }

    #[test]
    fn tags() {
        assert_eq!(parse_tag("R7").unwrap(), (Real, 7));
        assert_eq!(parse_tag("C2").unwrap(), (Complex, 2));
        assert!(parse_tag("Q2").is_err());
    }
}
