//! Scalars, vectors and matrices over K = R or K = C.
//!
//! Everything is stored as `Complex64`; a [`ScalarField`] tag records whether
//! the object lives over the reals, in which case every imaginary part is
//! exactly zero.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;

pub type Scalar = Complex64;

pub const ZERO: Scalar = Complex64::new(0.0, 0.0);
pub const ONE: Scalar = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScalarField {
    #[serde(rename = "R")]
    Real,
    #[serde(rename = "C")]
    Complex,
}

impl ScalarField {
    pub fn symbol(self) -> &'static str {
        match self {
            ScalarField::Real => "R",
            ScalarField::Complex => "C",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "R" | "r" | "real" | "Real" => Ok(ScalarField::Real),
            "C" | "c" | "complex" | "Complex" => Ok(ScalarField::Complex),
            other => Err(Error::Parse(format!("unknown field '{other}'"))),
        }
    }

    /// The smallest field containing both.
    pub fn join(self, other: ScalarField) -> ScalarField {
        if self == ScalarField::Complex || other == ScalarField::Complex {
            ScalarField::Complex
        } else {
            ScalarField::Real
        }
    }

    fn admits(self, z: Scalar) -> bool {
        self == ScalarField::Complex || z.im == 0.0
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// The unimodular part of `z`; `sgn(0) = 1` by convention.
pub fn sgn(z: Scalar) -> Scalar {
    let r = z.norm();
    if r == 0.0 {
        ONE
    } else {
        z / r
    }
}

/// `Σ x_k conj(y_k)` on raw slices. Callers check lengths.
pub(crate) fn dot(x: &[Scalar], y: &[Scalar]) -> Scalar {
    x.iter().zip(y).map(|(a, b)| a * b.conj()).sum()
}

pub(crate) fn norm_sqr(x: &[Scalar]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KVector {
    field: ScalarField,
    entries: Vec<Scalar>,
}

impl KVector {
    pub fn new(field: ScalarField, entries: Vec<Scalar>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if let Some(z) = entries.iter().find(|z| !field.admits(**z)) {
            return Err(Error::InvalidArgument(format!(
                "entry {z} has a nonzero imaginary part in a real vector"
            )));
        }
        Ok(KVector { field, entries })
    }

    pub fn real(entries: &[f64]) -> Self {
        assert!(!entries.is_empty(), "empty vector");
        KVector {
            field: ScalarField::Real,
            entries: entries.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn complex(entries: Vec<Scalar>) -> Self {
        assert!(!entries.is_empty(), "empty vector");
        KVector {
            field: ScalarField::Complex,
            entries,
        }
    }

    pub fn zeros(field: ScalarField, dim: usize) -> Self {
        KVector {
            field,
            entries: vec![ZERO; dim],
        }
    }

    /// Canonical basis vector `e_k` (0-based).
    pub fn basis(field: ScalarField, dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(field, dim);
        v.entries[k] = ONE;
        v
    }

    /// Uniformly distributed unit vector (Gaussian draw, normalized).
    pub fn random_unit<R: rand::Rng + ?Sized>(field: ScalarField, dim: usize, rng: &mut R) -> Self {
        loop {
            let entries: Vec<Scalar> = (0..dim)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = match field {
                        ScalarField::Real => 0.0,
                        ScalarField::Complex => rng.sample(StandardNormal),
                    };
                    Complex64::new(re, im)
                })
                .collect();
            let v = KVector { field, entries };
            if v.norm() > 1e-8 {
                return v.normalized();
            }
        }
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Scalar] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Scalar> {
        self.entries
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.entries).sqrt()
    }

    pub fn scale(&self, s: f64) -> KVector {
        KVector {
            field: self.field,
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    /// Multiplication by an arbitrary scalar; promotes to complex when needed.
    pub fn scale_by(&self, s: Scalar) -> KVector {
        let field = if s.im == 0.0 {
            self.field
        } else {
            ScalarField::Complex
        };
        KVector {
            field,
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    pub fn normalized(&self) -> KVector {
        let n = self.norm();
        if n == 0.0 {
            self.clone()
        } else {
            self.scale(1.0 / n)
        }
    }

    pub fn add(&self, other: &KVector) -> Result<KVector> {
        check_compatible(self, other)?;
        Ok(KVector {
            field: self.field,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &KVector) -> Result<KVector> {
        check_compatible(self, other)?;
        Ok(KVector {
            field: self.field,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Largest absolute difference between entries.
    pub fn max_abs_diff(&self, other: &KVector) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Same vector re-tagged over a larger (or equal) field.
    pub fn promote(&self, field: ScalarField) -> KVector {
        KVector {
            field: self.field.join(field),
            entries: self.entries.clone(),
        }
    }
}

fn check_compatible(x: &KVector, y: &KVector) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    if x.field != y.field {
        return Err(Error::FieldMismatch {
            left: x.field,
            right: y.field,
        });
    }
    Ok(())
}

/// `⟨x, y⟩ = Σ x_k conj(y_k)`: linear in `x`, conjugate-linear in `y`.
pub fn inner(x: &KVector, y: &KVector) -> Result<Scalar> {
    check_compatible(x, y)?;
    Ok(dot(&x.entries, &y.entries))
}

/// Dense matrix over K, backed by `nalgebra`.
#[derive(Debug, Clone, PartialEq)]
pub struct KMatrix {
    field: ScalarField,
    data: DMatrix<Scalar>,
}

impl KMatrix {
    pub fn zeros(field: ScalarField, rows: usize, cols: usize) -> Self {
        KMatrix {
            field,
            data: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(field: ScalarField, n: usize) -> Self {
        KMatrix {
            field,
            data: DMatrix::identity(n, n),
        }
    }

    pub fn from_rows(field: ScalarField, rows: &[Vec<Scalar>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let c = rows[0].len();
        if c == 0 {
            return Err(Error::InvalidDimension(0));
        }
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    found: row.len(),
                });
            }
            if let Some(z) = row.iter().find(|z| !field.admits(**z)) {
                return Err(Error::InvalidArgument(format!(
                    "entry {z} has a nonzero imaginary part in a real matrix"
                )));
            }
        }
        Ok(KMatrix {
            field,
            data: DMatrix::from_fn(r, c, |i, j| rows[i][j]),
        })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Scalar>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(ScalarField::Real, &rows)
    }

    /// Matrix whose rows are the given vectors.
    pub fn from_row_vectors(vectors: &[KVector]) -> Result<Self> {
        let first = vectors.first().ok_or(Error::InvalidDimension(0))?;
        let field = vectors.iter().fold(first.field, |f, v| f.join(v.field));
        let rows: Vec<Vec<Scalar>> = vectors.iter().map(|v| v.entries.clone()).collect();
        Self::from_rows(field, &rows)
    }

    pub(crate) fn from_dmatrix(field: ScalarField, mut data: DMatrix<Scalar>) -> Self {
        if field == ScalarField::Real {
            data.iter_mut().for_each(|z| z.im = 0.0);
        }
        KMatrix { field, data }
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> Scalar {
        self.data[(i, j)]
    }

    pub(crate) fn data(&self) -> &DMatrix<Scalar> {
        &self.data
    }

    pub fn row(&self, i: usize) -> KVector {
        KVector {
            field: self.field,
            entries: self.data.row(i).iter().copied().collect(),
        }
    }

    pub fn column(&self, j: usize) -> KVector {
        KVector {
            field: self.field,
            entries: self.data.column(j).iter().copied().collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<Scalar>> {
        (0..self.rows())
            .map(|i| self.data.row(i).iter().copied().collect())
            .collect()
    }

    pub fn adjoint(&self) -> KMatrix {
        KMatrix {
            field: self.field,
            data: self.data.adjoint(),
        }
    }

    pub fn mul(&self, other: &KMatrix) -> Result<KMatrix> {
        if self.cols() != other.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                found: other.rows(),
            });
        }
        Ok(KMatrix {
            field: self.field.join(other.field),
            data: &self.data * &other.data,
        })
    }

    pub fn mul_vec(&self, x: &KVector) -> Result<KVector> {
        if self.cols() != x.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                found: x.dim(),
            });
        }
        let entries = (0..self.rows())
            .map(|i| {
                self.data
                    .row(i)
                    .iter()
                    .zip(&x.entries)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(KVector {
            field: self.field.join(x.field),
            entries,
        })
    }

    pub fn sub(&self, other: &KMatrix) -> Result<KMatrix> {
        if self.data.shape() != other.data.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.rows() * self.cols(),
                found: other.rows() * other.cols(),
            });
        }
        Ok(KMatrix {
            field: self.field.join(other.field),
            data: &self.data - &other.data,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> Scalar {
        let k = self.rows().min(self.cols());
        (0..k).map(|i| self.data[(i, i)]).sum()
    }
}
