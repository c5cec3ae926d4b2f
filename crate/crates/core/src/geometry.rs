//! Dual balls as absolutely convex hulls, zonotopes, and containment
//! queries between them, each answered with a checkable certificate.
//!
//! Real queries are exact linear programs. Complex queries go through the
//! SOC feasibility kernel, with a phase-discretized LP available as a cross
//! check.

use crate::constants::{rescale_constant, ToleranceConfig};
use crate::error::{Error, Result};
use crate::etf::MaximalETF;
use crate::field::{dot, KMatrix, KVector, Scalar, ScalarField, ZERO};
use crate::linalg::rank;
use crate::solver::lp::{solve_lp_with, LinearProgram, LpStatus, Relation, Sense};
use crate::solver::soc::{solve_soc_feasibility, ConeBlock, SocFeasibility, SocStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// The dual unit ball `absconv{f_j}` of the norm `‖x‖ = max_j |⟨x, f_j⟩|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBallSpec {
    field: ScalarField,
    n: usize,
    functionals: Vec<KVector>,
}

/// `scale · Z(g_1, …, g_N)`, where `Z = {Σ a_i g_i : |a_i| ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonotopeSpec {
    pub generators: Vec<KVector>,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// Coefficients reconstructing the query point, with the reconstruction error.
    Membership { coefficients: Vec<Scalar>, residual: f64 },
    /// `y` normalized so that the set's support function at `y` is 1 (or
    /// `‖y‖ = 1` when that support is 0); `margin = Re⟨x, y⟩ − support(y)`.
    Separation { functional: KVector, margin: f64 },
}

impl Certificate {
    pub fn is_membership(&self) -> bool {
        matches!(self, Certificate::Membership { .. })
    }
}

impl DualBallSpec {
    pub fn new(field: ScalarField, n: usize, functionals: Vec<KVector>) -> Result<Self> {
        if functionals.is_empty() {
            return Err(Error::RankDeficient { rank: 0, expected: n });
        }
        for f in &functionals {
            if f.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: f.dim(),
                });
            }
            if field == ScalarField::Real && f.field() == ScalarField::Complex {
                return Err(Error::FieldMismatch {
                    left: field,
                    right: f.field(),
                });
            }
        }
        let functionals: Vec<KVector> = functionals.into_iter().map(|f| f.promote(field)).collect();
        let m = KMatrix::from_row_vectors(&functionals)?;
        let r = rank(m.data(), 1e-10);
        if r < n {
            return Err(Error::RankDeficient { rank: r, expected: n });
        }
        Ok(DualBallSpec { field, n, functionals })
    }

    pub fn from_etf(etf: &MaximalETF) -> Self {
        DualBallSpec {
            field: etf.field(),
            n: etf.n(),
            functionals: etf.vectors().to_vec(),
        }
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn functionals(&self) -> &[KVector] {
        &self.functionals
    }

    /// `‖x‖ = max_j |⟨x, f_j⟩|`.
    pub fn norm_of(&self, x: &KVector) -> f64 {
        absconv_support(&self.functionals, x)
    }
}

impl ZonotopeSpec {
    pub fn new(generators: Vec<KVector>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("zonotope scale {scale}")));
        }
        if generators.is_empty() {
            return Err(Error::InvalidArgument("zonotope without generators".into()));
        }
        Ok(ZonotopeSpec { generators, scale })
    }

    /// `n/(dδ) · Z(w)` for a maximal ETF.
    pub fn rescaled_etf(etf: &MaximalETF) -> Result<Self> {
        Self::new(etf.vectors().to_vec(), rescale_constant(etf.field(), etf.n())?)
    }

    /// `h(y) = scale · Σ_i |⟨g_i, y⟩|`.
    pub fn support(&self, y: &KVector) -> f64 {
        self.scale
            * self
                .generators
                .iter()
                .map(|g| dot(g.entries(), y.entries()).norm())
                .sum::<f64>()
    }
}

/// Support function of `absconv{g_j}`: `max_j |⟨g_j, y⟩|`.
pub fn absconv_support(gens: &[KVector], y: &KVector) -> f64 {
    gens.iter()
        .map(|g| dot(g.entries(), y.entries()).norm())
        .fold(0.0, f64::max)
}

fn common_dim(gens: &[KVector], x: &KVector) -> Result<usize> {
    let n = x.dim();
    if gens.is_empty() {
        return Err(Error::InvalidArgument("no generators".into()));
    }
    for g in gens {
        if g.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: g.dim(),
            });
        }
    }
    Ok(n)
}

fn all_real(gens: &[KVector], x: &KVector) -> bool {
    x.field() == ScalarField::Real && gens.iter().all(|g| g.field() == ScalarField::Real)
}

fn reconstruct(gens: &[KVector], coeffs: &[Scalar], scale: f64, x: &KVector) -> f64 {
    let mut acc = vec![ZERO; x.dim()];
    for (g, a) in gens.iter().zip(coeffs) {
        for (s, v) in acc.iter_mut().zip(g.entries()) {
            *s += a * v * scale;
        }
    }
    acc.iter()
        .zip(x.entries())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Builds a separation certificate from a raw functional, normalizing by the
/// support value computed here, independently of any solver output.
fn separation(x: &KVector, y: Vec<Scalar>, support: impl Fn(&KVector) -> f64) -> Result<Certificate> {
    let field = if y.iter().all(|z| z.im == 0.0) && x.field() == ScalarField::Real {
        ScalarField::Real
    } else {
        ScalarField::Complex
    };
    let y = KVector::new(field, y)?;
    let h = support(&y);
    let y = if h > 1e-14 * y.norm() {
        y.scale(1.0 / h)
    } else {
        y.normalized()
    };
    let margin = dot(x.entries(), y.entries()).re - support(&y);
    Ok(Certificate::Separation {
        functional: y,
        margin,
    })
}

/// Is `x ∈ absconv{g_j} = {Σ α_j g_j : Σ |α_j| ≤ 1}`?
pub fn absconv_contains(gens: &[KVector], x: &KVector, tol: &ToleranceConfig) -> Result<Certificate> {
    let n = common_dim(gens, x)?;
    let d = gens.len();
    if all_real(gens, x) {
        let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0; 2 * d]);
        for k in 0..n {
            let mut row = vec![0.0; 2 * d];
            for (j, g) in gens.iter().enumerate() {
                row[j] = g.entries()[k].re;
                row[d + j] = -g.entries()[k].re;
            }
            lp.add_constraint(row, Relation::Eq, x.entries()[k].re);
        }
        let sol = solve_lp_with(&lp, tol.lp_tol)?;
        return match sol.status {
            LpStatus::Optimal if sol.objective <= 1.0 + tol.lp_tol => {
                let coefficients: Vec<Scalar> =
                    (0..d).map(|j| Scalar::new(sol.x[j] - sol.x[d + j], 0.0)).collect();
                let residual = reconstruct(gens, &coefficients, 1.0, x);
                Ok(Certificate::Membership {
                    coefficients,
                    residual,
                })
            }
            LpStatus::Optimal => {
                let y = sol.dual.iter().map(|&v| Scalar::new(v, 0.0)).collect();
                separation(x, y, |y| absconv_support(gens, y))
            }
            LpStatus::Infeasible => {
                let rho = &sol.farkas.as_ref().expect("infeasible LPs carry a certificate").rows;
                let y = rho.iter().map(|&v| Scalar::new(-v, 0.0)).collect();
                separation(x, y, |y| absconv_support(gens, y))
            }
            LpStatus::Unbounded => Err(Error::NumericalFailure("gauge LP reported unbounded".into())),
        };
    }

    let groups: Vec<Vec<usize>> = (0..d).map(|j| vec![2 * j, 2 * j + 1]).collect();
    let p = complex_system(gens, x, 1.0, vec![ConeBlock::GroupBudget { groups, budget: 1.0 }]);
    soc_certificate(gens, x, 1.0, &p, tol, |y| absconv_support(gens, y))
}

/// Equalities `scale · Σ α_j g_j = x` split into real and imaginary rows,
/// with variables `(Re α_j, Im α_j)`.
fn complex_system(gens: &[KVector], x: &KVector, scale: f64, blocks: Vec<ConeBlock>) -> SocFeasibility {
    let n = x.dim();
    let d = gens.len();
    let mut rows = Vec::with_capacity(2 * n);
    let mut rhs = Vec::with_capacity(2 * n);
    for k in 0..n {
        let mut re = vec![0.0; 2 * d];
        let mut im = vec![0.0; 2 * d];
        for (j, g) in gens.iter().enumerate() {
            let z = g.entries()[k] * scale;
            re[2 * j] = z.re;
            re[2 * j + 1] = -z.im;
            im[2 * j] = z.im;
            im[2 * j + 1] = z.re;
        }
        rows.push(re);
        rhs.push(x.entries()[k].re);
        rows.push(im);
        rhs.push(x.entries()[k].im);
    }
    SocFeasibility {
        num_vars: 2 * d,
        eq_rows: rows,
        eq_rhs: rhs,
        blocks,
    }
}

fn soc_certificate(
    gens: &[KVector],
    x: &KVector,
    scale: f64,
    p: &SocFeasibility,
    tol: &ToleranceConfig,
    support: impl Fn(&KVector) -> f64,
) -> Result<Certificate> {
    let sol = solve_soc_feasibility(p, tol.lp_tol)?;
    match sol.status {
        SocStatus::Feasible => {
            let v = sol.witness.expect("feasible solutions carry a witness");
            let coefficients: Vec<Scalar> = (0..gens.len()).map(|j| Scalar::new(v[2 * j], v[2 * j + 1])).collect();
            let residual = reconstruct(gens, &coefficients, scale, x);
            Ok(Certificate::Membership {
                coefficients,
                residual,
            })
        }
        SocStatus::Infeasible => {
            let lam = sol.separator.expect("infeasible solutions carry a separator");
            let y = (0..x.dim()).map(|k| Scalar::new(lam[2 * k], lam[2 * k + 1])).collect();
            let cert = separation(x, y, support)?;
            match &cert {
                Certificate::Separation { margin, .. } if *margin > 0.0 => Ok(cert),
                _ => Err(Error::NumericalFailure(
                    "SOC separator did not separate after re-verification".into(),
                )),
            }
        }
    }
}

/// Is `x ∈ scale · Z(g)`?
pub fn zonotope_contains(z: &ZonotopeSpec, x: &KVector, tol: &ToleranceConfig) -> Result<Certificate> {
    let gens = &z.generators;
    let n = common_dim(gens, x)?;
    let d = gens.len();
    if all_real(gens, x) {
        // min s subject to |a_i| ≤ s and scale · G a = x
        let mut obj = vec![0.0; d + 1];
        obj[d] = 1.0;
        let mut lp = LinearProgram::new(Sense::Minimize, obj);
        for j in 0..d {
            lp.set_free(j);
        }
        for k in 0..n {
            let mut row = vec![0.0; d + 1];
            for (j, g) in gens.iter().enumerate() {
                row[j] = z.scale * g.entries()[k].re;
            }
            lp.add_constraint(row, Relation::Eq, x.entries()[k].re);
        }
        for j in 0..d {
            lp.add_sparse(&[(j, 1.0), (d, -1.0)], Relation::Le, 0.0);
            lp.add_sparse(&[(j, -1.0), (d, -1.0)], Relation::Le, 0.0);
        }
        let sol = solve_lp_with(&lp, tol.lp_tol)?;
        return match sol.status {
            LpStatus::Optimal if sol.objective <= 1.0 + tol.lp_tol => {
                let coefficients: Vec<Scalar> = (0..d).map(|j| Scalar::new(sol.x[j], 0.0)).collect();
                let residual = reconstruct(gens, &coefficients, z.scale, x);
                Ok(Certificate::Membership {
                    coefficients,
                    residual,
                })
            }
            LpStatus::Optimal => {
                let y = sol.dual[..n].iter().map(|&v| Scalar::new(v, 0.0)).collect();
                separation(x, y, |y| z.support(y))
            }
            LpStatus::Infeasible => {
                let rho = &sol.farkas.as_ref().expect("infeasible LPs carry a certificate").rows;
                let y = rho[..n].iter().map(|&v| Scalar::new(-v, 0.0)).collect();
                separation(x, y, |y| z.support(y))
            }
            LpStatus::Unbounded => Err(Error::NumericalFailure("zonotope LP reported unbounded".into())),
        };
    }

    let blocks = (0..d)
        .map(|j| ConeBlock::Ball {
            vars: vec![2 * j, 2 * j + 1],
            radius: 1.0,
        })
        .collect();
    let p = complex_system(gens, x, z.scale, blocks);
    soc_certificate(gens, x, z.scale, &p, tol, |y| z.support(y))
}

/// Independent re-check of an absconv certificate.
pub fn verify_absconv_certificate(gens: &[KVector], x: &KVector, cert: &Certificate, tol: &ToleranceConfig) -> bool {
    match cert {
        Certificate::Membership { coefficients, .. } => {
            let l1: f64 = coefficients.iter().map(|a| a.norm()).sum();
            l1 <= 1.0 + tol.lp_tol && reconstruct(gens, coefficients, 1.0, x) < tol.lp_tol
        }
        Certificate::Separation { functional, .. } => {
            let m = dot(x.entries(), functional.entries()).re - absconv_support(gens, functional);
            m > tol.lp_tol
        }
    }
}

/// Independent re-check of a zonotope certificate.
pub fn verify_zonotope_certificate(z: &ZonotopeSpec, x: &KVector, cert: &Certificate, tol: &ToleranceConfig) -> bool {
    match cert {
        Certificate::Membership { coefficients, .. } => {
            coefficients.iter().all(|a| a.norm() <= 1.0 + tol.lp_tol)
                && reconstruct(&z.generators, coefficients, z.scale, x) < tol.lp_tol
        }
        Certificate::Separation { functional, .. } => {
            let m = dot(x.entries(), functional.entries()).re - z.support(functional);
            m > tol.lp_tol
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseApprox {
    /// Coefficients in the polygon inscribed in the unit disk: a subset.
    Inner,
    /// Coefficients in the polygon circumscribing the unit disk: a superset.
    Outer,
}

/// Complex absconv membership with each coefficient disk replaced by a
/// regular `phases`-gon, decided by LP.
pub fn phase_lp_contains(gens: &[KVector], x: &KVector, phases: usize, approx: PhaseApprox, tol: &ToleranceConfig) -> Result<bool> {
    let n = common_dim(gens, x)?;
    if phases < 3 {
        return Err(Error::InvalidArgument("need at least three phases".into()));
    }
    let d = gens.len();
    let stretch = match approx {
        PhaseApprox::Inner => 1.0,
        PhaseApprox::Outer => 1.0 / (PI / phases as f64).cos(),
    };
    let nv = d * phases;
    let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0; nv]);
    for k in 0..n {
        let mut re = vec![0.0; nv];
        let mut im = vec![0.0; nv];
        for (j, g) in gens.iter().enumerate() {
            for p in 0..phases {
                let w = Scalar::from_polar(stretch, 2.0 * PI * p as f64 / phases as f64) * g.entries()[k];
                re[j * phases + p] = w.re;
                im[j * phases + p] = w.im;
            }
        }
        lp.add_constraint(re, Relation::Eq, x.entries()[k].re);
        lp.add_constraint(im, Relation::Eq, x.entries()[k].im);
    }
    let sol = solve_lp_with(&lp, tol.lp_tol)?;
    Ok(sol.status == LpStatus::Optimal && sol.objective <= 1.0 + tol.lp_tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionReport {
    pub all_contained: bool,
    pub max_residual: f64,
}

/// Checks `w_j ∈ C · Z(w)` for every j using the coefficients
/// `a_i = sgn⟨w_j, w_i⟩`.
pub fn inclusion_check(etf: &MaximalETF, tol: &ToleranceConfig) -> InclusionReport {
    let mut worst = 0.0f64;
    for j in 0..etf.len() {
        worst = worst.max(etf.sign_reconstruction_residual(j).unwrap_or(f64::INFINITY));
    }
    InclusionReport {
        all_contained: worst < tol.residual_tol,
        max_residual: worst,
    }
}

/// `C Σ |⟨x, w_i⟩| / max |⟨x, w_i⟩|`: the ratio of the two norms whose dual
/// balls are `C · Z(w)` and `absconv{w}`.
pub fn norm_ratio(etf: &MaximalETF, x: &KVector) -> f64 {
    let c = rescale_constant(etf.field(), etf.n()).unwrap_or(f64::NAN);
    let abs: Vec<f64> = etf.vectors().iter().map(|w| dot(x.entries(), w.entries()).norm()).collect();
    let max = abs.iter().copied().fold(0.0, f64::max);
    c * abs.iter().sum::<f64>() / max
}

pub const WITNESS_SAMPLES: usize = 10_000;

/// A point where the zonotope norm strictly exceeds the absconv norm, i.e.
/// a proof that `absconv{w} ≠ C · Z(w)`. `None` when no sample and local
/// refinement gets the ratio above `1 + lp_tol`.
pub fn strictness_witness(etf: &MaximalETF, tol: &ToleranceConfig) -> Option<KVector> {
    strictness_witness_with(etf, WITNESS_SAMPLES, 0, tol)
}

pub fn strictness_witness_with(etf: &MaximalETF, samples: usize, seed: u64, tol: &ToleranceConfig) -> Option<KVector> {
    let (field, n) = (etf.field(), etf.n());
    if field == ScalarField::Complex && n == 2 {
        let x = KVector::complex(vec![ZERO, Scalar::new(1.0, 0.0)]);
        if norm_ratio(etf, &x) - 1.0 > tol.lp_tol {
            return Some(x);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = KVector::basis(field, n, 0);
    let mut best_ratio = norm_ratio(etf, &best);
    for _ in 0..samples {
        let x = KVector::random_unit(field, n, &mut rng);
        let r = norm_ratio(etf, &x);
        if r > best_ratio {
            best_ratio = r;
            best = x;
        }
    }
    // random-direction hill climbing with a shrinking step
    let mut step = 0.1;
    while step > 1e-10 {
        let mut improved = false;
        for _ in 0..40 {
            let dir = KVector::random_unit(field, n, &mut rng);
            let cand = best.add(&dir.scale(step)).ok()?.normalized();
            let r = norm_ratio(etf, &cand);
            if r > best_ratio {
                best_ratio = r;
                best = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best_ratio - 1.0 > tol.lp_tol).then_some(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SandwichSide {
    /// `w_i ∈ absconv{T f_j}` failed.
    Left,
    /// `T f_j ∈ C · Z(w)` failed.
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub is_extremal_for_t: bool,
    pub failing_item: Option<(SandwichSide, usize, Certificate)>,
}

/// Tests `absconv{w} ⊆ T(B) ⊆ C · Z(w)` for the supplied `T`.
pub fn sandwich_test(ball: &DualBallSpec, etf: &MaximalETF, t: &KMatrix, tol: &ToleranceConfig) -> Result<SandwichReport> {
    let n = etf.n();
    if ball.n() != n || t.rows() != n || t.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if ball.n() != n { ball.n() } else { t.rows().max(t.cols()) },
        });
    }
    if rank(t.data(), 1e-12) < n {
        return Err(Error::SingularTransform);
    }
    let images: Vec<KVector> = ball
        .functionals()
        .iter()
        .map(|f| t.mul_vec(f))
        .collect::<Result<_>>()?;
    for (i, w) in etf.vectors().iter().enumerate() {
        let cert = absconv_contains(&images, w, tol)?;
        if !cert.is_membership() {
            return Ok(SandwichReport {
                is_extremal_for_t: false,
                failing_item: Some((SandwichSide::Left, i, cert)),
            });
        }
    }
    let z = ZonotopeSpec::rescaled_etf(etf)?;
    for (j, y) in images.iter().enumerate() {
        let cert = zonotope_contains(&z, y, tol)?;
        if !cert.is_membership() {
            return Ok(SandwichReport {
                is_extremal_for_t: false,
                failing_item: Some((SandwichSide::Right, j, cert)),
            });
        }
    }
    Ok(SandwichReport {
        is_extremal_for_t: true,
        failing_item: None,
    })
}

/// Number of functionals left after discarding, one at a time, those lying
/// in the absolutely convex hull of the others.
pub fn minimal_generator_count(functionals: &[KVector], tol: &ToleranceConfig) -> Result<usize> {
    let mut keep: Vec<KVector> = functionals.to_vec();
    let mut j = 0;
    while j < keep.len() {
        let others: Vec<KVector> = keep
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, v)| v.clone())
            .collect();
        if !others.is_empty() && absconv_contains(&others, &keep[j], tol)?.is_membership() {
            keep.remove(j);
        } else {
            j += 1;
        }
    }
    Ok(keep.len())
}

pub const ZONOTOPE_SHRINK: f64 = 1.0 - 1e-6;
pub const MAX_REJECTIONS: usize = 1_000_000;

/// Nested dual balls `absconv{w} ⊂ K_1 ⊂ … ⊂ K_count`, each obtained by
/// adding one point of the shrunken zonotope lying outside the previous
/// ball and keeping every earlier generator extreme.
pub fn extremal_family(etf: &MaximalETF, count: usize, seed: u64, tol: &ToleranceConfig) -> Result<Vec<DualBallSpec>> {
    if etf.field() == ScalarField::Real && etf.n() == 2 {
        return Err(Error::NoStrictGap);
    }
    if count < 1 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let (field, n) = (etf.field(), etf.n());
    let c = rescale_constant(field, n)?;
    let zono = ZonotopeSpec::rescaled_etf(etf)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current: Vec<KVector> = etf.vectors().to_vec();
    let mut out = Vec::with_capacity(count);
    let mut rejections = 0usize;

    while out.len() < count {
        if rejections >= MAX_REJECTIONS {
            return Err(Error::SamplingExhausted { rejections });
        }
        let mut x = vec![ZERO; n];
        for w in etf.vectors() {
            let a = match field {
                ScalarField::Real => {
                    let u: f64 = rng.random_range(-1.0..=1.0);
                    let v = if rng.random_bool(0.5) { u.signum() } else { u };
                    Scalar::new(v, 0.0)
                }
                ScalarField::Complex => {
                    let r = if rng.random_bool(0.5) { 1.0 } else { rng.random::<f64>() };
                    Scalar::from_polar(r, rng.random_range(0.0..2.0 * PI))
                }
            };
            for (s, v) in x.iter_mut().zip(w.entries()) {
                *s += a * v * (c * ZONOTOPE_SHRINK);
            }
        }
        let x = KVector::new(field, x)?;

        if absconv_contains(&current, &x, tol)?.is_membership() {
            rejections += 1;
            continue;
        }
        if !zonotope_contains(&zono, &x, tol)?.is_membership() {
            rejections += 1;
            continue;
        }
        let mut next = current.clone();
        next.push(x);
        if minimal_generator_count(&next, tol)? != next.len() {
            rejections += 1;
            continue;
        }
        current = next;
        out.push(DualBallSpec::new(field, n, current.clone())?);
    }
    Ok(out)
}
