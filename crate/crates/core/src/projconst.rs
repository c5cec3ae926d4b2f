//! Relative projection constants of subspaces of `ℓ∞^N` by linear
//! programming, and the trace-duality operators certifying them.

use crate::constants::{delta_bound, rescale_constant, ToleranceConfig};
use crate::error::{Error, Result};
use crate::etf::MaximalETF;
use crate::field::{dot, sgn, KMatrix, KVector, Scalar, ScalarField, ZERO};
use crate::geometry::DualBallSpec;
use crate::linalg::{lstsq, rank};
use crate::solver::lp::{solve_lp_with, LinearProgram, LpStatus, Relation, Sense};
use nalgebra::DMatrix;

/// `X = {V c : c ∈ K^n} ⊆ ℓ∞^N` for an N×n matrix `V` of rank n.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceOfLinf {
    basis: KMatrix,
}

impl SubspaceOfLinf {
    pub fn new(basis: KMatrix) -> Result<Self> {
        let n = basis.cols();
        let r = rank(basis.data(), 1e-10);
        if r < n || basis.rows() < n {
            return Err(Error::RankDeficient { rank: r, expected: n });
        }
        Ok(SubspaceOfLinf { basis })
    }

    pub fn field(&self) -> ScalarField {
        self.basis.field()
    }

    /// Ambient dimension N.
    pub fn big_n(&self) -> usize {
        self.basis.rows()
    }

    pub fn n(&self) -> usize {
        self.basis.cols()
    }

    pub fn basis(&self) -> &KMatrix {
        &self.basis
    }

    /// Sup-norm of `V c`.
    pub fn norm_of(&self, c: &KVector) -> Result<f64> {
        let v = self.basis.mul_vec(c)?;
        Ok(v.entries().iter().map(|z| z.norm()).fold(0.0, f64::max))
    }
}

/// Embeds `(K^n, max_j |⟨·, f_j⟩|)` into `ℓ∞^N`: row j of `V` is `conj(f_j)`.
pub fn embed_norm(ball: &DualBallSpec) -> Result<SubspaceOfLinf> {
    let rows: Vec<Vec<Scalar>> = ball
        .functionals()
        .iter()
        .map(|f| f.entries().iter().map(|z| z.conj()).collect())
        .collect();
    SubspaceOfLinf::new(KMatrix::from_rows(ball.field(), &rows)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinProjection {
    /// `‖P‖_{∞→∞}` of the returned projection.
    pub lambda_rel: f64,
    /// LP optimum (agrees with `lambda_rel` up to solver tolerance).
    pub lp_objective: f64,
    pub projection: KMatrix,
    /// `max |P² − P|`.
    pub idempotence_residual: f64,
    /// `max |P V − V|`.
    pub invariance_residual: f64,
    pub iterations: usize,
}

/// Max absolute row sum, the `ℓ∞ → ℓ∞` operator norm.
pub fn linf_operator_norm(p: &KMatrix) -> f64 {
    (0..p.rows())
        .map(|i| (0..p.cols()).map(|j| p.get(i, j).norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// The LP behind [`min_projection_lp`]. Variables: `W` (N×n, free,
/// row-major), then `S⁺`, `S⁻` (N×N each), then the epigraph variable `λ`.
pub fn min_projection_program(s: &SubspaceOfLinf) -> Result<LinearProgram> {
    if s.field() == ScalarField::Complex {
        return Err(Error::ComplexUnsupported);
    }
    let (big_n, n) = (s.big_n(), s.n());
    let v = |i: usize, k: usize| s.basis.get(i, k).re;
    let nw = big_n * n;
    let sp = nw;
    let sm = nw + big_n * big_n;
    let lam = nw + 2 * big_n * big_n;
    let nv = lam + 1;
    let mut obj = vec![0.0; nv];
    obj[lam] = 1.0;
    let mut lp = LinearProgram::new(Sense::Minimize, obj);
    for j in 0..nw {
        lp.set_free(j);
    }
    // P_ij = Σ_k V_ik W_jk = S⁺_ij − S⁻_ij
    for i in 0..big_n {
        for j in 0..big_n {
            let mut terms: Vec<(usize, f64)> = (0..n).map(|k| (j * n + k, v(i, k))).collect();
            terms.push((sp + i * big_n + j, -1.0));
            terms.push((sm + i * big_n + j, 1.0));
            lp.add_sparse(&terms, Relation::Eq, 0.0);
        }
    }
    // Σ_j |P_ij| ≤ λ
    for i in 0..big_n {
        let mut terms: Vec<(usize, f64)> = Vec::with_capacity(2 * big_n + 1);
        for j in 0..big_n {
            terms.push((sp + i * big_n + j, 1.0));
            terms.push((sm + i * big_n + j, 1.0));
        }
        terms.push((lam, -1.0));
        lp.add_sparse(&terms, Relation::Le, 0.0);
    }
    // Wᵀ V = I
    for k in 0..n {
        for l in 0..n {
            let terms: Vec<(usize, f64)> = (0..big_n).map(|j| (j * n + k, v(j, l))).collect();
            lp.add_sparse(&terms, Relation::Eq, if k == l { 1.0 } else { 0.0 });
        }
    }
    Ok(lp)
}

/// Minimal projection from `ℓ∞^N` onto a real subspace: minimizes
/// `‖V Wᵀ‖_{∞→∞}` over `Wᵀ V = I`.
///
/// Solved by row generation on the program of [`min_projection_program`]:
/// each `Σ_j |P_ij| ≤ λ` is the family `Σ_j s_j P_ij ≤ λ` over sign vectors
/// `s`, and only the signs of iterates are added. Steps are confined to a
/// box around the incumbent; the loop ends when an unboxed relaxation, a
/// lower bound for the true optimum, meets the incumbent's norm.
pub fn min_projection_lp(s: &SubspaceOfLinf, tol: &ToleranceConfig) -> Result<MinProjection> {
    if s.field() == ScalarField::Complex {
        return Err(Error::ComplexUnsupported);
    }
    let (big_n, n) = (s.big_n(), s.n());
    let v = DMatrix::from_fn(big_n, n, |i, k| s.basis.get(i, k).re);
    let lam = big_n * n;

    let mut base = LinearProgram::new(Sense::Minimize, {
        let mut c = vec![0.0; lam + 1];
        c[lam] = 1.0;
        c
    });
    for j in 0..lam {
        base.set_free(j);
    }
    // every nonzero projection has norm at least 1
    base.set_bounds(lam, 1.0, f64::INFINITY);
    for k in 0..n {
        for l in 0..n {
            let terms: Vec<(usize, f64)> = (0..big_n).map(|j| (j * n + k, v[(j, l)])).collect();
            base.add_sparse(&terms, Relation::Eq, if k == l { 1.0 } else { 0.0 });
        }
    }

    // start from the orthogonal projection
    let gram = v.transpose() * &v;
    let gram_inv = gram
        .try_inverse()
        .ok_or(Error::RankDeficient { rank: n - 1, expected: n })?;
    let mut w = &v * gram_inv;
    let norm_of = |w: &DMatrix<f64>| {
        let p = &v * w.transpose();
        (0..big_n)
            .map(|i| p.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut seen = std::collections::HashSet::new();
    let mut lp = base;
    let mut iterations = 0;
    let mut best = norm_of(&w);
    let mut lower = 1.0f64;
    let slack = |x: f64| 0.1 * tol.lp_tol * (1.0 + x);
    // box radius around the incumbent; infinite once a boxed model is tight
    let mut radius = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut query = w.clone();
    let mut rounds = 0usize;
    loop {
        rounds += 1;
        if rounds > 100_000 {
            return Err(Error::NumericalFailure("minimal projection row generation stalled".into()));
        }
        let p = &v * query.transpose();
        for i in 0..big_n {
            let signs: Vec<bool> = p.row(i).iter().map(|&x| x < 0.0).collect();
            if seen.contains(&(i, signs.clone())) {
                continue;
            }
            let mut terms: Vec<(usize, f64)> = Vec::with_capacity(big_n * n + 1);
            for (j, &neg) in signs.iter().enumerate() {
                for k in 0..n {
                    terms.push((j * n + k, if neg { -v[(i, k)] } else { v[(i, k)] }));
                }
            }
            terms.push((lam, -1.0));
            lp.add_sparse(&terms, Relation::Le, 0.0);
            seen.insert((i, signs));
        }
        let boxed = radius.is_finite();
        for j in 0..big_n {
            for k in 0..n {
                let c = w[(j, k)];
                lp.set_bounds(j * n + k, c - radius, c + radius);
            }
        }
        let sol = solve_lp_with(&lp, tol.lp_tol)?;
        iterations += sol.iterations;
        if sol.status != LpStatus::Optimal {
            return Err(Error::NumericalFailure(format!(
                "minimal projection LP ended {:?}",
                sol.status
            )));
        }
        let model = sol.objective;
        if !boxed {
            lower = lower.max(model);
        }
        if best - model <= slack(best) {
            if !boxed {
                break;
            }
            // boxed model is flat at the incumbent; confirm globally
            radius = f64::INFINITY;
            query = w.clone();
            continue;
        }
        let cand = DMatrix::from_fn(big_n, n, |j, k| sol.x[j * n + k]);
        let val = norm_of(&cand);
        if boxed {
            let predicted = best - model;
            if val < best - 0.5 * predicted {
                radius *= 2.0;
            } else if val >= best {
                radius *= 0.5;
            }
        } else {
            radius = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        }
        if val < best {
            best = val;
            w = cand.clone();
        }
        query = cand;
    }
    let lp_objective = lower;

    let to_c = |m: &DMatrix<f64>| m.map(|x| Scalar::new(x, 0.0));
    let p = to_c(&(&v * w.transpose()));
    let p2 = &p * &p;
    let idempotence_residual = (&p2 - &p).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pv = &p * s.basis.data();
    let invariance_residual = (&pv - s.basis.data()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = 1.0 + p.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if idempotence_residual > tol.lp_tol * scale * 10.0 || invariance_residual > tol.lp_tol * scale * 10.0 {
        return Err(Error::NumericalFailure(format!(
            "LP projection fails verification: |P²−P| = {idempotence_residual:.3e}, |PV−V| = {invariance_residual:.3e}"
        )));
    }
    let projection = KMatrix::from_rows(
        ScalarField::Real,
        &(0..big_n)
            .map(|i| (0..big_n).map(|j| p[(i, j)]).collect())
            .collect::<Vec<_>>(),
    )?;
    Ok(MinProjection {
        lambda_rel: linf_operator_norm(&projection),
        lp_objective,
        projection,
        idempotence_residual,
        invariance_residual,
        iterations,
    })
}

/// An operator on `ℓ∞^N`; the trace-duality conditions are checked by
/// [`cm_verify`], not assumed.
#[derive(Debug, Clone, PartialEq)]
pub struct CMOperator {
    pub e: KMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmReport {
    /// Largest distance of a column of `E V` from `span(V)`.
    pub invariance_residual: f64,
    /// Trace of `M` with `E V ≈ V M`.
    pub trace_on_x: Scalar,
    /// `Σ_i ‖E e_i‖_∞ = Σ_i max_j |E_ji|`.
    pub column_sum: f64,
    pub restriction: KMatrix,
}

pub fn cm_verify(e: &CMOperator, s: &SubspaceOfLinf) -> Result<CmReport> {
    let big_n = s.big_n();
    if e.e.rows() != big_n || e.e.cols() != big_n {
        return Err(Error::DimensionMismatch {
            expected: big_n,
            found: if e.e.rows() != big_n { e.e.rows() } else { e.e.cols() },
        });
    }
    let v = s.basis.data();
    let ev = e.e.data() * v;
    let m = lstsq(v, &ev);
    let diff = &ev - v * &m;
    let invariance_residual = (0..diff.ncols())
        .map(|c| diff.column(c).norm())
        .fold(0.0, f64::max);
    let trace_on_x = (0..m.nrows()).map(|i| m[(i, i)]).sum();
    let column_sum = (0..big_n)
        .map(|i| (0..big_n).map(|j| e.e.get(j, i).norm()).fold(0.0, f64::max))
        .sum();
    let field = e.e.field().join(s.field());
    let restriction = KMatrix::from_rows(
        field,
        &(0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| if field == ScalarField::Real { Scalar::new(m[(i, j)].re, 0.0) } else { m[(i, j)] }).collect())
            .collect::<Vec<_>>(),
    )?;
    Ok(CmReport {
        invariance_residual,
        trace_on_x,
        column_sum,
        restriction,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmBuild {
    pub operator: CMOperator,
    pub subspace: SubspaceOfLinf,
    /// The dual ball: the ETF followed by the zonotope points `Σ_k a_jk w_k`.
    pub ball: DualBallSpec,
}

/// The extremal operator for the dual ball `absconv{w_1..w_d, z_1..z_m}`
/// with `z_j = Σ_k a_jk w_k`, `|a_jk| ≤ n/(dδ)`:
/// `E e_k` has entries `sgn⟨w_k, w_j⟩/d` on the ETF rows and
/// `(δ/n)·conj(a_jk)` on the zonotope rows for `k ≤ d`, and vanishes for `k > d`.
pub fn cm_build(etf: &MaximalETF, coeffs: &[Vec<Scalar>]) -> Result<CmBuild> {
    let (field, n, d) = (etf.field(), etf.n(), etf.len());
    let bound = rescale_constant(field, n)?;
    let delta = delta_bound(field, n)?;
    let mut coeff_field = ScalarField::Real;
    for (j, row) in coeffs.iter().enumerate() {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
        for (k, a) in row.iter().enumerate() {
            if a.norm() > bound * (1.0 + 1e-12) {
                return Err(Error::CoefficientOutOfRange {
                    row: j,
                    col: k,
                    modulus: a.norm(),
                    bound,
                });
            }
            if a.im != 0.0 {
                coeff_field = ScalarField::Complex;
            }
        }
    }
    let field = field.join(coeff_field);
    let w = etf.vectors();
    let mut functionals: Vec<KVector> = w.iter().map(|v| v.promote(field)).collect();
    for row in coeffs {
        let mut z = vec![ZERO; n];
        for (a, wk) in row.iter().zip(w) {
            for (s, x) in z.iter_mut().zip(wk.entries()) {
                *s += a * x;
            }
        }
        functionals.push(KVector::new(field, z)?);
    }
    let ball = DualBallSpec::new(field, n, functionals)?;
    let subspace = embed_norm(&ball)?;

    let big_n = d + coeffs.len();
    let c = delta / n as f64;
    let mut rows = vec![vec![ZERO; big_n]; big_n];
    for k in 0..d {
        for j in 0..d {
            let ip = dot(w[k].entries(), w[j].entries());
            assert!(ip.norm() > 0.0, "ETF vectors are never orthogonal");
            rows[j][k] = sgn(ip) / d as f64;
        }
        for (j, row) in coeffs.iter().enumerate() {
            rows[d + j][k] = row[k].conj() * c;
        }
    }
    Ok(CmBuild {
        operator: CMOperator {
            e: KMatrix::from_rows(field, &rows)?,
        },
        subspace,
        ball,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaUpperReport {
    pub lp_value: f64,
    pub delta: f64,
    pub sqrt_n: f64,
    /// `min(√n, δ_K(n))`.
    pub certified_upper: f64,
}

/// Exact LP value next to the a-priori upper bounds; fails if either bound
/// is violated.
pub fn lambda_upper_report(s: &SubspaceOfLinf, tol: &ToleranceConfig) -> Result<LambdaUpperReport> {
    let mp = min_projection_lp(s, tol)?;
    let delta = delta_bound(s.field(), s.n())?;
    let sqrt_n = (s.n() as f64).sqrt();
    let rep = LambdaUpperReport {
        lp_value: mp.lambda_rel,
        delta,
        sqrt_n,
        certified_upper: delta.min(sqrt_n),
    };
    if rep.lp_value > delta + tol.lp_tol {
        return Err(Error::VerificationFailed(format!(
            "LP value {} exceeds δ = {delta}",
            rep.lp_value
        )));
    }
    if rep.lp_value > sqrt_n + tol.lp_tol {
        return Err(Error::VerificationFailed(format!(
            "LP value {} exceeds √n = {sqrt_n}",
            rep.lp_value
        )));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::etf::build_maximal_etf;
    use ScalarField::*;

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    #[test]
    fn hexagon_embedding_and_projection() {
        let etf = build_maximal_etf(Real, 2).unwrap();
        let s = embed_norm(&DualBallSpec::from_etf(&etf)).unwrap();
        assert_eq!((s.big_n(), s.n()), (3, 2));
        assert!((s.norm_of(&KVector::basis(Real, 2, 0)).unwrap() - 1.0).abs() < 1e-15);
        let mp = min_projection_lp(&s, &tol()).unwrap();
        assert!((mp.lambda_rel - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn identity_subspace() {
        let s = SubspaceOfLinf::new(KMatrix::identity(Real, 3)).unwrap();
        let mp = min_projection_lp(&s, &tol()).unwrap();
        assert_eq!(mp.lambda_rel, 1.0);
        assert!(mp.projection.sub(&KMatrix::identity(Real, 3)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn row_generation_matches_full_program() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (big_n, n) in [(4, 2), (5, 3), (6, 2)] {
            for _ in 0..5 {
                let rows: Vec<Vec<f64>> = (0..big_n)
                    .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                let s = SubspaceOfLinf::new(KMatrix::from_real_rows(&rows).unwrap()).unwrap();
                let full = solve_lp_with(&min_projection_program(&s).unwrap(), 1e-9).unwrap();
                let mp = min_projection_lp(&s, &tol()).unwrap();
                assert!((full.objective - mp.lambda_rel).abs() < 1e-8, "{} vs {}", full.objective, mp.lambda_rel);
            }
        }
    }

    #[test]
    fn complex_refused() {
        let etf = build_maximal_etf(Complex, 2).unwrap();
        let s = embed_norm(&DualBallSpec::from_etf(&etf)).unwrap();
        assert_eq!(min_projection_lp(&s, &tol()), Err(Error::ComplexUnsupported));
    }

    #[test]
    fn hexagon_operator() {
        let etf = build_maximal_etf(Real, 2).unwrap();
        let b = cm_build(&etf, &[]).unwrap();
        let r = cm_verify(&b.operator, &b.subspace).unwrap();
        assert!((r.trace_on_x.re - 4.0 / 3.0).abs() < 1e-12);
        assert!((r.column_sum - 1.0).abs() < 1e-12);
        assert!(r.invariance_residual < 1e-12);
        let m = &r.restriction;
        assert!((m.get(0, 0).re - 2.0 / 3.0).abs() < 1e-12 && m.get(0, 1).norm() < 1e-12);
    }

    #[test]
    fn coefficient_bound() {
        let etf = build_maximal_etf(Real, 2).unwrap();
        let row = vec![Scalar::new(0.6, 0.0), ZERO, ZERO];
        assert!(matches!(cm_build(&etf, &[row]), Err(Error::CoefficientOutOfRange { .. })));
    }

    #[test]
    fn scaled_identity_operator() {
        let s = SubspaceOfLinf::new(KMatrix::identity(Real, 3)).unwrap();
        let mut e = KMatrix::identity(Real, 3);
        e = KMatrix::from_rows(
            Real,
            &e.to_rows()
                .iter()
                .map(|r| r.iter().map(|z| z / 3.0).collect())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let r = cm_verify(&CMOperator { e }, &s).unwrap();
        assert!((r.trace_on_x.re - 1.0).abs() < 1e-15);
        assert!((r.column_sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linf_upper_report() {
        let s = SubspaceOfLinf::new(KMatrix::identity(Real, 2)).unwrap();
        let r = lambda_upper_report(&s, &tol()).unwrap();
        assert_eq!(r.lp_value, 1.0);
        assert!((r.certified_upper - 4.0 / 3.0).abs() < 1e-15);
    }
}
