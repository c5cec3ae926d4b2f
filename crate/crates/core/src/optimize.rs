//! Numerical maximization of `Σ t_i t_j |⟨u_i,u_j⟩|` over tight frames
//! (and weights): estimates of `λ_K(n,N)` and `μ_K(n,N)`.

use crate::constants::{delta_bound, maximal_etf_known, ToleranceConfig};
use crate::error::{Error, Result};
use crate::field::{KMatrix, KVector, Scalar, ScalarField};
use crate::frames::WeightedFrame;
use crate::linalg::qr_orthonormalize;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Iteration budget per restart, shared evenly by the smoothing stages.
    pub max_iters: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_stages: usize,
    /// Backtracking factor.
    pub shrink: f64,
    pub seed: u64,
    pub convergence_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 32,
            max_iters: 5000,
            eps_start: 1e-2,
            eps_end: 1e-10,
            eps_stages: 9,
            shrink: 0.5,
            seed: 0,
            convergence_tol: 1e-10,
        }
    }
}

impl OptimizerConfig {
    pub fn with_seed(seed: u64) -> Self {
        OptimizerConfig {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.restarts == 0 || self.max_iters == 0 || self.eps_stages == 0 {
            return bad("restarts, max_iters and eps_stages must be positive");
        }
        if !(self.eps_start > 0.0 && self.eps_end > 0.0) {
            return bad("smoothing parameters must be positive");
        }
        if self.eps_stages > 1 && self.eps_end >= self.eps_start {
            return bad("smoothing schedule must decrease");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink factor must lie in (0, 1)");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol must be positive");
        }
        Ok(())
    }

    /// Geometric schedule from `eps_start` to `eps_end`.
    pub fn eps_schedule(&self) -> Vec<f64> {
        if self.eps_stages == 1 {
            return vec![self.eps_end];
        }
        let ratio = (self.eps_end / self.eps_start).powf(1.0 / (self.eps_stages - 1) as f64);
        (0..self.eps_stages)
            .map(|k| self.eps_start * ratio.powi(k as i32))
            .collect()
    }
}

/// How the weights follow the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Exact inner maximization: the Perron vector of `|⟨u_i,u_j⟩|`.
    Perron,
    /// `t_i = 1/√N` throughout.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartOutcome {
    pub value: f64,
    pub frame: WeightedFrame,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub best_value: f64,
    pub best_frame: WeightedFrame,
    pub best_restart: usize,
    pub per_restart: Vec<f64>,
    pub converged: bool,
}

/// Haar-distributed `N×n` matrix with orthonormal columns.
pub fn random_stiefel<R: rand::Rng + ?Sized>(field: ScalarField, big_n: usize, n: usize, rng: &mut R) -> KMatrix {
    let g = DMatrix::from_fn(big_n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = match field {
            ScalarField::Real => 0.0,
            ScalarField::Complex => StandardNormal.sample(rng),
        };
        Scalar::new(re, im)
    });
    KMatrix::from_dmatrix(field, qr_orthonormalize(&g))
}

const PERRON_TOL: f64 = 1e-13;
const PERRON_MAX_ITERS: usize = 1_000_000;

/// Top eigenvector of the entrywise-modulus Gram matrix, nonnegative with
/// unit norm. Shifted power iteration from the uniform vector, so a
/// degenerate top eigenspace resolves to its most uniform member.
pub fn perron_weights(vectors: &[KVector]) -> Result<Vec<f64>> {
    let u = KMatrix::from_row_vectors(vectors)?;
    let m = modulus_gram(u.data(), 0.0);
    if m.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroFrame);
    }
    let start: Vec<f64> = (0..m.nrows())
        .map(|i| if m[(i, i)] > 0.0 { 1.0 } else { 0.0 })
        .collect();
    Ok(power_iteration(&m, start))
}

fn power_iteration(m: &DMatrix<f64>, start: Vec<f64>) -> Vec<f64> {
    let n = m.nrows();
    let shift = (0..n)
        .map(|i| m.row(i).iter().sum::<f64>())
        .fold(0.0, f64::max);
    let mut t = start;
    normalize(&mut t);
    let mut next = vec![0.0; n];
    for _ in 0..PERRON_MAX_ITERS {
        for i in 0..n {
            next[i] = shift * t[i] + (0..n).map(|j| m[(i, j)] * t[j]).sum::<f64>();
        }
        normalize(&mut next);
        let diff = next.iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut t, &mut next);
        if diff < PERRON_TOL {
            break;
        }
    }
    t
}

fn normalize(t: &mut [f64]) {
    let s = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    if s > 0.0 {
        t.iter_mut().for_each(|x| *x /= s);
    }
}

/// Perron vector warm-started from a dense eigensolve.
fn perron_fast(m: &DMatrix<f64>) -> Vec<f64> {
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let mut t: Vec<f64> = eig.eigenvectors.column(top).iter().map(|x| x.abs()).collect();
    for (i, x) in t.iter_mut().enumerate() {
        if m[(i, i)] == 0.0 {
            *x = 0.0;
        }
    }
    power_iteration(m, t)
}

/// `√(|⟨u_i,u_j⟩|² + ε²)`.
fn modulus_gram(u: &DMatrix<Scalar>, eps: f64) -> DMatrix<f64> {
    let z = u * u.adjoint();
    z.map(|w| (w.norm_sqr() + eps * eps).sqrt())
}

struct Objective {
    mode: WeightMode,
    eps: f64,
}

struct Eval {
    value: f64,
    t: Vec<f64>,
}

impl Objective {
    fn eval(&self, u: &DMatrix<Scalar>) -> Eval {
        let m = modulus_gram(u, self.eps);
        let big_n = u.nrows();
        let t = match self.mode {
            WeightMode::Perron => perron_fast(&m),
            WeightMode::Uniform => vec![1.0 / (big_n as f64).sqrt(); big_n],
        };
        let mut value = 0.0;
        for i in 0..big_n {
            for j in 0..big_n {
                value += t[i] * t[j] * m[(i, j)];
            }
        }
        Eval { value, t }
    }

    /// Riemannian gradient at `u` for the weights frozen at `t`.
    fn gradient(&self, u: &DMatrix<Scalar>, t: &[f64]) -> DMatrix<Scalar> {
        let z = u * u.adjoint();
        let big_n = u.nrows();
        let a = DMatrix::from_fn(big_n, big_n, |i, j| {
            let w = z[(i, j)];
            let s = (w.norm_sqr() + self.eps * self.eps).sqrt();
            if s == 0.0 {
                Scalar::new(0.0, 0.0)
            } else {
                w * (2.0 * t[i] * t[j] / s)
            }
        });
        let g = a * u;
        let ug = u.adjoint() * &g;
        let sym = (&ug + ug.adjoint()) * Scalar::new(0.5, 0.0);
        g - u * sym
    }
}

fn real_inner(a: &DMatrix<Scalar>, b: &DMatrix<Scalar>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Smoothed Riemannian ascent from `initial` (orthonormal columns), ending
/// with an unsmoothed evaluation.
pub fn frame_ascent(initial: &KMatrix, mode: WeightMode, cfg: &OptimizerConfig) -> Result<RestartOutcome> {
    cfg.validate()?;
    let field = initial.field();
    let (big_n, n) = (initial.rows(), initial.cols());
    if big_n < n {
        return Err(Error::InvalidArgument(format!("N = {big_n} is smaller than n = {n}")));
    }
    let gram = initial.data().adjoint() * initial.data();
    let dev = (gram - DMatrix::<Scalar>::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if dev > 1e-8 {
        return Err(Error::NotTight { residual: dev });
    }
    let schedule = cfg.eps_schedule();
    let per_stage = (cfg.max_iters / schedule.len()).max(1);
    let mut u = qr_orthonormalize(initial.data());
    let mut iterations = 0;
    let mut converged = false;
    for (stage, &eps) in schedule.iter().enumerate() {
        let obj = Objective { mode, eps };
        let (done, its) = ascend_stage(&obj, &mut u, per_stage, cfg);
        iterations += its;
        if stage + 1 == schedule.len() {
            converged = done;
        }
    }
    if field == ScalarField::Real {
        u.iter_mut().for_each(|z| z.im = 0.0);
    }
    let m = modulus_gram(&u, 0.0);
    let t = match mode {
        WeightMode::Perron => perron_fast(&m),
        WeightMode::Uniform => vec![1.0 / (big_n as f64).sqrt(); big_n],
    };
    let frame = WeightedFrame::from_matrix_rows(&KMatrix::from_dmatrix(field, u), t)?;
    let value = frame.objective_phi()?;
    Ok(RestartOutcome {
        value,
        frame,
        converged,
        iterations,
    })
}

/// Returns whether the stage met its stopping rule, and its iterations.
fn ascend_stage(obj: &Objective, u: &mut DMatrix<Scalar>, budget: usize, cfg: &OptimizerConfig) -> (bool, usize) {
    let mut cur = obj.eval(u);
    let mut xi = obj.gradient(u, &cur.t);
    let mut step = 1.0;
    let mut small = 0;
    for it in 0..budget {
        let g2 = real_inner(&xi, &xi);
        if g2.sqrt() < cfg.convergence_tol {
            return (true, it);
        }
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = qr_orthonormalize(&(&*u + &xi * Scalar::new(alpha, 0.0)));
            let e = obj.eval(&cand);
            if e.value >= cur.value + 1e-4 * alpha * g2 {
                accepted = Some((cand, e));
                break;
            }
            alpha *= cfg.shrink;
        }
        let Some((next, e)) = accepted else {
            return (true, it);
        };
        let gain = e.value - cur.value;
        let xi_next = obj.gradient(&next, &e.t);
        // Barzilai-Borwein length for the next trial step
        let s = &next - &*u;
        let y = &xi_next - &xi;
        let sy = real_inner(&s, &y).abs();
        step = if sy > 0.0 {
            (real_inner(&s, &s) / sy).clamp(1e-8, 1e3)
        } else {
            (alpha / cfg.shrink).min(1e3)
        };
        *u = next;
        cur = e;
        xi = xi_next;
        if gain < cfg.convergence_tol * cur.value.abs().max(1.0) {
            small += 1;
            if small >= 5 {
                return (true, it + 1);
            }
        } else {
            small = 0;
        }
    }
    (false, budget)
}

fn run_restarts(field: ScalarField, n: usize, big_n: usize, mode: WeightMode, cfg: &OptimizerConfig) -> Result<OptResult> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidDimension(n));
    }
    if big_n < n {
        return Err(Error::InvalidArgument(format!("N = {big_n} is smaller than n = {n}")));
    }
    let outcomes: Vec<Result<RestartOutcome>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
            let u0 = random_stiefel(field, big_n, n, &mut rng);
            frame_ascent(&u0, mode, cfg)
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let per_restart: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    // highest value, lowest restart index on ties
    let best_restart = (0..outcomes.len())
        .reduce(|a, b| if per_restart[b] > per_restart[a] { b } else { a })
        .expect("at least one restart");
    let best = &outcomes[best_restart];
    Ok(OptResult {
        best_value: best.value,
        best_frame: best.frame.clone(),
        best_restart,
        per_restart,
        converged: best.converged,
    })
}

/// Estimate of `λ_K(n,N)`: weights follow the frame as Perron vectors.
pub fn maximize_lambda_rel(field: ScalarField, n: usize, big_n: usize, cfg: &OptimizerConfig) -> Result<OptResult> {
    run_restarts(field, n, big_n, WeightMode::Perron, cfg)
}

/// Estimate of `μ_K(n,N)`: uniform weights.
pub fn mu(field: ScalarField, n: usize, big_n: usize, cfg: &OptimizerConfig) -> Result<OptResult> {
    run_restarts(field, n, big_n, WeightMode::Uniform, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivisibilityReport {
    pub mu_value: f64,
    pub delta: f64,
    pub equality: bool,
    pub divisible: bool,
    pub restarts: usize,
}

/// Threshold for declaring `μ_K(n,N) = δ_K(n)` numerically.
pub const EQUALITY_THRESHOLD: f64 = 1e-6;

/// Compares the best-found `μ_K(n,N)` with `δ_K(n)`; equality is expected
/// exactly when the Gerzon count divides `N`.
pub fn divisibility_check(field: ScalarField, n: usize, big_n: usize, cfg: &OptimizerConfig) -> Result<DivisibilityReport> {
    if !maximal_etf_known(field, n) {
        return Err(Error::UnsupportedDimension { field, n });
    }
    let d = crate::constants::gerzon_bound(field, n)?;
    let delta = delta_bound(field, n)?;
    let res = mu(field, n, big_n, cfg)?;
    let rep = DivisibilityReport {
        mu_value: res.best_value,
        delta,
        equality: (res.best_value - delta).abs() < EQUALITY_THRESHOLD,
        divisible: big_n.is_multiple_of(d),
        restarts: cfg.restarts,
    };
    if rep.equality != rep.divisible {
        return Err(Error::VerificationFailed(format!(
            "μ = {} vs δ = {delta} at N = {big_n} (d = {d}): equality {} but divisible {}",
            rep.mu_value, rep.equality, rep.divisible
        )));
    }
    Ok(rep)
}

/// Tightness check used on reported frames.
pub fn frame_is_tight(frame: &WeightedFrame, tol: &ToleranceConfig) -> bool {
    frame.tightness_residual() < tol.residual_tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::etf::build_maximal_etf;
    use ScalarField::*;

    fn quick(restarts: usize) -> OptimizerConfig {
        OptimizerConfig {
            restarts,
            seed: 11,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn schedule_is_geometric() {
        let s = OptimizerConfig::default().eps_schedule();
        assert_eq!(s.len(), 9);
        assert!((s[0] - 1e-2).abs() < 1e-18 && (s[8] - 1e-10).abs() < 1e-22);
        assert!((s[1] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn bad_config() {
        let cfg = OptimizerConfig {
            eps_end: 1.0,
            ..OptimizerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn perron_on_etf_is_uniform() {
        let f = build_maximal_etf(Real, 2).unwrap().to_unit_tight_frame();
        let t = perron_weights(f.vectors()).unwrap();
        for x in t {
            assert!((x - 1.0 / 3f64.sqrt()).abs() < 1e-13);
        }
    }

    #[test]
    fn perron_degenerate_and_zero() {
        let basis: Vec<KVector> = (0..3).map(|k| KVector::basis(Real, 3, k)).collect();
        let t = perron_weights(&basis).unwrap();
        assert!(t.iter().all(|x| (x - 1.0 / 3f64.sqrt()).abs() < 1e-15));
        let with_zero = vec![KVector::real(&[1.0, 0.0]), KVector::zeros(Real, 2), KVector::real(&[0.6, 0.8])];
        let t = perron_weights(&with_zero).unwrap();
        assert_eq!(t[1], 0.0);
        assert!(perron_weights(&[KVector::zeros(Real, 2)]) == Err(Error::ZeroFrame));
    }

    #[test]
    fn stiefel_columns_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_stiefel(Complex, 5, 2, &mut rng);
        let g = u.adjoint().mul(&u).unwrap();
        assert!(g.sub(&KMatrix::identity(Complex, 2)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn hexagon_frame_maximum() {
        let r = maximize_lambda_rel(Real, 2, 3, &quick(4)).unwrap();
        assert!((r.best_value - 4.0 / 3.0).abs() < 1e-7, "{}", r.best_value);
        assert!(r.best_frame.tightness_residual() < 1e-9);
    }

    #[test]
    fn square_case_is_one() {
        let r = maximize_lambda_rel(Real, 2, 2, &quick(2)).unwrap();
        assert!((r.best_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn replicate_is_stationary() {
        let etf = build_maximal_etf(Complex, 2).unwrap();
        let f = etf.replicate(2).unwrap();
        let u = f.to_matrix();
        let out = frame_ascent(&u, WeightMode::Uniform, &quick(1)).unwrap();
        let drift = out.frame.to_matrix().sub(&u).unwrap().max_abs();
        assert!(drift < 1e-10, "drift {drift}");
    }

    #[test]
    fn divisibility_requires_known_etf() {
        assert!(matches!(
            divisibility_check(Real, 4, 10, &quick(1)),
            Err(Error::UnsupportedDimension { .. })
        ));
    }
}
