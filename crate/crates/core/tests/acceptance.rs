//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod oracle;

use nalgebra::DMatrix;
use projconst::constants::{delta_bound, gerzon_bound, rescale_constant, welch_angle, ToleranceConfig};
use projconst::error::Error;
use projconst::etf::{build_maximal_etf, verify_etf, MaximalETF, SUPPORTED};
use projconst::field::{inner, KMatrix, KVector, Scalar, ScalarField};
use projconst::frames::{build_equality_config, WeightedFrame};
use projconst::geometry::{
    absconv_contains, absconv_support, extremal_family, minimal_generator_count, norm_ratio, sandwich_test,
    strictness_witness, ZonotopeSpec,
};
use projconst::optimize::{maximize_lambda_rel, mu, random_stiefel, OptimizerConfig};
use projconst::projconst::{cm_build, cm_verify, embed_norm, min_projection_lp, SubspaceOfLinf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use std::time::Instant;
use ScalarField::{Complex, Real};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn tol() -> ToleranceConfig {
    ToleranceConfig::default()
}

fn etf(field: ScalarField, n: usize) -> MaximalETF {
    build_maximal_etf(field, n).expect("supported dimension")
}

fn tag(field: ScalarField, n: usize) -> String {
    format!("{}{n}", field.symbol())
}

fn constants() -> Outcome {
    let e1 = (delta_bound(Real, 2).unwrap() - 4.0 / 3.0).abs();
    let e2 = (delta_bound(Complex, 2).unwrap() - (1.0 + 3f64.sqrt()) / 2.0).abs();
    let mut worst = 0.0f64;
    for (f, n) in SUPPORTED {
        let d = gerzon_bound(f, n).unwrap() as f64;
        let delta = delta_bound(f, n).unwrap();
        let phi = welch_angle(f, n).unwrap();
        let n = n as f64;
        worst = worst.max(((d - n + n * phi) / (d * delta * phi) - 1.0).abs());
    }
    let ok = e1 < 1e-12 && e2 < 1e-12 && worst < 1e-12;
    (ok, format!("δ_R(2) err {e1:.1e}, δ_C(2) err {e2:.1e}, closing identity err {worst:.1e}"))
}

fn etf_suite() -> Outcome {
    let mut worst_report = 0.0f64;
    let mut worst_recon = 0.0f64;
    let mut ok = true;
    for (f, n) in SUPPORTED {
        let e = etf(f, n);
        let r = verify_etf(e.vectors()).unwrap();
        let phi = welch_angle(f, n).unwrap();
        let tight = r.tightness_residual;
        ok &= r.is_maximal && r.is_certified(f, 1e-12);
        worst_report = worst_report
            .max(r.unit_residual)
            .max(r.angle_spread)
            .max((r.angle_value - phi).abs())
            .max(tight);
        for j in 0..e.len() {
            worst_recon = worst_recon.max(e.sign_reconstruction_residual(j).unwrap());
        }
    }
    ok &= worst_report < 1e-12 && worst_recon < 1e-12;
    (ok, format!("max ETF residual {worst_report:.1e}, max reconstruction residual {worst_recon:.1e}"))
}

fn random_weights(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    loop {
        let mut t: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    StandardNormal.sample(rng)
                }
            })
            .map(|x: f64| x.abs())
            .collect();
        let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            t.iter_mut().for_each(|x| *x /= norm);
            return t;
        }
    }
}

fn bound_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let field = if rng.random_bool(0.5) { Real } else { Complex };
        let n = rng.random_range(2..=3);
        let big_n = rng.random_range(n..=8);
        let u = random_stiefel(field, big_n, n, &mut rng);
        let frame = WeightedFrame::from_matrix_rows(&u, random_weights(&mut rng, big_n)).unwrap();
        let excess = frame.objective_phi().unwrap() - delta_bound(field, n).unwrap();
        worst_excess = worst_excess.max(excess);
        if excess > 1e-9 {
            violations += 1;
        }
    }
    (violations == 0, format!("{violations} violations, max Φ − δ = {worst_excess:.3e}"))
}

/// Positive weights with `Σ s² = 1/d`.
fn group_weights(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt() * (d as f64).sqrt();
    raw.iter().map(|x| x / norm).collect()
}

/// Each near miss breaks one equality condition of a replicated ETF frame.
fn near_misses(e: &MaximalETF, rng: &mut ChaCha8Rng) -> Vec<(&'static str, WeightedFrame)> {
    let (field, n, d) = (e.field(), e.n(), e.len());
    let base = e.to_unit_tight_frame();
    let mut out = Vec::new();
    for eta in [0.1f64, 0.3] {
        // a zero vector carrying weight
        let mut vectors = base.vectors().to_vec();
        vectors.push(KVector::zeros(field, n));
        let mut weights: Vec<f64> = base.weights().iter().map(|t| t * (1.0 - eta * eta).sqrt()).collect();
        weights.push(eta);
        out.push(("weighted zero vector", WeightedFrame::new(field, n, vectors, weights).unwrap()));

        // directions moved off the ETF, frame re-tightened, norms matched to weights
        let mut rows = base.to_matrix().to_rows();
        for z in rows[0].iter_mut() {
            let g: f64 = StandardNormal.sample(rng);
            *z += Scalar::new(eta * 0.2 * g, 0.0);
        }
        let u = retighten(&KMatrix::from_rows(field, &rows).unwrap());
        let weights: Vec<f64> = (0..d).map(|i| u.row(i).norm() / (n as f64).sqrt()).collect();
        out.push(("perturbed direction", WeightedFrame::from_matrix_rows(&u, weights).unwrap()));

        // one group's weight raised, vectors unchanged
        let mut t = base.weights().to_vec();
        t[0] *= 1.0 + eta;
        let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        t.iter_mut().for_each(|x| *x /= norm);
        out.push(("unbalanced group weight", base.with_weights(t).unwrap()));

        // two copies per direction with unequal norms, uniform weights
        let theta = PI / 4.0 + eta;
        let r = (n as f64 / d as f64).sqrt();
        let mut vectors = Vec::new();
        for w in e.vectors() {
            vectors.push(w.scale(r * theta.cos()));
            vectors.push(w.scale(r * theta.sin()));
        }
        let weights = vec![1.0 / ((2 * d) as f64).sqrt(); 2 * d];
        out.push(("unequal norms in a group", WeightedFrame::new(field, n, vectors, weights).unwrap()));
    }
    out
}

/// `U S^{-1/2}` with `S = U*U`, via the eigen-decomposition of `S`.
fn retighten(u: &KMatrix) -> KMatrix {
    let n = u.cols();
    let rows = u.to_rows();
    let m = DMatrix::from_fn(u.rows(), n, |i, j| rows[i][j]);
    let s = m.adjoint() * &m;
    let eig = s.clone().symmetric_eigen();
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| Scalar::new(1.0 / x.sqrt(), 0.0)));
    let fixed = &m * &eig.eigenvectors * inv_sqrt * eig.eigenvectors.adjoint();
    let rows: Vec<Vec<Scalar>> = fixed.row_iter().map(|r| r.iter().copied().collect()).collect();
    KMatrix::from_rows(u.field(), &rows).unwrap()
}

fn equality() -> Outcome {
    let t = tol();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut positives, mut bad_pos) = (0, Vec::new());
    let mut worst_gap = 0.0f64;
    let (mut negatives, mut bad_neg) = (0, Vec::new());
    let mut smallest_deficit = f64::INFINITY;
    for (f, n) in SUPPORTED {
        let e = etf(f, n);
        let d = e.len();
        let delta = delta_bound(f, n).unwrap();
        let mut frames = Vec::new();
        for k in 1..=3 {
            frames.push(e.replicate(k).unwrap());
        }
        for round in 0..3 {
            let mult: Vec<usize> = (0..d).map(|j| 1 + (j + round) % 3).collect();
            let weights: Vec<Vec<f64>> = mult.iter().map(|&m| group_weights(&mut rng, m, d)).collect();
            frames.push(build_equality_config(&e, &mult, &weights, &t).unwrap());
        }
        for frame in frames {
            positives += 1;
            let gap = (frame.objective_phi().unwrap() - delta).abs();
            worst_gap = worst_gap.max(gap);
            let rep = frame.check_equality_conditions(&t).unwrap();
            if gap >= 1e-12 || !rep.all_ok() {
                bad_pos.push(tag(f, n));
            }
        }
        for (kind, frame) in near_misses(&e, &mut rng) {
            negatives += 1;
            let deficit = delta - frame.objective_phi().unwrap();
            smallest_deficit = smallest_deficit.min(deficit);
            let rejected = match frame.check_equality_conditions(&t) {
                Ok(rep) => !rep.all_ok(),
                Err(_) => true,
            };
            if !rejected || deficit <= 1e-6 {
                bad_neg.push(format!("{}:{kind}", tag(f, n)));
            }
        }
    }
    let ok = bad_pos.is_empty() && bad_neg.is_empty() && negatives >= 20;
    (
        ok,
        format!(
            "{positives} equality frames (max |Φ − δ| {worst_gap:.1e}), {negatives} near misses \
             (min δ − Φ {smallest_deficit:.2e}); failures {bad_pos:?} {bad_neg:?}"
        ),
    )
}

fn real_subspace(rows: &[Vec<f64>]) -> SubspaceOfLinf {
    SubspaceOfLinf::new(KMatrix::from_real_rows(rows).unwrap()).unwrap()
}

fn minimal_projection() -> Outcome {
    let t = tol();
    let hexagon = embed_norm(&projconst::geometry::DualBallSpec::from_etf(&etf(Real, 2))).unwrap();
    let hex = min_projection_lp(&hexagon, &t).unwrap().lambda_rel;
    let id_rows: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let id = min_projection_lp(&real_subspace(&id_rows), &t).unwrap().lambda_rel;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for (big_n, n) in [(4, 2), (5, 3)] {
        for _ in 0..100 {
            let rows: Vec<Vec<f64>> =
                (0..big_n).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
            let lp = min_projection_lp(&real_subspace(&rows), &t).unwrap().lambda_rel;
            let v = DMatrix::from_fn(big_n, n, |i, j| rows[i][j]);
            let brute = oracle::Family::new(v).minimize();
            let diff = (lp - brute).abs();
            worst = worst.max(diff);
            if diff >= 1e-6 {
                mismatches += 1;
            }
        }
    }
    let ok = (hex - 4.0 / 3.0).abs() < 1e-9 && id == 1.0 && mismatches == 0;
    (
        ok,
        format!("hexagon {hex:.12}, identity {id}, 200 random: {mismatches} mismatches, max |LP − oracle| {worst:.1e}"),
    )
}

fn lambda_r35() -> Outcome {
    let cfg = OptimizerConfig {
        restarts: 64,
        ..OptimizerConfig::default()
    };
    let res = maximize_lambda_rel(Real, 3, 5, &cfg).unwrap();
    let target = (5.0 + 4.0 * 2f64.sqrt()) / 7.0;
    let err = (res.best_value - target).abs();
    (err < 1e-5, format!("best {:.10} vs {target:.10}, err {err:.1e}", res.best_value))
}

fn divisibility() -> Outcome {
    let cfg = OptimizerConfig {
        restarts: 256,
        ..OptimizerConfig::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (field, n, equal, below) in [(Real, 2, vec![3, 6], vec![4, 5]), (Complex, 2, vec![4, 8], vec![5, 6, 7])] {
        let delta = delta_bound(field, n).unwrap();
        for big_n in equal {
            let v = mu(field, n, big_n, &cfg).unwrap().best_value;
            ok &= (v - delta).abs() < 1e-7;
            parts.push(format!("{}{n} N={big_n}: {v:.9}", field.symbol()));
        }
        for big_n in below {
            let v = mu(field, n, big_n, &cfg).unwrap().best_value;
            ok &= v < delta - 1e-4;
            parts.push(format!("{}{n} N={big_n}: {v:.6}", field.symbol()));
        }
    }
    (ok, parts.join(", "))
}

fn support_functions() -> Outcome {
    let t = tol();
    let hex = etf(Real, 2);
    let zono = ZonotopeSpec::rescaled_etf(&hex).unwrap();
    let mut worst = 0.0f64;
    for k in 0..360 {
        let a = 2.0 * PI * k as f64 / 360.0;
        let y = KVector::real(&[a.cos(), a.sin()]);
        worst = worst.max((absconv_support(hex.vectors(), &y) - zono.support(&y)).abs());
    }
    let mut ok = worst < 1e-9 && (zono.scale - 0.5).abs() < 1e-15;
    let mut parts = vec![format!("R2 support gap {worst:.1e}")];
    for (f, n) in [(Real, 3), (Real, 7), (Complex, 3)] {
        let e = etf(f, n);
        match strictness_witness(&e, &t) {
            Some(x) => parts.push(format!("{} ratio {:.4}", tag(f, n), norm_ratio(&e, &x))),
            None => {
                ok = false;
                parts.push(format!("{} no witness", tag(f, n)));
            }
        }
    }
    let c2 = etf(Complex, 2);
    let x = KVector::complex(vec![Scalar::new(0.0, 0.0), Scalar::new(1.0, 0.0)]);
    let abs: Vec<f64> = c2.vectors().iter().map(|w| inner(&x, w).unwrap().norm()).collect();
    let s3 = 3f64.sqrt();
    let lhs = s3 * abs.iter().sum::<f64>();
    let rhs = (1.0 + s3) * s3 * abs.iter().copied().fold(0.0, f64::max);
    let closed_forms = (lhs - 3.0 * 2f64.sqrt()).abs() < 1e-12 && (rhs - (1.0 + s3) * 2f64.sqrt()).abs() < 1e-12;
    let strict = lhs > rhs && norm_ratio(&c2, &x) > 1.0 + t.lp_tol;
    ok &= closed_forms && strict;
    parts.push(format!("C2 witness (0,1): {lhs:.6} > {rhs:.6}"));
    (ok, parts.join(", "))
}

fn random_coeffs(rng: &mut ChaCha8Rng, field: ScalarField, m: usize, d: usize, bound: f64) -> Vec<Vec<Scalar>> {
    (0..m)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let modulus = if rng.random_bool(0.25) { bound } else { rng.random_range(0.0..bound) };
                    match field {
                        Real => Scalar::new(if rng.random_bool(0.5) { modulus } else { -modulus }, 0.0),
                        Complex => Scalar::from_polar(modulus, rng.random_range(0.0..2.0 * PI)),
                    }
                })
                .collect()
        })
        .collect()
}

fn sufficiency() -> Outcome {
    let t = tol();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut trace_err, mut col_err, mut inv, mut lp_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for (f, n) in SUPPORTED {
        let e = etf(f, n);
        let delta = delta_bound(f, n).unwrap();
        let bound = rescale_constant(f, n).unwrap();
        let max_rows = if n == 7 { 2 } else { 4 };
        for grid in 0..20 {
            let m = rng.random_range(0..=max_rows);
            let coeffs = random_coeffs(&mut rng, f, m, e.len(), bound);
            let built = cm_build(&e, &coeffs).unwrap();
            let rep = cm_verify(&built.operator, &built.subspace).unwrap();
            let te = (rep.trace_on_x - Scalar::new(delta, 0.0)).norm();
            let ce = (rep.column_sum - 1.0).abs();
            trace_err = trace_err.max(te);
            col_err = col_err.max(ce);
            inv = inv.max(rep.invariance_residual);
            let mut good = te < 1e-9 && ce < 1e-12 && rep.invariance_residual < t.residual_tol;
            if f == Real {
                let lp = min_projection_lp(&built.subspace, &t).unwrap().lambda_rel;
                lp_err = lp_err.max((lp - delta).abs());
                good &= (lp - delta).abs() < 1e-8;
            }
            if !good {
                failures.push(format!("{}#{grid}", tag(f, n)));
            }
        }
    }
    (
        failures.is_empty(),
        format!(
            "100 grids: max trace err {trace_err:.1e}, column sum err {col_err:.1e}, invariance {inv:.1e}, \
             real LP vs δ {lp_err:.1e}; failures {failures:?}"
        ),
    )
}

fn family() -> Outcome {
    let t = tol();
    let e = etf(Real, 3);
    let balls = extremal_family(&e, 5, 0, &t).unwrap();
    let identity = KMatrix::identity(Real, 3);
    let mut ok = balls.len() == 5;
    let mut counts = Vec::new();
    for (i, ball) in balls.iter().enumerate() {
        ok &= sandwich_test(ball, &e, &identity, &t).unwrap().is_extremal_for_t;
        counts.push(minimal_generator_count(ball.functionals(), &t).unwrap());
        if i > 0 {
            let prev = &balls[i - 1];
            for f in prev.functionals() {
                ok &= absconv_contains(ball.functionals(), f, &t).unwrap().is_membership();
            }
        }
    }
    ok &= counts.windows(2).all(|w| w[0] < w[1]);
    let r2 = extremal_family(&etf(Real, 2), 5, 0, &t);
    ok &= matches!(r2, Err(Error::NoStrictGap));
    (ok, format!("generator counts {counts:?}, R2 gives {:?}", r2.err()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("constants", constants),
        ("ETF suite", etf_suite),
        ("bound on random tight frames", bound_property),
        ("equality and near misses", equality),
        ("minimal projection LP", minimal_projection),
        ("λ_R(3,5)", lambda_r35),
        ("divisibility", divisibility),
        ("absconv vs zonotope", support_functions),
        ("trace-duality operators", sufficiency),
        ("nested extremal family", family),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = run();
        let secs = start.elapsed().as_secs_f64();
        if !ok {
            failed += 1;
        }
        println!("criterion {:>2} {} {name} [{secs:.2}s]: {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
