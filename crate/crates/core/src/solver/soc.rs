//! Second-order-cone feasibility by Dykstra's alternating projections.
//!
//! The feasible set is `{v : M v = h} ∩ K`, where `K` is a product of
//! Euclidean balls `‖v_B‖ ≤ r` and group budgets `Σ_g ‖v_g‖ ≤ b`; variables
//! outside every block are free. A budget block is the cone form
//! `‖z_g‖ ≤ t_g, Σ t_g ≤ b` with the `t_g` eliminated, which keeps every
//! block compact.
//!
//! Feasibility is reported only with a witness whose equality residual is
//! below tolerance. Infeasibility is reported only with a functional
//! `c = Mᵀλ` for which `λᵀh − σ_K(c)` is positive, i.e. a hyperplane that
//! strictly separates the affine set from `K`. Anything else is
//! `Undetermined`.

use crate::error::{Error, Result};
use crate::linalg::lstsq_real;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub enum ConeBlock {
    /// `‖v_vars‖ ≤ radius`.
    Ball { vars: Vec<usize>, radius: f64 },
    /// `Σ_g ‖v_g‖ ≤ budget`.
    GroupBudget { groups: Vec<Vec<usize>>, budget: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocFeasibility {
    pub num_vars: usize,
    /// Rows of `M`, each of length `num_vars`.
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub blocks: Vec<ConeBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SocStatus {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocSolution {
    pub status: SocStatus,
    pub witness: Option<Vec<f64>>,
    /// Multipliers `λ` on the equality rows of the separating functional.
    pub separator: Option<Vec<f64>>,
    /// Normalized separation margin `(λᵀh − σ_K(Mᵀλ)) / ‖Mᵀλ‖`, or the
    /// residual gap when the equalities alone are inconsistent.
    pub margin: f64,
    /// Equality residual of the witness (Feasible) or of the last iterate.
    pub residual: f64,
    pub iterations: usize,
}

pub const MAX_ITERATIONS: usize = 100_000;

impl SocFeasibility {
    fn validate(&self) -> Result<()> {
        if self.eq_rows.len() != self.eq_rhs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.eq_rows.len(),
                found: self.eq_rhs.len(),
            });
        }
        for r in &self.eq_rows {
            if r.len() != self.num_vars {
                return Err(Error::DimensionMismatch {
                    expected: self.num_vars,
                    found: r.len(),
                });
            }
        }
        let mut seen = vec![false; self.num_vars];
        let mut claim = |k: usize| -> Result<()> {
            if k >= self.num_vars {
                return Err(Error::IndexOutOfRange {
                    index: k,
                    len: self.num_vars,
                });
            }
            if seen[k] {
                return Err(Error::InvalidArgument(format!("variable {k} is in two cone blocks")));
            }
            seen[k] = true;
            Ok(())
        };
        for b in &self.blocks {
            match b {
                ConeBlock::Ball { vars, radius } => {
                    if !(*radius >= 0.0 && radius.is_finite()) {
                        return Err(Error::InvalidArgument(format!("ball radius {radius}")));
                    }
                    for &k in vars {
                        claim(k)?;
                    }
                }
                ConeBlock::GroupBudget { groups, budget } => {
                    if !(*budget >= 0.0 && budget.is_finite()) {
                        return Err(Error::InvalidArgument(format!("group budget {budget}")));
                    }
                    for g in groups {
                        for &k in g {
                            claim(k)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn free_vars(&self) -> Vec<usize> {
        let mut bound = vec![false; self.num_vars];
        for b in &self.blocks {
            match b {
                ConeBlock::Ball { vars, .. } => vars.iter().for_each(|&k| bound[k] = true),
                ConeBlock::GroupBudget { groups, .. } => {
                    groups.iter().flatten().for_each(|&k| bound[k] = true)
                }
            }
        }
        (0..self.num_vars).filter(|&k| !bound[k]).collect()
    }

    /// Largest violation of the cone constraints at `v`.
    pub fn cone_violation(&self, v: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for b in &self.blocks {
            match b {
                ConeBlock::Ball { vars, radius } => {
                    worst = worst.max(sub_norm(v, vars) - radius);
                }
                ConeBlock::GroupBudget { groups, budget } => {
                    let s: f64 = groups.iter().map(|g| sub_norm(v, g)).sum();
                    worst = worst.max(s - budget);
                }
            }
        }
        worst
    }

    /// `max_k |(M v − h)_k|`.
    pub fn equality_residual(&self, v: &[f64]) -> f64 {
        self.eq_rows
            .iter()
            .zip(&self.eq_rhs)
            .map(|(r, h)| (r.iter().zip(v).map(|(a, x)| a * x).sum::<f64>() - h).abs())
            .fold(0.0, f64::max)
    }

    /// Support function of `K` at `c`; infinite if `c` touches a free variable.
    pub fn support(&self, c: &[f64]) -> f64 {
        let scale = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        for k in self.free_vars() {
            if c[k].abs() > 1e-12 * scale.max(1e-300) {
                return f64::INFINITY;
            }
        }
        let mut s = 0.0;
        for b in &self.blocks {
            match b {
                ConeBlock::Ball { vars, radius } => s += radius * sub_norm(c, vars),
                ConeBlock::GroupBudget { groups, budget } => {
                    s += budget * groups.iter().map(|g| sub_norm(c, g)).fold(0.0, f64::max);
                }
            }
        }
        s
    }

    fn project_cone(&self, v: &mut [f64]) {
        for b in &self.blocks {
            match b {
                ConeBlock::Ball { vars, radius } => {
                    let nrm = sub_norm(v, vars);
                    if nrm > *radius {
                        let f = if nrm > 0.0 { radius / nrm } else { 0.0 };
                        vars.iter().for_each(|&k| v[k] *= f);
                    }
                }
                ConeBlock::GroupBudget { groups, budget } => {
                    let norms: Vec<f64> = groups.iter().map(|g| sub_norm(v, g)).collect();
                    let total: f64 = norms.iter().sum();
                    if total <= *budget {
                        continue;
                    }
                    let tau = l1_threshold(&norms, *budget);
                    for (g, &a) in groups.iter().zip(&norms) {
                        let f = if a > tau { (a - tau) / a } else { 0.0 };
                        g.iter().for_each(|&k| v[k] *= f);
                    }
                }
            }
        }
    }
}

fn sub_norm(v: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&k| v[k] * v[k]).sum::<f64>().sqrt()
}

/// Threshold `τ ≥ 0` with `Σ max(a_i − τ, 0) = budget` (assumes `Σ a > budget`).
fn l1_threshold(a: &[f64], budget: f64) -> f64 {
    let mut sorted = a.to_vec();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - budget) / (k + 1) as f64;
        if k + 1 == sorted.len() || sorted[k + 1] <= t {
            tau = t;
            break;
        }
    }
    tau.max(0.0)
}

struct Affine {
    m: DMatrix<f64>,
    h: DVector<f64>,
    pinv: DMatrix<f64>,
}

impl Affine {
    fn new(p: &SocFeasibility) -> Self {
        let rows = p.eq_rows.len();
        let m = DMatrix::from_fn(rows, p.num_vars, |i, j| p.eq_rows[i][j]);
        let h = DVector::from_column_slice(&p.eq_rhs);
        let pinv = if rows == 0 {
            DMatrix::zeros(p.num_vars, 0)
        } else {
            let svd = m.clone().svd(true, true);
            let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
            svd.pseudo_inverse((smax * 1e-12).max(1e-300))
                .expect("both factors were requested")
        };
        Affine { m, h, pinv }
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.m.nrows() == 0 {
            return v.clone();
        }
        let r = &self.m * v - &self.h;
        v - &self.pinv * r
    }
}

pub fn solve_soc_feasibility(p: &SocFeasibility, tol: f64) -> Result<SocSolution> {
    p.validate()?;
    let aff = Affine::new(p);
    let nv = p.num_vars;

    // inconsistent equalities: λ = h − M M⁺ h has Mᵀλ = 0 and λᵀh > 0
    if aff.m.nrows() > 0 {
        let x0 = &aff.pinv * &aff.h;
        let lam = &aff.h - &aff.m * &x0;
        let ln = lam.norm();
        if ln > tol * (1.0 + aff.h.norm()) {
            return Ok(SocSolution {
                status: SocStatus::Infeasible,
                witness: None,
                separator: Some(lam.iter().copied().collect()),
                margin: lam.dot(&aff.h) / ln,
                residual: ln,
                iterations: 0,
            });
        }
    }

    let mut x = aff.project(&DVector::zeros(nv));
    let mut y = x.clone();
    let mut corr = DVector::<f64>::zeros(nv);
    let polish_at = [50usize, 200, 1000, 3000, 10_000, 30_000, 60_000, MAX_ITERATIONS];
    let mut best_residual = f64::INFINITY;

    for it in 1..=MAX_ITERATIONS {
        let mut ys = &x + &corr;
        p.project_cone(ys.as_mut_slice());
        corr = &x + &corr - &ys;
        y = ys;
        x = aff.project(&y);

        if it % 25 == 0 || it == MAX_ITERATIONS {
            let res = p.equality_residual(y.as_slice());
            best_residual = best_residual.min(res);
            if res < tol {
                return Ok(feasible(p, y.as_slice().to_vec(), it));
            }
            if let Some(sol) = separation(p, &aff, &x, &y, tol, it) {
                return Ok(sol);
            }
            // plain projection of the affine iterate, without the correction
            let mut yp = x.clone();
            p.project_cone(yp.as_mut_slice());
            if let Some(sol) = separation(p, &aff, &x, &yp, tol, it) {
                return Ok(sol);
            }
        }
        if polish_at.contains(&it) {
            if let Some(v) = polish(p, &aff, y.as_slice(), tol) {
                return Ok(feasible(p, v, it));
            }
        }
    }
    Err(Error::Undetermined {
        residual: best_residual.min(p.equality_residual(y.as_slice())),
        iterations: MAX_ITERATIONS,
    })
}

fn feasible(p: &SocFeasibility, v: Vec<f64>, iterations: usize) -> SocSolution {
    SocSolution {
        status: SocStatus::Feasible,
        residual: p.equality_residual(&v),
        witness: Some(v),
        separator: None,
        margin: 0.0,
        iterations,
    }
}

fn separation(
    p: &SocFeasibility,
    aff: &Affine,
    x: &DVector<f64>,
    y: &DVector<f64>,
    tol: f64,
    iterations: usize,
) -> Option<SocSolution> {
    let gap = x - y;
    if gap.norm() <= tol || aff.m.nrows() == 0 {
        return None;
    }
    let mt = aff.m.transpose();
    let lam = lstsq_real(&mt, &gap);
    let c = &mt * &lam;
    let cn = c.norm();
    if cn == 0.0 {
        return None;
    }
    let margin = (lam.dot(&aff.h) - p.support(c.as_slice())) / cn;
    if margin > tol {
        Some(SocSolution {
            status: SocStatus::Infeasible,
            witness: None,
            separator: Some(lam.iter().copied().collect()),
            margin,
            residual: p.equality_residual(y.as_slice()),
            iterations,
        })
    } else {
        None
    }
}

/// Newton iterations on the equalities plus the constraints that look
/// active at `start`; returns a point inside `K` meeting the equalities.
fn polish(p: &SocFeasibility, aff: &Affine, start: &[f64], tol: f64) -> Option<Vec<f64>> {
    let nv = p.num_vars;
    let active_rel = 1e-6;
    let mut v = start.to_vec();

    enum Eqn {
        Sphere(Vec<usize>, f64),
        Budget(Vec<Vec<usize>>, f64),
        Zero(usize),
    }
    let mut eqs = Vec::new();
    for b in &p.blocks {
        match b {
            ConeBlock::Ball { vars, radius } => {
                if sub_norm(&v, vars) >= radius * (1.0 - active_rel) && *radius > 0.0 {
                    eqs.push(Eqn::Sphere(vars.clone(), *radius));
                } else if *radius == 0.0 {
                    vars.iter().for_each(|&k| eqs.push(Eqn::Zero(k)));
                }
            }
            ConeBlock::GroupBudget { groups, budget } => {
                let norms: Vec<f64> = groups.iter().map(|g| sub_norm(&v, g)).collect();
                let total: f64 = norms.iter().sum();
                if total >= budget * (1.0 - active_rel) {
                    let mut live = Vec::new();
                    for (g, &a) in groups.iter().zip(&norms) {
                        if a < 1e-7 * budget.max(1e-300) {
                            g.iter().for_each(|&k| eqs.push(Eqn::Zero(k)));
                        } else {
                            live.push(g.clone());
                        }
                    }
                    if !live.is_empty() {
                        eqs.push(Eqn::Budget(live, *budget));
                    }
                }
            }
        }
    }

    let rows = aff.m.nrows();
    let total = rows + eqs.len();
    for _ in 0..30 {
        let vv = DVector::from_column_slice(&v);
        let mut f = DVector::zeros(total);
        let mut j = DMatrix::zeros(total, nv);
        if rows > 0 {
            let r = &aff.m * &vv - &aff.h;
            f.rows_mut(0, rows).copy_from(&r);
            j.rows_mut(0, rows).copy_from(&aff.m);
        }
        for (e, eq) in eqs.iter().enumerate() {
            let i = rows + e;
            match eq {
                Eqn::Sphere(vars, r) => {
                    f[i] = vars.iter().map(|&k| v[k] * v[k]).sum::<f64>() - r * r;
                    vars.iter().for_each(|&k| j[(i, k)] = 2.0 * v[k]);
                }
                Eqn::Budget(groups, b) => {
                    f[i] = groups.iter().map(|g| sub_norm(&v, g)).sum::<f64>() - b;
                    for g in groups {
                        let a = sub_norm(&v, g);
                        if a > 0.0 {
                            g.iter().for_each(|&k| j[(i, k)] = v[k] / a);
                        }
                    }
                }
                Eqn::Zero(k) => {
                    f[i] = v[*k];
                    j[(i, *k)] = 1.0;
                }
            }
        }
        if f.amax() < 1e-15 {
            break;
        }
        let step = lstsq_real(&j, &f);
        if !step.iter().all(|s| s.is_finite()) {
            return None;
        }
        for (x, s) in v.iter_mut().zip(step.iter()) {
            *x -= s;
        }
    }
    p.project_cone(&mut v);
    if p.equality_residual(&v) < tol && p.cone_violation(&v) <= 0.0 {
        Some(v)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_scalar(value: f64) -> SocFeasibility {
        SocFeasibility {
            num_vars: 1,
            eq_rows: vec![vec![1.0]],
            eq_rhs: vec![value],
            blocks: vec![ConeBlock::Ball {
                vars: vec![0],
                radius: 1.0,
            }],
        }
    }

    #[test]
    fn inside_and_outside_the_unit_ball() {
        let s = solve_soc_feasibility(&fixed_scalar(0.5), 1e-9).unwrap();
        assert_eq!(s.status, SocStatus::Feasible);
        assert!((s.witness.unwrap()[0] - 0.5).abs() < 1e-9);
        let s = solve_soc_feasibility(&fixed_scalar(2.0), 1e-9).unwrap();
        assert_eq!(s.status, SocStatus::Infeasible);
        assert!(s.margin > 0.9);
    }

    #[test]
    fn boundary_point_is_feasible() {
        // z ∈ R², |z| ≤ 1, z_0 = 1 touches the circle at a single point
        let p = SocFeasibility {
            num_vars: 2,
            eq_rows: vec![vec![1.0, 0.0]],
            eq_rhs: vec![1.0],
            blocks: vec![ConeBlock::Ball {
                vars: vec![0, 1],
                radius: 1.0,
            }],
        };
        let s = solve_soc_feasibility(&p, 1e-9).unwrap();
        assert_eq!(s.status, SocStatus::Feasible);
    }

    #[test]
    fn group_budget_projection() {
        let mut v = vec![3.0, 4.0, 0.0, 1.0];
        let p = SocFeasibility {
            num_vars: 4,
            eq_rows: vec![],
            eq_rhs: vec![],
            blocks: vec![ConeBlock::GroupBudget {
                groups: vec![vec![0, 1], vec![2, 3]],
                budget: 2.0,
            }],
        };
        p.project_cone(&mut v);
        // norms (5, 1) thresholded by τ = 3 give (2, 0)
        assert!((v[0] - 1.2).abs() < 1e-12 && (v[1] - 1.6).abs() < 1e-12);
        assert_eq!(v[3], 0.0);
        assert!((p.support(&[0.0, 1.0, 3.0, 4.0]) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_equalities() {
        let p = SocFeasibility {
            num_vars: 1,
            eq_rows: vec![vec![1.0], vec![1.0]],
            eq_rhs: vec![0.0, 1.0],
            blocks: vec![],
        };
        let s = solve_soc_feasibility(&p, 1e-9).unwrap();
        assert_eq!(s.status, SocStatus::Infeasible);
    }

    #[test]
    fn overlapping_blocks_rejected() {
        let p = SocFeasibility {
            num_vars: 2,
            eq_rows: vec![],
            eq_rhs: vec![],
            blocks: vec![
                ConeBlock::Ball {
                    vars: vec![0, 1],
                    radius: 1.0,
                },
                ConeBlock::Ball {
                    vars: vec![1],
                    radius: 1.0,
                },
            ],
        };
        assert!(solve_soc_feasibility(&p, 1e-9).is_err());
    }
}
