//! Dense two-phase tableau simplex.
//!
//! Pricing is Dantzig's rule, switching permanently to Bland's rule after
//! 1,000 degenerate pivots. Ties are broken by lowest index so every solve is
//! deterministic. The final basis is re-solved with an LU factorization to
//! clean up the vertex and its duals.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `opt cᵀx` subject to row constraints and `lower ≤ x ≤ upper`.
/// Bounds default to `[0, ∞)`; either side may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Infeasibility proof: with `h = Aᵀρ = μ_l − μ_u` and sign-feasible `ρ`,
/// every feasible x would give `μ_lᵀl − μ_uᵀu ≤ hᵀx ≤ ρᵀb`, but the
/// certificate has `margin = μ_lᵀl − μ_uᵀu − ρᵀb > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub rows: Vec<f64>,
    pub mu_lower: Vec<f64>,
    pub mu_upper: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint row, in the sign convention of `sense`:
    /// at optimality `objective = Σ dual_i rhs_i + (bound terms)`.
    pub dual: Vec<f64>,
    pub farkas: Option<FarkasCertificate>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn add_sparse(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) -> usize {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        self.add_constraint(coeffs, relation, rhs)
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn set_free(&mut self, j: usize) {
        self.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.lower.len().min(self.upper.len()),
            });
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("objective has non-finite entries".into()));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY || l > u {
                return Err(Error::InvalidArgument(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: c.coeffs.len(),
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Worst violation of rows and bounds at `x`.
    pub fn infeasibility(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for ((&v, &l), &u) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(l - v).max(v - u);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Plain-text dump of the program, one row per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sense = match self.sense {
            Sense::Minimize => "min",
            Sense::Maximize => "max",
        };
        let _ = writeln!(s, "{sense} {}", fmt_row(&self.objective));
        for (i, c) in self.constraints.iter().enumerate() {
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(s, "r{i}: {} {rel} {}", fmt_row(&c.coeffs), c.rhs);
        }
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if *l != 0.0 || u.is_finite() {
                let _ = writeln!(s, "bound x{j}: [{l}, {u}]");
            }
        }
        s
    }
}

fn fmt_row(row: &[f64]) -> String {
    let terms: Vec<String> = row
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(j, a)| format!("{a:+}*x{j}"))
        .collect();
    if terms.is_empty() {
        "0".into()
    } else {
        terms.join(" ")
    }
}

impl FarkasCertificate {
    /// Recomputes the margin from the program data alone; a non-positive
    /// result means the certificate does not prove infeasibility.
    pub fn verify(&self, p: &LinearProgram) -> f64 {
        if self.rows.len() != p.constraints.len() {
            return f64::NEG_INFINITY;
        }
        for (c, &r) in p.constraints.iter().zip(&self.rows) {
            let ok = match c.relation {
                Relation::Le => r >= 0.0,
                Relation::Ge => r <= 0.0,
                Relation::Eq => true,
            };
            if !ok {
                return f64::NEG_INFINITY;
            }
        }
        let scale: f64 = self.rows.iter().map(|r| r.abs()).sum::<f64>();
        if scale == 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut box_min = 0.0;
        for j in 0..p.num_vars() {
            let h: f64 = p
                .constraints
                .iter()
                .zip(&self.rows)
                .map(|(c, r)| c.coeffs[j] * r)
                .sum();
            let bound = if h > 0.0 { p.lower[j] } else { p.upper[j] };
            if bound.is_finite() {
                box_min += h * bound;
            } else if h.abs() > 1e-12 * scale {
                return f64::NEG_INFINITY;
            }
        }
        let rb: f64 = p.constraints.iter().zip(&self.rows).map(|(c, r)| c.rhs * r).sum();
        (box_min - rb) / scale
    }
}

#[derive(Clone, Copy)]
enum VarMap {
    Shift { col: usize, lo: f64 },
    Reflect { col: usize, hi: f64 },
    Split { pos: usize, neg: usize },
}

struct StdForm {
    m: usize,
    ncols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    first_art: usize,
    basis: Vec<usize>,
    flip: Vec<f64>,
    vars: Vec<VarMap>,
    n_orig_rows: usize,
}

fn standardize(p: &LinearProgram) -> StdForm {
    let n = p.num_vars();
    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut vars = Vec::with_capacity(n);
    let mut ns = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (p.lower[j], p.upper[j]);
        if l.is_finite() {
            vars.push(VarMap::Shift { col: ns, lo: l });
            if u.is_finite() {
                bound_rows.push((ns, u - l));
            }
            ns += 1;
        } else if u.is_finite() {
            vars.push(VarMap::Reflect { col: ns, hi: u });
            ns += 1;
        } else {
            vars.push(VarMap::Split { pos: ns, neg: ns + 1 });
            ns += 2;
        }
    }

    let n_orig_rows = p.constraints.len();
    let m = n_orig_rows + bound_rows.len();
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(m);
    for con in &p.constraints {
        let mut r = vec![0.0; ns];
        let mut rhs = con.rhs;
        for (j, &a) in con.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match vars[j] {
                VarMap::Shift { col, lo } => {
                    r[col] += a;
                    rhs -= a * lo;
                }
                VarMap::Reflect { col, hi } => {
                    r[col] -= a;
                    rhs -= a * hi;
                }
                VarMap::Split { pos, neg } => {
                    r[pos] += a;
                    r[neg] -= a;
                }
            }
        }
        rows.push((r, con.relation, rhs));
    }
    for &(col, width) in &bound_rows {
        let mut r = vec![0.0; ns];
        r[col] = 1.0;
        rows.push((r, Relation::Le, width));
    }

    let mut c = vec![0.0; ns];
    for (j, &cj) in p.objective.iter().enumerate() {
        let cj = sign * cj;
        match vars[j] {
            VarMap::Shift { col, .. } => c[col] += cj,
            VarMap::Reflect { col, .. } => c[col] -= cj,
            VarMap::Split { pos, neg } => {
                c[pos] += cj;
                c[neg] -= cj;
            }
        }
    }

    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let flip: Vec<f64> = rows.iter().map(|r| if r.2 < 0.0 { -1.0 } else { 1.0 }).collect();
    let needs_art: Vec<bool> = rows
        .iter()
        .zip(&flip)
        .map(|(r, &f)| match r.1 {
            Relation::Eq => true,
            Relation::Le => f < 0.0,
            Relation::Ge => f > 0.0,
        })
        .collect();
    let n_art = needs_art.iter().filter(|&&x| x).count();
    let first_art = ns + n_slack;
    let ncols = first_art + n_art;

    let mut a = vec![0.0; m * ncols];
    let mut b = vec![0.0; m];
    let mut basis = vec![0; m];
    let mut slack = ns;
    let mut art = first_art;
    for (i, (r, rel, rhs)) in rows.iter().enumerate() {
        let f = flip[i];
        let row = &mut a[i * ncols..(i + 1) * ncols];
        for (k, &v) in r.iter().enumerate() {
            row[k] = f * v;
        }
        b[i] = f * rhs;
        match rel {
            Relation::Le => {
                row[slack] = f;
                if !needs_art[i] {
                    basis[i] = slack;
                }
                slack += 1;
            }
            Relation::Ge => {
                row[slack] = -f;
                if !needs_art[i] {
                    basis[i] = slack;
                }
                slack += 1;
            }
            Relation::Eq => {}
        }
        if needs_art[i] {
            row[art] = 1.0;
            basis[i] = art;
            art += 1;
        }
    }
    c.resize(ncols, 0.0);

    StdForm {
        m,
        ncols,
        a,
        b,
        c,
        first_art,
        basis,
        flip,
        vars,
        n_orig_rows,
    }
}

const COST_EPS: f64 = 1e-10;
const PIVOT_EPS: f64 = 1e-9;
const DROP_EPS: f64 = 1e-14;
const BLAND_AFTER: usize = 1000;

struct Tableau {
    m: usize,
    w: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    degenerate: usize,
    bland: bool,
    iterations: usize,
    max_iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn new(sf: &StdForm) -> Self {
        let w = sf.ncols + 1;
        let mut t = vec![0.0; sf.m * w];
        for i in 0..sf.m {
            t[i * w..i * w + sf.ncols].copy_from_slice(&sf.a[i * sf.ncols..(i + 1) * sf.ncols]);
            t[i * w + sf.ncols] = sf.b[i];
        }
        Tableau {
            m: sf.m,
            w,
            t,
            obj: vec![0.0; w],
            basis: sf.basis.clone(),
            degenerate: 0,
            bland: false,
            iterations: 0,
            max_iterations: 50 * (sf.m + sf.ncols) + 10_000,
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i * self.w + self.w - 1]
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.w;
        self.obj.fill(0.0);
        self.obj[..w - 1].copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * w..(i + 1) * w];
                for (o, v) in self.obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.w;
        let p = self.t[r * w + c];
        let inv = 1.0 / p;
        let mut nz = Vec::new();
        for k in 0..w {
            let v = &mut self.t[r * w + k];
            if *v != 0.0 {
                *v *= inv;
                if v.abs() < DROP_EPS {
                    *v = 0.0;
                } else {
                    nz.push(k);
                }
            }
        }
        self.t[r * w + c] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        let update = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                for &k in &nz {
                    let v = row[k] - f * prow[k];
                    row[k] = if v.abs() < DROP_EPS { 0.0 } else { v };
                }
                row[c] = 0.0;
            }
        };
        for row in before.chunks_mut(w) {
            update(row);
        }
        for row in after.chunks_mut(w) {
            update(row);
        }
        update(&mut self.obj);
        self.basis[r] = c;
        self.iterations += 1;
    }

    fn run(&mut self, allowed: usize) -> Result<Outcome> {
        let w = self.w;
        // columns whose only positive entries are below the pivot threshold;
        // their reduced cost is rounding noise, so they are priced out
        let mut excluded = vec![false; allowed];
        loop {
            if self.iterations > self.max_iterations {
                return Err(Error::NumericalFailure(format!(
                    "simplex exceeded {} iterations ({} rows, {} columns)",
                    self.max_iterations,
                    self.m,
                    w - 1
                )));
            }
            let entering = if self.bland {
                (0..allowed).find(|&k| !excluded[k] && self.obj[k] < -COST_EPS)
            } else {
                let mut best = None;
                let mut best_val = -COST_EPS;
                for k in 0..allowed {
                    if self.obj[k] < best_val && !excluded[k] {
                        best_val = self.obj[k];
                        best = Some(k);
                    }
                }
                best
            };
            let Some(e) = entering else {
                return Ok(Outcome::Optimal);
            };
            let leave = if self.bland {
                self.bland_ratio(e)
            } else {
                self.harris_ratio(e)
            };
            let Some((r, theta)) = leave else {
                if (0..self.m).any(|i| self.t[i * w + e] > 0.0) {
                    excluded[e] = true;
                    continue;
                }
                return Ok(Outcome::Unbounded);
            };
            if theta <= 1e-12 {
                self.degenerate += 1;
                if self.degenerate > BLAND_AFTER {
                    self.bland = true;
                }
            }
            self.pivot(r, e);
        }
    }

    /// Textbook minimum ratio with ties broken by lowest basis index.
    fn bland_ratio(&self, e: usize) -> Option<(usize, f64)> {
        let w = self.w;
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.t[i * w + e];
            if a > PIVOT_EPS {
                let theta = self.rhs(i).max(0.0) / a;
                leave = match leave {
                    None => Some((i, theta)),
                    Some((j, best)) => {
                        let tie = (theta - best).abs() <= 1e-12 * (1.0 + best);
                        if theta < best && !tie || tie && self.basis[i] < self.basis[j] {
                            Some((i, theta))
                        } else {
                            Some((j, best))
                        }
                    }
                };
            }
        }
        leave
    }

    /// Two-pass ratio test: relax the bound by a feasibility tolerance, then
    /// take the largest pivot among rows under the relaxed minimum.
    fn harris_ratio(&self, e: usize) -> Option<(usize, f64)> {
        const FEAS_TOL: f64 = 1e-9;
        let w = self.w;
        let mut bound = f64::INFINITY;
        for i in 0..self.m {
            let a = self.t[i * w + e];
            if a > PIVOT_EPS {
                bound = bound.min((self.rhs(i).max(0.0) + FEAS_TOL) / a);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..self.m {
            let a = self.t[i * w + e];
            if a > PIVOT_EPS {
                let theta = self.rhs(i).max(0.0) / a;
                if theta <= bound && best.is_none_or(|(_, _, ba)| a > ba) {
                    best = Some((i, theta, a));
                }
            }
        }
        best.map(|(i, theta, _)| (i, theta))
    }

    /// Degenerate pivots on zero-rhs rows that replace artificials by
    /// structural or slack columns; they leave every basic value unchanged.
    fn crash(&mut self, first_art: usize, col_nnz: &[usize]) {
        let w = self.w;
        for r in 0..self.m {
            if self.basis[r] < first_art || self.rhs(r) != 0.0 {
                continue;
            }
            let row = &self.t[r * w..r * w + first_art];
            let max = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if max < PIVOT_EPS {
                continue;
            }
            let mut pick: Option<usize> = None;
            for (k, v) in row.iter().enumerate() {
                if v.abs() >= 0.5 * max && !self.basis.contains(&k) {
                    pick = match pick {
                        Some(q) if col_nnz[q] <= col_nnz[k] => Some(q),
                        _ => Some(k),
                    };
                }
            }
            if let Some(k) = pick {
                self.pivot(r, k);
            }
        }
    }
}

/// Solves `B x = rhs` or `Bᵀ y = rhs` for the basis columns of `a`.
fn basis_solve(sf: &StdForm, basis: &[usize], rhs: &[f64], transpose: bool) -> Option<Vec<f64>> {
    let m = sf.m;
    if m == 0 {
        return Some(Vec::new());
    }
    let bm = DMatrix::from_fn(m, m, |i, j| sf.a[i * sf.ncols + basis[j]]);
    let bm = if transpose { bm.transpose() } else { bm };
    let lu = bm.lu();
    let sol = lu.solve(&DVector::from_column_slice(rhs))?;
    if sol.iter().all(|v| v.is_finite()) {
        Some(sol.iter().copied().collect())
    } else {
        None
    }
}

fn std_residual(sf: &StdForm, x: &[f64]) -> f64 {
    let mut worst = x.iter().fold(0.0f64, |m, v| m.max(-v));
    for i in 0..sf.m {
        let row = &sf.a[i * sf.ncols..(i + 1) * sf.ncols];
        let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
        worst = worst.max((lhs - sf.b[i]).abs());
    }
    worst
}

fn recover_x(sf: &StdForm, xs: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| match sf.vars[j] {
            VarMap::Shift { col, lo } => lo + xs[col],
            VarMap::Reflect { col, hi } => hi - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        })
        .collect()
}

pub fn solve_lp(p: &LinearProgram) -> Result<LpSolution> {
    solve_lp_with(p, 1e-9)
}

/// Solves `p`; `tol` bounds the accepted primal infeasibility, dual
/// infeasibility and duality gap (relative to the data scale).
pub fn solve_lp_with(p: &LinearProgram, tol: f64) -> Result<LpSolution> {
    p.validate()?;
    let sf = standardize(p);
    let mut tab = Tableau::new(&sf);

    let mut col_nnz = vec![0usize; sf.ncols];
    for i in 0..sf.m {
        for (k, v) in sf.a[i * sf.ncols..(i + 1) * sf.ncols].iter().enumerate() {
            if *v != 0.0 {
                col_nnz[k] += 1;
            }
        }
    }
    tab.crash(sf.first_art, &col_nnz);

    let b_scale = sf.b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let has_art = tab.basis.iter().any(|&k| k >= sf.first_art);
    if has_art {
        let mut phase1 = vec![0.0; sf.ncols];
        phase1[sf.first_art..].fill(1.0);
        tab.set_objective(&phase1);
        tab.run(sf.first_art)?;
        let infeas = -tab.obj[tab.w - 1];
        if infeas > tol * b_scale {
            return infeasible(p, &sf, &tab, &phase1);
        }
        // drive remaining (zero-level) artificials out of the basis
        for r in 0..tab.m {
            if tab.basis[r] >= sf.first_art {
                let w = tab.w;
                let pick = (0..sf.first_art)
                    .filter(|k| !tab.basis.contains(k))
                    .max_by(|&x, &y| tab.t[r * w + x].abs().total_cmp(&tab.t[r * w + y].abs()).then(y.cmp(&x)));
                if let Some(k) = pick {
                    if tab.t[r * w + k].abs() > PIVOT_EPS {
                        tab.pivot(r, k);
                    }
                }
            }
        }
    }

    tab.set_objective(&sf.c);
    let outcome = tab.run(sf.first_art)?;
    let n = p.num_vars();
    if let Outcome::Unbounded = outcome {
        let xs = tableau_x(&sf, &tab);
        let x = recover_x(&sf, &xs, n);
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: match p.sense {
                Sense::Minimize => f64::NEG_INFINITY,
                Sense::Maximize => f64::INFINITY,
            },
            primal_residual: p.infeasibility(&x),
            x,
            dual: vec![0.0; p.constraints.len()],
            farkas: None,
            dual_residual: f64::NAN,
            duality_gap: f64::NAN,
            iterations: tab.iterations,
        });
    }

    // LU clean-up of the final vertex
    let tab_x = tableau_x(&sf, &tab);
    let mut xs = tab_x.clone();
    if let Some(sol) = basis_solve(&sf, &tab.basis, &sf.b, false) {
        let mut cand = vec![0.0; sf.ncols];
        for (i, &k) in tab.basis.iter().enumerate() {
            cand[k] = sol[i];
        }
        if std_residual(&sf, &cand) <= std_residual(&sf, &tab_x) {
            xs = cand;
        }
    }
    for v in xs.iter_mut() {
        if *v < 0.0 && *v > -tol {
            *v = 0.0;
        }
    }

    let cb: Vec<f64> = tab.basis.iter().map(|&k| sf.c[k]).collect();
    let y = match basis_solve(&sf, &tab.basis, &cb, true) {
        Some(y) => y,
        None => tableau_duals(&sf, &tab),
    };

    // dual feasibility and gap in standard form
    let c_scale = sf.c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut dual_residual = 0.0f64;
    for k in 0..sf.first_art {
        let mut d = sf.c[k];
        for i in 0..sf.m {
            d -= sf.a[i * sf.ncols + k] * y[i];
        }
        dual_residual = dual_residual.max(-d);
    }
    let primal_std: f64 = sf.c.iter().zip(&xs).map(|(c, v)| c * v).sum();
    let dual_std: f64 = y.iter().zip(&sf.b).map(|(y, b)| y * b).sum();
    let duality_gap = (primal_std - dual_std).abs();

    let x = recover_x(&sf, &xs, n);
    let primal_residual = p.infeasibility(&x);
    let scale = b_scale.max(c_scale);
    if primal_residual > tol * scale * 10.0
        || dual_residual > tol * scale * 10.0
        || duality_gap > tol * scale * (1.0 + primal_std.abs()) * 10.0
    {
        return Err(Error::NumericalFailure(format!(
            "simplex vertex failed verification: primal {primal_residual:.3e}, dual {dual_residual:.3e}, gap {duality_gap:.3e}"
        )));
    }

    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let dual = (0..sf.n_orig_rows).map(|i| sign * sf.flip[i] * y[i]).collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: p.objective_value(&x),
        x,
        dual,
        farkas: None,
        primal_residual,
        dual_residual,
        duality_gap,
        iterations: tab.iterations,
    })
}

fn tableau_x(sf: &StdForm, tab: &Tableau) -> Vec<f64> {
    let mut xs = vec![0.0; sf.ncols];
    for (i, &k) in tab.basis.iter().enumerate() {
        xs[k] = tab.rhs(i);
    }
    xs
}

/// Duals read off the reduced costs of the initial basis columns.
fn tableau_duals(sf: &StdForm, tab: &Tableau) -> Vec<f64> {
    let mut y = vec![0.0; sf.m];
    for (i, yi) in y.iter_mut().enumerate() {
        let row = &sf.a[i * sf.ncols..(i + 1) * sf.ncols];
        let k = sf.basis[i];
        *yi = (sf.c[k] - tab.obj[k]) / row[k];
    }
    y
}

fn infeasible(p: &LinearProgram, sf: &StdForm, tab: &Tableau, phase1: &[f64]) -> Result<LpSolution> {
    let cb: Vec<f64> = tab.basis.iter().map(|&k| phase1[k]).collect();
    let y = basis_solve(sf, &tab.basis, &cb, true).unwrap_or_else(|| tableau_duals(sf, tab));
    let n = p.num_vars();
    // ρ for the original rows; the std rows are flipped copies of `row·x ≥/=/≤ b`
    let rows: Vec<f64> = (0..sf.n_orig_rows)
        .map(|i| {
            let r = -sf.flip[i] * y[i];
            match p.constraints[i].relation {
                Relation::Le => r.max(0.0),
                Relation::Ge => r.min(0.0),
                Relation::Eq => r,
            }
        })
        .collect();
    let mut mu_lower = vec![0.0; n];
    let mut mu_upper = vec![0.0; n];
    for j in 0..n {
        let h: f64 = p.constraints.iter().zip(&rows).map(|(c, r)| c.coeffs[j] * r).sum();
        if h > 0.0 {
            mu_lower[j] = h;
        } else {
            mu_upper[j] = -h;
        }
    }
    let mut cert = FarkasCertificate {
        rows,
        mu_lower,
        mu_upper,
        margin: 0.0,
    };
    cert.margin = cert.verify(p);
    if !(cert.margin.is_finite() && cert.margin > 0.0) {
        return Err(Error::NumericalFailure(format!(
            "phase one ended infeasible but the Farkas certificate failed (margin {:.3e})",
            cert.margin
        )));
    }
    let xs = tableau_x(sf, tab);
    let x = recover_x(sf, &xs, n);
    Ok(LpSolution {
        status: LpStatus::Infeasible,
        objective: f64::NAN,
        primal_residual: p.infeasibility(&x),
        x,
        dual: vec![0.0; p.constraints.len()],
        farkas: Some(cert),
        dual_residual: f64::NAN,
        duality_gap: f64::NAN,
        iterations: tab.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_upper_bound() {
        let mut p = LinearProgram::new(Sense::Maximize, vec![1.0]);
        p.add_constraint(vec![1.0], Relation::Le, 3.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
        assert!((s.dual[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_corner() {
        let mut p = LinearProgram::new(Sense::Maximize, vec![1.0, 1.0]);
        p.add_constraint(vec![1.0, 1.0], Relation::Le, 1.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_free_variables() {
        // min |x| + |y| written with a free split, subject to x + 2y = 4
        let mut p = LinearProgram::new(Sense::Minimize, vec![0.0, 0.0, 1.0, 1.0]);
        p.set_free(0);
        p.set_free(1);
        p.add_constraint(vec![1.0, 2.0, 0.0, 0.0], Relation::Eq, 4.0);
        p.add_constraint(vec![1.0, 0.0, -1.0, 0.0], Relation::Le, 0.0);
        p.add_constraint(vec![-1.0, 0.0, -1.0, 0.0], Relation::Le, 0.0);
        p.add_constraint(vec![0.0, 1.0, 0.0, -1.0], Relation::Le, 0.0);
        p.add_constraint(vec![0.0, -1.0, 0.0, -1.0], Relation::Le, 0.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
        assert!((s.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bounds_are_respected() {
        let mut p = LinearProgram::new(Sense::Minimize, vec![1.0, -1.0]);
        p.set_bounds(0, -2.0, 5.0);
        p.set_bounds(1, f64::NEG_INFINITY, 1.5);
        let s = solve_lp(&p).unwrap();
        assert!((s.x[0] + 2.0).abs() < 1e-12 && (s.x[1] - 1.5).abs() < 1e-12);
        assert!((s.objective + 3.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_with_certificate() {
        let mut p = LinearProgram::new(Sense::Minimize, vec![1.0, 1.0]);
        p.add_constraint(vec![1.0, 1.0], Relation::Ge, 3.0);
        p.add_constraint(vec![1.0, 0.0], Relation::Le, 1.0);
        p.add_constraint(vec![0.0, 1.0], Relation::Le, 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        let cert = s.farkas.unwrap();
        assert!(cert.verify(&p) > 1e-9);
    }

    #[test]
    fn infeasible_from_bounds() {
        let mut p = LinearProgram::new(Sense::Minimize, vec![0.0]);
        p.set_bounds(0, 0.0, 1.0);
        p.add_constraint(vec![1.0], Relation::Eq, 2.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(s.farkas.unwrap().margin > 0.0);
    }

    #[test]
    fn unbounded() {
        let mut p = LinearProgram::new(Sense::Maximize, vec![1.0, 0.0]);
        p.add_constraint(vec![-1.0, 1.0], Relation::Le, 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut p = LinearProgram::new(Sense::Minimize, vec![1.0, 2.0]);
        p.add_constraint(vec![1.0, 1.0], Relation::Eq, 1.0);
        p.add_constraint(vec![2.0, 2.0], Relation::Eq, 2.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_bounds() {
        let mut p = LinearProgram::new(Sense::Minimize, vec![1.0]);
        p.set_bounds(0, 2.0, 1.0);
        assert!(matches!(solve_lp(&p), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn text_dump() {
        let mut p = LinearProgram::new(Sense::Maximize, vec![1.0, 0.0]);
        p.add_constraint(vec![1.0, -2.0], Relation::Le, 3.0);
        let s = p.to_text();
        assert!(s.starts_with("max +1*x0"));
        assert!(s.contains("r0: +1*x0 -2*x1 <= 3"));
    }
}
