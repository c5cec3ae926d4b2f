//! Weighted tight frames, the weighted frame objective
//! `Φ(u, t) = Σ_{i,j} t_i t_j |⟨u_i, u_j⟩|`, and the conditions under which
//! it reaches `δ_K(n)`.

use crate::constants::{delta_bound, gerzon_bound, welch_angle, ToleranceConfig};
use crate::error::{Error, Result};
use crate::etf::MaximalETF;
use crate::field::{dot, norm_sqr, sgn, KMatrix, KVector, Scalar, ScalarField, ZERO};
use crate::linalg::spectral_norm;
use nalgebra::DMatrix;

/// Vectors `u_1..u_N` in K^n with nonnegative weights `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFrame {
    field: ScalarField,
    n: usize,
    vectors: Vec<KVector>,
    weights: Vec<f64>,
}

/// Outcome of checking the four equality conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualityReport {
    /// `t_i = 0` exactly on the zero vectors.
    pub condition1_ok: bool,
    /// Nonzero directions are exactly the lines of a maximal ETF.
    pub condition2_ok: bool,
    /// Every direction group carries weight `Σ t_i² = 1/d`.
    pub condition3_ok: bool,
    /// `‖u_i‖ = √n t_i` for every i.
    pub condition4_ok: bool,
    /// Indices of zero vectors.
    pub zero_indices: Vec<usize>,
    /// Direction groups of the nonzero vectors, ordered by smallest index.
    pub groups: Vec<Vec<usize>>,
    pub group_sums: Vec<f64>,
    /// One unit representative per group when they form a maximal ETF.
    pub matched_etf: Option<MaximalETF>,
    /// Worst violation of each condition, in order.
    pub residuals: [f64; 4],
    pub phi: f64,
    pub delta: f64,
}

impl EqualityReport {
    pub fn all_ok(&self) -> bool {
        self.condition1_ok && self.condition2_ok && self.condition3_ok && self.condition4_ok
    }
}

impl WeightedFrame {
    pub fn new(field: ScalarField, n: usize, vectors: Vec<KVector>, weights: Vec<f64>) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidDimension(n));
        }
        if vectors.len() < n {
            return Err(Error::InvalidArgument(format!(
                "a frame in dimension {n} needs at least {n} vectors, got {}",
                vectors.len()
            )));
        }
        if weights.len() != vectors.len() {
            return Err(Error::DimensionMismatch {
                expected: vectors.len(),
                found: weights.len(),
            });
        }
        for v in &vectors {
            if v.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.dim(),
                });
            }
            if v.field() != field && field == ScalarField::Real {
                return Err(Error::FieldMismatch {
                    left: field,
                    right: v.field(),
                });
            }
        }
        if let Some(t) = weights.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::InvalidWeights(format!("weight {t} is not a nonnegative number")));
        }
        let vectors = vectors.into_iter().map(|v| v.promote(field)).collect();
        Ok(WeightedFrame {
            field,
            n,
            vectors,
            weights,
        })
    }

    /// Frame whose vectors are the rows of an N×n matrix. Orthonormal columns
    /// give a tight frame with constant 1.
    pub fn from_matrix_rows(u: &KMatrix, weights: Vec<f64>) -> Result<Self> {
        let vectors = (0..u.rows()).map(|i| u.row(i)).collect();
        Self::new(u.field(), u.cols(), vectors, weights)
    }

    /// Same vectors with uniform weights `1/√N`.
    pub fn with_uniform_weights(&self) -> WeightedFrame {
        let t = 1.0 / (self.len() as f64).sqrt();
        WeightedFrame {
            weights: vec![t; self.len()],
            ..self.clone()
        }
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<WeightedFrame> {
        Self::new(self.field, self.n, self.vectors.clone(), weights)
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[KVector] {
        &self.vectors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// N×n matrix with the frame vectors as rows.
    pub fn to_matrix(&self) -> KMatrix {
        let rows: Vec<Vec<Scalar>> = self.vectors.iter().map(|v| v.entries().to_vec()).collect();
        KMatrix::from_rows(self.field, &rows).expect("validated on construction")
    }

    /// Operator norm of `Σ u_i u_i^* − I`.
    pub fn tightness_residual(&self) -> f64 {
        let n = self.n;
        let mut s = DMatrix::<Scalar>::zeros(n, n);
        for v in &self.vectors {
            let e = v.entries();
            for r in 0..n {
                for c in 0..n {
                    s[(r, c)] += e[r] * e[c].conj();
                }
            }
        }
        for k in 0..n {
            s[(k, k)] -= Scalar::new(1.0, 0.0);
        }
        spectral_norm(&s)
    }

    fn require_tight(&self, tol: &ToleranceConfig) -> Result<()> {
        let residual = self.tightness_residual();
        if residual < tol.residual_tol {
            Ok(())
        } else {
            Err(Error::NotTight { residual })
        }
    }

    /// `|Σ ‖u_i‖² − n|`.
    pub fn trace_identity_residual(&self, tol: &ToleranceConfig) -> Result<f64> {
        self.require_tight(tol)?;
        let total: f64 = self.vectors.iter().map(|v| norm_sqr(v.entries())).sum();
        Ok((total - self.n as f64).abs())
    }

    /// `| ‖x‖² − Σ |⟨x, u_i⟩|² |`.
    pub fn parseval_residual(&self, x: &KVector, tol: &ToleranceConfig) -> Result<f64> {
        self.require_tight(tol)?;
        if x.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.dim(),
            });
        }
        let lhs = norm_sqr(x.entries());
        let rhs: f64 = self
            .vectors
            .iter()
            .map(|u| dot(x.entries(), u.entries()).norm_sqr())
            .sum();
        Ok((lhs - rhs).abs())
    }

    /// `Φ = Σ_{i,j} t_i t_j |⟨u_i, u_j⟩|`; requires `‖t‖ = 1` within `identity_tol`.
    pub fn objective_phi(&self) -> Result<f64> {
        self.objective_phi_with(&ToleranceConfig::default())
    }

    pub fn objective_phi_with(&self, tol: &ToleranceConfig) -> Result<f64> {
        let norm = self.weights.iter().map(|t| t * t).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > tol.identity_tol {
            return Err(Error::InvalidWeights(format!("‖t‖ = {norm}, expected 1")));
        }
        Ok(phi_unchecked(&self.vectors, &self.weights))
    }

    /// Partitions the indices and checks all four equality conditions.
    pub fn check_equality_conditions(&self, tol: &ToleranceConfig) -> Result<EqualityReport> {
        self.require_tight(tol)?;
        let big_n = self.len();
        let n = self.n;
        let rt = tol.residual_tol;
        let d = gerzon_bound(self.field, n)?;
        let zero_cut = 1e-12 * (n as f64).sqrt();

        let norms: Vec<f64> = self.vectors.iter().map(|v| v.norm()).collect();
        let zero_indices: Vec<usize> = (0..big_n).filter(|&i| norms[i] < zero_cut).collect();
        let nonzero: Vec<usize> = (0..big_n).filter(|&i| norms[i] >= zero_cut).collect();

        // (1)
        let mut r1 = 0.0f64;
        for &i in &zero_indices {
            r1 = r1.max(self.weights[i]);
        }
        let mut positive_ok = true;
        for &i in &nonzero {
            if self.weights[i] < rt {
                positive_ok = false;
                r1 = r1.max(rt - self.weights[i]);
            }
        }
        let condition1_ok = positive_ok && zero_indices.iter().all(|&i| self.weights[i] < rt);

        // grouping by |⟨û_i, û_j⟩| ≈ 1, transitively closed
        let units: Vec<KVector> = nonzero.iter().map(|&i| self.vectors[i].normalized()).collect();
        let mut parent: Vec<usize> = (0..nonzero.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for a in 0..units.len() {
            for b in a + 1..units.len() {
                let c = dot(units[a].entries(), units[b].entries()).norm();
                if (c - 1.0).abs() < rt {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_slot: Vec<Option<usize>> = vec![None; units.len()];
        for a in 0..units.len() {
            let r = find(&mut parent, a);
            match root_slot[r] {
                Some(g) => groups[g].push(nonzero[a]),
                None => {
                    root_slot[r] = Some(groups.len());
                    groups.push(vec![nonzero[a]]);
                }
            }
        }

        // (2): representatives pairwise at the Welch angle, d of them
        let phi_angle = welch_angle(self.field, n).unwrap_or(0.0);
        let reps: Vec<KVector> = groups.iter().map(|g| self.vectors[g[0]].normalized()).collect();
        let mut r2 = (groups.len() as f64 - d as f64).abs();
        for a in 0..reps.len() {
            for b in a + 1..reps.len() {
                let c = dot(reps[a].entries(), reps[b].entries()).norm();
                r2 = r2.max((c - phi_angle).abs());
            }
        }
        let condition2_ok = n >= 2 && groups.len() == d && r2 < rt;
        let matched_etf = if condition2_ok {
            MaximalETF::from_vectors(reps, rt).ok()
        } else {
            None
        };
        let condition2_ok = condition2_ok && matched_etf.is_some();

        // (3)
        let group_sums: Vec<f64> = groups
            .iter()
            .map(|g| g.iter().map(|&i| self.weights[i] * self.weights[i]).sum())
            .collect();
        let target = 1.0 / d as f64;
        let r3 = group_sums.iter().map(|s| (s - target).abs()).fold(0.0, f64::max);
        let condition3_ok = r3 < rt && !groups.is_empty();

        // (4)
        let sqrt_n = (n as f64).sqrt();
        let r4 = (0..big_n)
            .map(|i| (norms[i] - sqrt_n * self.weights[i]).abs())
            .fold(0.0, f64::max);
        let condition4_ok = r4 < rt;

        let phi = phi_unchecked(&self.vectors, &self.weights);
        Ok(EqualityReport {
            condition1_ok,
            condition2_ok,
            condition3_ok,
            condition4_ok,
            zero_indices,
            groups,
            group_sums,
            matched_etf,
            residuals: [r1, r2, r3, r4],
            phi,
            delta: delta_bound(self.field, n)?,
        })
    }

    /// `‖u_j − (n t_j/δ) Σ_i t_i sgn⟨u_j, u_i⟩ u_i‖` for a frame meeting the
    /// equality conditions; `j` is 0-based.
    pub fn weighted_reconstruction_residual(&self, j: usize, tol: &ToleranceConfig) -> Result<f64> {
        if j >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.len(),
            });
        }
        if !self.check_equality_conditions(tol)?.all_ok() {
            return Err(Error::ConditionsNotMet);
        }
        let zero_cut = 1e-12 * (self.n as f64).sqrt();
        let uj = self.vectors[j].entries();
        if self.vectors[j].norm() < zero_cut {
            return Ok(0.0);
        }
        let delta = delta_bound(self.field, self.n)?;
        let mut acc = vec![ZERO; self.n];
        for (u, &t) in self.vectors.iter().zip(&self.weights) {
            if u.norm() < zero_cut {
                continue;
            }
            let ip = dot(uj, u.entries());
            if ip.norm() == 0.0 {
                continue;
            }
            let s = sgn(ip) * t;
            for (a, x) in acc.iter_mut().zip(u.entries()) {
                *a += s * x;
            }
        }
        let c = self.n as f64 * self.weights[j] / delta;
        Ok(uj
            .iter()
            .zip(&acc)
            .map(|(u, a)| (u - a * c).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }
}

pub(crate) fn phi_unchecked(vectors: &[KVector], weights: &[f64]) -> f64 {
    let big_n = vectors.len();
    let mut total = 0.0;
    for i in 0..big_n {
        if weights[i] == 0.0 {
            continue;
        }
        total += weights[i] * weights[i] * norm_sqr(vectors[i].entries());
        for j in i + 1..big_n {
            total += 2.0 * weights[i] * weights[j] * dot(vectors[i].entries(), vectors[j].entries()).norm();
        }
    }
    total
}

/// Frame with `|A_j| = multiplicities[j]` copies of `w_j`, weights taken from
/// `intra_weights[j]` (which must satisfy `Σ s² = 1/d`), and `u_i = √n t_i w_j`.
pub fn build_equality_config(
    etf: &MaximalETF,
    multiplicities: &[usize],
    intra_weights: &[Vec<f64>],
    tol: &ToleranceConfig,
) -> Result<WeightedFrame> {
    let d = etf.len();
    if multiplicities.len() != d || intra_weights.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: multiplicities.len().min(intra_weights.len()),
        });
    }
    let target = 1.0 / d as f64;
    let sqrt_n = (etf.n() as f64).sqrt();
    let mut vectors = Vec::new();
    let mut weights = Vec::new();
    for (j, (&m, s)) in multiplicities.iter().zip(intra_weights).enumerate() {
        if m < 1 || s.len() != m {
            return Err(Error::InvalidWeights(format!(
                "group {j}: multiplicity {m} with {} weights",
                s.len()
            )));
        }
        if s.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidWeights(format!("group {j}: weights must be positive")));
        }
        let sum: f64 = s.iter().map(|x| x * x).sum();
        if (sum - target).abs() > tol.residual_tol {
            return Err(Error::InvalidWeights(format!(
                "group {j}: Σ s² = {sum}, expected {target}"
            )));
        }
        for &t in s {
            vectors.push(etf.vectors()[j].scale(sqrt_n * t));
            weights.push(t);
        }
    }
    let frame = WeightedFrame::new(etf.field(), etf.n(), vectors, weights)?;
    let residual = frame.tightness_residual();
    if residual >= tol.residual_tol {
        return Err(Error::NotTight { residual });
    }
    let phi = phi_unchecked(frame.vectors(), frame.weights());
    let delta = delta_bound(etf.field(), etf.n())?;
    if (phi - delta).abs() >= tol.residual_tol {
        return Err(Error::VerificationFailed(format!("Φ = {phi}, expected {delta}")));
    }
    Ok(frame)
}
