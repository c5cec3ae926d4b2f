//! Closed-form constants attached to a dimension `n` over K.
//!
//! * `d_K(n)`: the Gerzon bound on the size of an equiangular set,
//! * `φ_K(n)`: the common angle of a maximal equiangular set,
//! * `δ_K(n)`: the upper bound on projection constants of n-dimensional spaces,
//! * `n / (d δ)`: the zonotope rescaling constant.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by all modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Residuals of frame identities and reconstructions.
    pub residual_tol: f64,
    /// Exact algebraic identities (unit norms, angles of constructed ETFs).
    pub identity_tol: f64,
    /// Feasibility and optimality of LP / SOC solves.
    pub lp_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            residual_tol: 1e-9,
            identity_tol: 1e-12,
            lp_tol: 1e-9,
        }
    }
}

impl ToleranceConfig {
    pub fn new(residual_tol: f64, identity_tol: f64, lp_tol: f64) -> Result<Self> {
        for (name, v) in [
            ("residual_tol", residual_tol),
            ("identity_tol", identity_tol),
            ("lp_tol", lp_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(ToleranceConfig {
            residual_tol,
            identity_tol,
            lp_tol,
        })
    }
}

fn require(n: usize, min: usize) -> Result<()> {
    if n < min {
        Err(Error::InvalidDimension(n))
    } else {
        Ok(())
    }
}

/// Maximal cardinality of an equiangular set in K^n.
pub fn gerzon_bound(field: ScalarField, n: usize) -> Result<usize> {
    require(n, 1)?;
    Ok(match field {
        ScalarField::Real => n * (n + 1) / 2,
        ScalarField::Complex => n * n,
    })
}

/// Common value of `|⟨w_i, w_j⟩|` in a maximal equiangular set.
pub fn welch_angle(field: ScalarField, n: usize) -> Result<f64> {
    require(n, 2)?;
    let n = n as f64;
    Ok(match field {
        ScalarField::Real => 1.0 / (n + 2.0).sqrt(),
        ScalarField::Complex => 1.0 / (n + 1.0).sqrt(),
    })
}

/// Upper bound on the projection constant of any n-dimensional space over K.
pub fn delta_bound(field: ScalarField, n: usize) -> Result<f64> {
    require(n, 1)?;
    let n = n as f64;
    Ok(match field {
        ScalarField::Real => 2.0 / (n + 1.0) * (1.0 + (n - 1.0) / 2.0 * (n + 2.0).sqrt()),
        ScalarField::Complex => (1.0 + (n - 1.0) * (n + 1.0).sqrt()) / n,
    })
}

/// `n / (d_K(n) δ_K(n))`, the scale of the zonotope sandwiching extremal dual balls.
pub fn rescale_constant(field: ScalarField, n: usize) -> Result<f64> {
    require(n, 2)?;
    let d = gerzon_bound(field, n)? as f64;
    Ok(n as f64 / (d * delta_bound(field, n)?))
}

/// Dimensions where a maximal ETF is known to exist.
pub fn maximal_etf_known(field: ScalarField, n: usize) -> bool {
    match field {
        ScalarField::Real => matches!(n, 2 | 3 | 7 | 23),
        ScalarField::Complex => matches!(n, 2 | 3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ScalarField::*;

    #[test]
    fn gerzon_values() {
        assert_eq!(gerzon_bound(Real, 2).unwrap(), 3);
        assert_eq!(gerzon_bound(Complex, 2).unwrap(), 4);
        assert_eq!(gerzon_bound(Real, 7).unwrap(), 28);
        assert_eq!(gerzon_bound(Real, 0), Err(Error::InvalidDimension(0)));
    }

    #[test]
    fn welch_values() {
        assert!((welch_angle(Real, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((welch_angle(Real, 7).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((welch_angle(Complex, 3).unwrap() - 0.5).abs() < 1e-15);
        assert!(welch_angle(Real, 1).is_err());
    }

    #[test]
    fn delta_values() {
        assert!((delta_bound(Real, 2).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((delta_bound(Complex, 2).unwrap() - (1.0 + 3f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((delta_bound(Real, 3).unwrap() - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((delta_bound(Real, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((delta_bound(Complex, 1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rescale_values() {
        assert!((rescale_constant(Real, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((rescale_constant(Real, 3).unwrap() - (5f64.sqrt() - 1.0) / 4.0).abs() < 1e-15);
        assert!((rescale_constant(Complex, 2).unwrap() - 1.0 / (1.0 + 3f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn tolerance_validation() {
        assert!(ToleranceConfig::new(1e-9, 0.0, 1e-9).is_err());
        assert!(ToleranceConfig::new(1e-9, 1e-12, 1e-9).is_ok());
    }
}
