//! Projection constants of finite-dimensional normed spaces, computed and
//! certified through tight frames and maximal equiangular tight frames.

pub mod constants;
pub mod error;
pub mod etf;
pub mod field;
pub mod frames;
pub mod geometry;
pub mod io;
mod linalg;
pub mod optimize;
pub mod projconst;
pub mod solver;

pub use constants::{delta_bound, gerzon_bound, rescale_constant, welch_angle, ToleranceConfig};
pub use error::{Error, Result};
pub use etf::{build_maximal_etf, verify_etf, EtfReport, MaximalETF};
pub use field::{inner, sgn, KMatrix, KVector, Scalar, ScalarField};
pub use frames::{EqualityReport, WeightedFrame};
