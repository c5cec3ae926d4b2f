//! Dense optimization kernels used by the geometry and projection modules.

pub mod lp;
pub mod soc;

pub use lp::{solve_lp, solve_lp_with, LinearProgram, LpSolution, LpStatus, Relation, Sense};
pub use soc::{solve_soc_feasibility, ConeBlock, SocFeasibility, SocSolution, SocStatus};
