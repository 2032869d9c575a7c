//! Solver framework for structured saddle-point problems
//! min_x max_y f(x) + phi(x, y) - g(y).
//!
//! The iteration is a nonlinear preconditioned primal-dual method: a
//! warped-resolvent prediction through a lower block-triangular
//! preconditioner, followed by either a relaxed projection onto a
//! separating halfspace (the projected variant) or a fixed correction
//! operator (the relaxed variant, which recovers classical primal-dual
//! schemes). Analytic constants are validated up front and every run can
//! emit per-iteration certificates of the convergence inequalities.

pub mod config;
pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod oracles;
pub mod precond;
pub mod problems;
pub mod prox;
pub mod solver;

pub use config::{build, parse, preset, preset_names, BuiltRun, RunConfig};
pub use coupling::{Coupling, CouplingKind};
pub use error::{Error, Result};
pub use linalg::{DiagonalMap, LinearMap, PrimalDualPoint};
pub use precond::{ConstantsReport, PreconditionerSpec};
pub use problems::{make_l1_bilinear, make_matrix_game, make_quadratic_saddle, ProblemInstance};
pub use prox::{ProxFunction, ProxKind};
pub use solver::{
    solve, Algorithm, Correction, ExitStatus, Halfspace, SolveOutput, SolverConfig, SolverState,
    StepsizeMode, ThetaMode,
};
