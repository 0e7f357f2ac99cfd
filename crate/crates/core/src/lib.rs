//! Newton-type solvers for nonsmooth equations `H(x) = 0`.
//!
//! The crate provides four iterations that share one driver:
//!
//! * the generalized Newton method built on the graphical (contingent)
//!   derivative, `-H(x) ∈ DH(x)(d)`,
//! * the semismooth Newton method with elements of the B-subdifferential
//!   or of Clarke's generalized Jacobian, `A d = -H(x)`,
//! * the B-differentiable Newton method, `-H(x) = H'(x; d)`.
//!
//! Around the solvers sit the pieces needed to check their assumptions
//! numerically: exact derivative objects for piecewise-smooth maps
//! ([`map`]), brute-force limit sampling used as an independent oracle
//! ([`sampling`]), pointwise regularity diagnostics ([`regularity`]), and
//! a corpus of test problems ([`problems`]).

// NaN must fail the positivity and finiteness guards, so `!(x > 0.0)` is
// deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod map;
pub mod newton;
pub mod problems;
pub mod regularity;
pub mod sampling;
pub mod set;

pub use error::{Error, Result};
pub use map::{
    bsub, build_piecewise, clarke_apply, dirderiv_set, Capabilities, DomainBox, Generator, Matrix,
    NonsmoothMap, PiecewiseC1Map, SmoothPiece, Vector,
};
pub use newton::{
    kantorovich_check, rate_diagnostics, run_newton, KantorovichReport, Method, RateReport,
    SolveTrace, SolverConfig, Termination,
};
pub use problems::{corpus, problem, ProblemSpec};
pub use set::{DerivativeValueSet, SetView};

/// Tolerance for exact set equality and containment.
pub const TOL_SET: f64 = 1e-9;
/// Tolerance for finite-difference Jacobian validation.
pub const TOL_FD: f64 = 1e-6;
/// Reciprocal condition threshold below which a matrix counts as singular.
pub const EPS_REG: f64 = 1e-12;
