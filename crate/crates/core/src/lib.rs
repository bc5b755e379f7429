//! Value functions of state-constrained stochastic control problems driven by
//! jump diffusions.
//!
//! The constrained value `V(t, a)` is recovered as the zero-level set in `b`
//! of an unconstrained auxiliary value `W(t, a, b)`, which solves an HJB
//! integro-PDE. This crate provides the problem model, an explicit monotone
//! finite-difference solver for `W`, level-set extraction of `V`, a Monte
//! Carlo engine used as an independent oracle, and numerical diagnostics.

pub mod hamiltonian;
pub mod levelset;
pub mod model;
pub mod simulate;
pub mod solver;
pub mod verify;

pub use levelset::{LevelSetError, LevelSetQuery, VProfile};
pub use model::description::{build_problem, BUILTIN_NAMES};
pub use model::{
    builtin, CoefficientValues, Constraint, LevyAtom, LevyModel, ModelError, ProblemBuilder,
    ProblemDescription, ProblemSpec,
};
pub use simulate::{McEstimate, PathSample, PolicyTriple, SimulateError};
pub use verify::{DiagnosticReport, VerifyError};
pub use solver::{
    AlphaControl, Axis, BetaPolicy, FieldKind, GridSpec, SchemeParams, SolverError, TimeAxis, ValueField,
};
