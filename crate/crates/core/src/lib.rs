//! Truncated gradient descent for optimization over function spaces.
//!
//! Fields are expanded in an orthonormal basis ([`basis`]), objectives are
//! pointwise ([`problem`]), descent directions are projected onto the first
//! `m + 1` basis functions either exactly or by Monte Carlo ([`oracle`]),
//! and the level grows along the run ([`solver`]).

pub mod basis;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod problem;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod verify;

pub use basis::{BasisSpec, Benchmark, CoefficientVector, Family, FieldVector, QConvention};
pub use error::{Error, Result};
pub use oracle::{OracleConfig, OracleMode};
pub use problem::{ProblemKind, ProblemSpec, Target};
pub use solver::{Method, SolverConfig, StepPolicy, Trace, TruncationSchedule};
