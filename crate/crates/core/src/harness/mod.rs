//! Configured experiments: plans, concurrent trials, aggregation and
//! artifacts.

pub mod aggregate;
pub mod analysis;
pub mod config;
pub mod experiments;
pub mod plan;
pub mod run;

pub use aggregate::{AggregateCurve, AggregateRow};
pub use config::Config;
pub use plan::{CurvePlan, ExperimentKind, ExperimentPlan};
pub use run::{run_curve, run_plan, CurveResult, ExperimentResult};
