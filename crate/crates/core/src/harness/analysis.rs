//! Curve summaries used by the experiments.

use serde::Serialize;

use super::aggregate::AggregateCurve;
use crate::solver::Trace;

/// Mean over the final 10% of the curve.
pub fn plateau_level(values: &[f64]) -> f64 {
    let tail = (values.len() / 10).max(1);
    values[values.len() - tail..].iter().sum::<f64>() / tail as f64
}

/// First index whose value is within 2× of the plateau level.
pub fn plateau_onset(values: &[f64]) -> Option<usize> {
    let level = plateau_level(values);
    values.iter().position(|&v| v <= 2.0 * level)
}

/// Iterations at which the truncation level grew.
pub fn level_increments(trace: &Trace) -> Vec<usize> {
    trace
        .records
        .windows(2)
        .filter(|w| w[1].m > w[0].m)
        .map(|w| w[1].k)
        .collect()
}

/// Iterations where the truncated error rose.
pub fn error_spikes(trace: &Trace) -> Vec<usize> {
    trace
        .records
        .windows(2)
        .filter(|w| w[1].err_trunc_sq > w[0].err_trunc_sq)
        .map(|w| w[1].k)
        .collect()
}

/// `err_k − err_{k−1}` at each level increment.
pub fn spike_magnitudes(trace: &Trace) -> Vec<(usize, f64)> {
    level_increments(trace)
        .into_iter()
        .map(|k| (k, trace.records[k].err_trunc_sq - trace.records[k - 1].err_trunc_sq))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EqualTime {
    /// Mean total wall time of the cheaper (growing-level) run.
    pub budget_ns: f64,
    pub uq_error: f64,
    /// Fixed-level mean error at the last iteration finished within budget.
    pub fixed_error: f64,
    pub fixed_iteration: usize,
    /// `fixed_error / uq_error`.
    pub advantage: f64,
}

/// Compares errors at the growing-level run's mean total wall time.
pub fn equal_time(uq: &AggregateCurve, fixed: &AggregateCurve) -> EqualTime {
    let budget = uq.mean_wall_ns();
    let row = fixed
        .rows
        .iter()
        .take_while(|r| r.mean_elapsed_ns <= budget)
        .last()
        .unwrap_or(&fixed.rows[0]);
    let uq_error = uq.final_mean_trunc();
    EqualTime {
        budget_ns: budget,
        uq_error,
        fixed_error: row.mean_err_trunc_sq,
        fixed_iteration: row.k,
        advantage: row.mean_err_trunc_sq / uq_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_definitions() {
        let v: Vec<f64> = (0..100).map(|k| 1.0 + 100.0 * 0.5f64.powi(k)).collect();
        assert!((plateau_level(&v) - 1.0).abs() < 1e-12);
        assert_eq!(plateau_onset(&v), Some(7));
        assert_eq!(plateau_level(&[4.0]), 4.0);
    }
}
