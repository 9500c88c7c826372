//! The four experiments and their summaries.

use serde::Serialize;

use super::analysis::{self, EqualTime};
use super::plan::{ExperimentKind, ExperimentPlan};
use super::run::{run_plan, ExperimentResult};
use crate::error::{Error, Result};
use crate::oracle::{self, Variant};
use crate::solver::{self, Method, StepPolicy, Trace};

/// Truncated-error level used to compare hitting times.
pub const FIG1A_THRESHOLD: f64 = 1e-6;

fn need<'a>(r: &'a ExperimentResult, name: &str) -> Result<&'a super::run::CurveResult> {
    r.curve(name)
        .ok_or_else(|| Error::Config(format!("experiment has no `{name}` curve")))
}

fn expect_kind(plan: &ExperimentPlan, kind: ExperimentKind) -> Result<()> {
    match plan.kind {
        Some(k) if k == kind => Ok(()),
        _ => Err(Error::Config(format!("plan is not a `{kind}` experiment"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1aSummary {
    pub threshold: f64,
    pub gd_first_hit: Option<usize>,
    pub agd_first_hit: Option<usize>,
    /// `agd_first_hit / gd_first_hit`.
    pub hit_ratio: Option<f64>,
    pub level_increments: Vec<usize>,
    /// The AGD error rises somewhere, and only at level increments.
    pub agd_spikes_at_increments: bool,
    /// Increments at which the AGD error rose. Early increments add a
    /// coefficient smaller than one step's contraction and show no rise.
    pub increments_with_rise: Vec<usize>,
    /// AGD error rises away from increments.
    pub agd_other_rises: usize,
    /// `agd / gd` jump at each shared increment.
    pub spike_ratios: Vec<(usize, f64)>,
}

pub fn fig1a_summary(result: &ExperimentResult) -> Result<Fig1aSummary> {
    let gd = &need(result, "gd")?.traces[0];
    let agd = &need(result, "agd")?.traces[0];
    let inc = analysis::level_increments(agd);
    let rises = analysis::error_spikes(agd);
    let gd_mag = analysis::spike_magnitudes(gd);
    let agd_mag = analysis::spike_magnitudes(agd);
    let spike_ratios = agd_mag
        .iter()
        .zip(&gd_mag)
        .filter(|(a, g)| a.0 == g.0 && a.1 > 0.0 && g.1 > 0.0)
        .map(|(a, g)| (a.0, a.1 / g.1))
        .collect();
    let gd_hit = gd.first_below(FIG1A_THRESHOLD);
    let agd_hit = agd.first_below(FIG1A_THRESHOLD);
    Ok(Fig1aSummary {
        threshold: FIG1A_THRESHOLD,
        gd_first_hit: gd_hit,
        agd_first_hit: agd_hit,
        hit_ratio: gd_hit.zip(agd_hit).map(|(g, a)| a as f64 / g as f64),
        agd_spikes_at_increments: !rises.is_empty() && rises.iter().all(|k| inc.contains(k)),
        increments_with_rise: inc.iter().copied().filter(|k| rises.contains(k)).collect(),
        agd_other_rises: rises.iter().filter(|k| !inc.contains(k)).count(),
        level_increments: inc,
        spike_ratios,
    })
}

/// Exact GD and AGD on the fig1a setup.
pub fn experiment_fig1a(plan: &ExperimentPlan) -> Result<(ExperimentResult, Fig1aSummary)> {
    expect_kind(plan, ExperimentKind::Fig1a)?;
    let r = run_plan(plan, None)?;
    let s = fig1a_summary(&r)?;
    Ok((r, s))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1bSummary {
    /// Mean SA error exceeds mean GD error at every `k ≥ 50`.
    pub sa_above_gd_from_50: bool,
    pub first_violation: Option<usize>,
    pub gd_plateau: f64,
    pub agd_plateau: f64,
    pub gd_onset: Option<usize>,
    pub agd_onset: Option<usize>,
    /// GD with the unscaled step `2/(μ+L)` tripped the divergence guard.
    pub unscaled_gd_aborted: Option<bool>,
}

pub fn fig1b_summary(result: &ExperimentResult) -> Result<Fig1bSummary> {
    let gd = need(result, "gd")?.aggregate.mean_trunc();
    let agd = need(result, "agd")?.aggregate.mean_trunc();
    let sa = need(result, "sa")?.aggregate.mean_trunc();
    let first_violation = (50..gd.len().min(sa.len())).find(|&k| !(sa[k] > gd[k]));
    Ok(Fig1bSummary {
        sa_above_gd_from_50: first_violation.is_none(),
        first_violation,
        gd_plateau: analysis::plateau_level(&gd),
        agd_plateau: analysis::plateau_level(&agd),
        gd_onset: analysis::plateau_onset(&gd),
        agd_onset: analysis::plateau_onset(&agd),
        unscaled_gd_aborted: None,
    })
}

/// The fig1b GD curve's first trial with the step `2/(μ+L)` instead of
/// `2/((μ+L)(1+C_G))`.
pub fn unscaled_gd_trace(plan: &ExperimentPlan, iterations: usize) -> Result<Trace> {
    let c = plan
        .curves
        .iter()
        .find(|c| c.solver.method == Method::Gd)
        .ok_or_else(|| Error::Config("plan has no GD curve".into()))?;
    let mut cfg = c.solver.clone();
    cfg.steps = StepPolicy::GdExact;
    cfg.iterations = iterations;
    cfg.seed = plan.seed;
    solver::run(&c.problem, &plan.basis, &cfg)
}

/// Monte Carlo GD, AGD and SA, plus the unscaled-step divergence run.
pub fn experiment_fig1b(plan: &ExperimentPlan, divergence_iterations: usize) -> Result<(ExperimentResult, Fig1bSummary)> {
    expect_kind(plan, ExperimentKind::Fig1b)?;
    let r = run_plan(plan, None)?;
    let mut s = fig1b_summary(&r)?;
    s.unscaled_gd_aborted = Some(unscaled_gd_trace(plan, divergence_iterations)?.meta.aborted);
    Ok((r, s))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloorSummary {
    pub level: usize,
    pub step: f64,
    pub c: f64,
    pub c_g: f64,
    /// `(μ+L)γC/(2μL)`.
    pub floor: f64,
    /// Mean error over the final 10% of iterations.
    pub plateau: f64,
    pub ratio: f64,
}

/// Plateau of a curve against the fixed-level floor at `level`.
pub fn floor_summary(plan: &ExperimentPlan, curve: &str, result: &ExperimentResult, level: usize) -> Result<FloorSummary> {
    let c = plan
        .curve(curve)
        .ok_or_else(|| Error::Config(format!("no `{curve}` curve")))?;
    let samples = c
        .solver
        .oracle
        .samples()
        .ok_or_else(|| Error::Config("floor needs a Monte Carlo oracle".into()))?;
    let p = &c.problem;
    let ec = oracle::error_constants(p, &plan.basis, level, samples, Variant::Gd, c.solver.oracle.q_convention)?;
    let step = result
        .curve(curve)
        .and_then(|r| r.traces[0].records.last().map(|x| x.step))
        .unwrap_or(f64::NAN);
    let floor = (p.mu + p.l) * step * ec.c / (2.0 * p.mu * p.l);
    let plateau = analysis::plateau_level(&need(result, curve)?.aggregate.mean_trunc());
    Ok(FloorSummary {
        level,
        step,
        c: ec.c,
        c_g: ec.c_g,
        floor,
        plateau,
        ratio: plateau / floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceSummary {
    pub noisy: FloorSummary,
    pub noiseless_plateau: f64,
    /// Largest `|noisy − noiseless| / noiseless` of the mean curves before
    /// the noiseless plateau onset.
    pub max_relative_gap_before_floor: f64,
    /// Both curves use the same step at every iteration.
    pub same_steps: bool,
}

pub fn experiment_variance(plan: &ExperimentPlan) -> Result<(ExperimentResult, VarianceSummary)> {
    expect_kind(plan, ExperimentKind::Variance)?;
    let r = run_plan(plan, None)?;
    let noisy = need(&r, "noisy")?;
    let quiet = need(&r, "noiseless")?;
    let level = noisy.traces[0].last().m;
    let a = noisy.aggregate.mean_trunc();
    let b = quiet.aggregate.mean_trunc();
    let onset = analysis::plateau_onset(&b).unwrap_or(b.len());
    let gap = (0..onset.min(a.len())).map(|k| (a[k] - b[k]).abs() / b[k]).fold(0.0, f64::max);
    let same_steps = noisy.traces[0]
        .records
        .iter()
        .zip(&quiet.traces[0].records)
        .all(|(x, y)| x.step == y.step);
    let s = VarianceSummary {
        noisy: floor_summary(plan, "noisy", &r, level)?,
        noiseless_plateau: analysis::plateau_level(&b),
        max_relative_gap_before_floor: gap,
        same_steps,
    };
    Ok((r, s))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedVsUqSummary {
    pub uq_final: f64,
    pub fixed_final: f64,
    pub uq_mean_wall_ns: f64,
    pub fixed_mean_wall_ns: f64,
    pub equal_time: EqualTime,
}

pub fn fixed_vs_uq_summary(result: &ExperimentResult) -> Result<FixedVsUqSummary> {
    let uq = &need(result, "uq")?.aggregate;
    let fixed = &need(result, "fixed")?.aggregate;
    Ok(FixedVsUqSummary {
        uq_final: uq.final_mean_trunc(),
        fixed_final: fixed.final_mean_trunc(),
        uq_mean_wall_ns: uq.mean_wall_ns(),
        fixed_mean_wall_ns: fixed.mean_wall_ns(),
        equal_time: analysis::equal_time(uq, fixed),
    })
}

/// Growing schedule against level 91. Timing needs `run.timing = true`.
pub fn experiment_fixed_vs_uq(plan: &ExperimentPlan) -> Result<(ExperimentResult, FixedVsUqSummary)> {
    expect_kind(plan, ExperimentKind::FixedVsUq)?;
    let r = run_plan(plan, None)?;
    let s = fixed_vs_uq_summary(&r)?;
    Ok((r, s))
}

/// Summary of any preset experiment as JSON.
pub fn summarize(plan: &ExperimentPlan, result: &ExperimentResult) -> Result<serde_json::Value> {
    let v = match plan.kind {
        Some(ExperimentKind::Fig1a) => serde_json::to_value(fig1a_summary(result)?),
        Some(ExperimentKind::Fig1b) => serde_json::to_value(fig1b_summary(result)?),
        Some(ExperimentKind::Variance) => {
            let level = need(result, "noisy")?.traces[0].last().m;
            serde_json::to_value(floor_summary(plan, "noisy", result, level)?)
        }
        Some(ExperimentKind::FixedVsUq) => serde_json::to_value(fixed_vs_uq_summary(result)?),
        None => return Ok(serde_json::Value::Null),
    };
    v.map_err(|e| Error::Io(e.to_string()))
}
