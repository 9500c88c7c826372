//! Trial execution, artifacts and manifests.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::aggregate::AggregateCurve;
use super::plan::{CurvePlan, ExperimentPlan};
use crate::error::{Error, Result};
use crate::solver::{self, Trace};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "CHAOS_DESCENT_WORKERS";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BENCHMARK_FILE: &str = "benchmark_coefficients.csv";
pub const CONFIG_FILE: &str = "config.cfg";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone)]
pub struct CurveResult {
    pub name: String,
    pub traces: Vec<Trace>,
    pub aggregate: AggregateCurve,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub name: String,
    pub curves: Vec<CurveResult>,
}

impl ExperimentResult {
    pub fn curve(&self, name: &str) -> Option<&CurveResult> {
        self.curves.iter().find(|c| c.name == name)
    }
}

/// `CHAOS_DESCENT_WORKERS`, then `run.workers`, then the core count.
pub fn worker_count(plan: &ExperimentPlan) -> Result<usize> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer (got `{v}`)"))),
        };
    }
    Ok(plan
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

pub fn trial_file(dir: &Path, trial: usize) -> PathBuf {
    dir.join(format!("trial_{trial:04}.csv"))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

/// Runs every trial of one curve. Trial `t` draws from the streams of
/// `(seed, t)`; with `dir` set each trial writes its own CSV.
pub fn run_curve(plan: &ExperimentPlan, curve: &CurvePlan, dir: Option<&Path>) -> Result<CurveResult> {
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let traces: Vec<Trace> = (0..plan.trials)
        .into_par_iter()
        .map(|t| {
            let mut cfg = curve.solver.clone();
            cfg.seed = plan.seed;
            cfg.trial = t as u64;
            let trace = solver::run(&curve.problem, &plan.basis, &cfg)?;
            if let Some(d) = dir {
                write_file(&trial_file(d, t), |w| trace.write_csv(w))?;
            }
            Ok(trace)
        })
        .collect::<Result<_>>()?;
    let records: Vec<_> = traces.iter().map(|t| t.records.clone()).collect();
    let aggregate = AggregateCurve::from_records(&curve.name, &records, curve.solver.iterations + 1);
    if let Some(d) = dir {
        write_file(&d.join(AGGREGATE_FILE), |w| aggregate.write_csv(w))?;
    }
    Ok(CurveResult {
        name: curve.name.clone(),
        traces,
        aggregate,
    })
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Runs every curve; with `out` set, writes per-trial traces, aggregates,
/// the benchmark table, the resolved config and a manifest under it.
pub fn run_plan(plan: &ExperimentPlan, out: Option<&Path>) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(plan)?)
        .build()
        .map_err(|e| Error::Config(format!("cannot start workers: {e}")))?;
    if let Some(o) = out {
        fs::create_dir_all(o)?;
    }
    let mut curves = Vec::with_capacity(plan.curves.len());
    for c in &plan.curves {
        let dir = out.map(|o| o.join(&c.name));
        curves.push(pool.install(|| run_curve(plan, c, dir.as_deref()))?);
    }
    if let Some(o) = out {
        write_manifest(plan, &curves, o)?;
    }
    Ok(ExperimentResult {
        name: plan.name.clone(),
        curves,
    })
}

fn write_manifest(plan: &ExperimentPlan, curves: &[CurveResult], out: &Path) -> Result<()> {
    let bench_path = out.join(BENCHMARK_FILE);
    let first = &plan.curves[0].problem;
    let bench = first
        .target
        .as_ref()
        .map(|t| t.benchmark())
        .ok_or_else(|| Error::Config("plan has no benchmark optimum".into()))?;
    write_file(&bench_path, |w| bench.write_csv(w))?;
    write_file(&out.join(CONFIG_FILE), |w| {
        std::io::Write::write_all(w, plan.config.to_string().as_bytes())?;
        Ok(())
    })?;

    let mut artifacts = vec![CONFIG_FILE.to_string(), BENCHMARK_FILE.to_string()];
    let mut curve_meta = Vec::new();
    for (c, plan_c) in curves.iter().zip(&plan.curves) {
        for t in 0..plan.trials {
            artifacts.push(format!("{}/trial_{t:04}.csv", c.name));
        }
        artifacts.push(format!("{}/{AGGREGATE_FILE}", c.name));
        curve_meta.push(json!({
            "name": c.name,
            "problem": plan_c.problem.name,
            "method": plan_c.solver.method.name(),
            "step_policy": plan_c.solver.steps.name(),
            "schedule": plan_c.solver.schedule,
            "oracle": plan_c.solver.oracle,
            "iterations": plan_c.solver.iterations,
            "config_hash": c.traces[0].meta.config_hash,
            "aborted_trials": c.aggregate.aborted,
            "step_cap_violated": c.traces.iter().any(|t| t.meta.step_cap_violated),
            "mean_wall_ns": c.aggregate.mean_wall_ns(),
        }));
    }
    let manifest = json!({
        "experiment": plan.name,
        "seed": plan.seed,
        "trials": plan.trials,
        "config": plan.config.entries(),
        "basis": {"family": plan.basis.family().name(), "nodes": plan.basis.nodes()},
        "benchmark": {
            "file": BENCHMARK_FILE,
            "sha256": sha256_file(&bench_path)?,
            "level": bench.level(),
            "nodes": bench.nodes,
        },
        "curves": curve_meta,
        "artifacts": artifacts,
        "defaults": [
            "exact oracle unless oracle.mode = mc",
            "SA runs on the same truncation schedule as GD",
            "trial t draws from ChaCha20 streams (2t, 2t+1) of run.seed",
        ],
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_file(&out.join(MANIFEST_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest).map_err(|e| Error::Io(e.to_string()))?;
        std::io::Write::write_all(w, b"\n")?;
        Ok(())
    })
}
