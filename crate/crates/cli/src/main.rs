//! `chaos-descent`: run solvers, experiments and the verification suite.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chaos_descent::harness::experiments::{self, FIG1A_THRESHOLD};
use chaos_descent::harness::{run_plan, Config, ExperimentKind, ExperimentPlan};
use chaos_descent::problem::{Target, BENCHMARK_LEVEL};
use chaos_descent::solver::{self, Method};
use chaos_descent::verify::{run_suite, SuiteOptions};
use chaos_descent::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "chaos-descent", version, about = "Truncated gradient methods over orthonormal expansions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Gd,
    Agd,
    Sa,
    Fixed,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Gd => Method::Gd,
            MethodArg::Agd => Method::Agd,
            MethodArg::Sa => Method::Sa,
            MethodArg::Fixed => Method::FixedGd,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration once and emit its trace.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        method: Option<MethodArg>,
        /// Curve to run when the config defines several.
        #[arg(long)]
        curve: Option<String>,
        #[arg(long, default_value = "0")]
        trial: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run every curve of an experiment over many trials.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Keep only curves using this method.
        #[arg(long)]
        method: Option<MethodArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Run the theory verification suite; exits 2 if any check fails.
    Verify {
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo repeats per state of the error-bound check.
        #[arg(long, default_value = "10000")]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Print the benchmark coefficients of the target.
    Coeffs {
        #[arg(long, default_value_t = BENCHMARK_LEVEL)]
        level: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Wall-time comparison of the fixed-level and growing-level runs.
    Bench {
        /// Defaults to the fixed_vs_uq preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
}

enum Failure {
    Config(String),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn emit(out: Option<&Path>, file: &str, body: &str) -> Outcome {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(file), body)?;
        }
        None => io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_plan(path: &Path, seed: Option<u64>, trials: Option<usize>) -> Result<ExperimentPlan, Failure> {
    let cfg = Config::load(path)?;
    let mut plan = ExperimentPlan::from_config(&cfg)?;
    if let Some(s) = seed {
        plan = plan.with_seed(s);
    }
    if let Some(t) = trials {
        plan = plan.with_trials(t)?;
    }
    Ok(plan)
}

fn solve(
    config: &Path,
    seed: Option<u64>,
    method: Option<MethodArg>,
    curve: Option<&str>,
    trial: u64,
    out: Option<&Path>,
    format: Format,
) -> Outcome {
    let mut cfg = Config::load(config)?;
    if let (Some(m), None) = (method, cfg.get("curves")) {
        cfg.set("solver.method", Method::from(m).name())?;
    }
    let mut plan = ExperimentPlan::from_config(&cfg)?;
    if let Some(s) = seed {
        plan = plan.with_seed(s);
    }
    let chosen = match (curve, method) {
        (Some(name), _) => plan.curve(name),
        (None, Some(m)) => plan.curves.iter().find(|c| c.solver.method == Method::from(m)),
        (None, None) => plan.curves.first(),
    }
    .ok_or_else(|| Failure::Config("no curve of the configuration matches the selection".into()))?;
    let mut sc = chosen.solver.clone();
    sc.seed = plan.seed;
    sc.trial = trial;
    let trace = solver::run(&chosen.problem, &plan.basis, &sc)?;
    match format {
        Format::Csv => emit(out, "trace.csv", &trace.to_csv_string()),
        Format::Json => emit(
            out,
            "trace.json",
            &pretty(&json!({"curve": chosen.name, "meta": trace.meta, "records": trace.records})),
        ),
    }
}

fn compare(plan: ExperimentPlan, method: Option<MethodArg>, out: Option<&Path>, format: Format) -> Outcome {
    let mut plan = plan;
    if let Some(m) = method {
        plan.curves.retain(|c| c.solver.method == Method::from(m));
        if plan.curves.is_empty() {
            return Err(Failure::Config("no curve uses the requested method".into()));
        }
    }
    let result = run_plan(&plan, out)?;
    match format {
        Format::Csv => {
            let mut body = String::new();
            for c in &result.curves {
                for (i, line) in c.aggregate.to_csv_string().lines().enumerate() {
                    if i == 0 {
                        if body.is_empty() {
                            body.push_str("curve,");
                            body.push_str(line);
                            body.push('\n');
                        }
                        continue;
                    }
                    body.push_str(&c.name);
                    body.push(',');
                    body.push_str(line);
                    body.push('\n');
                }
            }
            io::stdout().lock().write_all(body.as_bytes())?;
        }
        Format::Json => {
            let curves: Vec<_> = result
                .curves
                .iter()
                .map(|c| {
                    json!({
                        "name": c.name,
                        "final_mean_err_trunc_sq": c.aggregate.final_mean_trunc(),
                        "aborted_trials": c.aggregate.aborted,
                        "mean_wall_ns": c.aggregate.mean_wall_ns(),
                    })
                })
                .collect();
            let summary = experiments::summarize(&plan, &result).unwrap_or(serde_json::Value::Null);
            let body = pretty(&json!({
                "experiment": plan.name,
                "trials": plan.trials,
                "seed": plan.seed,
                "fig1a_threshold": FIG1A_THRESHOLD,
                "curves": curves,
                "summary": summary,
            }));
            io::stdout().lock().write_all(body.as_bytes())?;
        }
    }
    Ok(())
}

fn verify(seed: Option<u64>, repeats: usize, out: Option<&Path>, format: Format) -> Outcome {
    let opts = SuiteOptions {
        seed: seed.unwrap_or(0),
        mc_repeats: repeats,
        ..SuiteOptions::default()
    };
    let report = run_suite(&opts)?;
    match format {
        Format::Json => emit(out, "verify.json", &pretty(&serde_json::to_value(&report).expect("serializable")))?,
        Format::Csv => {
            let mut body = String::from("check,passed,slack\n");
            for c in &report.checks {
                body.push_str(&format!("{},{},{:e}\n", c.name, c.passed, c.slack));
            }
            emit(out, "verify.csv", &body)?;
        }
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn coeffs(level: usize, out: Option<&Path>, format: Format) -> Outcome {
    let t = Target::paper();
    let b = t.benchmark();
    if level > b.level() {
        return Err(Failure::Config(format!("level {level} exceeds the stored level {}", b.level())));
    }
    let head = b.coeffs.project(level);
    match format {
        Format::Csv => {
            let mut body = String::from("index,coefficient\n");
            for (i, c) in head.as_slice().iter().enumerate() {
                body.push_str(&format!("{i},{c:.16e}\n"));
            }
            emit(out, "coefficients.csv", &body)
        }
        Format::Json => emit(
            out,
            "coefficients.json",
            &pretty(&json!({
                "family": b.family.name(),
                "nodes": b.nodes,
                "norm_sq": b.norm_sq,
                "coefficients": head.as_slice(),
                "remainder_sq": b.remainder_norm_sq(level),
            })),
        ),
    }
}

fn bench(plan: ExperimentPlan, out: Option<&Path>, format: Format) -> Outcome {
    let result = run_plan(&plan, out)?;
    let summary = experiments::fixed_vs_uq_summary(&result)?;
    match format {
        Format::Json => emit(None, "", &pretty(&serde_json::to_value(&summary).expect("serializable"))),
        Format::Csv => emit(
            None,
            "",
            &format!(
                "uq_final,fixed_final,uq_mean_wall_ns,fixed_mean_wall_ns,equal_time_advantage\n{:e},{:e},{:e},{:e},{:e}\n",
                summary.uq_final,
                summary.fixed_final,
                summary.uq_mean_wall_ns,
                summary.fixed_mean_wall_ns,
                summary.equal_time.advantage
            ),
        ),
    }
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Solve {
            config,
            seed,
            method,
            curve,
            trial,
            out,
            format,
        } => solve(&config, seed, method, curve.as_deref(), trial, out.as_deref(), format),
        Command::Compare {
            config,
            seed,
            trials,
            method,
            out,
            format,
        } => compare(load_plan(&config, seed, trials)?, method, out.as_deref(), format),
        Command::Verify {
            seed,
            repeats,
            out,
            format,
        } => verify(seed, repeats, out.as_deref(), format),
        Command::Coeffs { level, out, format } => coeffs(level, out.as_deref(), format),
        Command::Bench {
            config,
            seed,
            trials,
            out,
            format,
        } => {
            let mut plan = match config {
                Some(p) => load_plan(&p, None, None)?,
                None => ExperimentPlan::preset(ExperimentKind::FixedVsUq)?,
            };
            if let Some(s) = seed {
                plan = plan.with_seed(s);
            }
            if let Some(t) = trials {
                plan = plan.with_trials(t)?;
            }
            for c in &mut plan.curves {
                c.solver.record_timing = true;
            }
            bench(plan, out.as_deref(), format)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(2)
        }
    }
}
