//! Experiment plans: a problem, a basis and one solver configuration per
//! curve, resolved from a [`Config`].

use std::fmt;
use std::str::FromStr;

use super::config::Config;
use crate::basis::{BasisSpec, Family, QConvention, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::oracle::{OracleConfig, OracleMode};
use crate::problem::{
    make_coupled_quadratic, make_noisy_quadratic, make_quadratic, Coupling, NoiseSampler, ProblemKind, ProblemSpec,
    Target,
};
use crate::solver::{Method, SolverConfig, StepPolicy, TruncationSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Exact-oracle GD and AGD.
    Fig1a,
    /// Monte Carlo GD, AGD and the SA baseline.
    Fig1b,
    /// Additive noise against the noiseless objective.
    Variance,
    /// Fixed level 91 against the growing schedule.
    FixedVsUq,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Fig1a,
        ExperimentKind::Fig1b,
        ExperimentKind::Variance,
        ExperimentKind::FixedVsUq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Fig1a => "fig1a",
            ExperimentKind::Fig1b => "fig1b",
            ExperimentKind::Variance => "variance",
            ExperimentKind::FixedVsUq => "fixed_vs_uq",
        }
    }

    /// Default settings; explicit config entries take precedence.
    pub fn preset(self) -> Config {
        let text = match self {
            ExperimentKind::Fig1a => FIG1A,
            ExperimentKind::Fig1b => FIG1B,
            ExperimentKind::Variance => VARIANCE,
            ExperimentKind::FixedVsUq => FIXED_VS_UQ,
        };
        Config::parse(text).expect("presets are valid")
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

const FIG1A: &str = "
experiment = fig1a
problem.kind = quadratic
problem.mu = 1.0
problem.l = 200.0
basis.family = trig
basis.nodes = 1024
oracle.mode = exact
schedule.kind = paper_sqrt
solver.iterations = 300
run.trials = 1
run.seed = 0
curves = gd, agd
curve.gd.solver.method = gd
curve.gd.solver.step = gd_exact
curve.agd.solver.method = agd
curve.agd.solver.step = agd_exact
";

const FIG1B: &str = "
experiment = fig1b
problem.kind = quadratic
problem.mu = 1.0
problem.l = 200.0
basis.family = trig
basis.nodes = 1024
oracle.mode = mc
oracle.samples = 500
oracle.q_convention = grid
schedule.kind = paper_sqrt
solver.iterations = 300
run.trials = 200
run.seed = 0
curves = gd, agd, sa
curve.gd.solver.method = gd
curve.gd.solver.step = gd_noisy
curve.agd.solver.method = agd
curve.agd.solver.step = agd_like_gd
curve.sa.solver.method = sa
curve.sa.solver.step = sa_decay
curve.sa.solver.gamma0 = 0.01
";

const VARIANCE: &str = "
experiment = variance
problem.kind = noisy-quadratic
problem.mu = 1.0
problem.l = 200.0
basis.family = trig
basis.nodes = 1024
oracle.mode = mc
oracle.samples = 500
oracle.q_convention = grid
schedule.kind = paper_sqrt
solver.method = gd
solver.step = gd_noisy
solver.iterations = 300
run.trials = 200
run.seed = 0
curves = noisy, noiseless
curve.noiseless.problem.kind = quadratic
";

const FIXED_VS_UQ: &str = "
experiment = fixed_vs_uq
problem.kind = quadratic
problem.mu = 1.0
problem.l = 200.0
basis.family = trig
basis.nodes = 1024
oracle.mode = mc
oracle.samples = 250
oracle.q_convention = grid
solver.step = gd_noisy
solver.iterations = 600
run.trials = 200
run.seed = 0
run.timing = true
curves = uq, fixed
curve.uq.solver.method = gd
curve.uq.schedule.kind = paper_sqrt
curve.fixed.solver.method = fixed
curve.fixed.schedule.kind = constant
curve.fixed.schedule.level = 91
";

#[derive(Debug, Clone)]
pub struct CurvePlan {
    pub name: String,
    pub problem: ProblemSpec,
    pub solver: SolverConfig,
    /// Resolved settings of this curve.
    pub config: Config,
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub name: String,
    pub kind: Option<ExperimentKind>,
    pub basis: BasisSpec,
    pub curves: Vec<CurvePlan>,
    pub trials: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    /// The full configuration after presets and overrides.
    pub config: Config,
}

impl ExperimentPlan {
    pub fn preset(kind: ExperimentKind) -> Result<Self> {
        Self::from_config(&kind.preset())
    }

    /// Resolves a configuration, filling unset keys from the preset named
    /// by `experiment`.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let kind: Option<ExperimentKind> = cfg.value("experiment")?;
        let cfg = match kind {
            Some(k) => k.preset().merged(cfg),
            None => cfg.clone(),
        };
        let family: Family = cfg.value_or("basis.family", Family::Trigonometric)?;
        let nodes: usize = cfg.value_or("basis.nodes", DEFAULT_NODES)?;
        let basis = BasisSpec::new(family, nodes)?;
        let trials: usize = cfg.value_or("run.trials", 1)?;
        if trials == 0 {
            return Err(Error::Config("run.trials must be at least 1".into()));
        }
        let seed: u64 = cfg.value_or("run.seed", 0)?;
        let workers: Option<usize> = cfg.value("run.workers")?;
        if workers == Some(0) {
            return Err(Error::Config("run.workers must be at least 1".into()));
        }

        let mut names = cfg.list("curves");
        for extra in cfg.curve_overrides() {
            if !names.contains(&extra) {
                return Err(Error::Config(format!("`curve.{extra}.*` given but `{extra}` is not in `curves`")));
            }
        }
        if names.is_empty() {
            names.push(cfg.get("solver.method").unwrap_or("gd").to_string());
        }
        let mut curves = Vec::with_capacity(names.len());
        for name in names {
            let c = cfg.for_curve(&name);
            let problem = build_problem(&c)?;
            let solver = build_solver(&c, &basis, seed)?;
            curves.push(CurvePlan {
                name,
                problem,
                solver,
                config: c,
            });
        }
        let name = cfg
            .get("name")
            .map(str::to_string)
            .or_else(|| kind.map(|k| k.name().to_string()))
            .unwrap_or_else(|| "run".into());
        Ok(Self {
            name,
            kind,
            basis,
            curves,
            trials,
            seed,
            workers,
            config: cfg,
        })
    }

    pub fn curve(&self, name: &str) -> Option<&CurvePlan> {
        self.curves.iter().find(|c| c.name == name)
    }

    pub fn with_trials(mut self, trials: usize) -> Result<Self> {
        if trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        self.trials = trials;
        self.config.set("run.trials", trials.to_string())?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        for c in &mut self.curves {
            c.solver.seed = seed;
        }
        self.config.set("run.seed", seed.to_string()).expect("known key");
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        for c in &mut self.curves {
            c.solver.iterations = iterations;
        }
        self.config.set("solver.iterations", iterations.to_string()).expect("known key");
        self
    }
}

/// Builds the objective described by `problem.*` keys.
pub fn build_problem(c: &Config) -> Result<ProblemSpec> {
    let kind: ProblemKind = c.value_or("problem.kind", ProblemKind::Quadratic)?;
    let mu: f64 = c.value_or("problem.mu", 1.0)?;
    let l: f64 = c.value_or("problem.l", 200.0)?;
    let target = Target::paper();
    let mut p = match kind {
        ProblemKind::Quadratic => make_quadratic(mu, l, target)?,
        ProblemKind::NoisyQuadratic => make_noisy_quadratic(mu, l, target)?,
        ProblemKind::CoupledQuadratic => {
            let offset: f64 = c.value_or("problem.coupling.offset", 1.0)?;
            let amp: f64 = c.value_or("problem.coupling.amplitude", 0.5)?;
            make_coupled_quadratic(Coupling::sinusoidal(offset, amp)?, target)?
        }
    };
    match c.get("problem.noise_sampler") {
        None | Some("uniform") => {}
        Some("zero") => p = p.with_sampler(NoiseSampler::Zero),
        Some(other) => return Err(Error::Config(format!("unknown noise sampler `{other}`"))),
    }
    Ok(p)
}

fn parse_step(c: &Config, method: Method, noisy: bool) -> Result<StepPolicy> {
    let default = match (method, noisy) {
        (Method::Sa, _) => "sa_decay",
        (Method::Agd, false) => "agd_exact",
        (Method::Agd, true) => "agd_like_gd",
        (_, false) => "gd_exact",
        (_, true) => "gd_noisy",
    };
    Ok(match c.get("solver.step").unwrap_or(default) {
        "gd_exact" => StepPolicy::GdExact,
        "gd_noisy" => StepPolicy::GdNoisy,
        "agd_exact" => StepPolicy::AgdExact,
        "agd_like_gd" => StepPolicy::AgdLikeGd,
        "sa_decay" => StepPolicy::SaDecay {
            gamma0: c.value_or("solver.gamma0", 0.01)?,
        },
        "explicit" => StepPolicy::Explicit {
            gamma: c
                .value("solver.gamma")?
                .ok_or_else(|| Error::Config("explicit steps need `solver.gamma`".into()))?,
            beta: c.value_or("solver.beta", 0.0)?,
        },
        other => return Err(Error::Config(format!("unknown step policy `{other}`"))),
    })
}

fn parse_schedule(c: &Config, method: Method) -> Result<TruncationSchedule> {
    let default = if method == Method::FixedGd { "constant" } else { "paper_sqrt" };
    Ok(match c.get("schedule.kind").unwrap_or(default) {
        "paper_sqrt" => TruncationSchedule::PaperSqrt,
        "constant" => TruncationSchedule::Constant {
            level: c
                .value("schedule.level")?
                .ok_or_else(|| Error::Config("constant schedule needs `schedule.level`".into()))?,
        },
        "explicit" => {
            let levels = c
                .list("schedule.levels")
                .iter()
                .map(|s| s.parse::<usize>().map_err(|_| Error::Config(format!("bad level `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            TruncationSchedule::Explicit { levels }
        }
        other => return Err(Error::Config(format!("unknown schedule `{other}`"))),
    })
}

/// Builds the solver configuration described by `oracle.*`, `schedule.*`,
/// `solver.*` and `run.timing`.
pub fn build_solver(c: &Config, basis: &BasisSpec, seed: u64) -> Result<SolverConfig> {
    let method: Method = c.value_or("solver.method", Method::Gd)?;
    let mode = match c.get("oracle.mode").unwrap_or("exact") {
        "exact" => OracleMode::Exact,
        "mc" | "monte_carlo" => OracleMode::MonteCarlo {
            samples: c
                .value("oracle.samples")?
                .ok_or_else(|| Error::Config("Monte Carlo oracle needs `oracle.samples`".into()))?,
        },
        other => return Err(Error::Config(format!("unknown oracle mode `{other}`"))),
    };
    let oracle = OracleConfig {
        mode,
        nodes: basis.nodes(),
        q_convention: c.value_or("oracle.q_convention", QConvention::GridSup)?,
    };
    let noisy = matches!(mode, OracleMode::MonteCarlo { .. });
    let cfg = SolverConfig {
        method,
        schedule: parse_schedule(c, method)?,
        steps: parse_step(c, method, noisy)?,
        iterations: c.value_or("solver.iterations", 300)?,
        oracle,
        initial: None,
        seed,
        trial: 0,
        record_timing: c.bool_or("run.timing", false)?,
    };
    cfg.validate()?;
    Ok(cfg)
}
