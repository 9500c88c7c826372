//! Truncated gradient descent, its accelerated variant, and the
//! comparison baselines. Every run produces a [`Trace`].

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{BasisSpec, FieldVector, QConvention};
use crate::error::{Error, Result};
use crate::oracle::{self, OracleConfig, OracleMode};
use crate::problem::ProblemSpec;
use crate::rng::SampleStreams;

/// A run is aborted once the truncated error exceeds this multiple of its
/// initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gd,
    Agd,
    Sa,
    FixedGd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Agd => "agd",
            Method::Sa => "sa",
            Method::FixedGd => "fixed",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Method::Gd),
            "agd" => Ok(Method::Agd),
            "sa" => Ok(Method::Sa),
            "fixed" | "fixed_gd" => Ok(Method::FixedGd),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Truncation levels `m_k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TruncationSchedule {
    /// `m_k = ⌊√(k + 10) + 2⌋`.
    PaperSqrt,
    Constant { level: usize },
    /// `m_k = levels[min(k, len - 1)]`.
    Explicit { levels: Vec<usize> },
}

impl TruncationSchedule {
    pub fn level(&self, k: usize) -> usize {
        match self {
            TruncationSchedule::PaperSqrt => ((k as f64 + 10.0).sqrt() + 2.0).floor() as usize,
            TruncationSchedule::Constant { level } => *level,
            TruncationSchedule::Explicit { levels } => levels[k.min(levels.len() - 1)],
        }
    }

    /// Largest level reached in `0..=iterations`.
    pub fn max_level(&self, iterations: usize) -> usize {
        self.level(iterations)
    }

    pub fn validate(&self) -> Result<()> {
        if let TruncationSchedule::Explicit { levels } = self {
            if levels.is_empty() {
                return Err(Error::Config("explicit schedule needs at least one level".into()));
            }
            if levels.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Config("truncation schedule must be nondecreasing".into()));
            }
        }
        Ok(())
    }
}

/// How step sizes are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepPolicy {
    /// `γ = 2/(μ+L)`.
    GdExact,
    /// `γ_k = 2/((μ+L)(1+C_G(m_k)))`, re-evaluated at every level.
    GdNoisy,
    /// `α = 1/L`, `β = (1−√(αμ))/(1+√(αμ))`.
    AgdExact,
    /// `α_k` equal to the noisy GD step, `β` from `α_k`.
    AgdLikeGd,
    /// `γ_k = γ₀/k`.
    SaDecay { gamma0: f64 },
    Explicit { gamma: f64, beta: f64 },
}

impl StepPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            StepPolicy::GdExact => "gd_exact",
            StepPolicy::GdNoisy => "gd_noisy",
            StepPolicy::AgdExact => "agd_exact",
            StepPolicy::AgdLikeGd => "agd_like_gd",
            StepPolicy::SaDecay { .. } => "sa_decay",
            StepPolicy::Explicit { .. } => "explicit",
        }
    }

    pub fn sa_default() -> Self {
        StepPolicy::SaDecay { gamma0: 0.01 }
    }
}

/// `β = (1−√(αμ))/(1+√(αμ))`.
pub fn momentum_for(alpha: f64, mu: f64) -> f64 {
    let s = (alpha * mu).sqrt();
    (1.0 - s) / (1.0 + s)
}

/// Upper limit on the noisy GD step, `2/((μ+L) C_G)`.
pub fn gd_step_cap(mu: f64, l: f64, c_g: f64) -> f64 {
    2.0 / ((mu + l) * c_g)
}

/// `ᾱ = min{1/L, μ³/(60 C_G)²}`.
pub fn agd_alpha_bar(mu: f64, l: f64, c_g: f64) -> f64 {
    (1.0 / l).min(mu.powi(3) / (60.0 * c_g).powi(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub schedule: TruncationSchedule,
    pub steps: StepPolicy,
    pub iterations: usize,
    pub oracle: OracleConfig,
    /// Defaults to the zero vector.
    #[serde(skip)]
    pub initial: Option<FieldVector>,
    pub seed: u64,
    pub trial: u64,
    /// Fill `elapsed_ns`; off by default so traces are reproducible byte for
    /// byte.
    pub record_timing: bool,
}

impl SolverConfig {
    pub fn new(method: Method, schedule: TruncationSchedule, steps: StepPolicy, iterations: usize) -> Self {
        Self {
            method,
            schedule,
            steps,
            iterations,
            oracle: OracleConfig::default(),
            initial: None,
            seed: 0,
            trial: 0,
            record_timing: false,
        }
    }

    pub fn with_oracle(mut self, oracle: OracleConfig) -> Self {
        self.oracle = oracle;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trial(mut self, trial: u64) -> Self {
        self.trial = trial;
        self
    }

    pub fn with_timing(mut self, on: bool) -> Self {
        self.record_timing = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.oracle.validate()?;
        if self.method == Method::FixedGd && !matches!(self.schedule, TruncationSchedule::Constant { .. }) {
            return Err(Error::Config("fixed-level GD needs a constant schedule".into()));
        }
        match (self.method, &self.steps) {
            (Method::Sa, StepPolicy::SaDecay { .. }) => {}
            (Method::Sa, _) => {
                return Err(Error::Config("stochastic approximation needs the sa_decay step policy".into()))
            }
            (Method::Gd | Method::FixedGd, StepPolicy::AgdExact | StepPolicy::AgdLikeGd) => {
                return Err(Error::Config("accelerated step policy used with a GD method".into()))
            }
            _ => {}
        }
        if let StepPolicy::SaDecay { gamma0 } = self.steps {
            if !(gamma0 > 0.0) {
                return Err(Error::Config("sa_decay needs gamma0 > 0".into()));
            }
        }
        if let StepPolicy::Explicit { gamma, beta } = self.steps {
            if !(gamma > 0.0) || !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!(
                    "explicit steps need gamma > 0 and 0 <= beta < 1 (got {gamma}, {beta})"
                )));
            }
        }
        Ok(())
    }

    /// Hash of everything that determines the trace except seed and trial.
    pub fn fingerprint(&self, p: &ProblemSpec) -> String {
        let mut h = Sha256::new();
        h.update(
            format!(
                "{}|{:?}|{:?}|{:?}|{}|{:?}|{:?}|{:?}|{:?}",
                p.name, p.mu, p.l, p.noise, self.method.name(), self.schedule, self.steps, self.iterations, self.oracle
            )
            .as_bytes(),
        );
        if let Some(init) = &self.initial {
            h.update(format!("{init:?}").as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub m: usize,
    /// `γ_k` for GD-type methods, `α_k` for AGD.
    pub step: f64,
    /// `‖u_k − P_{m_k} u*‖₂²`.
    pub err_trunc_sq: f64,
    /// `‖u_k − u*‖₂²`, truncation remainder included.
    pub err_full_sq: f64,
    /// `‖D'_{m_k}‖₂` of the estimate used in the step; 0 for the initial
    /// record.
    pub grad_norm: f64,
    /// Monotonic time since the start of the run.
    pub elapsed_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub method: Method,
    pub config_hash: String,
    pub seed: u64,
    pub trial: u64,
    pub aborted: bool,
    /// Some iteration used a GD step above `2/((μ+L) C_G)`.
    pub step_cap_violated: bool,
    /// Accelerated runs: `ᾱ` at the final level.
    pub alpha_bar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    /// `K + 1` records unless aborted.
    pub records: Vec<IterationRecord>,
    pub final_state: FieldVector,
}

impl Trace {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace holds the initial record")
    }

    /// First iteration with `err_trunc_sq < threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.err_trunc_sq < threshold).map(|r| r.k)
    }
}

/// Header of the trace CSV.
pub const TRACE_HEADER: &str = "k,m,step,err_trunc_sq,err_full_sq,grad_norm,elapsed_ns";

/// Shortest round-trip representation.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

impl IterationRecord {
    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.k,
            self.m,
            fmt_f64(self.step),
            fmt_f64(self.err_trunc_sq),
            fmt_f64(self.err_full_sq),
            fmt_f64(self.grad_norm),
            self.elapsed_ns
        )
    }
}

impl Trace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Parses a trace CSV back into records.
pub fn read_trace_csv<R: BufRead>(r: R) -> Result<Vec<IterationRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != TRACE_HEADER {
                return Err(Error::Io(format!("unexpected trace header `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Io(format!("line {}: malformed trace row", n + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |i: usize| f[i].trim().parse::<f64>().map_err(|_| bad());
        out.push(IterationRecord {
            k: f[0].trim().parse().map_err(|_| bad())?,
            m: f[1].trim().parse().map_err(|_| bad())?,
            step: num(2)?,
            err_trunc_sq: num(3)?,
            err_full_sq: num(4)?,
            grad_norm: num(5)?,
            elapsed_ns: f[6].trim().parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Per-run step-size context.
struct StepContext {
    mu: f64,
    l: f64,
    v_g: f64,
    samples: Option<usize>,
    q: Vec<f64>,
}

impl StepContext {
    fn new(p: &ProblemSpec, spec: &BasisSpec, cfg: &SolverConfig) -> Self {
        let max = cfg.schedule.max_level(cfg.iterations);
        let q = match cfg.oracle.q_convention {
            QConvention::GridSup if cfg.oracle.samples().is_some() => spec.q_table(max),
            conv => (0..=max).map(|m| spec.q_value(m, conv)).collect(),
        };
        Self {
            mu: p.mu,
            l: p.l,
            v_g: p.noise.v_g,
            samples: cfg.oracle.samples(),
            q,
        }
    }

    fn c_g(&self, m: usize) -> f64 {
        match self.samples {
            None => 1.0,
            Some(s) => oracle::multiplicative_constant_gd(self.v_g, self.q[m], s),
        }
    }

    fn c_g_agd(&self, m: usize) -> f64 {
        match self.samples {
            None => 1.0,
            Some(s) => oracle::multiplicative_constant_agd(self.l, self.v_g, self.q[m], s),
        }
    }

    /// `(step, momentum)` at iteration `k ≥ 1` and level `m`.
    fn resolve(&self, policy: &StepPolicy, k: usize, m: usize) -> (f64, f64) {
        let (mu, l) = (self.mu, self.l);
        match *policy {
            StepPolicy::GdExact => (2.0 / (mu + l), 0.0),
            StepPolicy::GdNoisy => (2.0 / ((mu + l) * (1.0 + self.c_g(m))), 0.0),
            StepPolicy::AgdExact => {
                let a = 1.0 / l;
                (a, momentum_for(a, mu))
            }
            StepPolicy::AgdLikeGd => {
                let a = 2.0 / ((mu + l) * (1.0 + self.c_g(m)));
                (a, momentum_for(a, mu))
            }
            StepPolicy::SaDecay { gamma0 } => (gamma0 / k as f64, 0.0),
            StepPolicy::Explicit { gamma, beta } => (gamma, beta),
        }
    }
}

fn errors(p: &ProblemSpec, ustar: Option<&FieldVector>, u: &FieldVector, m: usize) -> (f64, f64) {
    match ustar {
        None => (f64::NAN, f64::NAN),
        Some(star) => {
            let mut acc = 0.0;
            for (uc, sc) in u.components.iter().zip(&star.components) {
                for (i, &v) in uc.as_slice().iter().enumerate().take(m + 1) {
                    acc += (v - sc.get(i)).powi(2);
                }
            }
            let tail = p.optimum_remainder_sq(m).unwrap_or(f64::NAN);
            (acc, acc + tail)
        }
    }
}

/// Runs any configured method.
pub fn run(p: &ProblemSpec, spec: &BasisSpec, cfg: &SolverConfig) -> Result<Trace> {
    cfg.validate()?;
    let owned;
    let spec = if cfg.oracle.nodes != spec.nodes() {
        owned = spec.with_nodes(cfg.oracle.nodes)?;
        &owned
    } else {
        spec
    };
    let ctx = StepContext::new(p, spec, cfg);
    let ustar = p.known_optimum();
    let mut streams = SampleStreams::new(cfg.seed, cfg.trial);
    let accelerated = cfg.method == Method::Agd;
    let noisy = matches!(cfg.oracle.mode, OracleMode::MonteCarlo { .. });

    let m0 = cfg.schedule.level(0);
    let mut u = match &cfg.initial {
        Some(init) => {
            if init.dim() != p.dim {
                return Err(Error::Config(format!(
                    "initial state has {} components, problem has {}",
                    init.dim(),
                    p.dim
                )));
            }
            let mut v = init.project(m0);
            v.resize(m0);
            v
        }
        None => FieldVector::zeros(p.dim, m0),
    };
    let mut u_prev = u.clone();

    let start = Instant::now();
    let stamp = |on: bool| if on { start.elapsed().as_nanos() as u64 } else { 0 };
    let mut records = Vec::with_capacity(cfg.iterations + 1);
    let (e0, f0) = errors(p, ustar.as_ref(), &u, m0);
    records.push(IterationRecord {
        k: 0,
        m: m0,
        step: 0.0,
        err_trunc_sq: e0,
        err_full_sq: f0,
        grad_norm: 0.0,
        elapsed_ns: stamp(cfg.record_timing),
    });
    let guard = DIVERGENCE_FACTOR * if e0 > 0.0 { e0 } else { 1.0 };
    let mut aborted = false;
    let mut cap_violated = false;
    let mut level = m0;

    for k in 1..=cfg.iterations {
        let m = cfg.schedule.level(k);
        if m != level {
            // New coefficients enter at zero.
            u.resize(m);
            u_prev.resize(m);
            level = m;
        }
        let (step, beta) = ctx.resolve(&cfg.steps, k, m);
        if !accelerated && noisy && step > gd_step_cap(ctx.mu, ctx.l, ctx.c_g(m)) {
            cap_violated = true;
        }
        let d;
        if accelerated {
            let mut y = u.clone();
            for (yc, pc) in y.components.iter_mut().zip(&u_prev.components) {
                for (yv, &pv) in yc.as_mut_slice().iter_mut().zip(pc.as_slice()) {
                    *yv = (1.0 + beta) * *yv - beta * pv;
                }
            }
            d = oracle::descent(p, &y, m, spec, &cfg.oracle, &mut streams)?;
            for (yc, dc) in y.components.iter_mut().zip(&d.components) {
                for (yv, &g) in yc.as_mut_slice().iter_mut().zip(dc.as_slice()) {
                    *yv -= step * g;
                }
            }
            u_prev = std::mem::replace(&mut u, y);
        } else {
            d = oracle::descent(p, &u, m, spec, &cfg.oracle, &mut streams)?;
            for (uc, dc) in u.components.iter_mut().zip(&d.components) {
                for (uv, &g) in uc.as_mut_slice().iter_mut().zip(dc.as_slice()) {
                    *uv -= step * g;
                }
            }
        }
        let (et, ef) = errors(p, ustar.as_ref(), &u, m);
        records.push(IterationRecord {
            k,
            m,
            step,
            err_trunc_sq: et,
            err_full_sq: ef,
            grad_norm: d.norm(),
            elapsed_ns: stamp(cfg.record_timing),
        });
        let blown = if et.is_nan() { !u.norm_sq().is_finite() } else { !(et <= guard) };
        if blown {
            aborted = true;
            break;
        }
    }

    let alpha_bar = accelerated.then(|| agd_alpha_bar(ctx.mu, ctx.l, ctx.c_g_agd(level)));
    Ok(Trace {
        meta: TraceMeta {
            method: cfg.method,
            config_hash: cfg.fingerprint(p),
            seed: cfg.seed,
            trial: cfg.trial,
            aborted,
            step_cap_violated: cap_violated,
            alpha_bar,
        },
        records,
        final_state: u,
    })
}

fn expect_method(cfg: &SolverConfig, want: Method) -> Result<()> {
    if cfg.method != want {
        return Err(Error::Config(format!(
            "configuration is for `{}`, not `{}`",
            cfg.method, want
        )));
    }
    Ok(())
}

/// Truncated gradient descent with a growing level.
pub fn run_gd(p: &ProblemSpec, spec: &BasisSpec, cfg: &SolverConfig) -> Result<Trace> {
    expect_method(cfg, Method::Gd)?;
    run(p, spec, cfg)
}

/// Truncated accelerated descent: `y_k = (1+β)u_k − βu_{k−1}`,
/// `u_{k+1} = y_k − α D'_{m_k} f(y_k)`.
pub fn run_agd(p: &ProblemSpec, spec: &BasisSpec, cfg: &SolverConfig) -> Result<Trace> {
    expect_method(cfg, Method::Agd)?;
    run(p, spec, cfg)
}

/// Robbins–Monro style baseline with `γ_k = γ₀/k`.
pub fn run_sa(p: &ProblemSpec, spec: &BasisSpec, cfg: &SolverConfig) -> Result<Trace> {
    expect_method(cfg, Method::Sa)?;
    run(p, spec, cfg)
}

/// GD at one constant level.
pub fn run_fixed(p: &ProblemSpec, spec: &BasisSpec, cfg: &SolverConfig) -> Result<Trace> {
    expect_method(cfg, Method::FixedGd)?;
    run(p, spec, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::DEFAULT_NODES;
    use crate::problem::{make_coupled_quadratic, make_noisy_quadratic, make_quadratic, Coupling, Target};

    fn trig() -> BasisSpec {
        BasisSpec::trigonometric(DEFAULT_NODES).unwrap()
    }

    #[test]
    fn paper_schedule_values() {
        let s = TruncationSchedule::PaperSqrt;
        assert_eq!(s.level(0), 5);
        assert_eq!(s.level(6), 6);
        assert_eq!(s.level(300), 19);
        assert_eq!(s.level(600), 26);
        assert!((0..2000).all(|k| s.level(k + 1) >= s.level(k)));
    }

    #[test]
    fn explicit_schedule_validation() {
        let bad = TruncationSchedule::Explicit { levels: vec![3, 2] };
        assert!(bad.validate().is_err());
        assert!(TruncationSchedule::Explicit { levels: vec![] }.validate().is_err());
        let ok = TruncationSchedule::Explicit { levels: vec![1, 4, 4] };
        assert_eq!(ok.level(10), 4);
    }

    #[test]
    fn config_invariants() {
        let c = SolverConfig::new(Method::FixedGd, TruncationSchedule::PaperSqrt, StepPolicy::GdExact, 3);
        assert!(c.validate().is_err());
        let c = SolverConfig::new(Method::Sa, TruncationSchedule::PaperSqrt, StepPolicy::GdExact, 3);
        assert!(c.validate().is_err());
        let c = SolverConfig::new(Method::Sa, TruncationSchedule::PaperSqrt, StepPolicy::sa_default(), 3);
        assert!(c.validate().is_ok());
        let c = SolverConfig::new(Method::Gd, TruncationSchedule::PaperSqrt, StepPolicy::AgdExact, 3);
        assert!(c.validate().is_err());
    }

    #[test]
    fn sa_steps() {
        let p = make_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let cfg = SolverConfig::new(Method::Sa, TruncationSchedule::PaperSqrt, StepPolicy::sa_default(), 100);
        let t = run_sa(&p, &trig(), &cfg).unwrap();
        assert_eq!(t.records[1].step, 0.01);
        assert!((t.records[100].step - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn zero_iterations_keep_only_initial_state() {
        let p = make_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let cfg = SolverConfig::new(Method::Gd, TruncationSchedule::PaperSqrt, StepPolicy::GdExact, 0);
        let t = run_gd(&p, &trig(), &cfg).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].k, 0);
        assert_eq!(t.final_state, FieldVector::zeros(2, 5));
    }

    #[test]
    fn fixed_level_gd_contracts_by_closed_form_factor() {
        let p = make_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let spec = trig();
        let m = 8;
        let cfg = SolverConfig::new(Method::FixedGd, TruncationSchedule::Constant { level: m }, StepPolicy::GdExact, 30);
        let t = run_fixed(&p, &spec, &cfg).unwrap();
        let um = p.truncated_optimum(&spec, m).unwrap();
        // replay to measure distances to the oracle's own optimum
        let factor: f64 = 199.0 / 201.0;
        let mut u = FieldVector::zeros(2, m);
        let mut prev = u.distance_sq(&um).sqrt();
        for _ in 0..30 {
            let d = oracle::exact_descent(&p, &u, m, &spec).unwrap();
            for (uc, dc) in u.components.iter_mut().zip(&d.components) {
                for (a, g) in uc.as_mut_slice().iter_mut().zip(dc.as_slice()) {
                    *a -= 2.0 / 201.0 * g;
                }
            }
            let now = u.distance_sq(&um).sqrt();
            assert!((now / prev - factor).abs() < 1e-10);
            prev = now;
        }
        assert_eq!(u, t.final_state);
    }

    #[test]
    fn zero_extension_on_level_growth() {
        let p = make_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let cfg = SolverConfig::new(
            Method::Gd,
            TruncationSchedule::Explicit { levels: vec![1, 1, 4, 4] },
            StepPolicy::GdExact,
            1,
        );
        let t = run_gd(&p, &trig(), &cfg).unwrap();
        assert_eq!(t.final_state.level(), 1);
        // After growing to 4 the entries 2..=4 must equal a single step from
        // zero: u = γ·(a·u*_i) with a = curvature.
        let cfg = SolverConfig { iterations: 2, ..cfg };
        let t2 = run_gd(&p, &trig(), &cfg).unwrap();
        let um = p.truncated_optimum(&trig(), 4).unwrap();
        let g = 2.0 / 201.0;
        for i in 2..=4 {
            let want = g * um.components[0].get(i);
            assert!((t2.final_state.components[0].get(i) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn agd_without_momentum_matches_gd_bitwise() {
        let p = make_noisy_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let spec = trig();
        let o = OracleConfig::monte_carlo(40);
        let gd = SolverConfig::new(Method::Gd, TruncationSchedule::PaperSqrt, StepPolicy::Explicit { gamma: 0.004, beta: 0.0 }, 40)
            .with_oracle(o)
            .with_seed(9);
        let agd = SolverConfig { method: Method::Agd, ..gd.clone() };
        let a = run_gd(&p, &spec, &gd).unwrap();
        let b = run_agd(&p, &spec, &agd).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn runs_are_reproducible() {
        let p = make_noisy_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let cfg = SolverConfig::new(Method::Gd, TruncationSchedule::PaperSqrt, StepPolicy::GdNoisy, 25)
            .with_oracle(OracleConfig::monte_carlo(30))
            .with_seed(4)
            .with_trial(2);
        let a = run_gd(&p, &trig(), &cfg).unwrap();
        let b = run_gd(&p, &trig(), &cfg).unwrap();
        assert_eq!(a, b);
        let c = run_gd(&p, &trig(), &cfg.clone().with_trial(3)).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn unscaled_noisy_step_flags_cap_and_divergence_guard_fires() {
        let p = make_noisy_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let cfg = SolverConfig::new(Method::Gd, TruncationSchedule::Constant { level: 60 }, StepPolicy::GdExact, 3000)
            .with_oracle(OracleConfig::monte_carlo(20));
        let t = run_gd(&p, &trig(), &cfg).unwrap();
        assert!(t.meta.step_cap_violated);
        assert!(t.meta.aborted);
        assert!(t.records.len() < 3001);
    }

    #[test]
    fn exact_agd_fixed_level_converges() {
        let p = make_coupled_quadratic(Coupling::sinusoidal(4.0, 3.0).unwrap(), Target::paper()).unwrap();
        let spec = trig();
        let cfg = SolverConfig::new(Method::Agd, TruncationSchedule::Constant { level: 10 }, StepPolicy::AgdExact, 200);
        let t = run_agd(&p, &spec, &cfg).unwrap();
        let um = p.truncated_optimum(&spec, 10).unwrap();
        assert!(t.final_state.distance_sq(&um) < 1e-20);
        assert!(t.meta.alpha_bar.is_some());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = make_noisy_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let cfg = SolverConfig::new(Method::Gd, TruncationSchedule::PaperSqrt, StepPolicy::GdNoisy, 12)
            .with_oracle(OracleConfig::monte_carlo(10));
        let t = run_gd(&p, &trig(), &cfg).unwrap();
        let text = t.to_csv_string();
        assert!(text.starts_with(TRACE_HEADER));
        let back = read_trace_csv(text.as_bytes()).unwrap();
        assert_eq!(back, t.records);
        assert!(read_trace_csv("k,m\n".as_bytes()).is_err());
    }

    #[test]
    fn method_mismatch_is_rejected() {
        let p = make_quadratic(1.0, 2.0, Target::paper()).unwrap();
        let cfg = SolverConfig::new(Method::Gd, TruncationSchedule::PaperSqrt, StepPolicy::GdExact, 1);
        assert!(run_agd(&p, &trig(), &cfg).is_err());
        assert!(run_fixed(&p, &trig(), &cfg).is_err());
    }
}
