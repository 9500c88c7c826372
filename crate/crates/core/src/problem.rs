//! Objectives `f(x(θ), θ) = E_v F(x(θ), θ, v)`, their constants, and the
//! built-in test problems.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, Benchmark, CoefficientVector, Family, FieldVector, BENCHMARK_NODES};
use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `(x(θ), θ, out) ↦ out = ∇f(x(θ), θ)`, one entry per output component.
pub type GradientFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// Level stored in benchmark tables.
pub const BENCHMARK_LEVEL: usize = 256;

/// `x*(θ) = |4/5 + ¼·exp(sin θ) − cosh(sin²θ)| · (1 + sin 2θ)` on `[-π, π]`.
pub fn paper_target(theta: f64) -> f64 {
    let s = theta.sin();
    (0.8 + 0.25 * s.exp() - (s * s).cosh()).abs() * (1.0 + (2.0 * theta).sin())
}

/// Second-moment bound `E_v (∇F)² ≤ V + V_G (∇f)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub v: f64,
    pub v_g: f64,
}

impl NoiseModel {
    pub const DETERMINISTIC: NoiseModel = NoiseModel { v: 0.0, v_g: 1.0 };

    pub fn new(v: f64, v_g: f64) -> Result<Self> {
        if !(v >= 0.0) || !(v_g >= 1.0) {
            return Err(Error::Config(format!(
                "noise model needs V >= 0 and V_G >= 1 (got V={v}, V_G={v_g})"
            )));
        }
        Ok(Self { v, v_g })
    }
}

/// Additive noise `v` drawn once per sample and added to every gradient
/// component (the gradient of `v·Σ_c x_c`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSampler {
    None,
    Uniform { lo: f64, hi: f64 },
    /// Noise switched off without touching the rest of the problem.
    Zero,
}

/// A known optimum `x*(θ)` and its high-accuracy coefficients.
#[derive(Clone)]
pub struct Target {
    name: String,
    f: ScalarFn,
    benchmark: Arc<Benchmark>,
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Target")
            .field("name", &self.name)
            .field("family", &self.benchmark.family)
            .finish()
    }
}

impl Target {
    /// The slowly-decaying benchmark function, cached after first use.
    pub fn paper() -> Self {
        static BENCH: OnceLock<Arc<Benchmark>> = OnceLock::new();
        let benchmark = BENCH
            .get_or_init(|| {
                Arc::new(
                    Benchmark::compute(
                        Family::Trigonometric,
                        paper_target,
                        BENCHMARK_LEVEL,
                        BENCHMARK_NODES,
                    )
                    .expect("benchmark quadrature is fine enough"),
                )
            })
            .clone();
        Self {
            name: "paper".into(),
            f: Arc::new(paper_target),
            benchmark,
        }
    }

    /// An arbitrary function; its coefficients are computed at benchmark
    /// accuracy.
    pub fn from_fn(name: impl Into<String>, family: Family, f: ScalarFn) -> Result<Self> {
        let g = f.clone();
        let benchmark = Benchmark::compute(family, move |t| g(t), BENCHMARK_LEVEL, BENCHMARK_NODES)?;
        Ok(Self {
            name: name.into(),
            f,
            benchmark: Arc::new(benchmark),
        })
    }

    /// A finite expansion; coefficients and remainders are exact.
    pub fn from_coefficients(family: Family, coeffs: CoefficientVector) -> Result<Self> {
        let spec = BasisSpec::new(family, 2 * (coeffs.level() + 1))?;
        let c = coeffs.clone();
        let f: ScalarFn = Arc::new(move |t| spec.synthesize_scalar(&c, t).unwrap_or(0.0));
        let norm_sq = coeffs.norm_sq();
        Ok(Self {
            name: "expansion".into(),
            f,
            benchmark: Arc::new(Benchmark {
                family,
                nodes: 0,
                coeffs,
                norm_sq,
            }),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, theta: f64) -> f64 {
        (self.f)(theta)
    }

    pub fn function(&self) -> ScalarFn {
        self.f.clone()
    }

    pub fn benchmark(&self) -> &Benchmark {
        &self.benchmark
    }

    pub fn family(&self) -> Family {
        self.benchmark.family
    }
}

/// Positive, bounded curvature `a(θ)` of the coupled quadratic.
#[derive(Clone)]
pub struct Coupling {
    pub f: ScalarFn,
    pub a_min: f64,
    pub a_max: f64,
    pub description: String,
}

impl fmt::Debug for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coupling")
            .field("a_min", &self.a_min)
            .field("a_max", &self.a_max)
            .field("description", &self.description)
            .finish()
    }
}

impl Coupling {
    /// `a(θ) = offset + amplitude·sin θ`.
    pub fn sinusoidal(offset: f64, amplitude: f64) -> Result<Self> {
        let a_min = offset - amplitude.abs();
        let a_max = offset + amplitude.abs();
        if !(a_min > 0.0) {
            return Err(Error::Config(format!(
                "coupling a(θ) = {offset} + {amplitude}·sin θ is not strictly positive"
            )));
        }
        Ok(Self {
            f: Arc::new(move |t: f64| offset + amplitude * t.sin()),
            a_min,
            a_max,
            description: format!("{offset} + {amplitude}*sin(theta)"),
        })
    }

    pub fn constant(a: f64) -> Result<Self> {
        Self::sinusoidal(a, 0.0)
    }

    /// User-supplied curvature with stated bounds, spot-checked on a grid.
    pub fn custom(f: ScalarFn, a_min: f64, a_max: f64, family: Family) -> Result<Self> {
        if !(a_min > 0.0) || a_max < a_min {
            return Err(Error::Config(format!(
                "coupling bounds must satisfy 0 < a_min <= a_max (got {a_min}, {a_max})"
            )));
        }
        let (lo, hi) = family.domain();
        for j in 0..=1000 {
            let t = lo + (hi - lo) * j as f64 / 1000.0;
            let a = f(t);
            if !(a >= a_min - 1e-12 && a <= a_max + 1e-12) {
                return Err(Error::Config(format!(
                    "coupling a({t}) = {a} outside the stated bounds [{a_min}, {a_max}]"
                )));
            }
        }
        Ok(Self {
            f,
            a_min,
            a_max,
            description: "custom".into(),
        })
    }
}

#[derive(Clone)]
pub enum Objective {
    /// `Σ_c ½ a_c (x_c − x*)²`.
    Diagonal { curvature: Vec<f64> },
    /// `½ a(θ) (x − x*)²`, scalar output.
    Coupled { coupling: Coupling },
    Custom { gradient: GradientFn },
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Diagonal { curvature } => {
                f.debug_struct("Diagonal").field("curvature", curvature).finish()
            }
            Objective::Coupled { coupling } => {
                f.debug_struct("Coupled").field("coupling", coupling).finish()
            }
            Objective::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// Selector used by config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Quadratic,
    NoisyQuadratic,
    CoupledQuadratic,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::NoisyQuadratic => "noisy-quadratic",
            ProblemKind::CoupledQuadratic => "coupled-quadratic",
        }
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(ProblemKind::Quadratic),
            "noisy-quadratic" => Ok(ProblemKind::NoisyQuadratic),
            "coupled-quadratic" => Ok(ProblemKind::CoupledQuadratic),
            other => Err(Error::Config(format!("unknown problem `{other}`"))),
        }
    }
}

/// An objective with its strong-convexity and Lipschitz constants.
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub objective: Objective,
    pub mu: f64,
    pub l: f64,
    pub noise: NoiseModel,
    pub sampler: NoiseSampler,
    pub target: Option<Target>,
}

fn check_constants(mu: f64, l: f64) -> Result<()> {
    if !(mu > 0.0) || !(l >= mu) || !l.is_finite() {
        return Err(Error::Config(format!(
            "need 0 < mu <= L (got mu={mu}, L={l})"
        )));
    }
    Ok(())
}

/// `(μ/2)(x − x*)² + (L/2)(y − x*)²`: strong convexity `μ`, Lipschitz `L`.
pub fn make_quadratic(mu: f64, l: f64, target: Target) -> Result<ProblemSpec> {
    check_constants(mu, l)?;
    Ok(ProblemSpec {
        name: ProblemKind::Quadratic.name().into(),
        dim: 2,
        objective: Objective::Diagonal {
            curvature: vec![mu, l],
        },
        mu,
        l,
        noise: NoiseModel::DETERMINISTIC,
        sampler: NoiseSampler::None,
        target: Some(target),
    })
}

/// The quadratic plus `v·(x + y)` with `v ~ U[-1, 1]`, so `V = 1/3`,
/// `V_G = 1`.
pub fn make_noisy_quadratic(mu: f64, l: f64, target: Target) -> Result<ProblemSpec> {
    let mut p = make_quadratic(mu, l, target)?;
    p.name = ProblemKind::NoisyQuadratic.name().into();
    p.noise = NoiseModel::new(1.0 / 3.0, 1.0)?;
    p.sampler = NoiseSampler::Uniform { lo: -1.0, hi: 1.0 };
    Ok(p)
}

/// `½ a(θ)(x − x*)²`; its level-`m` optimum differs from `P_m u*`.
pub fn make_coupled_quadratic(coupling: Coupling, target: Target) -> Result<ProblemSpec> {
    check_constants(coupling.a_min, coupling.a_max)?;
    Ok(ProblemSpec {
        name: ProblemKind::CoupledQuadratic.name().into(),
        dim: 1,
        mu: coupling.a_min,
        l: coupling.a_max,
        objective: Objective::Coupled { coupling },
        noise: NoiseModel::DETERMINISTIC,
        sampler: NoiseSampler::None,
        target: Some(target),
    })
}

impl ProblemSpec {
    /// A user objective given by its gradient and constants.
    pub fn custom(
        name: impl Into<String>,
        dim: usize,
        gradient: GradientFn,
        mu: f64,
        l: f64,
        noise: NoiseModel,
        target: Option<Target>,
    ) -> Result<Self> {
        check_constants(mu, l)?;
        if dim == 0 {
            return Err(Error::Config("output dimension must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            objective: Objective::Custom { gradient },
            mu,
            l,
            noise,
            sampler: NoiseSampler::None,
            target,
        })
    }

    pub fn with_sampler(mut self, sampler: NoiseSampler) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self.sampler, NoiseSampler::Uniform { .. })
    }

    /// `∇f(x(θ), θ)`.
    #[inline]
    pub fn gradient(&self, x: &[f64], theta: f64, out: &mut [f64]) {
        match &self.objective {
            Objective::Diagonal { curvature } => {
                let t = self.target_value(theta);
                for ((o, &xc), &a) in out.iter_mut().zip(x).zip(curvature) {
                    *o = a * (xc - t);
                }
            }
            Objective::Coupled { coupling } => {
                let t = self.target_value(theta);
                out[0] = (coupling.f)(theta) * (x[0] - t);
            }
            Objective::Custom { gradient } => gradient(x, theta, out),
        }
    }

    /// `∇F(x(θ), θ, v)` with `v` drawn from `rng` when the problem is noisy.
    #[inline]
    pub fn stochastic_gradient(&self, x: &[f64], theta: f64, rng: &mut ChaCha20Rng, out: &mut [f64]) {
        self.gradient(x, theta, out);
        let v = match self.sampler {
            NoiseSampler::None => return,
            NoiseSampler::Zero => 0.0,
            NoiseSampler::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        };
        for o in out.iter_mut() {
            *o += v;
        }
    }

    #[inline]
    fn target_value(&self, theta: f64) -> f64 {
        self.target.as_ref().map_or(0.0, |t| t.eval(theta))
    }

    /// Benchmark `u*` replicated over the components whose optimum is the
    /// target (every built-in).
    pub fn known_optimum(&self) -> Option<FieldVector> {
        let t = self.target.as_ref()?;
        match self.objective {
            Objective::Custom { .. } => None,
            _ => Some(FieldVector::new(vec![t.benchmark().coeffs.clone(); self.dim])),
        }
    }

    /// `‖R_m(u*)‖₂²` summed over components, using the benchmark norm.
    pub fn optimum_remainder_sq(&self, m: usize) -> Option<f64> {
        let t = self.target.as_ref()?;
        match self.objective {
            Objective::Custom { .. } => None,
            _ => Some(self.dim as f64 * t.benchmark().remainder_norm_sq(m)),
        }
    }

    /// Level-`m` minimizer. Diagonal problems: the projection of the target
    /// under `spec`'s quadrature. Coupled: dense normal equations. Custom:
    /// exact-gradient descent to `‖D_m f‖ ≤ 1e-12`.
    pub fn truncated_optimum(&self, spec: &BasisSpec, m: usize) -> Result<FieldVector> {
        match &self.objective {
            Objective::Diagonal { .. } => {
                let t = self
                    .target
                    .as_ref()
                    .ok_or_else(|| Error::Solver("diagonal problem without target".into()))?;
                let c = spec.analyze(|x| t.eval(x), m)?;
                Ok(FieldVector::new(vec![c; self.dim]))
            }
            Objective::Coupled { coupling } => {
                let (g, b) = self.coupled_normal_equations(coupling, spec, m)?;
                let sol = g
                    .cholesky()
                    .ok_or_else(|| Error::Solver("Gram matrix not positive definite".into()))?
                    .solve(&b);
                Ok(FieldVector::new(vec![CoefficientVector::from_vec(
                    sol.iter().copied().collect(),
                )]))
            }
            Objective::Custom { .. } => self.truncated_optimum_by_descent(spec, m),
        }
    }

    fn truncated_optimum_by_descent(&self, spec: &BasisSpec, m: usize) -> Result<FieldVector> {
        const TOL: f64 = 1e-12;
        const CAP: usize = 1_000_000;
        let gamma = 2.0 / (self.mu + self.l);
        let mut u = FieldVector::zeros(self.dim, m);
        for _ in 0..CAP {
            let d = crate::oracle::exact_descent(self, &u, m, spec)?;
            if d.norm() <= TOL {
                return Ok(u);
            }
            for (uc, dc) in u.components.iter_mut().zip(&d.components) {
                for (a, g) in uc.as_mut_slice().iter_mut().zip(dc.as_slice()) {
                    *a -= gamma * g;
                }
            }
        }
        Err(Error::Solver(format!(
            "level-{m} optimum: gradient norm above {TOL} after {CAP} iterations"
        )))
    }

    /// `G_ij = ∫ a B_i B_j dπ`, `b_i = ∫ a x* B_i dπ`.
    pub fn coupled_normal_equations(
        &self,
        coupling: &Coupling,
        spec: &BasisSpec,
        m: usize,
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let required = 2 * (m + 1);
        if spec.nodes() < required {
            return Err(Error::QuadratureTooCoarse {
                nodes: spec.nodes(),
                level: m,
                required,
            });
        }
        let n = m + 1;
        let mut g = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        let mut vals = vec![0.0; n];
        let q = spec.quadrature();
        for (&t, &w) in q.nodes.iter().zip(&q.weights) {
            spec.eval_into(t, &mut vals);
            let a = (coupling.f)(t) * w;
            let ax = a * self.target_value(t);
            for i in 0..n {
                b[i] += ax * vals[i];
                let ai = a * vals[i];
                for j in i..n {
                    g[(i, j)] += ai * vals[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        Ok((g, b))
    }

    /// `(μ_m, L_m)`: extreme curvatures of `f` restricted to level `m`.
    pub fn level_constants(&self, spec: &BasisSpec, m: usize) -> Result<(f64, f64)> {
        match &self.objective {
            Objective::Diagonal { curvature } => {
                let lo = curvature.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = curvature.iter().copied().fold(0.0, f64::max);
                Ok((lo, hi))
            }
            Objective::Coupled { coupling } => {
                let (g, _) = self.coupled_normal_equations(coupling, spec, m)?;
                let eig = g.symmetric_eigenvalues();
                Ok((eig.min(), eig.max()))
            }
            Objective::Custom { .. } => crate::oracle::estimate_level_constants(self, spec, m),
        }
    }

    /// `κ`, `κ_m` on `levels`, and `κ_ε` on `epsilons`.
    pub fn condition_report(
        &self,
        spec: &BasisSpec,
        levels: &[usize],
        epsilons: &[f64],
    ) -> Result<ConditionReport> {
        let mut kappa_m = Vec::with_capacity(levels.len());
        for &m in levels {
            let (lo, hi) = self.level_constants(spec, m)?;
            kappa_m.push((m, hi / lo));
        }
        let mut kappa_eps = Vec::with_capacity(epsilons.len());
        if let Some(t) = &self.target {
            for &e in epsilons {
                kappa_eps.push((e, epsilon_level(t.benchmark(), e)?));
            }
        }
        Ok(ConditionReport {
            kappa: self.kappa(),
            kappa_m,
            kappa_eps,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub kappa: f64,
    pub kappa_m: Vec<(usize, f64)>,
    /// `None` when the tolerance is not reached within the stored level.
    pub kappa_eps: Vec<(f64, Option<usize>)>,
}

/// Smallest `m` with `‖R_m(u)‖₂ < ε` over the stored coefficients.
pub fn epsilon_condition_number(u: &FieldVector, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive (got {eps})")));
    }
    let level = u.level();
    // The tail is empty at the top level, so the scan always terminates.
    Ok((0..=level)
        .find(|&m| u.remainder_norm_sq(m).sqrt() < eps)
        .unwrap_or(level))
}

/// As [`epsilon_condition_number`] against a benchmark, whose true tail
/// extends past the stored level; `None` is the "not reached" sentinel.
pub fn epsilon_level(bench: &Benchmark, eps: f64) -> Result<Option<usize>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive (got {eps})")));
    }
    Ok((0..=bench.level()).find(|&m| bench.remainder_norm(m) < eps))
}
