//! Numerical checks of the convergence theory: gradient inequalities, the
//! truncated-optimum lemma, rate and floor predictions, the Monte Carlo
//! error bound and the Lyapunov matrix inequality behind the accelerated
//! rate.

use nalgebra::{Matrix2, Matrix3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::basis::{dot, BasisSpec, CoefficientVector, FieldVector, QConvention, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::oracle::{self, Variant};
use crate::problem::{
    make_coupled_quadratic, make_noisy_quadratic, make_quadratic, Coupling, Objective, ProblemSpec, Target,
};
use crate::rng::SampleStreams;
use crate::solver::{gd_step_cap, momentum_for};

/// Slack below which an inequality counts as violated.
pub const SLACK_TOLERANCE: f64 = -1e-8;

/// One machine-readable check result.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub inputs: Value,
    pub predicted: Value,
    pub measured: Value,
    /// Smallest margin by which the checked inequality held.
    pub slack: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckReport {
    fn new(name: impl Into<String>, inputs: Value, predicted: Value, measured: Value, slack: f64, passed: bool) -> Self {
        Self {
            name: name.into(),
            inputs,
            predicted,
            measured,
            slack,
            passed,
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Field values and gradients of a state on `spec`'s nodes.
fn sample_field(p: &ProblemSpec, spec: &BasisSpec, u: &FieldVector) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let q = spec.quadrature();
    let mut vals = vec![0.0; u.level() + 1];
    let mut xs = Vec::with_capacity(q.nodes.len());
    let mut gs = Vec::with_capacity(q.nodes.len());
    for &t in &q.nodes {
        spec.eval_into(t, &mut vals);
        let x: Vec<f64> = u.components.iter().map(|c| dot(c.as_slice(), &vals)).collect();
        let mut g = vec![0.0; p.dim];
        p.gradient(&x, t, &mut g);
        xs.push(x);
        gs.push(g);
    }
    (xs, gs)
}

/// `∫ s(Δg·Δx, |Δg|², |Δx|²) dπ` with `Δ` the pointwise differences of
/// field values and gradients. The inequalities are linear in the three
/// terms, so evaluating them node by node avoids cancelling large totals.
fn pair_integral(
    p: &ProblemSpec,
    spec: &BasisSpec,
    a: &FieldVector,
    b: &FieldVector,
    s: impl Fn(f64, f64, f64) -> f64,
) -> f64 {
    let (xa, ga) = sample_field(p, spec, a);
    let (xb, gb) = sample_field(p, spec, b);
    let w = &spec.quadrature().weights;
    let mut acc = 0.0;
    for j in 0..w.len() {
        let (mut ip, mut gg, mut xx) = (0.0, 0.0, 0.0);
        for c in 0..p.dim {
            let dx = xa[j][c] - xb[j][c];
            let dg = ga[j][c] - gb[j][c];
            ip += dg * dx;
            gg += dg * dg;
            xx += dx * dx;
        }
        acc += w[j] * s(ip, gg, xx);
    }
    acc
}

fn random_field(rng: &mut ChaCha20Rng, dim: usize, level: usize) -> FieldVector {
    FieldVector::new(
        (0..dim)
            .map(|_| CoefficientVector::from_vec((0..=level).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect(),
    )
}

const PAIR_LEVEL: usize = 16;

fn pair_check(
    name: &str,
    p: &ProblemSpec,
    spec: &BasisSpec,
    trials: usize,
    seed: u64,
    slack_of: impl Fn(f64, f64, f64) -> f64,
) -> CheckReport {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut min_slack = f64::INFINITY;
    // The first pair is x = y.
    for t in 0..trials.max(1) {
        let a = random_field(&mut rng, p.dim, PAIR_LEVEL);
        let b = if t == 0 { a.clone() } else { random_field(&mut rng, p.dim, PAIR_LEVEL) };
        min_slack = min_slack.min(pair_integral(p, spec, &a, &b, &slack_of));
    }
    CheckReport::new(
        format!("{name}[{}]", p.name),
        json!({"problem": p.name, "mu": p.mu, "L": p.l, "trials": trials, "level": PAIR_LEVEL, "seed": seed}),
        json!({"min_slack_at_least": SLACK_TOLERANCE}),
        json!({"min_slack": min_slack}),
        min_slack,
        min_slack >= SLACK_TOLERANCE,
    )
}

/// `⟨∇f(x)−∇f(y), x−y⟩_π ≥ (1/L)‖∇f(x)−∇f(y)‖_π²` on random field pairs.
pub fn check_cocoercivity(p: &ProblemSpec, spec: &BasisSpec, trials: usize, seed: u64) -> CheckReport {
    let l = p.l;
    pair_check("cocoercivity", p, spec, trials, seed, move |ip, gg, _| ip - gg / l)
}

/// `(L+μ)⟨∇f(x)−∇f(y), x−y⟩_π ≥ μL‖x−y‖_π² + ‖∇f(x)−∇f(y)‖_π²`.
pub fn check_strong_cocoercivity(p: &ProblemSpec, spec: &BasisSpec, trials: usize, seed: u64) -> CheckReport {
    let (mu, l) = (p.mu, p.l);
    pair_check("strong_cocoercivity", p, spec, trials, seed, move |ip, gg, xx| {
        (l + mu) * ip - mu * l * xx - gg
    })
}

/// Strong co-coercivity is an equality for single-coefficient perturbations
/// of a diagonal quadratic along a component with curvature `μ` or `L`.
pub fn check_strong_cocoercivity_equality(p: &ProblemSpec, spec: &BasisSpec) -> Result<CheckReport> {
    let curvature = match &p.objective {
        Objective::Diagonal { curvature } => curvature.clone(),
        _ => return Err(Error::InvalidArgument("equality case needs a diagonal problem".into())),
    };
    let mut worst = 0.0f64;
    let base = FieldVector::zeros(p.dim, 4);
    for (c, &a) in curvature.iter().enumerate() {
        if a != p.mu && a != p.l {
            continue;
        }
        for i in 0..=4 {
            let mut pert = base.clone();
            pert.components[c].as_mut_slice()[i] = 0.5;
            let s = pair_integral(p, spec, &pert, &base, |ip, gg, xx| (p.l + p.mu) * ip - p.mu * p.l * xx - gg);
            worst = worst.max(s.abs());
        }
    }
    Ok(CheckReport::new(
        format!("strong_cocoercivity_equality[{}]", p.name),
        json!({"problem": p.name, "perturbation": 0.5, "indices": "0..=4"}),
        json!({"max_abs_slack_at_most": 1e-8}),
        json!({"max_abs_slack": worst}),
        -worst,
        worst <= 1e-8,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemainderRow {
    pub m: usize,
    /// `‖P_m(u*) − u*_m‖₂²`.
    pub lhs: f64,
    /// `‖R_m(u*)‖₂²`.
    pub remainder_sq: f64,
    /// `lhs / remainder_sq`, to compare with `κ`.
    pub ratio: f64,
    /// `‖u* − u*_m‖₂² / ‖R_m‖₂²`, to compare with `κ + 1`.
    pub corollary_ratio: f64,
}

/// `‖P_m(u*) − u*_m‖₂² ≤ κ‖R_m‖₂²` and `‖u* − u*_m‖₂² ≤ (κ+1)‖R_m‖₂²`.
pub fn check_remainder_lemma(p: &ProblemSpec, spec: &BasisSpec, levels: &[usize]) -> Result<CheckReport> {
    let target = p
        .target
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("remainder lemma needs a known optimum".into()))?;
    let kappa = p.kappa();
    let mut rows = Vec::with_capacity(levels.len());
    let mut slack = f64::INFINITY;
    for &m in levels {
        let head = spec.analyze(target.function().as_ref(), m)?;
        let proj = FieldVector::new(vec![head; p.dim]);
        let um = p.truncated_optimum(spec, m)?;
        let lhs = proj.distance_sq(&um);
        let rem = p.optimum_remainder_sq(m).unwrap_or(f64::NAN);
        let row = RemainderRow {
            m,
            lhs,
            remainder_sq: rem,
            ratio: lhs / rem,
            corollary_ratio: (lhs + rem) / rem,
        };
        // Relative slack, since ‖R_m‖² spans many decades.
        slack = slack.min((kappa * rem - lhs) / rem).min(((kappa + 1.0) * rem - lhs - rem) / rem);
        rows.push(row);
    }
    Ok(CheckReport::new(
        format!("remainder_lemma[{}]", p.name),
        json!({"problem": p.name, "levels": levels}),
        json!({"kappa": kappa, "corollary_factor": kappa + 1.0}),
        serde_json::to_value(&rows).expect("plain numbers"),
        slack,
        slack >= SLACK_TOLERANCE,
    ))
}

/// `(1 − 2γμL/(μ+L), (μ+L)γC/(2μL))`. Refuses steps above the theorem's cap
/// `2/((μ+L) C_G)`.
pub fn gd_rate_prediction(mu: f64, l: f64, gamma: f64, c: f64, c_g: f64) -> Result<(f64, f64)> {
    if !(mu > 0.0) || !(l >= mu) {
        return Err(Error::InvalidArgument(format!("need 0 < mu <= L (got {mu}, {l})")));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain { value: gamma, lo: 0.0, hi: f64::INFINITY });
    }
    let cap = gd_step_cap(mu, l, c_g.max(1.0));
    if gamma > cap * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge {
            step: gamma,
            bound: cap,
            rule: "gamma <= 2/((mu+L) C_G)",
        });
    }
    let factor = 1.0 - 2.0 * gamma * mu * l / (mu + l);
    let floor = (mu + l) * gamma * c / (2.0 * mu * l);
    Ok((factor, floor))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgdPrediction {
    /// `1 − √(αμ)/3`.
    pub factor: f64,
    /// `4κ²(μ+2αC_G)/(μ+4αC_G+L)`.
    pub constant: f64,
    /// `2αC/(μ²+4αC_Gμ+2L)`.
    pub floor: f64,
    /// `α ≤ ᾱ`; otherwise the numbers are descriptive only.
    pub certified: bool,
}

pub fn agd_rate_prediction(mu: f64, l: f64, alpha: f64, c: f64, c_g: f64) -> AgdPrediction {
    let kappa = l / mu;
    let alpha_bar = if c_g > 0.0 {
        (1.0 / l).min(mu.powi(3) / (60.0 * c_g).powi(2))
    } else {
        1.0 / l
    };
    AgdPrediction {
        factor: 1.0 - (alpha * mu).sqrt() / 3.0,
        constant: 4.0 * kappa * kappa * (mu + 2.0 * alpha * c_g) / (mu + 4.0 * alpha * c_g + l),
        floor: 2.0 * alpha * c / (mu * mu + 4.0 * alpha * c_g * mu + 2.0 * l),
        certified: alpha > 0.0 && alpha <= alpha_bar * (1.0 + 1e-12),
    }
}

/// Matrices of the accelerated method's Lyapunov argument, scalar blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovCertificate {
    pub mu: f64,
    pub l: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rho_sq: f64,
    pub c_sq: f64,
    pub x1: [[f64; 3]; 3],
    pub x2: [[f64; 3]; 3],
    pub p: [[f64; 2]; 2],
    pub q_alpha: [[f64; 2]; 2],
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
    /// Smallest eigenvalue of `ρ²X̃₁ + (1−ρ²)X̃₂ − [[AᵀPA−ρ²P, AᵀPB], [BᵀPA, BᵀPB]]`.
    pub slack: f64,
    pub p_min_eigenvalue: f64,
    /// `P̃` positive semi-definite.
    pub valid: bool,
}

impl LyapunovCertificate {
    pub fn holds(&self) -> bool {
        self.valid && self.slack >= SLACK_TOLERANCE
    }
}

fn rows3(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn rows2(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

/// Assembles `X̃₁, X̃₂, P̃, Q̃_α, Ã, B̃, C̃` and the slack of the matrix
/// inequality. With `d`-dimensional states every block is a scalar multiple
/// of `I_d`, so the scalar slack is the general one.
pub fn lyapunov_certificate(
    mu: f64,
    l: f64,
    alpha: f64,
    beta: f64,
    rho_sq: f64,
    c_sq: f64,
) -> Result<LyapunovCertificate> {
    if !(mu > 0.0) || !(l >= mu) {
        return Err(Error::InvalidArgument(format!("need 0 < mu <= L (got {mu}, {l})")));
    }
    if !(alpha > 0.0) || alpha > (1.0 / l) * (1.0 + 1e-12) {
        return Err(Error::Domain { value: alpha, lo: 0.0, hi: 1.0 / l });
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain { value: beta, lo: 0.0, hi: 1.0 });
    }
    if !(0.0..=1.0).contains(&rho_sq) {
        return Err(Error::Domain { value: rho_sq, lo: 0.0, hi: 1.0 });
    }
    let s = (0.5 / alpha).sqrt();
    let v = Vector2::new(s, (mu / 2.0).sqrt() - s);
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::Domain { value: alpha, lo: 0.0, hi: 1.0 / l });
    }
    let p = v * v.transpose();
    let a = Matrix2::new(1.0 + beta, -beta, 1.0, 0.0);
    let b = Vector2::new(-alpha, 0.0);
    let c = Vector2::new(1.0 + beta, -beta);
    let q_alpha = p + 2.0 * alpha * c_sq * c * c.transpose();

    let tail = alpha * (2.0 - l * alpha);
    let b2 = beta * beta;
    let x1 = 0.5
        * Matrix3::new(
            b2 * mu, -b2 * mu, -beta,
            -b2 * mu, b2 * mu, beta,
            -beta, beta, tail,
        );
    let x2 = 0.5
        * Matrix3::new(
            (1.0 + beta).powi(2) * mu, -beta * (1.0 + beta) * mu, -(1.0 + beta),
            -beta * (1.0 + beta) * mu, b2 * mu, beta,
            -(1.0 + beta), beta, tail,
        );

    let apa = a.transpose() * p * a - rho_sq * p;
    let apb = a.transpose() * p * b;
    let bpb = (b.transpose() * p * b)[(0, 0)];
    let rhs = Matrix3::new(
        apa[(0, 0)], apa[(0, 1)], apb[0],
        apa[(1, 0)], apa[(1, 1)], apb[1],
        apb[0], apb[1], bpb,
    );
    let lhs = rho_sq * x1 + (1.0 - rho_sq) * x2 - rhs;
    let sym = 0.5 * (lhs + lhs.transpose());
    let slack = sym.symmetric_eigenvalues().min();
    let p_min = (0.5 * (p + p.transpose())).symmetric_eigenvalues().min();
    let scale = p.norm().max(1.0);

    Ok(LyapunovCertificate {
        mu,
        l,
        alpha,
        beta,
        rho_sq,
        c_sq,
        x1: rows3(&x1),
        x2: rows3(&x2),
        p: rows2(&p),
        q_alpha: rows2(&q_alpha),
        a: rows2(&a),
        b: [b[0], b[1]],
        c: [c[0], c[1]],
        slack,
        p_min_eigenvalue: p_min,
        valid: p_min >= -1e-12 * scale,
    })
}

/// The certified parameter point `α = 1/L`, `β` from `α`, `ρ² = 1 − √(αμ)`.
pub fn certified_point(mu: f64, l: f64, c_sq: f64) -> Result<LyapunovCertificate> {
    let alpha = 1.0 / l;
    lyapunov_certificate(mu, l, alpha, momentum_for(alpha, mu), 1.0 - (alpha * mu).sqrt(), c_sq)
}

/// Random points of the certified region: `κ ≥ 4`, `α ≤ ᾱ`, `β` and `ρ²`
/// from `α`, `c² = C_G`.
pub fn random_certified_points(count: usize, seed: u64) -> Result<Vec<LyapunovCertificate>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mu: f64 = rng.random_range(0.05..5.0);
            let kappa: f64 = 4.0 * 10f64.powf(rng.random_range(0.0..3.0));
            let l = kappa * mu;
            let c_g: f64 = rng.random_range(1.0..3.0);
            let bar = (1.0 / l).min(mu.powi(3) / (60.0 * c_g).powi(2));
            let alpha = bar * rng.random_range(0.01..=1.0);
            lyapunov_certificate(mu, l, alpha, momentum_for(alpha, mu), 1.0 - (alpha * mu).sqrt(), c_g)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McStateRow {
    pub mean: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `mean / bound`.
    pub ratio: f64,
    pub holds: bool,
}

/// Empirical `E‖D'_m − D_m‖₂²` over `repeats` independent estimates at ten
/// random states (the first is the level-`m` optimum) against
/// `(Q_m/M)(V_G‖∇f‖_π² + V)`; passes when `mean ≤ bound + 3·SE` everywhere.
pub fn check_mc_error_bound(
    p: &ProblemSpec,
    spec: &BasisSpec,
    m: usize,
    samples: usize,
    repeats: usize,
    seed: u64,
) -> Result<CheckReport> {
    if repeats < 2 {
        return Err(Error::InvalidArgument("need at least two repeats".into()));
    }
    let q = spec.q_factor(m);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut states = vec![p.truncated_optimum(spec, m)?];
    while states.len() < 10 {
        states.push(random_field(&mut rng, p.dim, m));
    }
    let mut rows = Vec::with_capacity(states.len());
    for (s, u) in states.iter().enumerate() {
        let exact = oracle::exact_descent(p, u, m, spec)?;
        let errs: Vec<f64> = (0..repeats)
            .into_par_iter()
            .map(|r| {
                let mut streams = SampleStreams::new(seed ^ 0x9e37_79b9, (s * repeats + r) as u64);
                oracle::mc_descent(p, u, m, samples, spec, &mut streams).map(|d| d.distance_sq(&exact))
            })
            .collect::<Result<_>>()?;
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let bound = oracle::mc_error_bound(p, q, samples, oracle::gradient_norm_sq(p, u, spec));
        rows.push(McStateRow {
            mean,
            std_error: se,
            bound,
            ratio: mean / bound,
            holds: mean <= bound + 3.0 * se,
        });
    }
    let slack = rows
        .iter()
        .map(|r| (r.bound + 3.0 * r.std_error - r.mean) / r.bound)
        .fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(CheckReport::new(
        format!("mc_error_bound[{}]", p.name),
        json!({"problem": p.name, "m": m, "samples": samples, "repeats": repeats, "q": q, "seed": seed}),
        json!({"mean_at_most": "bound + 3*SE"}),
        json!({"max_ratio": max_ratio, "states": rows}),
        slack,
        rows.iter().all(|r| r.holds),
    ))
}

/// Solves `(2ε + √ε)/(1 − √(1 − 2γμL/(μ+L))) = target` for `ε` by bisection.
pub fn linear_phase_epsilon(mu: f64, l: f64, gamma: f64, target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::Domain { value: target, lo: 0.0, hi: f64::INFINITY });
    }
    let factor = 1.0 - 2.0 * gamma * mu * l / (mu + l);
    if !(gamma > 0.0) || !(0.0..1.0).contains(&factor) {
        return Err(Error::Domain { value: gamma, lo: 0.0, hi: (mu + l) / (2.0 * mu * l) });
    }
    let denom = 1.0 - factor.sqrt();
    let g = |e: f64| (2.0 * e + e.sqrt()) / denom;
    let (mut lo, mut hi) = (0.0, target.max(1.0));
    while g(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Smallest `N` with `ρᴺΓ < 0.9`, `ρ = √(1 − √(αμ)/3)`,
/// `Γ = √(4κ²(μ+2αC_G)/(μ+4αC_G+L))`; zero when `Γ ≤ 0.9`.
pub fn agd_safe_iterations(mu: f64, l: f64, alpha: f64, c_g: f64) -> Result<u64> {
    let pred = agd_rate_prediction(mu, l, alpha, 0.0, c_g);
    let rho = pred.factor.sqrt();
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain { value: alpha, lo: 0.0, hi: 9.0 / mu });
    }
    let gamma = pred.constant.sqrt();
    if gamma <= 0.9 {
        return Ok(0);
    }
    let mut n = ((gamma.ln() - 0.9f64.ln()) / -rho.ln()).floor().max(0.0) as u64;
    while rho.powi(n as i32) * gamma >= 0.9 {
        n += 1;
    }
    while n > 0 && rho.powi(n as i32 - 1) * gamma < 0.9 {
        n -= 1;
    }
    Ok(n)
}

/// Squared distances `‖u_k − u*_m‖₂²`, `k = 0..=iters`, of exact fixed-level
/// GD (`beta = None`) or AGD from zero.
pub fn fixed_level_errors(
    p: &ProblemSpec,
    spec: &BasisSpec,
    m: usize,
    step: f64,
    beta: Option<f64>,
    iters: usize,
) -> Result<Vec<f64>> {
    let um = p.truncated_optimum(spec, m)?;
    let mut u = FieldVector::zeros(p.dim, m);
    let mut prev = u.clone();
    let mut out = vec![u.distance_sq(&um)];
    for _ in 0..iters {
        let b = beta.unwrap_or(0.0);
        let mut y = u.clone();
        for (yc, pc) in y.components.iter_mut().zip(&prev.components) {
            for (yv, &pv) in yc.as_mut_slice().iter_mut().zip(pc.as_slice()) {
                *yv = (1.0 + b) * *yv - b * pv;
            }
        }
        let d = oracle::exact_descent(p, &y, m, spec)?;
        for (yc, dc) in y.components.iter_mut().zip(&d.components) {
            for (yv, &g) in yc.as_mut_slice().iter_mut().zip(dc.as_slice()) {
                *yv -= step * g;
            }
        }
        prev = std::mem::replace(&mut u, y);
        out.push(u.distance_sq(&um));
    }
    Ok(out)
}

/// Predicted and measured behaviour of a fixed-level run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub predicted_factor: f64,
    pub predicted_floor: f64,
    /// `e_{k+1}/e_k`.
    pub measured_factors: Vec<f64>,
    /// Mean error over the final 10% of iterations.
    pub measured_plateau: f64,
    pub factor_ok: bool,
    pub floor_ok: bool,
}

impl RateReport {
    /// `tolerance = None` checks `measured ≤ predicted` (the theorem's upper
    /// bound); `Some(t)` checks `|measured − predicted| ≤ t`.
    pub fn from_errors(errors: &[f64], factor: f64, floor: f64, tolerance: Option<f64>) -> Self {
        let measured: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
        let tail = (errors.len() / 10).max(1);
        let plateau = errors[errors.len() - tail..].iter().sum::<f64>() / tail as f64;
        let factor_ok = measured.iter().all(|&f| match tolerance {
            Some(t) => (f - factor).abs() <= t,
            None => f <= factor + 1e-12,
        });
        Self {
            predicted_factor: factor,
            predicted_floor: floor,
            measured_factors: measured,
            measured_plateau: plateau,
            factor_ok,
            floor_ok: floor == 0.0 || plateau <= 2.0 * floor,
        }
    }

    pub fn passed(&self) -> bool {
        self.factor_ok && self.floor_ok
    }
}

/// Relative error below which measured contraction factors are ignored.
pub const RATE_FLOOR: f64 = 1e-20;

/// Exact GD at a fixed level against the predicted contraction. Diagonal
/// problems must match to `1e-10`; others must not exceed the prediction.
pub fn check_gd_rate(p: &ProblemSpec, spec: &BasisSpec, m: usize, iters: usize) -> Result<CheckReport> {
    let gamma = 2.0 / (p.mu + p.l);
    let (factor, floor) = gd_rate_prediction(p.mu, p.l, gamma, 0.0, 1.0)?;
    let mut errs = fixed_level_errors(p, spec, m, gamma, None, iters)?;
    // Ratios of errors at the rounding floor are noise.
    if let Some(cut) = errs.iter().position(|&e| e < RATE_FLOOR * errs[0]) {
        errs.truncate(cut.max(2));
    }
    let tol = matches!(p.objective, Objective::Diagonal { .. }).then_some(1e-10);
    let rep = RateReport::from_errors(&errs, factor, floor, tol);
    let slack = rep
        .measured_factors
        .iter()
        .map(|&f| match tol {
            Some(t) => t - (f - factor).abs(),
            None => factor - f,
        })
        .fold(f64::INFINITY, f64::min);
    let passed = rep.passed();
    Ok(CheckReport::new(
        format!("gd_rate[{}]", p.name),
        json!({"problem": p.name, "m": m, "gamma": gamma, "iterations": iters, "measured_iterations": errs.len() - 1, "C": 0.0}),
        json!({"factor": factor, "floor": floor, "match_tolerance": tol}),
        serde_json::to_value(&rep).expect("plain numbers"),
        slack,
        passed,
    ))
}

/// Exact AGD at a fixed level: `e_k ≤ factorᵏ·constant·e_0` for every
/// `k ≥ agd_safe_iterations`.
pub fn check_agd_envelope(p: &ProblemSpec, spec: &BasisSpec, m: usize, iters: usize) -> Result<CheckReport> {
    let alpha = 1.0 / p.l;
    let beta = momentum_for(alpha, p.mu);
    let pred = agd_rate_prediction(p.mu, p.l, alpha, 0.0, 0.0);
    let n_safe = agd_safe_iterations(p.mu, p.l, alpha, 0.0)? as usize;
    let errs = fixed_level_errors(p, spec, m, alpha, Some(beta), iters)?;
    let e0 = errs[0];
    let mut slack = f64::INFINITY;
    for (k, &e) in errs.iter().enumerate().skip(n_safe) {
        let env = pred.factor.powi(k as i32) * pred.constant * e0;
        if env > 0.0 {
            slack = slack.min((env - e) / env);
        }
    }
    Ok(CheckReport::new(
        format!("agd_envelope[{}]", p.name),
        json!({"problem": p.name, "m": m, "alpha": alpha, "beta": beta, "iterations": iters}),
        json!({"factor": pred.factor, "constant": pred.constant, "floor": pred.floor, "from_iteration": n_safe}),
        json!({"initial_error": e0, "final_error": errs[errs.len() - 1]}),
        slack,
        slack >= SLACK_TOLERANCE,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub pair_trials: usize,
    pub mc_repeats: usize,
    pub lmi_points: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            pair_trials: 100,
            mc_repeats: 10_000,
            lmi_points: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub passed: bool,
    pub checks: Vec<CheckReport>,
    pub notes: Vec<String>,
}

/// The built-in problems: diagonal and noisy quadratics with `μ = 1`,
/// `L = 200`, and the coupled quadratic with `a(θ) = 1 + ½ sin θ`.
pub fn builtin_problems() -> Result<Vec<ProblemSpec>> {
    Ok(vec![
        make_quadratic(1.0, 200.0, Target::paper())?,
        make_noisy_quadratic(1.0, 200.0, Target::paper())?,
        make_coupled_quadratic(Coupling::sinusoidal(1.0, 0.5)?, Target::paper())?,
    ])
}

fn lmi_report(name: &str, certs: &[LyapunovCertificate]) -> CheckReport {
    let slack = certs.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min);
    let passed = certs.iter().all(LyapunovCertificate::holds);
    let measured = if certs.len() == 1 {
        serde_json::to_value(&certs[0]).expect("plain numbers")
    } else {
        json!({
            "points": certs.iter().map(|c| json!({
                "mu": c.mu, "L": c.l, "alpha": c.alpha, "c_sq": c.c_sq, "slack": c.slack, "valid": c.valid
            })).collect::<Vec<_>>()
        })
    };
    CheckReport::new(
        name,
        json!({"points": certs.len()}),
        json!({"min_slack_at_least": SLACK_TOLERANCE}),
        measured,
        slack,
        passed,
    )
}

fn constants_report(spec: &BasisSpec) -> Result<CheckReport> {
    let quad = make_noisy_quadratic(1.0, 200.0, Target::paper())?;
    let mut rows = Vec::new();
    for &(m, samples) in &[(91usize, 250usize), (32, 250), (20, 500)] {
        for conv in [QConvention::GridSup, QConvention::Paper] {
            let gd = oracle::error_constants(&quad, spec, m, samples, Variant::Gd, conv)?;
            let agd = oracle::error_constants(&quad, spec, m, samples, Variant::Agd, conv)?;
            rows.push(json!({
                "m": m, "samples": samples, "q_convention": conv.to_string(), "q": gd.q,
                "gd": {"C": gd.c, "C_G": gd.c_g, "cap_theorem": gd_step_cap(1.0, 200.0, gd.c_g),
                       "cap_experiments": 2.0 / (201.0 * (1.0 + gd.c_g))},
                "agd": {"C": agd.c, "C_G": agd.c_g},
            }));
        }
    }
    let need = oracle::required_samples(1.0, 200.0, 1.0, spec.q_factor(91))?;
    let t = Target::paper();
    Ok(CheckReport::new(
        "constants",
        json!({"mu": 1.0, "L": 200.0, "V": quad.noise.v, "V_G": quad.noise.v_g}),
        json!({}),
        json!({
            "q_grid_91": spec.q_factor(91),
            "q_closed_form_91": spec.q_factor_closed_form(91),
            "remainder_sq_91": t.benchmark().remainder_norm_sq(91),
            "remainder_91": t.benchmark().remainder_norm(91),
            "error_constants": rows,
            "agd_required_samples_91": need,
        }),
        0.0,
        true,
    )
    .with_note("descriptive; no inequality is checked"))
}

/// Runs every check on the built-in problems.
pub fn run_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let spec = BasisSpec::trigonometric(DEFAULT_NODES)?;
    let problems = builtin_problems()?;
    let coupled = problems[2].clone();
    let diag = problems[0].clone();
    let seed = opts.seed;

    type Job<'a> = Box<dyn Fn() -> Result<Vec<CheckReport>> + Send + Sync + 'a>;
    let mut jobs: Vec<Job> = Vec::new();
    for p in &problems {
        let spec = &spec;
        jobs.push(Box::new(move || Ok(vec![check_cocoercivity(p, spec, opts.pair_trials, seed)])));
        jobs.push(Box::new(move || Ok(vec![check_strong_cocoercivity(p, spec, opts.pair_trials, seed + 1)])));
    }
    jobs.push(Box::new(|| Ok(vec![check_strong_cocoercivity_equality(&diag, &spec)?])));
    jobs.push(Box::new(|| {
        Ok(vec![
            check_remainder_lemma(&diag, &spec, &[2, 4, 8, 16, 32])?,
            check_remainder_lemma(&coupled, &spec, &[2, 4, 8, 16, 32])?,
        ])
    }));
    jobs.push(Box::new(|| Ok(vec![check_gd_rate(&diag, &spec, 16, 60)?, check_gd_rate(&coupled, &spec, 16, 60)?])));
    jobs.push(Box::new(|| {
        Ok(vec![check_agd_envelope(&diag, &spec, 16, 400)?, check_agd_envelope(&coupled, &spec, 16, 200)?])
    }));
    jobs.push(Box::new(|| {
        Ok(vec![
            lmi_report("lyapunov_certified_point", &[certified_point(1.0, 200.0, 0.0)?]),
            lmi_report("lyapunov_random_points", &random_certified_points(opts.lmi_points, seed + 2)?),
        ])
    }));
    jobs.push(Box::new(|| {
        Ok(vec![check_mc_error_bound(&problems[1], &spec, 8, 100, opts.mc_repeats, seed + 3)?])
    }));
    jobs.push(Box::new(|| {
        let (mu, l) = (1.0, 200.0);
        let gamma = 2.0 / (mu + l);
        let eps = linear_phase_epsilon(mu, l, gamma, 1e-3)?;
        let denom = 1.0 - (1.0 - 2.0 * gamma * mu * l / (mu + l)).sqrt();
        let back = (2.0 * eps + eps.sqrt()) / denom;
        let n = agd_safe_iterations(mu, l, 1.0 / l, 0.0)?;
        let err = (back - 1e-3).abs();
        Ok(vec![CheckReport::new(
            "linear_phase_and_safe_iterations",
            json!({"mu": mu, "L": l, "gamma": gamma, "epsilon_target": 1e-3, "alpha": 1.0 / l}),
            json!({"forward_substitution_error_at_most": 1e-10}),
            json!({"epsilon_star": eps, "forward_value": back, "agd_safe_iterations": n}),
            1e-10 - err,
            err <= 1e-10,
        )])
    }));
    jobs.push(Box::new(|| Ok(vec![constants_report(&spec)?])));

    let results: Vec<Result<Vec<CheckReport>>> = jobs.par_iter().map(|j| j()).collect();
    let mut checks = Vec::new();
    for r in results {
        checks.extend(r?);
    }
    let passed = checks.iter().all(|c| c.passed);
    let t = Target::paper();
    let notes = vec![
        format!(
            "Q_m is the grid sup of sum B_i^2; for the trigonometric basis it equals m+1 (m even) or m+2 (m odd), e.g. Q_91 = {}; the 'paper' convention uses Q_m = m",
            spec.q_factor(91)
        ),
        "built-in quadratics are (mu/2)(x - x*)^2 + (L/2)(y - x*)^2, so the gradient is (mu(x - x*), L(y - x*))".into(),
        "the Lyapunov constant c^2 in Q_alpha = P + 2 alpha c^2 C C^T is an input; the suite uses c^2 = 0 at the certified point and c^2 = C_G at random points".into(),
        "two GD step caps are reported: 2/((mu+L) C_G) and 2/((mu+L)(1+C_G)); runs default to the smaller".into(),
        format!(
            "benchmark truncation error at m=91: ||R_91||^2 = {:.4e}, ||R_91|| = {:.4e}",
            t.benchmark().remainder_norm_sq(91),
            t.benchmark().remainder_norm(91)
        ),
    ];
    Ok(SuiteReport { passed, checks, notes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trig() -> BasisSpec {
        BasisSpec::trigonometric(DEFAULT_NODES).unwrap()
    }

    #[test]
    fn gd_prediction_examples() {
        let (f, fl) = gd_rate_prediction(1.0, 200.0, 2.0 / 201.0, 0.0, 1.0).unwrap();
        assert!((f - (199.0f64 / 201.0).powi(2)).abs() < 1e-15);
        assert!((f - 0.980199).abs() < 1e-6);
        assert_eq!(fl, 0.0);
        let (f, _) = gd_rate_prediction(3.0, 3.0, 1.0 / 3.0, 0.0, 1.0).unwrap();
        assert!(f.abs() < 1e-15);
        let (f, _) = gd_rate_prediction(1.0, 200.0, 1e-12, 0.0, 1.0).unwrap();
        assert!((1.0 - f) < 1e-9);
        let err = gd_rate_prediction(1.0, 200.0, 2.0 / 201.0, 0.1, 1.5).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn agd_prediction_examples() {
        let p = agd_rate_prediction(1.0, 200.0, 1.0 / 200.0, 0.0, 0.0);
        assert!((p.factor - 0.976430).abs() < 1e-6);
        assert!((p.constant - 4.0 * 200.0f64.powi(2) / 201.0).abs() < 1e-9);
        assert_eq!(p.floor, 0.0);
        assert!(p.certified);
        let q = agd_rate_prediction(1.0, 200.0, 1.0 / 200.0, 1.0, 2.0);
        assert!(!q.certified);
    }

    #[test]
    fn certified_lmi_point_holds() {
        let c = certified_point(1.0, 200.0, 0.0).unwrap();
        assert!(c.valid);
        assert!(c.slack >= SLACK_TOLERANCE, "{}", c.slack);
        for c in random_certified_points(20, 5).unwrap() {
            assert!(c.holds(), "{c:?}");
        }
    }

    #[test]
    fn lmi_refuses_degenerate_step() {
        assert!(lyapunov_certificate(1.0, 200.0, 0.0, 0.5, 0.9, 0.0).is_err());
        assert!(lyapunov_certificate(1.0, 200.0, 0.01, 0.5, 0.9, 0.0).is_err());
    }

    #[test]
    fn lmi_matrices_match_hand_assembly() {
        let (mu, l, a, b) = (1.0, 8.0, 0.1, 0.5);
        let c = lyapunov_certificate(mu, l, a, b, 0.7, 0.3).unwrap();
        let s = (0.5f64 / a).sqrt();
        let v = [s, (0.5f64).sqrt() - s];
        assert!((c.p[0][1] - v[0] * v[1]).abs() < 1e-15);
        assert!((c.q_alpha[0][0] - (v[0] * v[0] + 2.0 * a * 0.3 * 1.5 * 1.5)).abs() < 1e-14);
        assert_eq!(c.x1[2][2], 0.5 * a * (2.0 - l * a));
        assert_eq!(c.x2[0][0], 0.5 * 1.5 * 1.5);
        assert_eq!(c.b, [-a, 0.0]);
    }

    #[test]
    fn linear_phase_examples() {
        let g = 2.0 / 201.0;
        let e = linear_phase_epsilon(1.0, 200.0, g, 1e-3).unwrap();
        let denom = 1.0 - (1.0 - 2.0 * g * 200.0 / 201.0).sqrt();
        assert!(((2.0 * e + e.sqrt()) / denom - 1e-3).abs() < 1e-10);
        let small = linear_phase_epsilon(1.0, 200.0, g, 1e-9).unwrap();
        assert!(small < e && small < 1e-12);
        let slow = linear_phase_epsilon(1.0, 200.0, g / 100.0, 1e-3).unwrap();
        assert!(slow < e);
        assert!(linear_phase_epsilon(1.0, 200.0, g, 0.0).is_err());
    }

    #[test]
    fn safe_iterations() {
        let n = agd_safe_iterations(1.0, 200.0, 1.0 / 200.0, 0.0).unwrap();
        let rho = (1.0 - (0.005f64).sqrt() / 3.0).sqrt();
        let gamma = (4.0 * 200.0f64.powi(2) / 201.0).sqrt();
        assert_eq!(n, ((gamma.ln() - 0.9f64.ln()) / rho.ln().abs()).ceil() as u64);
        // Γ² ≥ 2 on the whole domain, so N is always positive; check minimality.
        let m = agd_safe_iterations(1.0, 1.0, 0.01, 0.0).unwrap() as i32;
        let r = (1.0 - 0.1f64 / 3.0).sqrt();
        let g = 2.0f64.sqrt();
        assert!(r.powi(m) * g < 0.9 && r.powi(m - 1) * g >= 0.9);
        assert!(agd_safe_iterations(1.0, 400.0, 1.0 / 400.0, 0.0).unwrap() > n);
    }

    #[test]
    fn equal_fields_have_zero_slack() {
        let p = make_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let u = FieldVector::zeros(2, 3);
        let terms = |i: usize| {
            pair_integral(&p, &trig(), &u, &u, |ip, gg, xx| [ip, gg, xx][i])
        };
        assert_eq!((terms(0), terms(1), terms(2)), (0.0, 0.0, 0.0));
    }

    #[test]
    fn gradient_inequalities_hold_on_builtins() {
        for p in builtin_problems().unwrap() {
            assert!(check_cocoercivity(&p, &trig(), 20, 1).passed);
            assert!(check_strong_cocoercivity(&p, &trig(), 20, 2).passed);
        }
        let p = make_quadratic(1.0, 200.0, Target::paper()).unwrap();
        assert!(check_strong_cocoercivity_equality(&p, &trig()).unwrap().passed);
    }

    #[test]
    fn remainder_lemma_diagonal_is_zero_and_coupled_within_kappa() {
        let probs = builtin_problems().unwrap();
        let r = check_remainder_lemma(&probs[0], &trig(), &[4]).unwrap();
        assert_eq!(r.measured[0]["lhs"], 0.0);
        let r = check_remainder_lemma(&probs[2], &trig(), &[8]).unwrap();
        assert!(r.passed);
        assert!(r.measured[0]["ratio"].as_f64().unwrap() <= 3.0);
    }

    #[test]
    fn gd_rate_and_agd_envelope() {
        let probs = builtin_problems().unwrap();
        assert!(check_gd_rate(&probs[0], &trig(), 16, 30).unwrap().passed);
        assert!(check_gd_rate(&probs[2], &trig(), 8, 30).unwrap().passed);
        assert!(check_agd_envelope(&probs[0], &trig(), 8, 300).unwrap().passed);
    }

    #[test]
    fn mc_bound_small() {
        let p = make_noisy_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let r = check_mc_error_bound(&p, &trig(), 8, 100, 400, 3).unwrap();
        assert!(r.passed, "{}", r.measured);
    }
}
