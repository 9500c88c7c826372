//! The truncated descent vector `D_m f`, by quadrature or by Monte Carlo,
//! and the constants of its error model.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{dot, BasisSpec, CoefficientVector, FieldVector, QConvention};
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::rng::SampleStreams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum OracleMode {
    Exact,
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub mode: OracleMode,
    /// Quadrature nodes of the exact oracle (and of derived quantities).
    pub nodes: usize,
    pub q_convention: QConvention,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            mode: OracleMode::Exact,
            nodes: crate::basis::DEFAULT_NODES,
            q_convention: QConvention::GridSup,
        }
    }
}

impl OracleConfig {
    pub fn monte_carlo(samples: usize) -> Self {
        Self {
            mode: OracleMode::MonteCarlo { samples },
            ..Self::default()
        }
    }

    pub fn samples(&self) -> Option<usize> {
        match self.mode {
            OracleMode::Exact => None,
            OracleMode::MonteCarlo { samples } => Some(samples),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let OracleMode::MonteCarlo { samples: 0 } = self.mode {
            return Err(Error::Config("oracle.samples must be at least 1".into()));
        }
        if self.nodes == 0 {
            return Err(Error::Config("oracle.nodes must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_level(u: &FieldVector, m: usize, p: &ProblemSpec) -> Result<()> {
    if u.dim() != p.dim {
        return Err(Error::InvalidArgument(format!(
            "state has {} components, problem has {}",
            u.dim(),
            p.dim
        )));
    }
    if u.level() > m {
        return Err(Error::InvalidArgument(format!(
            "state level {} exceeds truncation level {m}",
            u.level()
        )));
    }
    Ok(())
}

/// Entry `i` of component `c`: `∫ ∇f_c(x(θ), θ) B_i(θ) π(dθ)` for `i ≤ m`,
/// by `spec`'s quadrature.
pub fn exact_descent(
    p: &ProblemSpec,
    u: &FieldVector,
    m: usize,
    spec: &BasisSpec,
) -> Result<FieldVector> {
    check_level(u, m, p)?;
    let required = 2 * (m + 1);
    if spec.nodes() < required {
        return Err(Error::QuadratureTooCoarse {
            nodes: spec.nodes(),
            level: m,
            required,
        });
    }
    let mut out = vec![vec![0.0; m + 1]; p.dim];
    let mut vals = vec![0.0; m + 1];
    let mut x = vec![0.0; p.dim];
    let mut g = vec![0.0; p.dim];
    let q = spec.quadrature();
    for (&t, &w) in q.nodes.iter().zip(&q.weights) {
        spec.eval_into(t, &mut vals);
        for (xc, uc) in x.iter_mut().zip(&u.components) {
            *xc = dot(uc.as_slice(), &vals);
        }
        p.gradient(&x, t, &mut g);
        for (oc, &gc) in out.iter_mut().zip(&g) {
            let gw = gc * w;
            for (o, b) in oc.iter_mut().zip(&vals) {
                *o += gw * b;
            }
        }
    }
    Ok(FieldVector::new(
        out.into_iter().map(CoefficientVector::from_vec).collect(),
    ))
}

/// Monte Carlo estimate `(1/M) Σ_j ∇F(x(θ_j), θ_j, v_j) B_i(θ_j)` with one
/// shared sample set for every index and component.
pub fn mc_descent(
    p: &ProblemSpec,
    u: &FieldVector,
    m: usize,
    samples: usize,
    spec: &BasisSpec,
    streams: &mut SampleStreams,
) -> Result<FieldVector> {
    check_level(u, m, p)?;
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
    }
    let mut out = vec![vec![0.0; m + 1]; p.dim];
    let mut vals = vec![0.0; m + 1];
    let mut x = vec![0.0; p.dim];
    let mut g = vec![0.0; p.dim];
    for _ in 0..samples {
        let t = spec.sample_theta(&mut streams.theta);
        spec.eval_into(t, &mut vals);
        for (xc, uc) in x.iter_mut().zip(&u.components) {
            *xc = dot(uc.as_slice(), &vals);
        }
        p.stochastic_gradient(&x, t, &mut streams.noise, &mut g);
        for (oc, &gc) in out.iter_mut().zip(&g) {
            for (o, b) in oc.iter_mut().zip(&vals) {
                *o += gc * b;
            }
        }
    }
    let inv = 1.0 / samples as f64;
    Ok(FieldVector::new(
        out.into_iter()
            .map(|mut c| {
                c.iter_mut().for_each(|v| *v *= inv);
                CoefficientVector::from_vec(c)
            })
            .collect(),
    ))
}

/// Dispatches on the configured mode.
pub fn descent(
    p: &ProblemSpec,
    u: &FieldVector,
    m: usize,
    spec: &BasisSpec,
    config: &OracleConfig,
    streams: &mut SampleStreams,
) -> Result<FieldVector> {
    match config.mode {
        OracleMode::Exact => exact_descent(p, u, m, spec),
        OracleMode::MonteCarlo { samples } => mc_descent(p, u, m, samples, spec, streams),
    }
}

/// `‖∇f(x(θ), θ)‖_π²` summed over components, by quadrature.
pub fn gradient_norm_sq(p: &ProblemSpec, u: &FieldVector, spec: &BasisSpec) -> f64 {
    let mut vals = vec![0.0; u.level() + 1];
    let mut x = vec![0.0; p.dim];
    let mut g = vec![0.0; p.dim];
    let q = spec.quadrature();
    let mut acc = 0.0;
    for (&t, &w) in q.nodes.iter().zip(&q.weights) {
        spec.eval_into(t, &mut vals);
        for (xc, uc) in x.iter_mut().zip(&u.components) {
            *xc = dot(uc.as_slice(), &vals[..uc.as_slice().len()]);
        }
        p.gradient(&x, t, &mut g);
        acc += w * g.iter().map(|v| v * v).sum::<f64>();
    }
    acc
}

/// `(Q_m / M)(V_G ‖∇f‖_π² + V)`: bound on `E‖e‖₂²` at a state with the
/// given gradient norm.
pub fn mc_error_bound(p: &ProblemSpec, q: f64, samples: usize, grad_norm_sq: f64) -> f64 {
    q / samples as f64 * (p.noise.v_g * grad_norm_sq + p.noise.v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Gd,
    Agd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorConstants {
    pub c: f64,
    pub c_g: f64,
    pub variant: Variant,
    /// The `Q_m` that went in.
    pub q: f64,
}

/// `C_G` of the gradient-descent noise model: `1 + 2 V_G Q_m / M`.
pub fn multiplicative_constant_gd(v_g: f64, q: f64, samples: usize) -> f64 {
    1.0 + 2.0 * v_g * q / samples as f64
}

/// `C_G` of the accelerated noise model: `1 + 2 L² V_G Q_m / M`.
pub fn multiplicative_constant_agd(l: f64, v_g: f64, q: f64, samples: usize) -> f64 {
    1.0 + 2.0 * l * l * v_g * q / samples as f64
}

/// `(C, C_G)` at level `m` with `M` samples.
///
/// * gd:  `C = (Q/M)(2 V_G ‖∇f(x*_m)‖_π² + V)`,  `C_G = 1 + 2 V_G Q/M`
/// * agd: `C = (2Q/M)(2 V_G ‖∇f(x*_m)‖_π² + V)`, `C_G = 1 + 2 L² V_G Q/M`
///
/// The norm is the full π-norm, which includes the gradient's tail beyond
/// level `m`.
pub fn error_constants(
    p: &ProblemSpec,
    spec: &BasisSpec,
    m: usize,
    samples: usize,
    variant: Variant,
    convention: QConvention,
) -> Result<ErrorConstants> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
    }
    let q = spec.q_value(m, convention);
    let opt = p.truncated_optimum(spec, m)?;
    let g = gradient_norm_sq(p, &opt, spec);
    let v_g = p.noise.v_g;
    let base = q / samples as f64 * (2.0 * v_g * g + p.noise.v);
    Ok(match variant {
        Variant::Gd => ErrorConstants {
            c: base,
            c_g: multiplicative_constant_gd(v_g, q, samples),
            variant,
            q,
        },
        Variant::Agd => ErrorConstants {
            c: 2.0 * base,
            c_g: multiplicative_constant_agd(p.l, v_g, q, samples),
            variant,
            q,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleRequirement {
    /// `√(μ³ L) / 60`, the largest admissible accelerated `C_G`.
    pub bound: f64,
    /// Smallest `M` with `C_G(M) ≤ bound`; `None` when no `M` works.
    pub samples: Option<u64>,
    /// Set when `bound ≤ 1`: the step `1/L` is out of reach since `C_G ≥ 1`.
    pub unattainable: bool,
}

/// Smallest `M` for which `min{1/L, μ³/(60 C_G)²} = 1/L` with the
/// accelerated `C_G`.
pub fn required_samples(mu: f64, l: f64, v_g: f64, q: f64) -> Result<SampleRequirement> {
    if !(mu > 0.0) || !(l >= mu) {
        return Err(Error::InvalidArgument(format!("need 0 < mu <= L (got {mu}, {l})")));
    }
    let bound = (mu.powi(3) * l).sqrt() / 60.0;
    if bound <= 1.0 {
        return Ok(SampleRequirement {
            bound,
            samples: None,
            unattainable: true,
        });
    }
    let ok = |m: u64| multiplicative_constant_agd(l, v_g, q, m as usize) <= bound;
    let mut m = (2.0 * l * l * v_g * q / (bound - 1.0)).ceil().max(1.0) as u64;
    while !ok(m) {
        m += 1;
    }
    while m > 1 && ok(m - 1) {
        m -= 1;
    }
    Ok(SampleRequirement {
        bound,
        samples: Some(m),
        unattainable: false,
    })
}

/// `(μ_m, L_m)` for an opaque objective: power iteration on
/// finite-difference Hessian-vector products of the exact descent vector.
pub fn estimate_level_constants(p: &ProblemSpec, spec: &BasisSpec, m: usize) -> Result<(f64, f64)> {
    let n = p.dim * (m + 1);
    let base = FieldVector::zeros(p.dim, m);
    let d0 = flatten(&exact_descent(p, &base, m, spec)?);
    let h = 1e-6;
    let hess = |v: &[f64]| -> Result<Vec<f64>> {
        let mut probe = base.clone();
        unflatten_into(v, h, &mut probe);
        let d = flatten(&exact_descent(p, &probe, m, spec)?);
        Ok(d.iter().zip(&d0).map(|(a, b)| (a - b) / h).collect())
    };
    let power = |shift: f64| -> Result<f64> {
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i as f64).sin()).collect();
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let hv = hess(&v)?;
            // shift·I − H when hunting the bottom of the spectrum
            let mut w: Vec<f64> = if shift == 0.0 {
                hv
            } else {
                hv.iter().zip(&v).map(|(a, b)| shift * b - a).collect()
            };
            let next = dot(&w, &v);
            normalize(&mut w);
            let done = (next - lambda).abs() <= 1e-10 * next.abs().max(1.0);
            lambda = next;
            v = w;
            if done {
                break;
            }
        }
        Ok(lambda)
    };
    let l_m = power(0.0)?;
    let mu_m = l_m - power(l_m)?;
    Ok((mu_m, l_m))
}

fn flatten(u: &FieldVector) -> Vec<f64> {
    u.components.iter().flat_map(|c| c.as_slice().iter().copied()).collect()
}

fn unflatten_into(v: &[f64], scale: f64, u: &mut FieldVector) {
    let mut it = v.iter();
    for c in &mut u.components {
        for x in c.as_mut_slice() {
            *x += scale * it.next().copied().unwrap_or(0.0);
        }
    }
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Variant::Gd),
            "agd" => Ok(Variant::Agd),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Family, DEFAULT_NODES};
    use crate::problem::{
        make_coupled_quadratic, make_noisy_quadratic, make_quadratic, Coupling, GradientFn,
        NoiseModel, Target,
    };
    use std::sync::Arc;

    fn trig() -> BasisSpec {
        BasisSpec::trigonometric(DEFAULT_NODES).unwrap()
    }

    #[test]
    fn exact_descent_vanishes_at_diagonal_truncated_optimum() {
        let p = make_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let spec = trig();
        let um = p.truncated_optimum(&spec, 12).unwrap();
        let d = exact_descent(&p, &um, 12, &spec).unwrap();
        assert!(d.norm() < 1e-12, "{}", d.norm());
    }

    #[test]
    fn exact_descent_is_linear_in_the_offset() {
        // mu = 1: D_x = u - P_m u*; L = 200: D_y = 200 (u - P_m u*)
        let p = make_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let spec = trig();
        let m = 6;
        let um = p.truncated_optimum(&spec, m).unwrap();
        let mut u = FieldVector::zeros(2, m);
        for (c, comp) in u.components.iter_mut().enumerate() {
            for (i, v) in comp.as_mut_slice().iter_mut().enumerate() {
                *v = 0.1 * (i as f64 + 1.0) * if c == 0 { 1.0 } else { -1.0 };
            }
        }
        let d = exact_descent(&p, &u, m, &spec).unwrap();
        for i in 0..=m {
            let dx = u.components[0].get(i) - um.components[0].get(i);
            let dy = u.components[1].get(i) - um.components[1].get(i);
            assert!((d.components[0].get(i) - dx).abs() < 1e-12);
            assert!((d.components[1].get(i) - 200.0 * dy).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_descent_vanishes_at_coupled_truncated_optimum() {
        let p = make_coupled_quadratic(Coupling::sinusoidal(1.0, 0.5).unwrap(), Target::paper()).unwrap();
        let spec = trig();
        let um = p.truncated_optimum(&spec, 4).unwrap();
        let d = exact_descent(&p, &um, 4, &spec).unwrap();
        assert!(d.norm() < 1e-10);
    }

    #[test]
    fn exact_descent_checks_arguments() {
        let p = make_quadratic(1.0, 2.0, Target::paper()).unwrap();
        let spec = BasisSpec::trigonometric(8).unwrap();
        assert!(exact_descent(&p, &FieldVector::zeros(2, 5), 4, &spec).is_err());
        assert!(exact_descent(&p, &FieldVector::zeros(1, 2), 2, &spec).is_err());
        assert!(matches!(
            exact_descent(&p, &FieldVector::zeros(2, 4), 4, &spec),
            Err(Error::QuadratureTooCoarse { .. })
        ));
    }

    #[test]
    fn mc_descent_is_deterministic_per_stream() {
        let p = make_noisy_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let spec = trig();
        let u = FieldVector::zeros(2, 8);
        let a = mc_descent(&p, &u, 8, 50, &spec, &mut SampleStreams::new(3, 1)).unwrap();
        let b = mc_descent(&p, &u, 8, 50, &spec, &mut SampleStreams::new(3, 1)).unwrap();
        let c = mc_descent(&p, &u, 8, 50, &spec, &mut SampleStreams::new(3, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mc_descent_is_unbiased() {
        let p = make_noisy_quadratic(1.0, 5.0, Target::paper()).unwrap();
        let spec = trig();
        let m = 4;
        let mut u = FieldVector::zeros(2, m);
        u.components[0].as_mut_slice()[1] = 0.3;
        u.components[1].as_mut_slice()[2] = -0.2;
        let exact = exact_descent(&p, &u, m, &spec).unwrap();
        let n = 10_000;
        let mut streams = SampleStreams::new(5, 0);
        let mut sum = vec![vec![0.0; m + 1]; 2];
        let mut sumsq = vec![vec![0.0; m + 1]; 2];
        for _ in 0..n {
            let d = mc_descent(&p, &u, m, 20, &spec, &mut streams).unwrap();
            for c in 0..2 {
                for i in 0..=m {
                    let v = d.components[c].get(i);
                    sum[c][i] += v;
                    sumsq[c][i] += v * v;
                }
            }
        }
        for c in 0..2 {
            for i in 0..=m {
                let mean = sum[c][i] / n as f64;
                let var = sumsq[c][i] / n as f64 - mean * mean;
                let se = (var / n as f64).sqrt();
                let dev = (mean - exact.components[c].get(i)).abs();
                assert!(dev <= 4.0 * se, "c={c} i={i}: dev {dev} se {se}");
            }
        }
    }

    #[test]
    fn error_constants_examples() {
        // Finite-support target inside level m: ∇f(x*_m) ≡ 0, so C = Q V / M.
        let coeffs = crate::basis::CoefficientVector::from_vec(vec![0.2, 0.1, -0.3]);
        let t = Target::from_coefficients(Family::Trigonometric, coeffs).unwrap();
        let p = make_noisy_quadratic(1.0, 200.0, t).unwrap();
        let spec = trig();
        let ec = error_constants(&p, &spec, 8, 100, Variant::Gd, QConvention::GridSup).unwrap();
        assert!((ec.c - ec.q * (1.0 / 3.0) / 100.0).abs() < 1e-12);
        assert!((ec.q - 9.0).abs() < 1e-9);

        // Worked example with Q_91 = 91, M = 250, V_G = 1.
        let pq = make_quadratic(1.0, 200.0, Target::paper()).unwrap();
        let ec = error_constants(&pq, &spec, 91, 250, Variant::Gd, QConvention::Paper).unwrap();
        assert!((ec.c_g - 1.728).abs() < 1e-12);

        // M → ∞
        let ec = error_constants(&pq, &spec, 10, usize::MAX / 4, Variant::Gd, QConvention::GridSup).unwrap();
        assert!(ec.c < 1e-15 && (ec.c_g - 1.0).abs() < 1e-15);

        let gd = error_constants(&p, &spec, 8, 100, Variant::Gd, QConvention::GridSup).unwrap();
        let agd = error_constants(&p, &spec, 8, 100, Variant::Agd, QConvention::GridSup).unwrap();
        assert!((agd.c - 2.0 * gd.c).abs() < 1e-15);
        assert!(((agd.c_g - 1.0) - 200.0f64.powi(2) * (gd.c_g - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn required_samples_examples() {
        let r = required_samples(1.0, 200.0, 1.0, 9.0).unwrap();
        assert!(r.unattainable && r.samples.is_none());
        assert!((r.bound - 0.235_702).abs() < 1e-6);

        let q = 17.0;
        let r = required_samples(4.0, 400.0, 1.0, q).unwrap();
        assert!((r.bound - 160.0 / 60.0).abs() < 1e-12);
        let m = r.samples.unwrap();
        let cg = |m: u64| 1.0 + 2.0 * 400.0f64.powi(2) * q / m as f64;
        assert!(cg(m) <= r.bound && cg(m - 1) > r.bound);
        // closed-form rearrangement: M = ceil(2 L² V_G Q / (bound - 1))
        assert_eq!(m, (2.0 * 160_000.0 * q / (160.0 / 60.0 - 1.0)).ceil() as u64);
    }

    #[test]
    fn power_iteration_recovers_curvatures() {
        let grad: GradientFn = Arc::new(|x, t, out| {
            out[0] = 2.0 * (x[0] - t.sin());
            out[1] = 7.0 * x[1];
        });
        let p = crate::problem::ProblemSpec::custom("c", 2, grad, 2.0, 7.0, NoiseModel::DETERMINISTIC, None)
            .unwrap();
        let (lo, hi) = estimate_level_constants(&p, &BasisSpec::trigonometric(32).unwrap(), 3).unwrap();
        assert!((lo - 2.0).abs() < 1e-5 && (hi - 7.0).abs() < 1e-5, "{lo} {hi}");
    }
}
