//! Orthonormal families on a one-dimensional parameter domain and the
//! coefficient ↔ function isomorphism.
//!
//! Two families are provided:
//!
//! * **Trigonometric** on `[-π, π]`: index 0 is the constant 1, index
//!   `2k-1` is `√2 sin(kθ)`, index `2k` is `√2 cos(kθ)`.
//! * **Legendre** on `[-1, 1]`: index `k` is `√(2k+1) P_k(θ)`.
//!
//! Both are orthonormal against the uniform probability measure of their
//! domain. A coefficient vector of level `m` holds entries `0..=m`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Quadrature;

/// Default quadrature node count.
pub const DEFAULT_NODES: usize = 1024;
/// Node count of the high-accuracy benchmark integration.
pub const BENCHMARK_NODES: usize = 1 << 17;
/// Grid size used for the definitional `Q_m = sup_θ Σ B_i(θ)²`.
pub const Q_GRID_POINTS: usize = (1 << 14) + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Trigonometric,
    Legendre,
}

impl Family {
    pub fn domain(self) -> (f64, f64) {
        match self {
            Family::Trigonometric => (-PI, PI),
            Family::Legendre => (-1.0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Trigonometric => "trigonometric",
            Family::Legendre => "legendre",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trigonometric" | "trig" | "fourier" => Ok(Family::Trigonometric),
            "legendre" => Ok(Family::Legendre),
            other => Err(Error::Config(format!("unknown basis family `{other}`"))),
        }
    }
}

/// Which value of `Q_m` feeds the Monte Carlo error constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QConvention {
    /// `sup_θ Σ_{i≤m} B_i(θ)²` over a dense grid.
    #[default]
    GridSup,
    /// `Q_m = m`, the value used in the worked `C_G = 1.728` example.
    Paper,
}

impl fmt::Display for QConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QConvention::GridSup => "grid",
            QConvention::Paper => "paper",
        })
    }
}

impl FromStr for QConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" | "grid_sup" | "sup" => Ok(QConvention::GridSup),
            "paper" => Ok(QConvention::Paper),
            other => Err(Error::Config(format!("unknown Q convention `{other}`"))),
        }
    }
}

/// An orthonormal family together with its quadrature rule.
#[derive(Debug, Clone)]
pub struct BasisSpec {
    family: Family,
    quadrature: Arc<Quadrature>,
}

impl BasisSpec {
    pub fn new(family: Family, nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
        }
        let quadrature = match family {
            Family::Trigonometric => Quadrature::periodic_trapezoid(nodes),
            Family::Legendre => Quadrature::gauss_legendre(nodes),
        };
        Ok(Self {
            family,
            quadrature: Arc::new(quadrature),
        })
    }

    pub fn trigonometric(nodes: usize) -> Result<Self> {
        Self::new(Family::Trigonometric, nodes)
    }

    pub fn legendre(nodes: usize) -> Result<Self> {
        Self::new(Family::Legendre, nodes)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn domain(&self) -> (f64, f64) {
        self.family.domain()
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    pub fn nodes(&self) -> usize {
        self.quadrature.len()
    }

    /// Same family, different node count.
    pub fn with_nodes(&self, nodes: usize) -> Result<Self> {
        Self::new(self.family, nodes)
    }

    pub fn check_domain(&self, theta: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        // NaN fails both comparisons and is rejected too.
        if theta >= lo && theta <= hi {
            Ok(())
        } else {
            Err(Error::Domain { value: theta, lo, hi })
        }
    }

    /// `B_i(θ)`.
    pub fn evaluate(&self, i: usize, theta: f64) -> Result<f64> {
        self.check_domain(theta)?;
        Ok(match self.family {
            Family::Trigonometric => {
                if i == 0 {
                    1.0
                } else {
                    let k = i.div_ceil(2) as f64;
                    if i % 2 == 1 {
                        SQRT_2 * (k * theta).sin()
                    } else {
                        SQRT_2 * (k * theta).cos()
                    }
                }
            }
            Family::Legendre => {
                let mut out = vec![0.0; i + 1];
                legendre_values(theta, &mut out);
                out[i]
            }
        })
    }

    /// Fills `out[i] = B_i(θ)` for `i < out.len()`. No domain check; this is
    /// the hot path of every oracle.
    pub fn eval_into(&self, theta: f64, out: &mut [f64]) {
        match self.family {
            Family::Trigonometric => trig_values(theta, out),
            Family::Legendre => legendre_values(theta, out),
        }
    }

    /// Draws `θ ~ π` by inverse CDF of the uniform density.
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.domain();
        lo + (hi - lo) * rng.random::<f64>()
    }

    /// `Q_m = sup_θ Σ_{i≤m} B_i(θ)²`, with the sup taken over a grid of
    /// [`Q_GRID_POINTS`] equispaced points.
    pub fn q_factor(&self, m: usize) -> f64 {
        *self.q_table(m).last().expect("non-empty table")
    }

    /// Grid-sup `Q_0..=Q_max` in a single sweep.
    pub fn q_table(&self, max_level: usize) -> Vec<f64> {
        let (lo, hi) = self.domain();
        let mut sup = vec![0.0f64; max_level + 1];
        let mut vals = vec![0.0; max_level + 1];
        let h = (hi - lo) / (Q_GRID_POINTS - 1) as f64;
        for j in 0..Q_GRID_POINTS {
            let theta = lo + h * j as f64;
            self.eval_into(theta, &mut vals);
            let mut acc = 0.0;
            for (s, v) in sup.iter_mut().zip(&vals) {
                acc += v * v;
                if acc > *s {
                    *s = acc;
                }
            }
        }
        // Sums are monotone in m pointwise, so the sups are too; the fold
        // guards against rounding in the last bit.
        for i in 1..sup.len() {
            sup[i] = sup[i].max(sup[i - 1]);
        }
        sup
    }

    /// Exact `Q_m` where known in closed form: for the trigonometric family
    /// it is `m + 1` for even `m` and `m + 2` for odd `m`; for Legendre it is
    /// attained at the endpoints, `Σ (2i+1) = (m+1)²`.
    pub fn q_factor_closed_form(&self, m: usize) -> f64 {
        match self.family {
            Family::Trigonometric => {
                if m % 2 == 0 {
                    (m + 1) as f64
                } else {
                    (m + 2) as f64
                }
            }
            Family::Legendre => ((m + 1) * (m + 1)) as f64,
        }
    }

    pub fn q_value(&self, m: usize, convention: QConvention) -> f64 {
        match convention {
            QConvention::GridSup => self.q_factor(m),
            QConvention::Paper => (m as f64).max(1.0),
        }
    }

    /// `u_i = ∫ f B_i dπ` for `i ≤ m` by this spec's quadrature.
    pub fn analyze(&self, f: impl Fn(f64) -> f64, m: usize) -> Result<CoefficientVector> {
        let required = 2 * (m + 1);
        if self.nodes() < required {
            return Err(Error::QuadratureTooCoarse {
                nodes: self.nodes(),
                level: m,
                required,
            });
        }
        let q = &self.quadrature;
        let mut coeffs = vec![0.0; m + 1];
        let mut vals = vec![0.0; m + 1];
        for (&t, &w) in q.nodes.iter().zip(&q.weights) {
            let fw = f(t) * w;
            self.eval_into(t, &mut vals);
            for (c, b) in coeffs.iter_mut().zip(&vals) {
                *c += fw * b;
            }
        }
        Ok(CoefficientVector { coeffs })
    }

    /// `Σ_{i≤level} u_i B_i(θ)`.
    pub fn synthesize_scalar(&self, u: &CoefficientVector, theta: f64) -> Result<f64> {
        self.check_domain(theta)?;
        let mut vals = vec![0.0; u.coeffs.len()];
        self.eval_into(theta, &mut vals);
        Ok(dot(&u.coeffs, &vals))
    }

    /// Per component, `Σ_{i≤level} u_i B_i(θ)`.
    pub fn synthesize(&self, u: &FieldVector, theta: f64) -> Result<Vec<f64>> {
        self.check_domain(theta)?;
        let mut vals = vec![0.0; u.level() + 1];
        self.eval_into(theta, &mut vals);
        Ok(u
            .components
            .iter()
            .map(|c| dot(&c.coeffs, &vals[..c.coeffs.len()]))
            .collect())
    }

    /// π-inner product of two scalar functions by quadrature.
    pub fn inner(&self, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
        self.quadrature.integrate(|t| f(t) * g(t))
    }
}

fn trig_values(theta: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    out[0] = 1.0;
    if n == 1 {
        return;
    }
    let (s1, c1) = theta.sin_cos();
    let (mut s, mut c) = (s1, c1);
    let mut k = 1;
    loop {
        let i = 2 * k - 1;
        if i >= n {
            break;
        }
        out[i] = SQRT_2 * s;
        if i + 1 < n {
            out[i + 1] = SQRT_2 * c;
        }
        k += 1;
        // Periodically reseed the angle-addition recurrence to cap drift.
        if k % 32 == 0 {
            let (sk, ck) = (k as f64 * theta).sin_cos();
            s = sk;
            c = ck;
        } else {
            let sn = s * c1 + c * s1;
            c = c * c1 - s * s1;
            s = sn;
        }
    }
}

fn legendre_values(x: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    let mut p0 = 1.0;
    out[0] = 1.0;
    if n == 1 {
        return;
    }
    let mut p1 = x;
    out[1] = 3f64.sqrt() * x;
    for k in 2..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        out[k] = (2.0 * kf + 1.0).sqrt() * p2;
        p0 = p1;
        p1 = p2;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A finite-support element of `l²`: entries `0..=level`, zero beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    coeffs: Vec<f64>,
}

impl CoefficientVector {
    pub fn zeros(level: usize) -> Self {
        Self {
            coeffs: vec![0.0; level + 1],
        }
    }

    /// An empty input is read as the zero vector of level 0.
    pub fn from_vec(mut coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn unit(index: usize) -> Self {
        let mut v = Self::zeros(index);
        v.coeffs[index] = 1.0;
        v
    }

    pub fn level(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    /// Entry `i`, zero above the level.
    pub fn get(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.coeffs, &self.coeffs)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `P_m u`: entries above `m` dropped, level `min(m, level)`.
    pub fn project(&self, m: usize) -> Self {
        let keep = (m + 1).min(self.coeffs.len());
        Self {
            coeffs: self.coeffs[..keep].to_vec(),
        }
    }

    /// `‖(Id − P_m) u‖₂`.
    pub fn remainder_norm(&self, m: usize) -> f64 {
        self.remainder_norm_sq(m).sqrt()
    }

    pub fn remainder_norm_sq(&self, m: usize) -> f64 {
        self.coeffs.iter().skip(m + 1).map(|c| c * c).sum()
    }

    /// Grows (zero-filling) or truncates to exactly `level`.
    pub fn resize(&mut self, level: usize) {
        self.coeffs.resize(level + 1, 0.0);
    }

    /// `Σ_i (u_i - v_i)²` over the union of supports.
    pub fn distance_sq(&self, other: &Self) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n).map(|i| (self.get(i) - other.get(i)).powi(2)).sum()
    }
}

/// One coefficient vector per output component of `x(θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldVector {
    pub components: Vec<CoefficientVector>,
}

impl FieldVector {
    pub fn zeros(dim: usize, level: usize) -> Self {
        Self {
            components: vec![CoefficientVector::zeros(level); dim],
        }
    }

    pub fn new(components: Vec<CoefficientVector>) -> Self {
        Self { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Highest level among the components.
    pub fn level(&self) -> usize {
        self.components.iter().map(|c| c.level()).max().unwrap_or(0)
    }

    /// `Σ_c ‖u_c‖₂²`.
    pub fn norm_sq(&self) -> f64 {
        self.components.iter().map(|c| c.norm_sq()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn project(&self, m: usize) -> Self {
        Self {
            components: self.components.iter().map(|c| c.project(m)).collect(),
        }
    }

    pub fn remainder_norm_sq(&self, m: usize) -> f64 {
        self.components.iter().map(|c| c.remainder_norm_sq(m)).sum()
    }

    pub fn resize(&mut self, level: usize) {
        for c in &mut self.components {
            c.resize(level);
        }
    }

    pub fn distance_sq(&self, other: &Self) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.distance_sq(b))
            .sum()
    }
}

/// High-accuracy coefficients of a known function plus its π-norm, so that
/// remainders beyond the stored level stay exact up to quadrature error.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub family: Family,
    pub nodes: usize,
    pub coeffs: CoefficientVector,
    /// `‖x‖_π²` by the same quadrature.
    pub norm_sq: f64,
}

impl Benchmark {
    pub fn compute(
        family: Family,
        f: impl Fn(f64) -> f64,
        level: usize,
        nodes: usize,
    ) -> Result<Self> {
        let spec = BasisSpec::new(family, nodes)?;
        let coeffs = spec.analyze(&f, level)?;
        let norm_sq = spec.quadrature().integrate(|t| f(t).powi(2));
        Ok(Self {
            family,
            nodes,
            coeffs,
            norm_sq,
        })
    }

    pub fn level(&self) -> usize {
        self.coeffs.level()
    }

    /// `‖R_m‖₂² = ‖x‖_π² − Σ_{i≤m} u_i²`, clamped at zero.
    pub fn remainder_norm_sq(&self, m: usize) -> f64 {
        let head: f64 = self.coeffs.as_slice().iter().take(m + 1).map(|c| c * c).sum();
        (self.norm_sq - head).max(0.0)
    }

    pub fn remainder_norm(&self, m: usize) -> f64 {
        self.remainder_norm_sq(m).sqrt()
    }

    /// CSV `index,coefficient` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,coefficient")?;
        for (i, c) in self.coeffs.as_slice().iter().enumerate() {
            writeln!(w, "{i},{c:.16e}")?;
        }
        Ok(())
    }
}

/// Reads an `index,coefficient` table.
pub fn read_coefficients_csv<R: BufRead>(r: R) -> Result<CoefficientVector> {
    let mut coeffs = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let (idx, val) = line
            .split_once(',')
            .ok_or_else(|| Error::Io(format!("line {}: expected `index,coefficient`", lineno + 1)))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::Io(format!("line {}: bad index", lineno + 1)))?;
        let val: f64 = val
            .trim()
            .parse()
            .map_err(|_| Error::Io(format!("line {}: bad coefficient", lineno + 1)))?;
        if idx != coeffs.len() {
            return Err(Error::Io(format!("line {}: index {idx} out of order", lineno + 1)));
        }
        coeffs.push(val);
    }
    Ok(CoefficientVector::from_vec(coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trig() -> BasisSpec {
        BasisSpec::trigonometric(DEFAULT_NODES).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let t = trig();
        assert_eq!(t.evaluate(0, 1.3).unwrap(), 1.0);
        assert!((t.evaluate(2, 0.0).unwrap() - std::f64::consts::SQRT_2).abs() < 1e-15);
        let l = BasisSpec::legendre(64).unwrap();
        assert!((l.evaluate(1, 0.5).unwrap() - 0.866_025_4).abs() < 1e-7);
    }

    #[test]
    fn evaluate_rejects_out_of_domain() {
        assert!(matches!(trig().evaluate(0, 4.0), Err(Error::Domain { .. })));
        let l = BasisSpec::legendre(8).unwrap();
        assert!(l.evaluate(2, -1.5).is_err());
        assert!(l.evaluate(2, f64::NAN).is_err());
    }

    #[test]
    fn recurrence_matches_direct_evaluation() {
        let t = trig();
        let mut vals = vec![0.0; 200];
        for &theta in &[-PI, -2.1, 0.3, 1.7, PI] {
            t.eval_into(theta, &mut vals);
            for (i, v) in vals.iter().enumerate() {
                assert!((v - t.evaluate(i, theta).unwrap()).abs() < 1e-12, "i={i}");
            }
        }
    }

    #[test]
    fn synthesize_examples() {
        let t = trig();
        let zero = FieldVector::zeros(2, 5);
        assert_eq!(t.synthesize(&zero, 0.4).unwrap(), vec![0.0, 0.0]);
        let e0 = FieldVector::new(vec![CoefficientVector::unit(0)]);
        assert_eq!(t.synthesize(&e0, 2.0).unwrap(), vec![1.0]);
        let u = FieldVector::new(vec![CoefficientVector::from_vec(vec![0.0, 1.0, 0.0])]);
        assert!((t.synthesize(&u, PI / 2.0).unwrap()[0] - SQRT_2).abs() < 1e-15);
        assert!(t.synthesize(&u, 3.5).is_err());
    }

    #[test]
    fn project_examples() {
        let u = CoefficientVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(u.project(u.level()), u);
        assert_eq!(u.project(1).project(1), u.project(1));
        let p = u.project(1);
        assert_eq!(p.as_slice(), &[1.0, 2.0]);
        assert_eq!(p.level(), 1);
        assert_eq!(u.project(10).level(), 2);
    }

    #[test]
    fn remainder_examples() {
        let u = CoefficientVector::from_vec(vec![3.0, 4.0, 0.0]);
        assert_eq!(u.remainder_norm(u.level()), 0.0);
        assert_eq!(u.remainder_norm(0), 4.0);
    }

    #[test]
    fn q_factor_examples() {
        let t = trig();
        assert!((t.q_factor(0) - 1.0).abs() < 1e-14);
        assert!((t.q_factor(2) - 3.0).abs() < 1e-12);
        let q91 = t.q_factor(91);
        assert!((q91 - 93.0).abs() < 1e-3, "grid sup Q_91 = {q91}");
        assert_eq!(t.q_factor_closed_form(91), 93.0);
        assert_eq!(t.q_value(91, QConvention::Paper), 91.0);
    }

    #[test]
    fn q_factor_legendre_peaks_at_endpoints() {
        let l = BasisSpec::legendre(64).unwrap();
        for m in [0, 1, 5, 12] {
            assert!((l.q_factor(m) - l.q_factor_closed_form(m)).abs() < 1e-9 * l.q_factor(m));
        }
    }

    #[test]
    fn q_table_is_nondecreasing() {
        for spec in [trig(), BasisSpec::legendre(64).unwrap()] {
            let q = spec.q_table(40);
            assert!(q.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn analyze_examples() {
        let t = trig();
        let e3 = t.analyze(|x| t.evaluate(3, x).unwrap(), 8).unwrap();
        for i in 0..=8 {
            let want = if i == 3 { 1.0 } else { 0.0 };
            assert!((e3.get(i) - want).abs() < 1e-10);
        }
        let one = t.analyze(|_| 1.0, 4).unwrap();
        assert!((one.get(0) - 1.0).abs() < 1e-14);
        assert!(one.remainder_norm(0) < 1e-14);
    }

    #[test]
    fn analyze_refuses_aliasing() {
        let t = BasisSpec::trigonometric(16).unwrap();
        assert!(t.analyze(|_| 1.0, 7).is_ok());
        assert!(matches!(
            t.analyze(|_| 1.0, 8),
            Err(Error::QuadratureTooCoarse { required: 18, .. })
        ));
    }

    #[test]
    fn gram_matrix_is_identity() {
        for spec in [
            BasisSpec::trigonometric(512).unwrap(),
            BasisSpec::legendre(512).unwrap(),
        ] {
            let q = spec.quadrature();
            let mut rows = vec![vec![0.0; 65]; q.len()];
            for (j, &t) in q.nodes.iter().enumerate() {
                spec.eval_into(t, &mut rows[j]);
            }
            for a in 0..=64 {
                for b in 0..=64 {
                    let g: f64 = rows
                        .iter()
                        .zip(&q.weights)
                        .map(|(r, w)| w * r[a] * r[b])
                        .sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-10, "{} G[{a},{b}]={g}", spec.family());
                }
            }
        }
    }

    #[test]
    fn benchmark_csv_round_trip() {
        let b = Benchmark::compute(Family::Trigonometric, |t| (2.0 * t).cos() + 0.25, 6, 64).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let back = read_coefficients_csv(&buf[..]).unwrap();
        assert_eq!(back, b.coeffs);
        assert!(b.remainder_norm_sq(4).abs() < 1e-14);
        assert!((b.norm_sq - (0.0625 + 0.5)).abs() < 1e-14);
    }

    fn coeff_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-2.0f64..2.0, 1..=33)
    }

    proptest! {
        #[test]
        fn parseval_and_round_trip(c in coeff_strategy(), legendre in any::<bool>()) {
            let spec = if legendre {
                BasisSpec::legendre(256).unwrap()
            } else {
                BasisSpec::trigonometric(256).unwrap()
            };
            let u = CoefficientVector::from_vec(c);
            let f = |t: f64| spec.synthesize_scalar(&u, t).unwrap();
            let energy = spec.quadrature().integrate(|t| f(t).powi(2));
            prop_assert!((energy - u.norm_sq()).abs() <= 1e-8);
            let back = spec.analyze(f, u.level()).unwrap();
            prop_assert!(back.distance_sq(&u).sqrt() <= 1e-8);
        }

        #[test]
        fn pythagoras(c in coeff_strategy(), m in 0usize..40) {
            let u = CoefficientVector::from_vec(c);
            let lhs = u.norm_sq();
            let rhs = u.project(m).norm_sq() + u.remainder_norm(m).powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
        }
    }
}
