//! Quadrature rules normalized to a probability measure (weights sum to one).

use std::f64::consts::PI;

/// Node/weight list. Weights integrate against the uniform probability
/// measure of the owning domain, so `Σ w_j = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Composite trapezoid on the periodic interval `[-π, π)`. Exact for
    /// trigonometric polynomials of degree below `n`.
    pub fn periodic_trapezoid(n: usize) -> Self {
        let h = 2.0 * PI / n as f64;
        let nodes = (0..n).map(|j| -PI + h * j as f64).collect();
        let weights = vec![1.0 / n as f64; n];
        Self { nodes, weights }
    }

    /// Gauss–Legendre rule on `[-1, 1]` with weights halved, i.e. against
    /// the uniform probability density. Exact for polynomials of degree
    /// `2n - 1`.
    pub fn gauss_legendre(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// `Σ w_j f(θ_j)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for n in [1, 2, 7, 64, 513] {
            let g = Quadrature::gauss_legendre(n);
            assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13, "n={n}");
            let t = Quadrature::periodic_trapezoid(n);
            assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gauss_legendre_exact_for_degree_2n_minus_1() {
        let g = Quadrature::gauss_legendre(5);
        // mean of x^8 over uniform [-1,1] is 1/9
        assert!((g.integrate(|x| x.powi(8)) - 1.0 / 9.0).abs() < 1e-14);
        assert!(g.integrate(|x| x.powi(9)).abs() < 1e-14);
    }

    #[test]
    fn three_point_rule_matches_tabulated() {
        let g = Quadrature::gauss_legendre(3);
        let r = (0.6f64).sqrt();
        assert!((g.nodes[0] + r).abs() < 1e-15);
        assert!(g.nodes[1].abs() < 1e-15);
        assert!((g.weights[0] - 5.0 / 18.0).abs() < 1e-15);
        assert!((g.weights[1] - 8.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_exact_for_trig_polynomials() {
        let t = Quadrature::periodic_trapezoid(16);
        assert!((t.integrate(|x| (3.0 * x).cos().powi(2)) - 0.5).abs() < 1e-15);
        assert!(t.integrate(|x| (7.0 * x).sin()).abs() < 1e-15);
    }
}
