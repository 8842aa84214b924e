//! Gauss rules, adaptive Gauss–Legendre and polynomial extrapolation.

use std::collections::HashMap;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Nodes and weights of a quadrature rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Values that can be integrated: a vector space with a size measure.
pub trait Integrand:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn magnitude(&self) -> f64;
}

impl Integrand for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl Integrand for Vector3<f64> {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl Integrand for DVector<f64> {
    fn magnitude(&self) -> f64 {
        self.amax()
    }
}

fn legendre_rule(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        // recompute derivative at the converged node
        let (mut p0, mut p1) = (1.0, x);
        for j in 2..=n {
            let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
            p0 = p1;
            p1 = p2;
        }
        if n > 1 {
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        nodes[0] = 0.0;
        weights[0] = 2.0;
    }
    Rule { nodes, weights }
}

/// Golub–Welsch for the weight e^{-x²}, nodes polished by Newton on the
/// Hermite function h_n and weights from the Christoffel sum.
fn hermite_rule(n: usize) -> Rule {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jac[(i, i - 1)] = b;
        jac[(i - 1, i)] = b;
    }
    let eig = jac.symmetric_eigen();
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let h = crate::hermite::functions(*x, n);
            // h_n' = √(2n) h_{n-1} − x h_n
            let dh = (2.0 * n as f64).sqrt() * h[n - 1] - *x * h[n];
            if dh != 0.0 {
                *x -= h[n] / dh;
            }
        }
        let h = crate::hermite::functions(*x, n - 1);
        let christoffel: f64 = h.iter().map(|v| v * v).sum();
        weights.push((-*x * *x).exp() / christoffel);
    }
    Rule { nodes, weights }
}

type Cache = Mutex<HashMap<(u8, usize), Arc<Rule>>>;

fn cached(kind: u8, n: usize, build: fn(usize) -> Rule) -> Arc<Rule> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry((kind, n))
        .or_insert_with(|| Arc::new(build(n)))
        .clone()
}

/// n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    assert!(n > 0, "rule needs at least one node");
    cached(0, n, legendre_rule)
}

/// n-point Gauss–Hermite rule for ∫ e^{-x²} f(x) dx.
pub fn gauss_hermite(n: usize) -> Arc<Rule> {
    assert!(n > 0, "rule needs at least one node");
    cached(1, n, hermite_rule)
}

/// Fixed-order Gauss–Legendre on [a, b].
pub fn fixed<T: Integrand>(f: &impl Fn(f64) -> T, a: f64, b: f64, n: usize) -> T {
    let rule = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let mut acc = f(mid + half * rule.nodes[0]) * (rule.weights[0] * half);
    for (x, w) in rule.nodes.iter().zip(&rule.weights).skip(1) {
        acc = acc + f(mid + half * x) * (w * half);
    }
    acc
}

/// Tolerances for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_depth: u32,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-10,
            abs: 1e-12,
            max_depth: 30,
        }
    }
}

/// Adaptive Gauss–Legendre: 10- vs 20-point estimates with bisection.
pub fn adaptive<T: Integrand>(f: &impl Fn(f64) -> T, a: f64, b: f64, tol: Tolerance) -> Result<T> {
    let coarse = fixed(f, a, b, 10);
    let fine = fixed(f, a, b, 20);
    let scale = fine.magnitude();
    recurse(f, a, b, coarse, fine, scale, tol, 0)
}

#[allow(clippy::too_many_arguments)]
fn recurse<T: Integrand>(
    f: &impl Fn(f64) -> T,
    a: f64,
    b: f64,
    coarse: T,
    fine: T,
    scale: f64,
    tol: Tolerance,
    depth: u32,
) -> Result<T> {
    let err = (fine.clone() - coarse).magnitude();
    if err <= (tol.rel * scale).max(tol.abs) {
        return Ok(fine);
    }
    if depth >= tol.max_depth {
        return Err(Error::Budget(format!(
            "adaptive quadrature on [{a}, {b}] stalled at error {err:.3e}"
        )));
    }
    let m = 0.5 * (a + b);
    let lc = fixed(f, a, m, 10);
    let lf = fixed(f, a, m, 20);
    let rc = fixed(f, m, b, 10);
    let rf = fixed(f, m, b, 20);
    let scale = scale.max((lf.clone() + rf.clone()).magnitude());
    let left = recurse(f, a, m, lc, lf, scale, tol, depth + 1)?;
    let right = recurse(f, m, b, rc, rf, scale, tol, depth + 1)?;
    Ok(left + right)
}

/// Tensor Gauss–Legendre on the unit square, for σ-integrals.
pub fn unit_square<T: Integrand>(f: &impl Fn(f64, f64) -> T, n: usize) -> T {
    let rule = gauss_legendre(n);
    let mut acc: Option<T> = None;
    for (x1, w1) in rule.nodes.iter().zip(&rule.weights) {
        let s1 = 0.5 * (x1 + 1.0);
        for (x2, w2) in rule.nodes.iter().zip(&rule.weights) {
            let s2 = 0.5 * (x2 + 1.0);
            let term = f(s1, s2) * (0.25 * w1 * w2);
            acc = Some(match acc {
                None => term,
                Some(a) => a + term,
            });
        }
    }
    acc.expect("rule is non-empty")
}

/// Polynomial (Neville) extrapolation of samples (x_i, y_i) to x = 0.
pub fn extrapolate_to_zero<T: Integrand>(xs: &[f64], ys: &[T]) -> T {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    let mut p: Vec<T> = ys.to_vec();
    let n = xs.len();
    for m in 1..n {
        for i in 0..n - m {
            let (xi, xim) = (xs[i], xs[i + m]);
            // P = (0 - x_{i+m}) P_i + (x_i - 0) P_{i+1}, over (x_i - x_{i+m})
            let num = p[i].clone() * (-xim) + p[i + 1].clone() * xi;
            p[i] = num * (1.0 / (xi - xim));
        }
    }
    p[0].clone()
}

/// Pairwise (cascade) summation for reproducible, accurate reductions.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 10, 20, 40] {
            let r = gauss_legendre(n);
            for p in 0..(2 * n) {
                let got: f64 = r
                    .nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(x, w)| w * x.powi(p as i32))
                    .sum();
                let want = if p % 2 == 1 {
                    0.0
                } else {
                    2.0 / (p as f64 + 1.0)
                };
                assert!((got - want).abs() < 1e-13, "n={n} p={p} {got} {want}");
            }
        }
    }

    #[test]
    fn hermite_moments() {
        let r = gauss_hermite(20);
        let m0: f64 = r.weights.iter().sum();
        let m2: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
        let m4: f64 = r
            .nodes
            .iter()
            .zip(&r.weights)
            .map(|(x, w)| w * x.powi(4))
            .sum();
        let sp = std::f64::consts::PI.sqrt();
        assert!((m0 - sp).abs() < 1e-13);
        assert!((m2 - sp / 2.0).abs() < 1e-13);
        assert!((m4 - 3.0 * sp / 4.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_peaks() {
        let f = |x: f64| 1.0 / (1e-4 + x * x);
        let v = adaptive(&f, -1.0, 1.0, Tolerance::default()).unwrap();
        let want = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((v - want).abs() < 1e-8 * want);
    }

    #[test]
    fn neville_recovers_quadratic_intercept() {
        let xs = [0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 + 2.0 * x - 5.0 * x * x).collect();
        assert!((extrapolate_to_zero(&xs, &ys) - 3.0).abs() < 1e-13);
    }
}
