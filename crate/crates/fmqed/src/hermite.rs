//! Orthonormal Hermite functions and closed-form matrices of quadratic-phase
//! integral operators between them.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// h_0..=h_nmax at real x (orthonormal on R, weight 1).
pub fn functions(x: f64, nmax: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(nmax + 1);
    h.push(std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp());
    if nmax >= 1 {
        h.push(std::f64::consts::SQRT_2 * x * h[0]);
    }
    for n in 1..nmax {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * h[n] - (nf / (nf + 1.0)).sqrt() * h[n - 1];
        h.push(next);
    }
    h
}

/// h_0..=h_nmax continued to complex argument.
pub fn functions_complex(x: Complex64, nmax: usize) -> Vec<Complex64> {
    let mut h = Vec::with_capacity(nmax + 1);
    h.push(std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp());
    if nmax >= 1 {
        h.push(std::f64::consts::SQRT_2 * x * h[0]);
    }
    for n in 1..nmax {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * h[n] - (nf / (nf + 1.0)).sqrt() * h[n - 1];
        h.push(next);
    }
    h
}

/// First derivatives h_n' = √(n/2) h_{n-1} − √((n+1)/2) h_{n+1}, n ≤ nmax.
pub fn derivatives(x: f64, nmax: usize) -> Vec<f64> {
    let h = functions(x, nmax + 1);
    (0..=nmax)
        .map(|n| {
            let down = if n > 0 {
                (n as f64 / 2.0).sqrt() * h[n - 1]
            } else {
                0.0
            };
            down - ((n as f64 + 1.0) / 2.0).sqrt() * h[n + 1]
        })
        .collect()
}

/// Second derivatives from the ladder form: apply the first-derivative
/// relation twice.
pub fn second_derivatives(x: f64, nmax: usize) -> Vec<f64> {
    let h = functions(x, nmax + 2);
    let d = |n: usize, h: &dyn Fn(usize) -> f64| -> f64 {
        let down = if n > 0 {
            (n as f64 / 2.0).sqrt() * h(n - 1)
        } else {
            0.0
        };
        down - ((n as f64 + 1.0) / 2.0).sqrt() * h(n + 1)
    };
    let first = |n: usize| d(n, &|m| h[m]);
    (0..=nmax).map(|n| d(n, &first)).collect()
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        out[i] = out[i - 1] + (i as f64).ln();
    }
    out
}

/// Matrix ⟨h_m, K h_n⟩ for the kernel
/// K(x, y) = prefactor · exp(i(a x² + b x y + a y²)), m, n ≤ nmax.
///
/// Uses the Hermite generating function; the Gaussian integral is evaluated
/// with √det taken eigenvalue by eigenvalue (both eigenvalues of the quadratic
/// form have real part 1, so the principal root is the analytic one).
pub fn quadratic_phase_matrix(
    a: f64,
    b: f64,
    prefactor: Complex64,
    nmax: usize,
) -> DMatrix<Complex64> {
    let i = Complex64::i();
    let lam_plus = Complex64::new(1.0, 0.0) - 2.0 * i * a - i * b;
    let lam_minus = Complex64::new(1.0, 0.0) - 2.0 * i * a + i * b;
    let det = lam_plus * lam_minus;
    let quad = (Complex64::new(1.0, 0.0) - 2.0 * i * a) / det - 0.5;
    let cross = 2.0 * i * b / det;
    let c0 = prefactor * 2.0 * std::f64::consts::PI.sqrt() / (lam_plus.sqrt() * lam_minus.sqrt());

    let lf = ln_factorials(nmax);
    let mut quad_pows = vec![Complex64::new(1.0, 0.0); nmax / 2 + 1];
    for p in 1..quad_pows.len() {
        quad_pows[p] = quad_pows[p - 1] * quad;
    }
    let mut cross_pows = vec![Complex64::new(1.0, 0.0); nmax + 1];
    for p in 1..=nmax {
        cross_pows[p] = cross_pows[p - 1] * cross;
    }
    DMatrix::from_fn(nmax + 1, nmax + 1, |m, n| {
        let mut acc = Complex64::new(0.0, 0.0);
        let jmax = m.min(n);
        for j in 0..=jmax {
            if (m - j) % 2 != 0 || (n - j) % 2 != 0 {
                continue;
            }
            let p = (m - j) / 2;
            let q = (n - j) / 2;
            let ln_coef = 0.5 * (lf[m] + lf[n]) - lf[j] - lf[p] - lf[q];
            acc += cross_pows[j] * quad_pows[p] * quad_pows[q] * ln_coef.exp();
        }
        c0 * acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_hermite;

    #[test]
    fn functions_are_orthonormal() {
        let rule = gauss_hermite(60);
        let nmax = 20;
        let mut gram = DMatrix::<f64>::zeros(nmax + 1, nmax + 1);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let h = functions(*x, nmax);
            let ww = w * (x * x).exp();
            for m in 0..=nmax {
                for n in 0..=nmax {
                    gram[(m, n)] += ww * h[m] * h[n];
                }
            }
        }
        let err = (gram - DMatrix::identity(nmax + 1, nmax + 1)).amax();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn second_derivative_matches_oscillator_equation() {
        for &x in &[-2.3, -0.4, 0.0, 0.7, 3.1] {
            let h = functions(x, 12);
            let d2 = second_derivatives(x, 12);
            for n in 0..=12 {
                let want = (x * x - (2 * n + 1) as f64) * h[n];
                assert!((d2[n] - want).abs() < 1e-12, "x={x} n={n}");
            }
        }
    }

    #[test]
    fn complex_continuation_agrees_on_real_axis() {
        let hr = functions(0.83, 9);
        let hc = functions_complex(Complex64::new(0.83, 0.0), 9);
        for n in 0..=9 {
            assert!((hr[n] - hc[n].re).abs() < 1e-15 && hc[n].im == 0.0);
        }
    }

    #[test]
    fn quadratic_phase_matrix_matches_brute_force() {
        // mild phase so plain real-axis quadrature converges
        let (a, b) = (0.21, -0.37);
        let pref = Complex64::new(0.4, -0.1);
        let nmax = 6;
        let m = quadratic_phase_matrix(a, b, pref, nmax);
        let rule = crate::quadrature::gauss_legendre(200);
        let span = 14.0;
        let pts: Vec<(f64, f64, Vec<f64>)> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| (span * x, span * w, functions(span * x, nmax)))
            .collect();
        for (r, c) in [(0, 0), (1, 0), (2, 0), (3, 1), (4, 4), (6, 2)] {
            let mut acc = Complex64::new(0.0, 0.0);
            for (x, wx, hx) in &pts {
                for (y, wy, hy) in &pts {
                    let ph = a * x * x + b * x * y + a * y * y;
                    acc += wx * wy * hx[r] * hy[c] * Complex64::new(0.0, ph).exp();
                }
            }
            acc *= pref;
            assert!(
                (acc - m[(r, c)]).norm() < 1e-10,
                "({r},{c}) {acc} {}",
                m[(r, c)]
            );
        }
    }
}
