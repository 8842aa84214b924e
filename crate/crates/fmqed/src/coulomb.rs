//! The cutoff Coulomb term V₁, reciprocal-lattice Riemann sums and the
//! mollified pointwise Coulomb limit.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::lattice::{BoxDims, ModeSet};
use crate::quadrature::{self, pairwise_sum, Tolerance};

/// V₁(x) = (2π/|V|) Σ_{k∈Λ₁} Σ_{j≠l} e_j e_l cos(k·(x_j − x_l)) / |k|².
pub fn potential_v1(
    positions: &[Vector3<f64>],
    charges: &[f64],
    modes: &ModeSet,
    dims: &BoxDims,
) -> f64 {
    let n = positions.len();
    if n < 2 {
        return 0.0;
    }
    let mut terms = Vec::with_capacity(modes.n_half());
    for w in &modes.half {
        let mut pair = 0.0;
        for j in 0..n {
            for l in (j + 1)..n {
                pair += charges[j] * charges[l] * w.dot(&(positions[j] - positions[l])).cos();
            }
        }
        // ±k and both orderings of each pair
        terms.push(4.0 * pair / w.norm_sq());
    }
    2.0 * PI / dims.volume() * pairwise_sum(&terms)
}

/// ∇_{x_j} V₁ for every particle.
pub fn grad_v1(
    positions: &[Vector3<f64>],
    charges: &[f64],
    modes: &ModeSet,
    dims: &BoxDims,
) -> Vec<Vector3<f64>> {
    let n = positions.len();
    let mut out = vec![Vector3::zeros(); n];
    if n < 2 {
        return out;
    }
    let scale = 2.0 * PI / dims.volume();
    for w in &modes.half {
        let kv = w.vector() / w.norm_sq();
        for j in 0..n {
            for l in 0..n {
                if l == j {
                    continue;
                }
                let s = w.dot(&(positions[j] - positions[l])).sin();
                // ±k (×2) and the two ordered pairs (j,l), (l,j) (×2)
                out[j] -= kv * (4.0 * scale * charges[j] * charges[l] * s);
            }
        }
    }
    out
}

/// Φ(k) = cos(k·d) ∫_{t_min}^∞ w(t) e^{−t|k|²} dt.
#[derive(Clone)]
pub struct LaplaceForm {
    pub weight: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub t_min: f64,
    pub offset: [f64; 3],
}

/// A summand Φ for the reciprocal-lattice Riemann sum with its radial majorant.
#[derive(Clone)]
pub struct LatticeSummand {
    pub name: String,
    pub phi: Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>,
    /// Non-increasing φ(r) with |Φ(k)| ≤ φ(|k|).
    pub majorant: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub laplace: Option<LaplaceForm>,
    /// ∫_{R³} Φ(k) dk when known.
    pub integral: Option<f64>,
}

impl std::fmt::Debug for LatticeSummand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LatticeSummand")
            .field("name", &self.name)
            .field("integral", &self.integral)
            .finish()
    }
}

fn norm_sq(k: &[f64; 3]) -> f64 {
    k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
}

impl LatticeSummand {
    /// Φ(k) = 1/(|k|²(1 + |k|²)); ∫Φ = 2π².
    pub fn lorentzian_coulomb() -> Self {
        LatticeSummand {
            name: "inverse_square_lorentzian".into(),
            phi: Arc::new(|k| {
                let r2 = norm_sq(k);
                1.0 / (r2 * (1.0 + r2))
            }),
            majorant: Arc::new(|r| 1.0 / (r * r * (1.0 + r * r))),
            laplace: Some(LaplaceForm {
                weight: Arc::new(|t| -(-t).exp_m1()),
                t_min: 0.0,
                offset: [0.0; 3],
            }),
            integral: Some(2.0 * PI * PI),
        }
    }

    /// Φ(k) = e^{−|k|²}/|k|² (inverse square with a Gaussian cutoff); ∫Φ = 2π^{3/2}.
    pub fn gaussian_cutoff_coulomb() -> Self {
        LatticeSummand {
            name: "inverse_square_gaussian_cutoff".into(),
            phi: Arc::new(|k| {
                let r2 = norm_sq(k);
                (-r2).exp() / r2
            }),
            majorant: Arc::new(|r| (-r * r).exp() / (r * r)),
            laplace: Some(LaplaceForm {
                weight: Arc::new(|_| 1.0),
                t_min: 1.0,
                offset: [0.0; 3],
            }),
            integral: Some(2.0 * PI.powf(1.5)),
        }
    }

    /// Φ(k) = e^{−ε²|k|²} cos(k·d)/|k|²; ∫Φ = 2π² erf(|d|/(2ε))/|d|.
    pub fn screened_pair(d: Vector3<f64>, eps: f64) -> Self {
        let dist = d.norm();
        let dv = [d[0], d[1], d[2]];
        let e2 = eps * eps;
        LatticeSummand {
            name: "screened_pair".into(),
            phi: Arc::new(move |k| {
                let r2 = norm_sq(k);
                (-e2 * r2).exp() * (k[0] * dv[0] + k[1] * dv[1] + k[2] * dv[2]).cos() / r2
            }),
            majorant: Arc::new(move |r| (-e2 * r * r).exp() / (r * r)),
            laplace: Some(LaplaceForm {
                weight: Arc::new(|_| 1.0),
                t_min: e2,
                offset: dv,
            }),
            integral: if dist > 0.0 {
                Some(2.0 * PI * PI * erf(dist / (2.0 * eps)) / dist)
            } else {
                None
            },
        }
    }

    /// Φ(k) = e^{−α|k|²}, for cross-checks (no Laplace form).
    pub fn gaussian(alpha: f64) -> Self {
        LatticeSummand {
            name: "gaussian".into(),
            phi: Arc::new(move |k| (-alpha * norm_sq(k)).exp()),
            majorant: Arc::new(move |r| (-alpha * r * r).exp()),
            laplace: None,
            integral: Some((PI / alpha).powf(1.5)),
        }
    }
}

/// How a Riemann sum was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SumMethod {
    /// Growing cubes with the majorant tail certificate.
    Direct,
    /// Products of 1-D theta sums integrated over the Laplace variable.
    Theta,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiemannResult {
    /// ((2π)³/|V|) Σ_{k≠0} Φ(k).
    pub value: f64,
    /// Certified bound on the omitted tail (direct) or quadrature error estimate (theta).
    pub tail_bound: f64,
    pub points: u64,
    pub method: SumMethod,
}

#[derive(Debug, Clone, Copy)]
pub struct DirectOptions {
    pub rel_tol: f64,
    pub max_points: u64,
    pub shuffle_seed: Option<u64>,
}

impl Default for DirectOptions {
    fn default() -> Self {
        DirectOptions {
            rel_tol: 1e-6,
            max_points: 50_000_000,
            shuffle_seed: None,
        }
    }
}

/// Tail certificate 4π ∫_{R−2δ}^∞ (u+δ)² φ(u) du for a non-increasing φ.
fn majorant_tail(
    majorant: &(dyn Fn(f64) -> f64 + Send + Sync),
    r_in: f64,
    delta: f64,
) -> Option<f64> {
    let start = r_in - 2.0 * delta;
    if start <= 0.0 {
        return None;
    }
    let f = |u: f64| {
        // u ∈ [0,1) ↦ r = start + u/(1−u)
        let r = start + u / (1.0 - u);
        let jac = 1.0 / ((1.0 - u) * (1.0 - u));
        let v = (r + delta) * (r + delta) * majorant(r) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let tol = Tolerance {
        rel: 1e-8,
        abs: 1e-300,
        max_depth: 40,
    };
    quadrature::adaptive(&f, 0.0, 1.0, tol)
        .ok()
        .map(|v| 4.0 * PI * v)
}

fn direct_sum(
    summand: &LatticeSummand,
    dims: &BoxDims,
    half_width: i64,
    shuffle: Option<u64>,
) -> f64 {
    let h: Vec<f64> = dims.0.iter().map(|l| 2.0 * PI / l).collect();
    let phi = &summand.phi;
    if let Some(seed) = shuffle {
        let mut pts = Vec::new();
        for a in -half_width..=half_width {
            for b in -half_width..=half_width {
                for c in -half_width..=half_width {
                    if (a, b, c) != (0, 0, 0) {
                        pts.push(phi(&[h[0] * a as f64, h[1] * b as f64, h[2] * c as f64]));
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pts.shuffle(&mut rng);
        return pairwise_sum(&pts);
    }
    let slabs: Vec<f64> = (-half_width..=half_width)
        .into_par_iter()
        .map(|a| {
            let mut row =
                Vec::with_capacity(((2 * half_width + 1) * (2 * half_width + 1)) as usize);
            for b in -half_width..=half_width {
                for c in -half_width..=half_width {
                    if (a, b, c) != (0, 0, 0) {
                        row.push(phi(&[h[0] * a as f64, h[1] * b as f64, h[2] * c as f64]));
                    }
                }
            }
            pairwise_sum(&row)
        })
        .collect();
    pairwise_sum(&slabs)
}

/// Direct evaluation over growing cubes until the majorant tail certificate
/// falls below `rel_tol·|value|`.
pub fn riemann_sum_direct(
    summand: &LatticeSummand,
    dims: &BoxDims,
    opts: DirectOptions,
) -> Result<RiemannResult> {
    let h: Vec<f64> = dims.0.iter().map(|l| 2.0 * PI / l).collect();
    let delta = 0.5 * (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
    let cell = (2.0 * PI).powi(3) / dims.volume();
    let mut half_width: i64 = 4;
    let mut last = (f64::NAN, f64::INFINITY, 0u64);
    loop {
        let side = (2 * half_width + 1) as u64;
        let points = side * side * side - 1;
        if points > opts.max_points {
            return Err(Error::Budget(format!(
                "riemann sum for {} not certified within {} points: value {:.6e}, tail bound {:.3e}",
                summand.name, opts.max_points, last.0, last.1
            )));
        }
        let value = cell * direct_sum(summand, dims, half_width, opts.shuffle_seed);
        let r_in = h
            .iter()
            .map(|hi| hi * (half_width + 1) as f64)
            .fold(f64::INFINITY, f64::min);
        let tail = majorant_tail(summand.majorant.as_ref(), r_in, delta).unwrap_or(f64::INFINITY);
        last = (value, tail, points);
        if tail <= opts.rel_tol * value.abs() {
            return Ok(RiemannResult {
                value,
                tail_bound: tail,
                points,
                method: SumMethod::Direct,
            });
        }
        half_width *= 2;
    }
}

/// Σ_n e^{−t(hn)²} cos(hn·d), switching to the Poisson-dual series when shorter.
pub fn theta_sum(h: f64, t: f64, d: f64) -> f64 {
    let period = 2.0 * PI / h;
    let direct_terms = (40.0 / (t * h * h)).sqrt();
    let dual_terms = (160.0 * t).sqrt() / period + 2.0;
    if direct_terms <= dual_terms {
        let nmax = direct_terms.ceil() as i64 + 1;
        let mut acc = 1.0;
        for n in 1..=nmax {
            let k = h * n as f64;
            acc += 2.0 * (-t * k * k).exp() * (k * d).cos();
        }
        acc
    } else {
        // (L/(2√(πt))) Σ_m e^{−(d + mL)²/(4t)}
        let mmax = dual_terms.ceil() as i64 + 1;
        let mut acc = 0.0;
        for m in -mmax..=mmax {
            let y = d + m as f64 * period;
            acc += (-y * y / (4.0 * t)).exp();
        }
        acc * period / (2.0 * (PI * t).sqrt())
    }
}

/// Exact lattice sum through the Laplace form, to relative accuracy `rel_tol`.
pub fn riemann_sum_theta(
    summand: &LatticeSummand,
    dims: &BoxDims,
    rel_tol: f64,
) -> Result<RiemannResult> {
    let form = summand
        .laplace
        .as_ref()
        .ok_or_else(|| Error::Input(format!("summand {} has no Laplace form", summand.name)))?;
    let h: Vec<f64> = dims.0.iter().map(|l| 2.0 * PI / l).collect();
    let hmin = h.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = 1.0 / (hmin * hmin);
    let t0 = form.t_min;
    let integrand = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let r = u / (1.0 - u);
        let t = t0 + scale * r * r;
        let dt = scale * 2.0 * u / (1.0 - u).powi(3);
        if t <= 0.0 {
            return 0.0;
        }
        let prod = theta_sum(h[0], t, form.offset[0])
            * theta_sum(h[1], t, form.offset[1])
            * theta_sum(h[2], t, form.offset[2]);
        let v = (form.weight)(t) * (prod - 1.0) * dt;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let tol = Tolerance {
        rel: rel_tol,
        abs: 1e-300,
        max_depth: 40,
    };
    // two estimates of different order give the reported error
    let value = quadrature::adaptive(&integrand, 0.0, 1.0, tol)?;
    let coarse = quadrature::adaptive(
        &integrand,
        0.0,
        1.0,
        Tolerance {
            rel: rel_tol * 10.0,
            ..tol
        },
    )?;
    let cell = (2.0 * PI).powi(3) / dims.volume();
    Ok(RiemannResult {
        value: cell * value,
        tail_bound: cell * (value - coarse).abs().max(rel_tol * value.abs()),
        points: 0,
        method: SumMethod::Theta,
    })
}

/// Riemann sum, preferring the exact theta evaluation when available.
pub fn riemann_sum(summand: &LatticeSummand, dims: &BoxDims) -> Result<RiemannResult> {
    if summand.laplace.is_some() {
        riemann_sum_theta(summand, dims, 1e-10)
    } else {
        riemann_sum_direct(summand, dims, DirectOptions::default())
    }
}

/// Smooth even cutoff χ with χ(0) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cutoff {
    /// χ(k) = e^{−|k|²}.
    Gaussian,
    /// χ(k) = exp(1 − 1/(1 − |k|²)) for |k| < 1, else 0.
    Bump,
}

impl Cutoff {
    pub fn eval(self, k2: f64) -> f64 {
        match self {
            Cutoff::Gaussian => (-k2).exp(),
            Cutoff::Bump => {
                if k2 < 1.0 {
                    (1.0 - 1.0 / (1.0 - k2)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// (2π/|V|) Σ_{k≠0} χ(εk) Σ_{j≠l} e_j e_l cos(k·(x_j − x_l))/|k|².
pub fn mollified_coulomb(
    positions: &[Vector3<f64>],
    charges: &[f64],
    dims: &BoxDims,
    eps: f64,
    cutoff: Cutoff,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Input(format!(
            "mollifier scale must be positive, got {eps}"
        )));
    }
    let n = positions.len();
    let mut total = 0.0;
    for j in 0..n {
        for l in (j + 1)..n {
            let d = positions[j] - positions[l];
            if d.norm() == 0.0 {
                return Err(Error::Input(format!("particles {j} and {l} coincide")));
            }
            let pair_sum = match cutoff {
                Cutoff::Gaussian => {
                    let s = LatticeSummand::screened_pair(d, eps);
                    riemann_sum_theta(&s, dims, 1e-11)?.value / (2.0 * PI).powi(3) * dims.volume()
                }
                Cutoff::Bump => bump_pair_sum(d, dims, eps),
            };
            total += 2.0 * charges[j] * charges[l] * pair_sum;
        }
    }
    Ok(2.0 * PI / dims.volume() * total)
}

fn bump_pair_sum(d: Vector3<f64>, dims: &BoxDims, eps: f64) -> f64 {
    let h: Vec<f64> = dims.0.iter().map(|l| 2.0 * PI / l).collect();
    let kmax = 1.0 / eps;
    let nmax: Vec<i64> = h.iter().map(|hi| (kmax / hi).floor() as i64).collect();
    let slabs: Vec<f64> = (-nmax[0]..=nmax[0])
        .into_par_iter()
        .map(|a| {
            let mut row = Vec::new();
            for b in -nmax[1]..=nmax[1] {
                for c in -nmax[2]..=nmax[2] {
                    if (a, b, c) == (0, 0, 0) {
                        continue;
                    }
                    let k = [h[0] * a as f64, h[1] * b as f64, h[2] * c as f64];
                    let k2 = norm_sq(&k);
                    let chi = Cutoff::Bump.eval(eps * eps * k2);
                    if chi > 0.0 {
                        row.push(chi * (k[0] * d[0] + k[1] * d[1] + k[2] * d[2]).cos() / k2);
                    }
                }
            }
            pairwise_sum(&row)
        })
        .collect();
    pairwise_sum(&slabs)
}

/// (1/(2π)²) ∫ e^{ik·d}/|k|² dk = 1/(2|d|).
pub fn continuum_coulomb_oracle(d: f64) -> Result<f64> {
    if d == 0.0 || !d.is_finite() {
        return Err(Error::Input(format!(
            "separation must be nonzero and finite, got {d}"
        )));
    }
    Ok(0.5 / d.abs())
}

/// Gaussian-screened continuum value for one unordered pair (both orderings):
/// e_j e_l erf(|d|/(2ε))/|d|.
pub fn screened_pair_target(d: f64, eps: f64, product_of_charges: f64) -> f64 {
    product_of_charges * erf(d / (2.0 * eps)) / d
}

#[derive(Debug, Clone, Serialize)]
pub struct CoulombRow {
    pub box_side: f64,
    pub eps: f64,
    pub value: f64,
    pub tail_bound: f64,
    pub screened_target: f64,
    pub limit_target: f64,
    pub rel_error_screened: f64,
    pub rel_error_limit: f64,
}

/// Two-particle table along a joint (L, ε) refinement sequence, cubic boxes.
pub fn coulomb_limit_table(
    separation: f64,
    charges: [f64; 2],
    steps: &[(f64, f64)],
) -> Result<Vec<CoulombRow>> {
    let pos = [Vector3::zeros(), Vector3::new(separation, 0.0, 0.0)];
    let q = charges[0] * charges[1];
    steps
        .iter()
        .map(|&(side, eps)| {
            let dims = BoxDims::cube(side);
            let s = LatticeSummand::screened_pair(pos[0] - pos[1], eps);
            let r = riemann_sum_theta(&s, &dims, 1e-11)?;
            // 2π/|V| · 2 q Σ = 2q/(2π)² · ((2π)³/|V|) Σ
            let value = 2.0 * q * r.value / (4.0 * PI * PI);
            let tail_bound = 2.0 * q.abs() * r.tail_bound / (4.0 * PI * PI);
            let screened = screened_pair_target(separation, eps, q);
            let limit = q / separation;
            Ok(CoulombRow {
                box_side: side,
                eps,
                value,
                tail_bound,
                screened_target: screened,
                limit_target: limit,
                rel_error_screened: (value - screened).abs() / screened.abs(),
                rel_error_limit: (value - limit).abs() / limit.abs(),
            })
        })
        .collect()
}

/// Richardson estimate of the L → ∞ value from samples at L and 2L, assuming
/// a leading 1/L error.
pub fn richardson_in_inverse_box(at_l: f64, at_2l: f64) -> f64 {
    2.0 * at_2l - at_l
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleRow {
    pub scale: f64,
    pub long_side: f64,
    pub sum: f64,
    pub integral: f64,
    pub excess: f64,
    pub single_term_bound: f64,
}

/// Box (a², a, a) with Φ(k) = e^{−|k|²}/|k|²: the long-axis term near the origin
/// keeps the Riemann sum away from the integral.
pub fn anisotropic_counterexample(scales: &[f64]) -> Result<Vec<CounterexampleRow>> {
    let summand = LatticeSummand::gaussian_cutoff_coulomb();
    let integral = summand.integral.expect("known integral");
    scales
        .iter()
        .map(|&a| {
            let dims = BoxDims([a * a, a, a]);
            let r = riemann_sum_theta(&summand, &dims, 1e-11)?;
            let k1 = 2.0 * PI / (a * a);
            let bound = (2.0 * PI).powi(3) / dims.volume() * (summand.phi)(&[k1, 0.0, 0.0]);
            Ok(CounterexampleRow {
                scale: a,
                long_side: a * a,
                sum: r.value,
                integral,
                excess: r.value - integral,
                single_term_bound: bound,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tau_cube() -> BoxDims {
        BoxDims::cube(2.0 * PI)
    }

    #[test]
    fn v1_hand_values() {
        let dims = tau_cube();
        let set = ModeSet::from_cutoff(&dims, 1);
        let x = [Vector3::new(0.3, 0.1, -0.2); 2];
        let v = potential_v1(&x, &[1.0, 1.0], &set, &dims);
        let want = 2.0 * PI / dims.volume() * 2.0 * (44.0 / 3.0);
        assert!((v - want).abs() < 1e-13 && (v - 0.74302).abs() < 1e-5);
        assert!((potential_v1(&x, &[1.0, -1.0], &set, &dims) + want).abs() < 1e-13);
        assert_eq!(potential_v1(&x[..1], &[1.0], &set, &dims), 0.0);
    }

    #[test]
    fn v1_gradient_matches_finite_differences() {
        let dims = BoxDims([5.0, 6.0, 7.0]);
        let set = ModeSet::from_cutoff(&dims, 1);
        let x = vec![
            Vector3::new(0.3, 0.1, -0.2),
            Vector3::new(1.0, -0.5, 0.4),
            Vector3::new(-0.7, 0.2, 0.9),
        ];
        let q = [1.0, -2.0, 0.5];
        let g = grad_v1(&x, &q, &set, &dims);
        let h = 1e-6;
        for j in 0..3 {
            for m in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j][m] += h;
                xm[j][m] -= h;
                let fd = (potential_v1(&xp, &q, &set, &dims) - potential_v1(&xm, &q, &set, &dims))
                    / (2.0 * h);
                assert!((fd - g[j][m]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn continuum_oracle_values() {
        assert_eq!(continuum_coulomb_oracle(1.0).unwrap(), 0.5);
        assert_eq!(continuum_coulomb_oracle(2.0).unwrap(), 0.25);
        assert!((continuum_coulomb_oracle(0.1).unwrap() - 5.0).abs() < 1e-14);
        assert!(continuum_coulomb_oracle(0.0).is_err());
    }

    #[test]
    fn theta_dual_series_agrees_with_direct() {
        let h = 0.37;
        for &t in &[0.01, 0.3, 2.0, 40.0] {
            let mut direct = 1.0;
            for n in 1..20000 {
                let k = h * n as f64;
                direct += 2.0 * (-t * k * k).exp() * (k * 0.8).cos();
            }
            assert!(
                (theta_sum(h, t, 0.8) - direct).abs() < 1e-12 * direct.abs().max(1.0),
                "t={t}"
            );
        }
    }

    #[test]
    fn theta_and_direct_agree() {
        let dims = BoxDims([4.0, 5.0, 6.0]);
        let s = LatticeSummand::gaussian_cutoff_coulomb();
        let a = riemann_sum_theta(&s, &dims, 1e-12).unwrap();
        let b = riemann_sum_direct(
            &s,
            &dims,
            DirectOptions {
                rel_tol: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            (a.value - b.value).abs() < 1e-10 * a.value,
            "{} {}",
            a.value,
            b.value
        );
    }

    #[test]
    fn gaussian_sum_converges_to_integral() {
        let s = LatticeSummand::gaussian(1.0);
        let dims = BoxDims::cube(12.0);
        let r = riemann_sum(&s, &dims).unwrap();
        // the sum omits k = 0
        let k0 = (2.0 * PI).powi(3) / dims.volume();
        assert!((r.value + k0 - s.integral.unwrap()).abs() < 1e-8);
    }

    #[test]
    fn direct_sum_reports_budget_exhaustion() {
        let s = LatticeSummand::lorentzian_coulomb();
        let err = riemann_sum_direct(
            &s,
            &BoxDims::cube(60.0),
            DirectOptions {
                rel_tol: 1e-6,
                max_points: 100_000,
                shuffle_seed: None,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Budget(_)));
    }

    #[test]
    fn summation_order_does_not_matter() {
        let dims = BoxDims([3.0, 4.0, 5.0]);
        let s = LatticeSummand::gaussian_cutoff_coulomb();
        let base = riemann_sum_direct(
            &s,
            &dims,
            DirectOptions {
                rel_tol: 1e-9,
                ..Default::default()
            },
        )
        .unwrap();
        let shuffled = riemann_sum_direct(
            &s,
            &dims,
            DirectOptions {
                rel_tol: 1e-9,
                shuffle_seed: Some(11),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((base.value - shuffled.value).abs() < 1e-10);
    }

    #[test]
    fn screened_sign_and_distance_scaling() {
        let rows = coulomb_limit_table(2.0, [1.0, -1.0], &[(160.0, 0.05)]).unwrap();
        // limit −1/2, within the 1/L offset
        assert!((rows[0].value + 0.5).abs() < 0.03, "{}", rows[0].value);
        assert_eq!(rows[0].limit_target, -0.5);
    }

    #[test]
    fn mollified_coulomb_matches_table_and_rejects_coincidence() {
        let x = [Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        let dims = BoxDims::cube(20.0);
        let v = mollified_coulomb(&x, &[1.0, 1.0], &dims, 0.25, Cutoff::Gaussian).unwrap();
        let row = &coulomb_limit_table(1.0, [1.0, 1.0], &[(20.0, 0.25)]).unwrap()[0];
        assert!((v - row.value).abs() < 1e-10);
        assert!(mollified_coulomb(
            &[Vector3::zeros(); 2],
            &[1.0, 1.0],
            &dims,
            0.25,
            Cutoff::Gaussian
        )
        .is_err());
    }

    #[test]
    fn bump_and_gaussian_share_the_limit() {
        // same small ε: both close to 1/|d| up to the common 1/L offset
        let x = [Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        let dims = BoxDims::cube(24.0);
        let g = mollified_coulomb(&x, &[1.0, 1.0], &dims, 0.1, Cutoff::Gaussian).unwrap();
        let b = mollified_coulomb(&x, &[1.0, 1.0], &dims, 0.1, Cutoff::Bump).unwrap();
        assert!((g - b).abs() < 0.02, "{g} {b}");
    }

    proptest! {
        #[test]
        fn v1_translation_and_swap_invariance(sx in -3.0f64..3.0, sy in -3.0f64..3.0, sz in -3.0f64..3.0, q in -2.0f64..2.0) {
            let dims = BoxDims([5.0, 6.0, 7.0]);
            let set = ModeSet::from_cutoff(&dims, 1);
            let x = vec![Vector3::new(0.3, 0.1, -0.2), Vector3::new(1.0, -0.5, 0.4)];
            let shift = Vector3::new(sx, sy, sz);
            let y: Vec<_> = x.iter().map(|p| p + shift).collect();
            let a = potential_v1(&x, &[1.0, q], &set, &dims);
            prop_assert!((a - potential_v1(&y, &[1.0, q], &set, &dims)).abs() < 1e-12);
            let swapped = vec![x[1], x[0]];
            prop_assert!((a - potential_v1(&swapped, &[q, 1.0], &set, &dims)).abs() < 1e-12);
        }

        #[test]
        fn majorant_bounds_summands(kx in -5.0f64..5.0, ky in -5.0f64..5.0, kz in -5.0f64..5.0) {
            let k = [kx, ky, kz];
            let r = norm_sq(&k).sqrt();
            prop_assume!(r > 1e-3);
            for s in [LatticeSummand::lorentzian_coulomb(), LatticeSummand::gaussian_cutoff_coulomb(),
                      LatticeSummand::screened_pair(Vector3::new(1.0, 0.5, 0.0), 0.3)] {
                prop_assert!((s.phi)(&k).abs() <= (s.majorant)(r) * (1.0 + 1e-12));
            }
        }
    }
}
