//! Auxiliary maps (z, Z) ↦ (Φ, Φ₁) whose Jacobian controls the one-step
//! operator, and the sampled search for the largest admissible step.

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::action::ActionModel;
use crate::coulomb::grad_v1;
use crate::error::{Error, Result};
use crate::quadrature;

const SIGMA_NODES: usize = 24;
const LINE_NODES: usize = 40;
const FD_STEP: f64 = 1e-5;

/// One evaluation of the maps.
#[derive(Debug, Clone, Serialize)]
pub struct PhiMapPoint {
    pub t: f64,
    pub s: f64,
    pub x: Vec<[f64; 3]>,
    pub y: Vec<[f64; 3]>,
    pub z: Vec<[f64; 3]>,
    pub xa: Vec<f64>,
    pub ya: Vec<f64>,
    pub za: Vec<f64>,
    pub phi_particles: Vec<[f64; 3]>,
    pub phi_field: Vec<f64>,
    pub jacobian_det: f64,
    pub fd_step: f64,
    /// S(z ← y) − S(z ← x) from two action evaluations.
    pub action_difference: f64,
    /// The same difference rebuilt from Φ and Φ₁.
    pub phi_difference: f64,
}

impl PhiMapPoint {
    pub fn identity_defect(&self) -> f64 {
        let scale = self
            .action_difference
            .abs()
            .max(self.phi_difference.abs())
            .max(1e-300);
        (self.action_difference - self.phi_difference).abs() / scale
    }
}

struct Inputs<'a> {
    rho: f64,
    x: &'a [Vector3<f64>],
    y: &'a [Vector3<f64>],
    xa: &'a [f64],
    ya: &'a [f64],
}

/// Φ⁽ʲ⁾ and Φ₁ at (z, Z).
fn evaluate(
    model: &ActionModel,
    inp: &Inputs,
    z: &[Vector3<f64>],
    za: &[f64],
) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let field = &model.field;
    let n = model.n_particles();
    let nf = field.layout.len();
    let rho = inp.rho;
    let c = field.c;
    let vol = field.volume();
    let coupled = field.layout.n_coupled > 0;

    let mut phi: Vec<Vector3<f64>> = (0..n).map(|j| z[j] - (inp.x[j] + inp.y[j]) * 0.5).collect();
    let mut phi1: Vec<f64> = (0..nf)
        .map(|o| za[o] - 0.5 * (inp.xa[o] + inp.ya[o]))
        .collect();

    // σ-integrals: per particle ∫∫σ₁B, ∫∫σ₁ (X−Z)·∂Ã/∂a, ∫∫σ₁ ∇V₁; per field variable
    // ∫∫σ₁ Σ_j e_j (x_j−z_j)·∂Ã/∂a and ∫∫σ₁ ∇V₂
    let mut acc_b = vec![Vector3::zeros(); n];
    let mut acc_da = vec![Vector3::zeros(); n];
    let mut acc_v1 = vec![Vector3::zeros(); n];
    let mut acc_f = vec![0.0; nf];
    let mut acc_v2 = vec![0.0; nf];
    let charged = model.charges.iter().any(|&e| e != 0.0);
    let rule = quadrature::gauss_legendre(SIGMA_NODES);
    let mut zeta = vec![Vector3::zeros(); n];
    let mut zeta_a = vec![0.0; nf];
    for (u1, w1) in rule.nodes.iter().zip(&rule.weights) {
        let s1 = 0.5 * (u1 + 1.0);
        for (u2, w2) in rule.nodes.iter().zip(&rule.weights) {
            let s2 = 0.5 * (u2 + 1.0);
            let w = 0.25 * w1 * w2 * s1;
            for j in 0..n {
                zeta[j] = z[j] + (inp.x[j] - z[j]) * s1 + (inp.y[j] - inp.x[j]) * (s1 * s2);
            }
            for o in 0..nf {
                zeta_a[o] = za[o] + (inp.xa[o] - za[o]) * s1 + (inp.ya[o] - inp.xa[o]) * (s1 * s2);
            }
            if n >= 2 && charged {
                for (acc, g) in acc_v1.iter_mut().zip(grad_v1(
                    &zeta,
                    &model.charges,
                    &model.coulomb_modes,
                    &field.dims,
                )) {
                    *acc += g * w;
                }
            }
            for (acc, g) in acc_v2.iter_mut().zip(field.grad_v2(&zeta_a)) {
                *acc += g * w;
            }
            if coupled {
                for j in 0..n {
                    let e = model.charges[j];
                    if e == 0.0 {
                        continue;
                    }
                    let jac = field.mollified_grad_x(&zeta[j], &zeta_a);
                    let da = field.mollified_grad_a(&zeta[j], &zeta_a);
                    let dx = inp.x[j] - z[j];
                    // B_ml (x_l − z_l) with B_ml = ∂_m Ã_l − ∂_l Ã_m
                    acc_b[j] += (jac * dx - jac.transpose() * dx) * w;
                    for o in 0..field.layout.n_coupled * 4 {
                        acc_da[j] += da[o] * ((inp.xa[o] - za[o]) * w);
                        acc_f[o] += e * dx.dot(&da[o]) * w;
                    }
                }
            }
        }
    }

    if coupled {
        let line = quadrature::gauss_legendre(LINE_NODES);
        for j in 0..n {
            let e = model.charges[j];
            if e == 0.0 {
                continue;
            }
            let mut a_line = Vector3::zeros();
            let mut pa = vec![0.0; nf];
            for (u, w) in line.nodes.iter().zip(&line.weights) {
                let th = 0.5 * (u + 1.0);
                for o in 0..nf {
                    pa[o] = inp.xa[o] - th * (inp.xa[o] - inp.ya[o]);
                }
                a_line +=
                    field.mollified(&(inp.x[j] - (inp.x[j] - inp.y[j]) * th), &pa) * (0.5 * w);
            }
            let k = e * rho / (model.masses[j] * c);
            phi[j] += (acc_b[j] - acc_da[j] + a_line) * k;
        }
        for o in 0..nf {
            phi1[o] += rho * vol / c * acc_f[o];
        }
    }
    for j in 0..n {
        phi[j] += acc_v1[j] * (rho * rho / model.masses[j]);
    }
    for o in 0..nf {
        phi1[o] += rho * rho * vol * acc_v2[o];
    }
    (phi, phi1)
}

fn flatten(phi: &[Vector3<f64>], phi1: &[f64]) -> Vec<f64> {
    phi.iter()
        .flat_map(|v| [v.x, v.y, v.z])
        .chain(phi1.iter().copied())
        .collect()
}

/// det ∂(Φ, Φ₁)/∂(z, Z) by central differences.
fn jacobian_det(model: &ActionModel, inp: &Inputs, z: &[Vector3<f64>], za: &[f64]) -> (f64, f64) {
    let n = z.len();
    let dim = 3 * n + za.len();
    let scale = z
        .iter()
        .flat_map(|v| v.iter().copied())
        .chain(za.iter().copied())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let h = FD_STEP * scale;
    let columns: Vec<Vec<f64>> = (0..dim)
        .map(|col| {
            let shifted = |sign: f64| {
                let mut zz = z.to_vec();
                let mut aa = za.to_vec();
                if col < 3 * n {
                    zz[col / 3][col % 3] += sign * h;
                } else {
                    aa[col - 3 * n] += sign * h;
                }
                let (p, p1) = evaluate(model, inp, &zz, &aa);
                flatten(&p, &p1)
            };
            let plus = shifted(1.0);
            let minus = shifted(-1.0);
            plus.iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect()
        })
        .collect();
    let m = DMatrix::from_fn(dim, dim, |r, c| columns[c][r]);
    (m.determinant(), h)
}

fn to_arrays(v: &[Vector3<f64>]) -> Vec<[f64; 3]> {
    v.iter().map(|p| [p.x, p.y, p.z]).collect()
}

#[allow(clippy::too_many_arguments)]
fn check_inputs(
    model: &ActionModel,
    t: f64,
    s: f64,
    x: &[Vector3<f64>],
    y: &[Vector3<f64>],
    z: &[Vector3<f64>],
    xa: &[f64],
    ya: &[f64],
    za: &[f64],
) -> Result<()> {
    if !(t > s) {
        return Err(Error::Input(format!(
            "phi maps need t > s, got t={t}, s={s}"
        )));
    }
    let n = model.n_particles();
    let nf = model.field.layout.len();
    if x.len() != n || y.len() != n || z.len() != n {
        return Err(Error::Input(format!("expected {n} particle positions")));
    }
    if xa.len() != nf || ya.len() != nf || za.len() != nf {
        return Err(Error::Input(format!("expected {nf} field coordinates")));
    }
    Ok(())
}

/// Evaluate Φ⁽ʲ⁾, Φ₁, the finite-difference Jacobian determinant and the
/// two-sided action-difference identity at one point.
#[allow(clippy::too_many_arguments)]
pub fn phi_maps(
    model: &ActionModel,
    t: f64,
    s: f64,
    x: &[Vector3<f64>],
    y: &[Vector3<f64>],
    z: &[Vector3<f64>],
    xa: &[f64],
    ya: &[f64],
    za: &[f64],
) -> Result<PhiMapPoint> {
    check_inputs(model, t, s, x, y, z, xa, ya, za)?;
    let rho = t - s;
    let inp = Inputs { rho, x, y, xa, ya };
    let (phi, phi1) = evaluate(model, &inp, z, za);
    let (det, h) = jacobian_det(model, &inp, z, za);

    let from_y = model.segment_action(t, s, z, y, za, ya)?;
    let from_x = model.segment_action(t, s, z, x, za, xa)?;
    let vol = model.field.volume();
    let mut rebuilt = 0.0;
    for j in 0..x.len() {
        rebuilt += model.masses[j] * (x[j] - y[j]).dot(&phi[j]) / rho;
    }
    for o in 0..xa.len() {
        rebuilt += (xa[o] - ya[o]) * phi1[o] / (rho * vol);
    }
    Ok(PhiMapPoint {
        t,
        s,
        x: to_arrays(x),
        y: to_arrays(y),
        z: to_arrays(z),
        xa: xa.to_vec(),
        ya: ya.to_vec(),
        za: za.to_vec(),
        phi_particles: to_arrays(&phi),
        phi_field: phi1,
        jacobian_det: det,
        fd_step: h,
        action_difference: from_y - from_x,
        phi_difference: rebuilt,
    })
}

/// Half-widths of the region the certificate samples are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleBox {
    pub position: f64,
    pub field: f64,
}

impl SampleBox {
    /// Positions over the whole box, field coordinates over three oscillator
    /// lengths of the softest mode the box allows.
    pub fn for_model(model: &ActionModel) -> Self {
        let f = &model.field;
        let lmax = f.dims.0.iter().copied().fold(0.0, f64::max);
        let kmin = 2.0 * std::f64::consts::PI / lmax;
        SampleBox {
            position: 0.5 * lmax,
            field: 3.0 * (f.hbar * f.volume() / (f.c * kmin)).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub rho: f64,
    pub min_det: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RhoStarReport {
    pub rho_star: f64,
    pub ceiling: f64,
    pub samples: usize,
    pub seed: u64,
    pub min_det_at_rho_star: f64,
    /// Every step size tried, in order.
    pub certificates: Vec<Certificate>,
}

struct Sample {
    x: Vec<Vector3<f64>>,
    y: Vec<Vector3<f64>>,
    z: Vec<Vector3<f64>>,
    xa: Vec<f64>,
    ya: Vec<f64>,
    za: Vec<f64>,
}

/// Draws in a fixed order (particles, then coupled field variables, then the
/// rest) so that adding uncoupled modes leaves earlier coordinates unchanged.
fn draw_samples(model: &ActionModel, bx: SampleBox, count: usize, seed: u64) -> Vec<Sample> {
    let n = model.n_particles();
    let nf = model.field.layout.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Sample> = (0..count)
        .map(|_| {
            let mut pt = || {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ) * bx.position
            };
            Sample {
                x: (0..n).map(|_| pt()).collect(),
                y: (0..n).map(|_| pt()).collect(),
                z: (0..n).map(|_| pt()).collect(),
                xa: vec![0.0; nf],
                ya: vec![0.0; nf],
                za: vec![0.0; nf],
            }
        })
        .collect();
    let mut fill = |range: std::ops::Range<usize>| {
        for s in out.iter_mut() {
            for v in [&mut s.xa, &mut s.ya, &mut s.za] {
                for o in range.clone() {
                    v[o] = rng.gen_range(-1.0..1.0) * bx.field;
                }
            }
        }
    };
    let nc = 4 * model.field.layout.n_coupled;
    fill(0..nc);
    fill(nc..nf);
    out
}

fn min_det(model: &ActionModel, samples: &[Sample], rho: f64) -> f64 {
    samples
        .par_iter()
        .map(|s| {
            let inp = Inputs {
                rho,
                x: &s.x,
                y: &s.y,
                xa: &s.xa,
                ya: &s.ya,
            };
            jacobian_det(model, &inp, &s.z, &s.za).0
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Largest sampled step with min det ≥ 1/2, by bisection below `ceiling`.
/// A certificate at sampled points only.
pub fn rho_star_search(
    model: &ActionModel,
    bx: SampleBox,
    samples: usize,
    seed: u64,
    ceiling: f64,
    iterations: usize,
) -> Result<RhoStarReport> {
    if !(ceiling > 0.0) || samples == 0 {
        return Err(Error::Input(
            "rho_star_search needs a positive ceiling and at least one sample".into(),
        ));
    }
    let pts = draw_samples(model, bx, samples, seed);
    let mut certificates = Vec::new();
    let top = min_det(model, &pts, ceiling);
    certificates.push(Certificate {
        rho: ceiling,
        min_det: top,
        passed: top >= 0.5,
    });
    if top >= 0.5 {
        return Ok(RhoStarReport {
            rho_star: ceiling,
            ceiling,
            samples,
            seed,
            min_det_at_rho_star: top,
            certificates,
        });
    }
    let (mut lo, mut hi) = (0.0, ceiling);
    let mut lo_det = 1.0;
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        let d = min_det(model, &pts, mid);
        let passed = d >= 0.5;
        certificates.push(Certificate {
            rho: mid,
            min_det: d,
            passed,
        });
        if passed {
            lo = mid;
            lo_det = d;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Err(Error::Budget(
            "rho_star_search found no admissible step; increase iterations".into(),
        ));
    }
    Ok(RhoStarReport {
        rho_star: lo,
        ceiling,
        samples,
        seed,
        min_det_at_rho_star: lo_det,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimulationConfig;

    fn model(
        charges: Vec<f64>,
        modes: Vec<[i64; 3]>,
        field_modes: Option<Vec<[i64; 3]>>,
    ) -> ActionModel {
        let n = charges.len();
        let cfg = SimulationConfig {
            box_lengths: [4.0, 4.0, 4.0],
            n_particles: n,
            masses: vec![1.0; n],
            charges,
            modes_coulomb: Some(vec![[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0]]),
            modes_coupling: Some(modes),
            modes_field: field_modes,
            width_g: 50.0,
            ..Default::default()
        };
        ActionModel::from_config(&cfg).unwrap()
    }

    fn point(m: &ActionModel, seed: u64) -> Sample {
        draw_samples(
            m,
            SampleBox {
                position: 1.5,
                field: 0.8,
            },
            1,
            seed,
        )
        .pop()
        .unwrap()
    }

    #[test]
    fn decoupled_maps_are_midpoint_shifts() {
        let m = model(vec![0.0], vec![[0, 0, 1]], None);
        let s = point(&m, 3);
        let p = phi_maps(&m, 0.3, 0.1, &s.x, &s.y, &s.z, &s.xa, &s.ya, &s.za).unwrap();
        for j in 0..3 {
            let want = s.z[0][j] - 0.5 * (s.x[0][j] + s.y[0][j]);
            assert!((p.phi_particles[0][j] - want).abs() < 1e-14);
        }
        // only the harmonic field blocks move the determinant
        let rho = 0.2;
        let want: f64 = (0..m.field.layout.len())
            .map(|o| 1.0 + (rho * m.field.frequency(o)).powi(2) / 6.0)
            .product();
        assert!(
            (p.jacobian_det - want).abs() < 1e-6,
            "{} {want}",
            p.jacobian_det
        );
        assert!(p.identity_defect() < 1e-9);
    }

    #[test]
    fn action_difference_identity_coupled() {
        let m = model(vec![1.3, -0.7], vec![[0, 0, 1], [1, 1, 0]], None);
        for seed in 0..4 {
            let s = point(&m, seed);
            let p = phi_maps(&m, 0.45, 0.2, &s.x, &s.y, &s.z, &s.xa, &s.ya, &s.za).unwrap();
            assert!(
                p.identity_defect() < 1e-7,
                "seed {seed}: {} vs {}",
                p.action_difference,
                p.phi_difference
            );
        }
    }

    #[test]
    fn rejects_reversed_times() {
        let m = model(vec![1.0], vec![[0, 0, 1]], None);
        let s = point(&m, 1);
        assert!(phi_maps(&m, 0.1, 0.1, &s.x, &s.y, &s.z, &s.xa, &s.ya, &s.za).is_err());
    }

    #[test]
    fn uncoupled_modes_do_not_shrink_rho_star() {
        let small = model(vec![6.0, -6.0], vec![[0, 0, 1]], Some(vec![[0, 0, 1]]));
        let large = model(
            vec![6.0, -6.0],
            vec![[0, 0, 1]],
            Some(vec![[0, 0, 1], [1, 0, 0], [0, 1, 1]]),
        );
        let bx = SampleBox::for_model(&small);
        let a = rho_star_search(&small, bx, 6, 11, 4.0, 14).unwrap();
        let b = rho_star_search(&large, bx, 6, 11, 4.0, 14).unwrap();
        assert!(b.rho_star >= a.rho_star, "{} < {}", b.rho_star, a.rho_star);
        assert!(a.min_det_at_rho_star >= 0.5);
    }
}
