//! Field coordinates a^{(i)}_{lk}, the reconstructed vector potentials and the
//! field potential V₂.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::lattice::{
    build_field_modes, build_polarization, BoxDims, ModeSet, PolarizationFrame, WaveVector,
};

/// Flat indexing of the 4N field variables: offset = 4·k + 2·(l−1) + (i−1).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldLayout {
    pub modes: ModeSet,
    /// The first `n_coupled` modes of `modes` form Λ'₂.
    pub n_coupled: usize,
}

/// One field variable (k index in Λ', polarization l, cos/sin component i).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FieldVar {
    pub mode: usize,
    pub l: usize,
    pub i: usize,
}

impl FieldLayout {
    pub fn new(modes: ModeSet, n_coupled: usize) -> Self {
        assert!(n_coupled <= modes.n_half());
        FieldLayout { modes, n_coupled }
    }

    pub fn len(&self) -> usize {
        4 * self.modes.n_half()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.n_half() == 0
    }

    pub fn offset(&self, v: FieldVar) -> usize {
        debug_assert!((1..=2).contains(&v.l) && (1..=2).contains(&v.i));
        4 * v.mode + 2 * (v.l - 1) + (v.i - 1)
    }

    pub fn var(&self, offset: usize) -> FieldVar {
        FieldVar {
            mode: offset / 4,
            l: (offset % 4) / 2 + 1,
            i: offset % 2 + 1,
        }
    }

    pub fn wave(&self, offset: usize) -> &WaveVector {
        &self.modes.half[offset / 4]
    }

    pub fn is_coupled(&self, offset: usize) -> bool {
        offset / 4 < self.n_coupled
    }

    /// Index legend rows (offset, s, l, i).
    pub fn legend(&self) -> Vec<(usize, [i64; 3], usize, usize)> {
        (0..self.len())
            .map(|o| {
                let v = self.var(o);
                (o, self.modes.half[v.mode].s, v.l, v.i)
            })
            .collect()
    }
}

/// The 4N independent field coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldVector(pub Vec<f64>);

impl FieldVector {
    pub fn zeros(layout: &FieldLayout) -> Self {
        FieldVector(vec![0.0; layout.len()])
    }

    pub fn get(&self, layout: &FieldLayout, v: FieldVar) -> f64 {
        self.0[layout.offset(v)]
    }

    pub fn set(&mut self, layout: &FieldLayout, v: FieldVar, value: f64) {
        self.0[layout.offset(v)] = value;
    }
}

/// Coefficients on all of Λ from the reality relations:
/// a^{(1)}_{l,−k} = −a^{(1)}_{lk}, a^{(2)}_{l,−k} = a^{(2)}_{lk}.
pub fn extend_parity(
    a: &FieldVector,
    layout: &FieldLayout,
) -> HashMap<([i64; 3], usize, usize), f64> {
    let mut out = HashMap::with_capacity(2 * layout.len());
    for o in 0..layout.len() {
        let v = layout.var(o);
        let w = &layout.modes.half[v.mode];
        let val = a.0[o];
        out.insert((w.s, v.l, v.i), val);
        let mirrored = if v.i == 1 { -val } else { val };
        out.insert((w.negated().s, v.l, v.i), mirrored);
    }
    out
}

/// ψ(θ) = σ tanh(θ/σ) and g(x) = exp(−|x|²/(2w²)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mollifier {
    pub sigma_psi: f64,
    pub width_g: f64,
}

impl Mollifier {
    pub fn psi(&self, theta: f64) -> f64 {
        self.sigma_psi * (theta / self.sigma_psi).tanh()
    }

    pub fn dpsi(&self, theta: f64) -> f64 {
        let t = (theta / self.sigma_psi).tanh();
        1.0 - t * t
    }

    pub fn g(&self, x: &Vector3<f64>) -> f64 {
        (-x.norm_squared() / (2.0 * self.width_g * self.width_g)).exp()
    }

    pub fn grad_g(&self, x: &Vector3<f64>) -> Vector3<f64> {
        -x * (self.g(x) / (self.width_g * self.width_g))
    }
}

/// Everything needed to evaluate A, Ã and V₂.
#[derive(Debug, Clone)]
pub struct FieldModel {
    pub dims: BoxDims,
    pub layout: FieldLayout,
    pub frame: PolarizationFrame,
    pub hbar: f64,
    pub c: f64,
    pub mollifier: Mollifier,
}

impl FieldModel {
    pub fn from_config(cfg: &SimulationConfig) -> Result<Self> {
        let (modes, n_coupled) = build_field_modes(cfg)?;
        let frame = build_polarization(&modes)?;
        Ok(FieldModel {
            dims: BoxDims(cfg.box_lengths),
            layout: FieldLayout::new(modes, n_coupled),
            frame,
            hbar: cfg.hbar,
            c: cfg.c_light,
            mollifier: Mollifier {
                sigma_psi: cfg.sigma_psi,
                width_g: cfg.width_g,
            },
        })
    }

    pub fn volume(&self) -> f64 {
        self.dims.volume()
    }

    /// √(4π) c / |V| times the √2 from folding ±k onto Λ'.
    pub fn prefactor(&self) -> f64 {
        (4.0 * std::f64::consts::PI).sqrt() * self.c / self.volume() * std::f64::consts::SQRT_2
    }

    /// Frequency c|k| of a field variable.
    pub fn frequency(&self, offset: usize) -> f64 {
        self.c * self.layout.wave(offset).norm()
    }

    fn check_len(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.layout.len() {
            return Err(Error::Input(format!(
                "field vector has {} entries, layout needs {}",
                a.len(),
                self.layout.len()
            )));
        }
        Ok(())
    }

    fn mode_sum(&self, x: &Vector3<f64>, a: &[f64], amp: impl Fn(f64) -> f64) -> Vector3<f64> {
        let mut acc = Vector3::zeros();
        for m in 0..self.layout.n_coupled {
            let w = &self.layout.modes.half[m];
            let (sn, cs) = w.dot(x).sin_cos();
            for l in 1..=2 {
                let base = 4 * m + 2 * (l - 1);
                let coef = amp(a[base]) * cs + amp(a[base + 1]) * sn;
                acc += self.frame.e(w, l) * coef;
            }
        }
        acc
    }

    /// Vector potential over the coupling modes, no mollification.
    pub fn potential(&self, x: &Vector3<f64>, a: &FieldVector) -> Result<Vector3<f64>> {
        self.check_len(&a.0)?;
        Ok(self.mode_sum(x, &a.0, |t| t) * self.prefactor())
    }

    /// Mollified vector potential Ã(x, a).
    pub fn mollified(&self, x: &Vector3<f64>, a: &[f64]) -> Vector3<f64> {
        let mol = self.mollifier;
        self.mode_sum(x, a, |t| mol.psi(t)) * (self.prefactor() * mol.g(x))
    }

    pub fn mollified_checked(&self, x: &Vector3<f64>, a: &FieldVector) -> Result<Vector3<f64>> {
        self.check_len(&a.0)?;
        Ok(self.mollified(x, &a.0))
    }

    /// Spatial Jacobian J[(m, l)] = ∂Ã_l/∂x_m.
    pub fn mollified_grad_x(&self, x: &Vector3<f64>, a: &[f64]) -> Matrix3<f64> {
        let mol = self.mollifier;
        let g = mol.g(x);
        let dg = mol.grad_g(x);
        let mut sum = Vector3::zeros();
        let mut deriv = Matrix3::zeros();
        for m in 0..self.layout.n_coupled {
            let w = &self.layout.modes.half[m];
            let kv = w.vector();
            let (sn, cs) = w.dot(x).sin_cos();
            for l in 1..=2 {
                let base = 4 * m + 2 * (l - 1);
                let (p1, p2) = (mol.psi(a[base]), mol.psi(a[base + 1]));
                let e = self.frame.e(w, l);
                sum += e * (p1 * cs + p2 * sn);
                // ∂_m of the trig factor is k_m (−p1 sin + p2 cos)
                deriv += kv * e.transpose() * (-p1 * sn + p2 * cs);
            }
        }
        (dg * sum.transpose() + deriv * g) * self.prefactor()
    }

    /// ∂Ã/∂a for every field variable (zero outside Λ'₂).
    pub fn mollified_grad_a(&self, x: &Vector3<f64>, a: &[f64]) -> Vec<Vector3<f64>> {
        let mol = self.mollifier;
        let scale = self.prefactor() * mol.g(x);
        let mut out = vec![Vector3::zeros(); self.layout.len()];
        for m in 0..self.layout.n_coupled {
            let w = &self.layout.modes.half[m];
            let (sn, cs) = w.dot(x).sin_cos();
            for l in 1..=2 {
                let base = 4 * m + 2 * (l - 1);
                let e = self.frame.e(w, l);
                out[base] = e * (scale * mol.dpsi(a[base]) * cs);
                out[base + 1] = e * (scale * mol.dpsi(a[base + 1]) * sn);
            }
        }
        out
    }

    /// V₂(a) = Σ (c|k|)² a²/(2|V|) − ħc|k|/2 over all 4N variables.
    pub fn v2(&self, a: &[f64]) -> f64 {
        let vol = self.volume();
        (0..self.layout.len())
            .map(|o| {
                let w = self.frequency(o);
                w * w * a[o] * a[o] / (2.0 * vol) - 0.5 * self.hbar * w
            })
            .sum()
    }

    pub fn v2_checked(&self, a: &FieldVector) -> Result<f64> {
        self.check_len(&a.0)?;
        Ok(self.v2(&a.0))
    }

    pub fn grad_v2(&self, a: &[f64]) -> Vec<f64> {
        let vol = self.volume();
        (0..self.layout.len())
            .map(|o| {
                let w = self.frequency(o);
                w * w * a[o] / vol
            })
            .collect()
    }

    /// Zero-point offset Σ ħc|k|/2 (the minimum of V₂ is its negative).
    pub fn zero_point(&self) -> f64 {
        (0..self.layout.len())
            .map(|o| 0.5 * self.hbar * self.frequency(o))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(modes: Option<Vec<[i64; 3]>>, box_lengths: [f64; 3], width_g: f64) -> FieldModel {
        let cfg = SimulationConfig {
            box_lengths,
            modes,
            width_g,
            ..Default::default()
        };
        FieldModel::from_config(&cfg).unwrap()
    }

    fn tau() -> f64 {
        2.0 * std::f64::consts::PI
    }

    #[test]
    fn parity_extension_examples() {
        let m = model(Some(vec![[0, 0, 1]]), [tau(); 3], 1e8);
        let mut a = FieldVector::zeros(&m.layout);
        a.set(
            &m.layout,
            FieldVar {
                mode: 0,
                l: 1,
                i: 1,
            },
            1.0,
        );
        let map = extend_parity(&a, &m.layout);
        assert_eq!(map[&([0, 0, -1], 1, 1)], -1.0);
        let mut b = FieldVector::zeros(&m.layout);
        b.set(
            &m.layout,
            FieldVar {
                mode: 0,
                l: 1,
                i: 2,
            },
            1.0,
        );
        assert_eq!(extend_parity(&b, &m.layout)[&([0, 0, -1], 1, 2)], 1.0);
        let z = extend_parity(&FieldVector::zeros(&m.layout), &m.layout);
        assert!(z.values().all(|v| *v == 0.0));
    }

    #[test]
    fn layout_round_trip() {
        let m = model(None, [tau(); 3], 1e8);
        for o in 0..m.layout.len() {
            assert_eq!(m.layout.offset(m.layout.var(o)), o);
        }
    }

    #[test]
    fn single_cosine_coordinate() {
        let m = model(Some(vec![[1, 2, 0]]), [3.0, 4.0, 5.0], 1e8);
        let mut a = FieldVector::zeros(&m.layout);
        a.set(
            &m.layout,
            FieldVar {
                mode: 0,
                l: 1,
                i: 1,
            },
            1.0,
        );
        let w = m.layout.modes.half[0];
        let x = Vector3::new(0.3, -1.1, 2.0);
        let got = m.potential(&x, &a).unwrap();
        let want = m.frame.e(&w, 1)
            * ((8.0 * std::f64::consts::PI).sqrt() * m.c / m.volume() * w.dot(&x).cos());
        assert!((got - want).norm() < 1e-15);
        assert_eq!(
            m.potential(&x, &FieldVector::zeros(&m.layout)).unwrap(),
            Vector3::zeros()
        );
    }

    /// Complex Fourier form over all of Λ with a_{lk} = (a1 − i a2)/√2.
    fn complex_form(m: &FieldModel, x: &Vector3<f64>, a: &FieldVector) -> [Complex64; 3] {
        let coeffs = extend_parity(a, &m.layout);
        let pref = (4.0 * std::f64::consts::PI).sqrt() * m.c / m.volume();
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for w in &m.layout.modes.full {
            let phase = Complex64::new(0.0, w.dot(x)).exp();
            for l in 1..=2 {
                let alk = Complex64::new(coeffs[&(w.s, l, 1)], -coeffs[&(w.s, l, 2)])
                    / std::f64::consts::SQRT_2;
                let e = m.frame.e(w, l);
                for c in 0..3 {
                    out[c] += pref * alk * phase * e[c];
                }
            }
        }
        out
    }

    #[test]
    fn reality_against_complex_form() {
        let m = model(None, [tau(), 5.0, 7.0], 1e8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = FieldVector(
                (0..m.layout.len())
                    .map(|_| rng.gen_range(-2.0..2.0))
                    .collect(),
            );
            let x = Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let real = m.potential(&x, &a).unwrap();
            let cf = complex_form(&m, &x, &a);
            for c in 0..3 {
                assert!(cf[c].im.abs() < 1e-12, "imaginary residue {}", cf[c].im);
                assert!((cf[c].re - real[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coulomb_gauge_and_periodicity() {
        let m = model(None, [tau(), 5.0, 7.0], 1e8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = FieldVector(
            (0..m.layout.len())
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect(),
        );
        let h = 1e-4;
        let mut sup: f64 = 0.0;
        let mut worst: f64 = 0.0;
        for ix in 0..6 {
            for iy in 0..6 {
                for iz in 0..6 {
                    let x = Vector3::new(ix as f64 * 1.01, iy as f64 * 0.83, iz as f64 * 1.17);
                    let mut div = 0.0;
                    for c in 0..3 {
                        let mut dx = Vector3::zeros();
                        dx[c] = h;
                        div += (m.potential(&(x + dx), &a).unwrap()[c]
                            - m.potential(&(x - dx), &a).unwrap()[c])
                            / (2.0 * h);
                    }
                    let ax = m.potential(&x, &a).unwrap();
                    sup = sup.max(ax.amax());
                    worst = worst.max(div.abs());
                    let shifted = x + Vector3::new(m.dims.0[0], 0.0, 0.0);
                    assert!((m.potential(&shifted, &a).unwrap() - ax).amax() < 1e-12);
                }
            }
        }
        assert!(worst <= 1e-6 * sup, "divergence {worst} vs sup {sup}");
    }

    #[test]
    fn psi_damping_value_and_g_at_origin() {
        let mol = Mollifier {
            sigma_psi: 10.0,
            width_g: 3.0,
        };
        assert!((mol.psi(0.1) - 0.09999667).abs() < 5e-9);
        assert_eq!(mol.g(&Vector3::zeros()), 1.0);
        let m = model(Some(vec![[1, 0, 0], [0, 1, 1]]), [tau(); 3], 3.0);
        let a: Vec<f64> = (0..m.layout.len()).map(|i| 0.3 * i as f64 - 1.0).collect();
        let psi_a: Vec<f64> = a.iter().map(|t| m.mollifier.psi(*t)).collect();
        let at0 = m.mollified(&Vector3::zeros(), &a);
        let plain = m.potential(&Vector3::zeros(), &FieldVector(psi_a)).unwrap();
        assert!((at0 - plain).norm() < 1e-15);
    }

    #[test]
    fn v2_examples() {
        // one mode |k| = 1, ħ = c = 1
        let m = model(Some(vec![[0, 0, 1]]), [tau(); 3], 1e8);
        assert!((m.v2(&[0.0; 4]) + 2.0).abs() < 1e-15);
        let vol = m.volume();
        let mut a = [0.0; 4];
        a[2] = vol.sqrt();
        assert!((m.v2(&a) + 1.5).abs() < 1e-12);
        let b = [0.3, -0.2, 1.0, 0.5];
        let quad = |x: &[f64]| m.v2(x) + m.zero_point();
        let b2: Vec<f64> = b.iter().map(|t| 2.0 * t).collect();
        assert!((quad(&b2) - 4.0 * quad(&b)).abs() < 1e-12);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let m = model(Some(vec![[1, 0, 0], [1, 1, 0]]), [tau(), 5.0, 6.0], 4.0);
        let a = vec![0.4, -1.2, 2.0, 0.1, -0.3, 0.9, 1.7, -2.2];
        let x = Vector3::new(0.7, -0.4, 1.3);
        let h = 1e-6;
        let jx = m.mollified_grad_x(&x, &a);
        for mm in 0..3 {
            let mut dx = Vector3::zeros();
            dx[mm] = h;
            let fd = (m.mollified(&(x + dx), &a) - m.mollified(&(x - dx), &a)) / (2.0 * h);
            for l in 0..3 {
                assert!((fd[l] - jx[(mm, l)]).abs() < 1e-8);
            }
        }
        let ja = m.mollified_grad_a(&x, &a);
        for o in 0..a.len() {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[o] += h;
            am[o] -= h;
            let fd = (m.mollified(&x, &ap) - m.mollified(&x, &am)) / (2.0 * h);
            assert!((fd - ja[o]).norm() < 1e-8);
        }
        let gv = m.grad_v2(&a);
        for o in 0..a.len() {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[o] += h;
            am[o] -= h;
            assert!(((m.v2(&ap) - m.v2(&am)) / (2.0 * h) - gv[o]).abs() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn mollified_potential_is_odd_in_a(seed in 0u64..1000) {
            let m = model(None, [tau(), 4.0, 5.0], 3.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..m.layout.len()).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let neg: Vec<f64> = a.iter().map(|t| -t).collect();
            let x = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            prop_assert_eq!(m.mollified(&x, &neg), -m.mollified(&x, &a));
        }

        #[test]
        fn psi_is_odd_and_bounded(t in -1e3f64..1e3, sigma in 0.1f64..50.0) {
            let mol = Mollifier { sigma_psi: sigma, width_g: 1.0 };
            prop_assert_eq!(mol.psi(-t), -mol.psi(t));
            prop_assert!(mol.psi(t).abs() <= sigma);
        }

        #[test]
        fn v2_minimum_at_origin(seed in 0u64..1000) {
            let m = model(None, [tau(), 4.0, 5.0], 3.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..m.layout.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let zero = vec![0.0; m.layout.len()];
            prop_assert_eq!(m.v2(&zero), -m.zero_point());
            prop_assert!(m.v2(&a) >= m.v2(&zero));
        }
    }
}
