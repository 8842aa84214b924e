//! Classical actions along straight segments and broken-line paths.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::Serialize;

use crate::config::SimulationConfig;
use crate::coulomb::potential_v1;
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::lattice::{build_mode_set, ModeRole, ModeSet, WaveVector};
use crate::quadrature::{self, Tolerance};

/// Time partition s = τ₀ < τ₁ < … < τ_ν = t.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subdivision {
    times: Vec<f64>,
}

impl Subdivision {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Input(
                "a subdivision needs at least two times".into(),
            ));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input(
                "subdivision times must be finite and strictly increasing".into(),
            ));
        }
        Ok(Subdivision { times })
    }

    /// `steps` equal steps on [start, end].
    pub fn uniform(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Input("at least one step is required".into()));
        }
        let h = (end - start) / steps as f64;
        let mut times: Vec<f64> = (0..steps).map(|i| start + h * i as f64).collect();
        times.push(end);
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// (τ_l, τ_{l−1}) for l = 1..ν.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.windows(2).map(|w| (w[1], w[0]))
    }

    /// Insert every midpoint.
    pub fn refined(&self) -> Self {
        let mut times = Vec::with_capacity(2 * self.times.len() - 1);
        for w in self.times.windows(2) {
            times.push(w[0]);
            times.push(0.5 * (w[0] + w[1]));
        }
        times.push(*self.times.last().expect("nonempty"));
        Subdivision { times }
    }
}

/// Particle and field vertices at the subdivision times.
#[derive(Debug, Clone)]
pub struct BrokenPath {
    pub subdivision: Subdivision,
    pub particles: Vec<Vec<Vector3<f64>>>,
    pub fields: Vec<Vec<f64>>,
    /// Scalar offsets ξ_k ∈ R² per Λ'₁ mode, one list per segment.
    pub offsets: Option<Vec<Vec<[f64; 2]>>>,
}

fn lerp_slice(a: &[f64], b: &[f64], w: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p + w * (q - p)).collect()
}

impl BrokenPath {
    pub fn new(
        subdivision: Subdivision,
        particles: Vec<Vec<Vector3<f64>>>,
        fields: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = subdivision.times.len();
        if particles.len() != n || fields.len() != n {
            return Err(Error::Input(format!(
                "path has {} particle and {} field vertices for {} times",
                particles.len(),
                fields.len(),
                n
            )));
        }
        Ok(BrokenPath {
            subdivision,
            particles,
            fields,
            offsets: None,
        })
    }

    /// Piecewise-linear evaluation; vertices are returned exactly.
    pub fn eval(&self, tau: f64) -> Result<(Vec<Vector3<f64>>, Vec<f64>)> {
        let t = &self.subdivision.times;
        if tau < t[0] || tau > t[t.len() - 1] {
            return Err(Error::Input(format!(
                "time {tau} outside [{}, {}]",
                t[0],
                t[t.len() - 1]
            )));
        }
        if let Some(i) = t.iter().position(|&v| v == tau) {
            return Ok((self.particles[i].clone(), self.fields[i].clone()));
        }
        let i = t.partition_point(|&v| v < tau) - 1;
        let w = (tau - t[i]) / (t[i + 1] - t[i]);
        let x = self.particles[i]
            .iter()
            .zip(&self.particles[i + 1])
            .map(|(p, q)| p + (q - p) * w)
            .collect();
        Ok((x, lerp_slice(&self.fields[i], &self.fields[i + 1], w)))
    }

    /// Path with every segment split at its straight-line midpoint.
    pub fn refined(&self) -> Result<Self> {
        let sub = self.subdivision.refined();
        let mut particles = Vec::new();
        let mut fields = Vec::new();
        for &tau in sub.times() {
            let (x, a) = self.eval(tau)?;
            particles.push(x);
            fields.push(a);
        }
        BrokenPath::new(sub, particles, fields)
    }
}

/// Separate contributions to one segment action.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ActionTerms {
    pub kinetic: f64,
    pub coulomb: f64,
    pub gauge: f64,
    pub field_kinetic: f64,
    pub field_potential: f64,
}

impl ActionTerms {
    pub fn total(&self) -> f64 {
        self.kinetic + self.coulomb + self.gauge + self.field_kinetic + self.field_potential
    }
}

/// Everything needed to evaluate the constrained action.
#[derive(Debug, Clone)]
pub struct ActionModel {
    pub field: FieldModel,
    pub coulomb_modes: ModeSet,
    pub masses: Vec<f64>,
    pub charges: Vec<f64>,
    pub tol: Tolerance,
}

impl ActionModel {
    pub fn from_config(cfg: &SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ActionModel {
            field: FieldModel::from_config(cfg)?,
            coulomb_modes: build_mode_set(cfg, ModeRole::Coulomb)?,
            masses: cfg.masses.clone(),
            charges: cfg.charges.clone(),
            tol: Tolerance {
                rel: 1e-12,
                abs: 1e-13,
                max_depth: 30,
            },
        })
    }

    pub fn n_particles(&self) -> usize {
        self.masses.len()
    }

    fn check(
        &self,
        t: f64,
        s: f64,
        x: &[Vector3<f64>],
        y: &[Vector3<f64>],
        xa: &[f64],
        ya: &[f64],
    ) -> Result<()> {
        if !(t > s) {
            return Err(Error::Input(format!(
                "segment needs t > s, got t={t}, s={s}"
            )));
        }
        let n = self.n_particles();
        if x.len() != n || y.len() != n {
            return Err(Error::Input(format!("expected {n} particle positions")));
        }
        let m = self.field.layout.len();
        if xa.len() != m || ya.len() != m {
            return Err(Error::Input(format!("expected {m} field coordinates")));
        }
        Ok(())
    }

    pub fn v1(&self, x: &[Vector3<f64>]) -> f64 {
        potential_v1(x, &self.charges, &self.coulomb_modes, &self.field.dims)
    }

    /// Terms of the straight-segment action from (y, Y) at s to (x, X) at t.
    pub fn segment_terms(
        &self,
        t: f64,
        s: f64,
        x: &[Vector3<f64>],
        y: &[Vector3<f64>],
        xa: &[f64],
        ya: &[f64],
    ) -> Result<ActionTerms> {
        self.check(t, s, x, y, xa, ya)?;
        let rho = t - s;
        let vol = self.field.volume();
        let kinetic = self
            .masses
            .iter()
            .zip(x.iter().zip(y))
            .map(|(m, (p, q))| m * (p - q).norm_squared())
            .sum::<f64>()
            / (2.0 * rho);
        let field_kinetic = xa
            .iter()
            .zip(ya)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            / (2.0 * vol * rho);

        let coulomb = if self.n_particles() >= 2 && self.charges.iter().any(|&e| e != 0.0) {
            let f = |th: f64| {
                let pts: Vec<_> = x.iter().zip(y).map(|(p, q)| p - (p - q) * th).collect();
                self.v1(&pts)
            };
            -rho * quadrature::adaptive(&f, 0.0, 1.0, self.tol)?
        } else {
            0.0
        };

        let v2 = |th: f64| self.field.v2(&lerp_slice(xa, ya, th));
        let field_potential = -rho * quadrature::adaptive(&v2, 0.0, 1.0, self.tol)?;

        let mut gauge = 0.0;
        if self.field.layout.n_coupled > 0 {
            for (j, e) in self.charges.iter().enumerate() {
                if *e == 0.0 {
                    continue;
                }
                let d = x[j] - y[j];
                let f = |th: f64| {
                    self.field
                        .mollified(&(x[j] - d * th), &lerp_slice(xa, ya, th))
                };
                let line = quadrature::adaptive(&f, 0.0, 1.0, self.tol)?;
                gauge += e / self.field.c * d.dot(&line);
            }
        }
        Ok(ActionTerms {
            kinetic,
            coulomb,
            gauge,
            field_kinetic,
            field_potential,
        })
    }

    pub fn segment_action(
        &self,
        t: f64,
        s: f64,
        x: &[Vector3<f64>],
        y: &[Vector3<f64>],
        xa: &[f64],
        ya: &[f64],
    ) -> Result<f64> {
        Ok(self.segment_terms(t, s, x, y, xa, ya)?.total())
    }

    /// Sum of segment actions along a broken-line path.
    pub fn broken_action(&self, path: &BrokenPath) -> Result<f64> {
        let mut total = 0.0;
        for (l, (t, s)) in path.subdivision.segments().enumerate() {
            let seg = self.segment_action(
                t,
                s,
                &path.particles[l + 1],
                &path.particles[l],
                &path.fields[l + 1],
                &path.fields[l],
            )?;
            total += match &path.offsets {
                Some(xi) => seg + self.offset_term(t - s, &xi[l])?,
                None => seg,
            };
        }
        Ok(total)
    }

    fn offset_term(&self, rho: f64, xi: &[[f64; 2]]) -> Result<f64> {
        if xi.len() != self.coulomb_modes.n_half() {
            return Err(Error::Input(format!(
                "expected {} scalar offsets, got {}",
                self.coulomb_modes.n_half(),
                xi.len()
            )));
        }
        let sum: f64 = self
            .coulomb_modes
            .half
            .iter()
            .zip(xi)
            .map(|(w, z)| w.norm_sq() * (z[0] * z[0] + z[1] * z[1]))
            .sum();
        Ok(rho / (4.0 * PI * self.field.volume()) * sum)
    }

    /// Segment action along the path shifted by scalar offsets ξ_k.
    #[allow(clippy::too_many_arguments)]
    pub fn phi_path_action(
        &self,
        t: f64,
        s: f64,
        x: &[Vector3<f64>],
        y: &[Vector3<f64>],
        xa: &[f64],
        ya: &[f64],
        xi: &[[f64; 2]],
    ) -> Result<f64> {
        let base = self.segment_action(t, s, x, y, xa, ya)?;
        Ok(base + self.offset_term(t - s, xi)?)
    }
}

/// Action contribution of external potentials along the straight segment.
/// Potentials are sampled at the matching time t − θ(t − s).
pub fn external_field_terms(
    t: f64,
    s: f64,
    x: &[Vector3<f64>],
    y: &[Vector3<f64>],
    charges: &[f64],
    c_light: f64,
    a_ex: &(dyn Fn(f64, &Vector3<f64>) -> Vector3<f64> + Sync),
    phi_ex: &(dyn Fn(f64, &Vector3<f64>) -> f64 + Sync),
) -> Result<f64> {
    if !(t > s) {
        return Err(Error::Input(format!(
            "segment needs t > s, got t={t}, s={s}"
        )));
    }
    let tol = Tolerance::default();
    let rho = t - s;
    let mut total = 0.0;
    for ((p, q), e) in x.iter().zip(y).zip(charges) {
        if *e == 0.0 {
            continue;
        }
        let d = p - q;
        let line =
            quadrature::adaptive(&|th: f64| a_ex(t - th * rho, &(p - d * th)), 0.0, 1.0, tol)?;
        let scalar = quadrature::adaptive(
            &|th: f64| phi_ex(t - th * rho, &(p - d * th)),
            0.0,
            1.0,
            tol,
        )?;
        total += e * (d.dot(&line) / c_light - rho * scalar);
    }
    Ok(total)
}

/// Both sides of the scalar-potential elimination identity at one k.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstraintSides {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn constraint_identity_check(
    x: &[Vector3<f64>],
    charges: &[f64],
    k: &WaveVector,
) -> Result<ConstraintSides> {
    let k2 = k.norm_sq();
    if k2 == 0.0 {
        return Err(Error::Input("constraint identity needs k != 0".into()));
    }
    let rho1: f64 = x.iter().zip(charges).map(|(p, e)| e * k.dot(p).cos()).sum();
    let rho2: f64 = x.iter().zip(charges).map(|(p, e)| e * k.dot(p).sin()).sum();
    let mut lhs = 16.0 * PI * PI * charges.iter().map(|e| e * e).sum::<f64>() / k2;
    for r in [rho1, rho2] {
        let phi = 4.0 * PI * r / k2;
        lhs += k2 * phi * phi - 8.0 * PI * r * phi;
    }
    let mut pair = 0.0;
    for j in 0..x.len() {
        for l in 0..x.len() {
            if j != l {
                pair += charges[j] * charges[l] * k.dot(&(x[j] - x[l])).cos();
            }
        }
    }
    Ok(ConstraintSides {
        lhs,
        rhs: -16.0 * PI * PI / k2 * pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BoxDims;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn decoupled_one_mode() -> ActionModel {
        let cfg = SimulationConfig {
            modes: Some(vec![[0, 0, 1]]),
            n_particles: 1,
            masses: vec![1.0],
            charges: vec![0.0],
            ..Default::default()
        };
        ActionModel::from_config(&cfg).unwrap()
    }

    fn coupled() -> ActionModel {
        let cfg = SimulationConfig {
            box_lengths: [5.0, 6.0, 7.0],
            modes_coulomb: Some(vec![[1, 0, 0], [0, 1, 1]]),
            modes_coupling: Some(vec![[0, 0, 1]]),
            modes_field: Some(vec![[0, 0, 1], [1, 1, 0]]),
            n_particles: 2,
            masses: vec![1.0, 2.0],
            charges: vec![1.5, -0.7],
            sigma_psi: 3.0,
            width_g: 4.0,
            ..Default::default()
        };
        ActionModel::from_config(&cfg).unwrap()
    }

    fn random_point(model: &ActionModel, rng: &mut ChaCha8Rng) -> (Vec<Vector3<f64>>, Vec<f64>) {
        let x = (0..model.n_particles())
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                )
            })
            .collect();
        let a = (0..model.field.layout.len())
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        (x, a)
    }

    #[test]
    fn decoupled_hand_value() {
        let m = decoupled_one_mode();
        let x = [Vector3::new(1.0, 0.0, 0.0)];
        let y = [Vector3::zeros()];
        let z = vec![0.0; 4];
        let s = m.segment_action(1.0, 0.0, &x, &y, &z, &z).unwrap();
        assert!((s - 2.5).abs() < 1e-10);
    }

    #[test]
    fn zero_displacement_is_minus_potential() {
        let m = coupled();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, a) = random_point(&m, &mut rng);
        let mut m0 = m.clone();
        m0.charges = vec![0.0, 0.0];
        let s = m0.segment_action(0.7, 0.2, &x, &x, &a, &a).unwrap();
        assert!((s + 0.5 * m0.field.v2(&a)).abs() < 1e-12);
        let s = m.segment_action(0.7, 0.2, &x, &x, &a, &a).unwrap();
        assert!((s + 0.5 * (m.v1(&x) + m.field.v2(&a))).abs() < 1e-11);
    }

    #[test]
    fn reversal_flips_only_the_gauge_term() {
        let m = coupled();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, xa) = random_point(&m, &mut rng);
        let (y, ya) = random_point(&m, &mut rng);
        let f = m.segment_terms(1.0, 0.6, &x, &y, &xa, &ya).unwrap();
        let b = m.segment_terms(1.0, 0.6, &y, &x, &ya, &xa).unwrap();
        assert!(f.gauge.abs() > 1e-6);
        assert!((f.gauge + b.gauge).abs() < 1e-12);
        for (p, q) in [
            (f.kinetic, b.kinetic),
            (f.coulomb, b.coulomb),
            (f.field_kinetic, b.field_kinetic),
            (f.field_potential, b.field_potential),
        ] {
            assert!((p - q).abs() < 1e-12 * p.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_times() {
        let m = decoupled_one_mode();
        let z = vec![0.0; 4];
        let x = [Vector3::zeros()];
        assert!(m.segment_action(0.0, 0.0, &x, &x, &z, &z).is_err());
        assert!(Subdivision::new(vec![0.0, 0.5, 0.5]).is_err());
    }

    fn random_path(m: &ActionModel, steps: usize, seed: u64) -> BrokenPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = Subdivision::uniform(0.0, 1.3, steps).unwrap();
        let (mut xs, mut fs) = (Vec::new(), Vec::new());
        for _ in 0..=steps {
            let (x, a) = random_point(m, &mut rng);
            xs.push(x);
            fs.push(a);
        }
        BrokenPath::new(sub, xs, fs).unwrap()
    }

    #[test]
    fn midpoint_refinement_and_additivity() {
        let m = coupled();
        let path = random_path(&m, 3, 9);
        let total = m.broken_action(&path).unwrap();
        let fine = m.broken_action(&path.refined().unwrap()).unwrap();
        assert!(
            (total - fine).abs() < 1e-10 * total.abs().max(1.0),
            "{total} {fine}"
        );
        let mut hand = 0.0;
        for l in 0..3 {
            let (t, s) = (path.subdivision.times()[l + 1], path.subdivision.times()[l]);
            hand += m
                .segment_action(
                    t,
                    s,
                    &path.particles[l + 1],
                    &path.particles[l],
                    &path.fields[l + 1],
                    &path.fields[l],
                )
                .unwrap();
        }
        assert_eq!(hand, total);
    }

    #[test]
    fn vertices_evaluate_exactly() {
        let m = coupled();
        let path = random_path(&m, 4, 2);
        for (i, &t) in path.subdivision.times().iter().enumerate() {
            let (x, a) = path.eval(t).unwrap();
            assert_eq!(x, path.particles[i]);
            assert_eq!(a, path.fields[i]);
        }
    }

    #[test]
    fn offset_term_values() {
        let cfg = SimulationConfig {
            box_lengths: [2.0 * PI; 3],
            modes: Some(vec![[0, 0, 1]]),
            ..Default::default()
        };
        let m = ActionModel::from_config(&cfg).unwrap();
        let z = vec![0.0; 4];
        let base = m.segment_action(1.0, 0.0, &[], &[], &z, &z).unwrap();
        let amp = (4.0 * PI * m.field.volume()).sqrt();
        let xi = [[amp * 0.6, amp * 0.8]];
        let with = m.phi_path_action(1.0, 0.0, &[], &[], &z, &z, &xi).unwrap();
        assert!((with - base - 1.0).abs() < 1e-12);
        let neg = [[-xi[0][0], -xi[0][1]]];
        assert_eq!(
            with,
            m.phi_path_action(1.0, 0.0, &[], &[], &z, &z, &neg).unwrap()
        );
        assert_eq!(
            base,
            m.phi_path_action(1.0, 0.0, &[], &[], &z, &z, &[[0.0, 0.0]])
                .unwrap()
        );
    }

    #[test]
    fn external_terms() {
        let x = [Vector3::new(1.0, 2.0, 0.5)];
        let y = [Vector3::new(-0.5, 0.0, 0.0)];
        let v = external_field_terms(
            2.0,
            0.5,
            &x,
            &y,
            &[2.0],
            1.0,
            &|_, _| Vector3::zeros(),
            &|_, _| 0.3,
        )
        .unwrap();
        assert!((v + 1.5 * 2.0 * 0.3).abs() < 1e-14);
        let v = external_field_terms(
            2.0,
            0.5,
            &x,
            &y,
            &[2.0],
            4.0,
            &|_, _| Vector3::new(0.7, 0.0, 0.0),
            &|_, _| 0.0,
        )
        .unwrap();
        assert!((v - 2.0 / 4.0 * 0.7 * 1.5).abs() < 1e-14);
        let v =
            external_field_terms(2.0, 0.5, &x, &y, &[0.0], 1.0, &|_, p| *p, &|_, p| p.x).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn constraint_identity_examples() {
        let dims = BoxDims::cube(2.0 * PI);
        let k = WaveVector::new([0, 0, 1], &dims);
        let x = [Vector3::new(0.3, 0.0, 0.1), Vector3::new(-1.0, 2.0, 0.1)];
        let r = constraint_identity_check(&x, &[1.0, 1.0], &k).unwrap();
        assert!((r.lhs + 32.0 * PI * PI).abs() < 1e-10 && (r.rhs + 32.0 * PI * PI).abs() < 1e-10);
        let r = constraint_identity_check(&x[..1], &[1.0], &k).unwrap();
        assert!(r.lhs.abs() < 1e-12 && r.rhs == 0.0);
    }

    proptest! {
        #[test]
        fn constraint_identity_holds(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = BoxDims([rng.gen_range(1.0..10.0), rng.gen_range(1.0..10.0), rng.gen_range(1.0..10.0)]);
            let s = [rng.gen_range(1..4), rng.gen_range(-3..4), rng.gen_range(-3..4)];
            let k = WaveVector::new(s, &dims);
            let n = rng.gen_range(1..6);
            let x: Vec<_> = (0..n).map(|_| Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))).collect();
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let r = constraint_identity_check(&x, &q, &k).unwrap();
            let scale = 16.0 * PI * PI / k.norm_sq() * q.iter().map(|e| e.abs()).sum::<f64>().powi(2);
            prop_assert!((r.lhs - r.rhs).abs() <= 1e-10 * r.rhs.abs().max(scale * 1e-3));
        }

        #[test]
        fn kinetic_positivity(seed in 0u64..200) {
            let mut m = coupled();
            m.charges = vec![0.0, 0.0];
            let mut path = random_path(&m, 3, seed);
            // zero field potential: freeze the field
            for f in path.fields.iter_mut() { f.iter_mut().for_each(|v| *v = 0.0); }
            let total = m.broken_action(&path).unwrap() - 1.3 * m.field.zero_point();
            prop_assert!(total >= 0.0);
        }
    }
}
