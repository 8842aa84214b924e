//! Exact per-variable one-step matrices for the decoupled quadratic case.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{apply_on_digit, StepBackend};
use crate::error::{Error, Result};
use crate::fock::{assemble_hamiltonian, FockSpace, Operator, ParticleBasis, StateVector};
use crate::hermite;

type C = Complex64;

/// Field variables (and optional uncharged particle) without coupling: the
/// one-step kernel is a product of quadratic-phase Gaussians.
#[derive(Debug)]
pub struct AnalyticBackend {
    pub fock: FockSpace,
    pub particle: Option<(ParticleBasis, f64)>,
    cache: Mutex<HashMap<(u64, u64), DMatrix<C>>>,
}

impl AnalyticBackend {
    /// Rejects any configuration where particles couple to the field.
    pub fn new(
        fock: FockSpace,
        charges: &[f64],
        particle: Option<(ParticleBasis, f64)>,
    ) -> Result<Self> {
        let coupled = fock.model.layout.n_coupled > 0 && charges.iter().any(|&e| e != 0.0);
        if coupled {
            return Err(Error::Unsupported(
                "the analytic-quadratic backend needs vanishing coupling (zero charges or no coupling modes)".into(),
            ));
        }
        if charges.len() > 1 || (charges.len() == 1 && particle.is_none()) {
            return Err(Error::Unsupported(
                "the analytic-quadratic backend handles at most one uncharged particle with a plane-wave basis".into(),
            ));
        }
        Ok(AnalyticBackend {
            fock,
            particle,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// One-step matrix ⟨h_m, C h_n⟩ for frequency ω and step ρ.
    pub fn variable_matrix(&self, omega: f64, rho: f64) -> DMatrix<C> {
        let key = (omega.to_bits(), rho.to_bits());
        if let Some(m) = self.cache.lock().expect("cache lock").get(&key) {
            return m.clone();
        }
        let m = quadratic_step_matrix(omega * rho, self.fock.basis.cap);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, m.clone());
        m
    }

    fn particle_dim(&self) -> usize {
        self.particle.as_ref().map_or(1, |(p, _)| p.len())
    }
}

/// Per-variable step matrix at dimensionless step τ = ωρ: kernel
/// (2πiτ)^{−1/2} e^{iτ/2} exp(i[(1/(2τ) − τ/6)(u² + v²) − (1/τ + τ/6)uv]).
pub fn quadratic_step_matrix(tau: f64, cap: usize) -> DMatrix<C> {
    let a = 0.5 / tau - tau / 6.0;
    let b = -1.0 / tau - tau / 6.0;
    let pref =
        (C::new(0.0, 2.0 * std::f64::consts::PI * tau)).powf(-0.5) * C::from_polar(1.0, 0.5 * tau);
    hermite::quadratic_phase_matrix(a, b, pref, cap)
}

impl StepBackend for AnalyticBackend {
    fn name(&self) -> &'static str {
        "analytic-quadratic"
    }

    fn dim(&self) -> usize {
        self.particle_dim() * self.fock.dim()
    }

    fn apply_step(&self, f: &StateVector, rho: f64) -> Result<StateVector> {
        let basis = &self.fock.basis;
        let levels = basis.cap + 1;
        let mut v = f.0.clone();
        for var in 0..basis.n_vars() {
            let m = self.variable_matrix(basis.frequencies[var], rho);
            apply_on_digit(&mut v, basis.stride(var), levels, &m);
        }
        if let Some((pb, mass)) = &self.particle {
            let fdim = self.fock.dim();
            let hbar = self.fock.model.hbar;
            let dims = self.fock.model.dims.0;
            for (p, n) in pb.momenta.iter().enumerate() {
                let q2: f64 = (0..3)
                    .map(|a| (2.0 * std::f64::consts::PI * n[a] as f64 / dims[a]).powi(2))
                    .sum();
                let phase = C::from_polar(1.0, -hbar * q2 * rho / (2.0 * mass));
                for j in 0..fdim {
                    v[p * fdim + j] *= phase;
                }
            }
        }
        Ok(StateVector(v))
    }

    fn hamiltonian(&self) -> Result<Operator> {
        match &self.particle {
            None => Ok(self.fock.h_rad()),
            Some((pb, mass)) => assemble_hamiltonian(&self.fock, &[*mass], &[0.0], pb),
        }
    }

    fn hbar(&self) -> f64 {
        self.fock.model.hbar
    }
}
