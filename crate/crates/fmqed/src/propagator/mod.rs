//! The one-step operator C(t, s), its compositions, and the stability and
//! equivalence diagnostics around it.

mod analytic;
mod fresnel;
mod galerkin;
mod phi;
mod studies;

pub use analytic::{quadratic_step_matrix, AnalyticBackend};
pub use fresnel::{damped_fresnel, fresnel_extrapolated, fresnel_gaussian, FRESNEL_EPSILONS};
pub use galerkin::{GalerkinBackend, GalerkinParams};
pub use phi::{phi_maps, rho_star_search, Certificate, PhiMapPoint, RhoStarReport, SampleBox};
pub use studies::{
    convergence_study, fit_growth, g_epsilon_extrapolated, g_epsilon_step, residual_study,
    xi_factor, ConvergenceRow, ResidualRow, ResidualTable,
};

use crate::action::Subdivision;
use crate::error::{Error, Result};
use crate::fock::{Operator, StateVector};

/// A realization of the one-step operator on a truncated basis.
pub trait StepBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    /// C(s + rho, s) f for rho > 0.
    fn apply_step(&self, f: &StateVector, rho: f64) -> Result<StateVector>;

    /// The Hamiltonian the sliced evolution should converge to, on the same basis.
    fn hamiltonian(&self) -> Result<Operator>;

    fn hbar(&self) -> f64;
}

/// C(t, s) f; the identity when t = s.
pub fn fundamental_step(
    backend: &dyn StepBackend,
    f: &StateVector,
    t: f64,
    s: f64,
) -> Result<StateVector> {
    if f.len() != backend.dim() {
        return Err(Error::Input(format!(
            "state has {} entries, backend basis has {}",
            f.len(),
            backend.dim()
        )));
    }
    if t == s {
        return Ok(f.clone());
    }
    if !(t > s) {
        return Err(Error::Input(format!(
            "one step needs t >= s, got t={t}, s={s}"
        )));
    }
    backend.apply_step(f, t - s)
}

/// C(τ_ν, τ_{ν−1}) ⋯ C(τ₁, τ₀) f.
pub fn compose(
    backend: &dyn StepBackend,
    f: &StateVector,
    subdivision: &Subdivision,
) -> Result<StateVector> {
    let mut state = f.clone();
    let times = subdivision.times();
    for w in times.windows(2) {
        state = fundamental_step(backend, &state, w[1], w[0])?;
    }
    Ok(state)
}

/// Same as [`compose`], also returning the per-step norm growth factors.
pub fn compose_with_growth(
    backend: &dyn StepBackend,
    f: &StateVector,
    subdivision: &Subdivision,
) -> Result<(StateVector, Vec<(f64, f64)>)> {
    let mut state = f.clone();
    let mut growth = Vec::with_capacity(subdivision.steps());
    for (t, s) in subdivision.segments() {
        let before = state.norm();
        state = fundamental_step(backend, &state, t, s)?;
        if before > 0.0 {
            growth.push((t - s, state.norm() / before));
        }
    }
    Ok((state, growth))
}

/// Apply a single-variable matrix to digit `stride` (of `levels` values) of
/// every index.
pub(crate) fn apply_on_digit(
    state: &mut nalgebra::DVector<crate::Complex64>,
    stride: usize,
    levels: usize,
    m: &nalgebra::DMatrix<crate::Complex64>,
) {
    let block = stride * levels;
    let mut gathered = nalgebra::DVector::zeros(levels);
    for outer in 0..state.len() / block {
        for inner in 0..stride {
            let base = outer * block + inner;
            for j in 0..levels {
                gathered[j] = state[base + j * stride];
            }
            let out = m * &gathered;
            for j in 0..levels {
                state[base + j * stride] = out[j];
            }
        }
    }
}
