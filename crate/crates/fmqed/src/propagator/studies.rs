//! Studies built on the one-step operator: the ξ-integrated operator G_ε,
//! residual scaling, mesh convergence and norm growth.

use num_complex::Complex64;
use serde::Serialize;

use super::fresnel::{damped_fresnel, FRESNEL_EPSILONS};
use super::{compose_with_growth, fundamental_step, StepBackend};
use crate::action::Subdivision;
use crate::error::{Error, Result};
use crate::fock::{reference_evolve, StateVector};
use crate::lattice::ModeSet;
use crate::quadrature;

type C = Complex64;

/// ∫_{R²} e^{iρ|k|²|ξ|²/(4πħ|V|)} dξ in closed form.
pub fn xi_factor(k_sq: f64, rho: f64, hbar: f64, volume: f64) -> Result<C> {
    if !(k_sq > 0.0) || !(rho > 0.0) {
        return Err(Error::Input("xi factor needs |k|^2 > 0 and rho > 0".into()));
    }
    let pi = std::f64::consts::PI;
    Ok(C::new(0.0, 4.0 * pi * pi * hbar * volume / (k_sq * rho)))
}

/// Normalization times the damped ξ-integrals, over every Coulomb mode.
fn offset_factor(modes: &ModeSet, volume: f64, hbar: f64, rho: f64, eps: f64) -> Result<C> {
    let pi = std::f64::consts::PI;
    let mut acc = C::new(1.0, 0.0);
    for w in &modes.half {
        let b = rho * w.norm_sq() / (4.0 * pi * hbar * volume);
        let one = damped_fresnel(b, eps)?;
        acc *= b / C::new(0.0, pi) * one * one;
    }
    Ok(acc)
}

/// G_ε(t, s) f: the one-step operator with the scalar offsets integrated
/// under the damping e^{−ε²|ξ|²}.
#[allow(clippy::too_many_arguments)]
pub fn g_epsilon_step(
    backend: &dyn StepBackend,
    coulomb_modes: &ModeSet,
    volume: f64,
    f: &StateVector,
    t: f64,
    s: f64,
    eps: f64,
) -> Result<StateVector> {
    let base = fundamental_step(backend, f, t, s)?;
    if t == s || coulomb_modes.half.is_empty() {
        return Ok(base);
    }
    let factor = offset_factor(coulomb_modes, volume, backend.hbar(), t - s, eps)?;
    Ok(StateVector(base.0 * factor))
}

/// G_ε extrapolated to ε → 0 from the standard damping ladder.
pub fn g_epsilon_extrapolated(
    backend: &dyn StepBackend,
    coulomb_modes: &ModeSet,
    volume: f64,
    f: &StateVector,
    t: f64,
    s: f64,
) -> Result<StateVector> {
    let base = fundamental_step(backend, f, t, s)?;
    if t == s || coulomb_modes.half.is_empty() {
        return Ok(base);
    }
    let rho = t - s;
    let factors = FRESNEL_EPSILONS
        .iter()
        .map(|&e| offset_factor(coulomb_modes, volume, backend.hbar(), rho, e))
        .collect::<Result<Vec<C>>>()?;
    let x: Vec<f64> = FRESNEL_EPSILONS.iter().map(|e| e * e).collect();
    let factor = quadrature::extrapolate_to_zero(&x, &factors);
    Ok(StateVector(base.0 * factor))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualRow {
    pub rho: f64,
    /// ‖(iħD_t − H)C(s+ρ, s)f‖/‖f‖ with difference step 1e−3 ρ.
    pub residual: f64,
    /// Same with half the difference step.
    pub residual_half_step: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualTable {
    pub rows: Vec<ResidualRow>,
    /// Least-squares slope of ln residual against ln ρ.
    pub slope: f64,
}

impl ResidualTable {
    pub fn is_monotone(&self) -> bool {
        let mut sorted = self.rows.clone();
        sorted.sort_by(|a, b| a.rho.total_cmp(&b.rho));
        sorted.windows(2).all(|w| w[0].residual <= w[1].residual)
    }
}

const FD_FRACTION: f64 = 1e-3;

pub fn residual_study(
    backend: &dyn StepBackend,
    f: &StateVector,
    rhos: &[f64],
) -> Result<ResidualTable> {
    if rhos.len() < 2 {
        return Err(Error::Input(
            "residual study needs at least two step sizes".into(),
        ));
    }
    let h_op = backend.hamiltonian()?;
    let hbar = backend.hbar();
    let norm = f.norm();
    if norm == 0.0 {
        return Err(Error::Input("residual study needs a nonzero state".into()));
    }
    let residual = |rho: f64, h: f64| -> Result<f64> {
        let plus = fundamental_step(backend, f, rho + h, 0.0)?;
        let minus = fundamental_step(backend, f, rho - h, 0.0)?;
        let mid = fundamental_step(backend, f, rho, 0.0)?;
        let dt = (plus.0 - minus.0) * C::new(0.0, hbar / (2.0 * h));
        Ok((dt - h_op.apply(&mid.0)).norm() / norm)
    };
    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        if !(rho > 0.0) {
            return Err(Error::Input(format!(
                "step sizes must be positive, got {rho}"
            )));
        }
        let h = FD_FRACTION * rho;
        rows.push(ResidualRow {
            rho,
            residual: residual(rho, h)?,
            residual_half_step: residual(rho, 0.5 * h)?,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.rho.ln(), r.residual.max(1e-300).ln()))
        .collect();
    Ok(ResidualTable {
        slope: least_squares_slope(&pts),
        rows,
    })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// K = max(0, max ln(growth)/ρ) so that every step grows by at most e^{Kρ}.
pub fn fit_growth(growth: &[(f64, f64)]) -> f64 {
    growth
        .iter()
        .filter(|(rho, _)| *rho > 0.0)
        .map(|(rho, g)| g.ln() / rho)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub mesh: f64,
    /// ‖C_Δ f − reference‖/‖f‖.
    pub error: f64,
    /// log₂ of the error ratio to the previous (coarser) row.
    pub order: Option<f64>,
    pub growth_k: f64,
}

/// Composed steps on uniform meshes of [0, T] against spectral evolution
/// under the backend's Hamiltonian.
pub fn convergence_study(
    backend: &dyn StepBackend,
    f: &StateVector,
    t_final: f64,
    steps: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    let h = backend.hamiltonian()?;
    let exact = reference_evolve(&h, f, t_final, backend.hbar())?;
    let norm = f.norm();
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(steps.len());
    for &n in steps {
        let sub = Subdivision::uniform(0.0, t_final, n)?;
        let (out, growth) = compose_with_growth(backend, f, &sub)?;
        let error = out.distance(&exact) / norm;
        let order = rows.last().map(|prev: &ConvergenceRow| {
            (prev.error / error).ln() / (n as f64 / prev.steps as f64).ln()
        });
        rows.push(ConvergenceRow {
            steps: n,
            mesh: sub.mesh(),
            error,
            order,
            growth_k: fit_growth(&growth),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimulationConfig;
    use crate::field::FieldModel;
    use crate::fock::FockSpace;
    use crate::lattice::BoxDims;
    use crate::propagator::{fresnel_gaussian, AnalyticBackend};

    fn backend(cap: usize) -> AnalyticBackend {
        let cfg = SimulationConfig {
            modes: Some(vec![[0, 0, 1]]),
            ..Default::default()
        };
        let fock = FockSpace::new(&FieldModel::from_config(&cfg).unwrap(), cap).unwrap();
        AnalyticBackend::new(fock, &[], None).unwrap()
    }

    #[test]
    fn xi_factor_is_squared_fresnel() {
        for (k_sq, rho) in [(1.0, 0.1), (7.3, 0.02), (0.4, 1.5)] {
            let (hbar, vol) = (1.0, 250.0);
            let b = rho * k_sq / (4.0 * std::f64::consts::PI * hbar * vol);
            let want = fresnel_gaussian(b).unwrap().powi(2);
            let got = xi_factor(k_sq, rho, hbar, vol).unwrap();
            assert!((got - want).norm() < 1e-10 * want.norm());
        }
    }

    #[test]
    fn g_epsilon_matches_step_after_extrapolation() {
        let b = backend(4);
        let dims = BoxDims::cube(2.0 * std::f64::consts::PI);
        let modes = ModeSet::from_list(&dims, &[[0, 0, 1]]).unwrap();
        let f = b.fock.vacuum();
        let c = fundamental_step(&b, &f, 0.3, 0.1).unwrap();
        let g = g_epsilon_extrapolated(&b, &modes, dims.volume(), &f, 0.3, 0.1).unwrap();
        assert!(g.distance(&c) < 1e-6, "{}", g.distance(&c));
        let empty = ModeSet::from_list(&dims, &[]).unwrap();
        let g0 = g_epsilon_step(&b, &empty, dims.volume(), &f, 0.3, 0.1, 0.1).unwrap();
        assert_eq!(g0, c);
    }

    #[test]
    fn residual_shrinks_with_step() {
        let b = backend(8);
        let f = b.fock.photon_state(&[([0, 0, 1], 1, 1)]).unwrap();
        let rhos: Vec<f64> = (3..=9).map(|p| 2f64.powi(-p)).collect();
        let table = residual_study(&b, &f, &rhos).unwrap();
        assert!(table.is_monotone());
        assert!(table.slope >= 0.5, "{}", table.slope);
    }

    #[test]
    fn growth_fit_is_nonnegative() {
        assert_eq!(fit_growth(&[(0.1, 0.9), (0.2, 1.0)]), 0.0);
        let k = fit_growth(&[(0.1, 1.01), (0.2, 1.001)]);
        assert!((k - 1.01f64.ln() / 0.1).abs() < 1e-15);
    }

    #[test]
    fn convergence_improves_under_halving() {
        let b = backend(4);
        let f = b.fock.photon_state(&[([0, 0, 1], 1, 1)]).unwrap();
        let omega = b.fock.basis.frequencies[0];
        let t = std::f64::consts::PI / (2.0 * omega);
        let rows = convergence_study(&b, &f, t, &[4, 8, 16, 32]).unwrap();
        assert!(rows.windows(2).all(|w| w[1].error < w[0].error));
    }
}
