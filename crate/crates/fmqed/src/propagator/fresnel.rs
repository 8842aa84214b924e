//! The Gaussian Fresnel integral and its damped quadrature.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature;

/// Damping parameters used for ε → 0 extrapolation.
pub const FRESNEL_EPSILONS: [f64; 3] = [0.1, 0.05, 0.025];

/// ∫ e^{iaθ²} dθ = √(π/a) e^{iπ/4}.
pub fn fresnel_gaussian(a: f64) -> Result<Complex64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Input(format!(
            "Fresnel parameter must be positive, got {a}"
        )));
    }
    Ok(Complex64::from_polar((PI / a).sqrt(), PI / 4.0))
}

/// ∫ e^{(i − ε²)η²} dη over R, by Gauss–Legendre between consecutive phase
/// zeros √(jπ) until the damping is below 1e−18.
fn damped_unit(eps: f64) -> Complex64 {
    static CACHE: OnceLock<Mutex<HashMap<u64, Complex64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("cache lock").get(&eps.to_bits()) {
        return *v;
    }
    let e2 = eps * eps;
    let reach = (41.5f64).sqrt() / eps;
    let segments = (reach * reach / PI).ceil() as usize + 1;
    let f = |x: f64| Complex64::new(-e2 * x * x, x * x).exp();
    let mut parts = Vec::with_capacity(segments);
    for j in 0..segments {
        let lo = (j as f64 * PI).sqrt();
        let hi = ((j + 1) as f64 * PI).sqrt();
        parts.push(quadrature::fixed(&f, lo, hi, 16));
    }
    let re: Vec<f64> = parts.iter().map(|c| c.re).collect();
    let im: Vec<f64> = parts.iter().map(|c| c.im).collect();
    let v = 2.0 * Complex64::new(quadrature::pairwise_sum(&re), quadrature::pairwise_sum(&im));
    cache.lock().expect("cache lock").insert(eps.to_bits(), v);
    v
}

/// ∫ e^{iaθ²} e^{−ε² a θ²} dθ by quadrature (damping scaled with a).
pub fn damped_fresnel(a: f64, eps: f64) -> Result<Complex64> {
    if !(a > 0.0) || !(eps > 0.0) {
        return Err(Error::Input(format!(
            "damped Fresnel needs a > 0 and eps > 0, got a={a}, eps={eps}"
        )));
    }
    Ok(damped_unit(eps) / a.sqrt())
}

/// Neville extrapolation in ε² of the damped quadrature to ε = 0.
pub fn fresnel_extrapolated(a: f64, eps: &[f64]) -> Result<Complex64> {
    let xs: Vec<f64> = eps.iter().map(|e| e * e).collect();
    let ys = eps
        .iter()
        .map(|&e| damped_fresnel(a, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(quadrature::extrapolate_to_zero(&xs, &ys))
}
