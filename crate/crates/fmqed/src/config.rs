//! Simulation configuration: a flat `key = value` TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_hbar() -> f64 {
    1.0
}
fn default_c() -> f64 {
    1.0
}
fn default_sigma_psi() -> f64 {
    10.0
}
fn default_width_g() -> f64 {
    1.0e8
}
fn default_cap() -> usize {
    4
}
fn default_plane_wave_max() -> u32 {
    3
}
fn default_eps() -> f64 {
    0.01
}
fn default_box() -> [f64; 3] {
    let l = 2.0 * std::f64::consts::PI;
    [l, l, l]
}
fn default_cutoffs() -> [u32; 3] {
    [1, 1, 1]
}

/// Physical and numerical parameters shared by every study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Box edge lengths L₁, L₂, L₃.
    #[serde(default = "default_box")]
    pub box_lengths: [f64; 3],
    /// Cutoffs for the Coulomb, coupling and field mode sets.
    #[serde(default = "default_cutoffs")]
    pub cutoffs: [u32; 3],
    /// Explicit half-set (one representative per ±k) used for all three sets.
    #[serde(default)]
    pub modes: Option<Vec<[i64; 3]>>,
    #[serde(default)]
    pub modes_coulomb: Option<Vec<[i64; 3]>>,
    #[serde(default)]
    pub modes_coupling: Option<Vec<[i64; 3]>>,
    #[serde(default)]
    pub modes_field: Option<Vec<[i64; 3]>>,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    #[serde(default = "default_c")]
    pub c_light: f64,
    #[serde(default)]
    pub n_particles: usize,
    #[serde(default)]
    pub masses: Vec<f64>,
    #[serde(default)]
    pub charges: Vec<f64>,
    /// Scale of the amplitude damping ψ(θ) = σ tanh(θ/σ).
    #[serde(default = "default_sigma_psi")]
    pub sigma_psi: f64,
    /// Width of the spatial cutoff g(x) = exp(-|x|²/(2w²)).
    #[serde(default = "default_width_g")]
    pub width_g: f64,
    /// Highest occupation kept per field variable.
    #[serde(default = "default_cap")]
    pub occupation_cap: usize,
    /// Plane waves e^{2πi n·x/L} with |n_i| ≤ this bound.
    #[serde(default = "default_plane_wave_max")]
    pub plane_wave_max: u32,
    /// Oscillatory-integral regularizer scale.
    #[serde(default = "default_eps")]
    pub epsilon_reg: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            box_lengths: default_box(),
            cutoffs: default_cutoffs(),
            modes: None,
            modes_coulomb: None,
            modes_coupling: None,
            modes_field: None,
            hbar: default_hbar(),
            c_light: default_c(),
            n_particles: 0,
            masses: Vec::new(),
            charges: Vec::new(),
            sigma_psi: default_sigma_psi(),
            width_g: default_width_g(),
            occupation_cap: default_cap(),
            plane_wave_max: default_plane_wave_max(),
            epsilon_reg: default_eps(),
        }
    }
}

impl SimulationConfig {
    /// Parse and validate.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimulationConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse failure: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn volume(&self) -> f64 {
        self.box_lengths.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .box_lengths
            .iter()
            .any(|l| !(l.is_finite() && *l > 0.0))
        {
            return Err(Error::Config(format!(
                "box lengths must be positive, got {:?}",
                self.box_lengths
            )));
        }
        if self.cutoffs.iter().any(|m| *m == 0) {
            return Err(Error::Config(format!(
                "cutoffs must be positive integers, got {:?}",
                self.cutoffs
            )));
        }
        if self.cutoffs[1] > self.cutoffs[2] {
            return Err(Error::Config(format!(
                "coupling cutoff M2 = {} exceeds field cutoff M3 = {}; M2 <= M3 is required",
                self.cutoffs[1], self.cutoffs[2]
            )));
        }
        for (name, v) in [
            ("hbar", self.hbar),
            ("c_light", self.c_light),
            ("sigma_psi", self.sigma_psi),
            ("width_g", self.width_g),
            ("epsilon_reg", self.epsilon_reg),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.masses.len() != self.n_particles || self.charges.len() != self.n_particles {
            return Err(Error::Config(format!(
                "masses ({}) and charges ({}) must both have n_particles = {} entries",
                self.masses.len(),
                self.charges.len(),
                self.n_particles
            )));
        }
        if self.masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::Config("masses must be positive".into()));
        }
        if self.charges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Config("charges must be finite".into()));
        }
        for (name, list) in [
            ("modes", &self.modes),
            ("modes_coulomb", &self.modes_coulomb),
            ("modes_coupling", &self.modes_coupling),
            ("modes_field", &self.modes_field),
        ] {
            if let Some(list) = list {
                if list.is_empty() {
                    return Err(Error::Config(format!("{name} must not be empty")));
                }
                if list.iter().any(|s| *s == [0, 0, 0]) {
                    return Err(Error::Config(format!("{name} contains the zero vector")));
                }
            }
        }
        Ok(())
    }
}
