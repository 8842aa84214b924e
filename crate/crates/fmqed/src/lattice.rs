//! Reciprocal-lattice mode sets, their ±k halvings and polarization frames.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::Serialize;

use crate::config::SimulationConfig;
use crate::error::{Error, Result};

/// Edge lengths of the periodic box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxDims(pub [f64; 3]);

impl BoxDims {
    pub fn volume(&self) -> f64 {
        self.0.iter().product()
    }

    pub fn cube(side: f64) -> Self {
        BoxDims([side; 3])
    }
}

/// A lattice vector s and its wave vector k_i = 2π s_i / L_i.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveVector {
    pub s: [i64; 3],
    pub k: [f64; 3],
}

impl WaveVector {
    pub fn new(s: [i64; 3], dims: &BoxDims) -> Self {
        let tau = 2.0 * std::f64::consts::PI;
        let k = [
            tau * s[0] as f64 / dims.0[0],
            tau * s[1] as f64 / dims.0[1],
            tau * s[2] as f64 / dims.0[2],
        ];
        WaveVector { s, k }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.k[0], self.k[1], self.k[2])
    }

    pub fn norm(&self) -> f64 {
        self.vector().norm()
    }

    pub fn norm_sq(&self) -> f64 {
        self.k.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, x: &Vector3<f64>) -> f64 {
        self.k[0] * x[0] + self.k[1] * x[1] + self.k[2] * x[2]
    }

    pub fn negated(&self) -> Self {
        WaveVector {
            s: [-self.s[0], -self.s[1], -self.s[2]],
            k: [-self.k[0], -self.k[1], -self.k[2]],
        }
    }

    /// First nonzero component of s is positive.
    pub fn is_canonical(&self) -> bool {
        is_canonical(&self.s)
    }
}

fn is_canonical(s: &[i64; 3]) -> bool {
    s.iter().find(|c| **c != 0).is_some_and(|c| *c > 0)
}

/// Which of the three cutoff sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ModeRole {
    /// Λ₁: the Coulomb sum.
    Coulomb,
    /// Λ₂: the modes entering the mollified vector potential.
    Coupling,
    /// Λ₃: the dynamical field variables.
    Field,
}

impl ModeRole {
    pub fn index(self) -> usize {
        match self {
            ModeRole::Coulomb => 0,
            ModeRole::Coupling => 1,
            ModeRole::Field => 2,
        }
    }
}

/// Λ (2N vectors) and its halving Λ' (N vectors). `full` lists Λ' first and
/// then the negatives in the same order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSet {
    pub half: Vec<WaveVector>,
    pub full: Vec<WaveVector>,
}

impl ModeSet {
    /// Build from canonical representatives; rejects zero and ± duplicates.
    pub fn from_half(half: Vec<WaveVector>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for w in &half {
            if w.s == [0, 0, 0] {
                return Err(Error::Input("mode set contains k = 0".into()));
            }
            let canon = if w.is_canonical() { w.s } else { w.negated().s };
            if !seen.insert(canon) {
                return Err(Error::Input(format!(
                    "mode {:?} listed twice (up to sign)",
                    w.s
                )));
            }
        }
        let half: Vec<WaveVector> = half
            .into_iter()
            .map(|w| if w.is_canonical() { w } else { w.negated() })
            .collect();
        let mut full = half.clone();
        full.extend(half.iter().map(|w| w.negated()));
        Ok(ModeSet { half, full })
    }

    /// All s ≠ 0 with |s_i| ≤ cutoff, halved by the sign of the first nonzero
    /// component. Order is lexicographic in s.
    pub fn from_cutoff(dims: &BoxDims, cutoff: u32) -> Self {
        let m = cutoff as i64;
        let mut half = Vec::new();
        for s1 in -m..=m {
            for s2 in -m..=m {
                for s3 in -m..=m {
                    let s = [s1, s2, s3];
                    if is_canonical(&s) {
                        half.push(WaveVector::new(s, dims));
                    }
                }
            }
        }
        ModeSet::from_half(half).expect("cutoff sets are well formed")
    }

    pub fn from_list(dims: &BoxDims, list: &[[i64; 3]]) -> Result<Self> {
        ModeSet::from_half(list.iter().map(|s| WaveVector::new(*s, dims)).collect())
    }

    /// N = |Λ'|.
    pub fn n_half(&self) -> usize {
        self.half.len()
    }

    pub fn contains_half(&self, s: &[i64; 3]) -> bool {
        self.half.iter().any(|w| &w.s == s)
    }

    /// Position of s in Λ', if present.
    pub fn half_index(&self, s: &[i64; 3]) -> Option<usize> {
        self.half.iter().position(|w| &w.s == s)
    }
}

/// Build Λ_j for the given role.
pub fn build_mode_set(cfg: &SimulationConfig, role: ModeRole) -> Result<ModeSet> {
    let dims = BoxDims(cfg.box_lengths);
    let specific = match role {
        ModeRole::Coulomb => &cfg.modes_coulomb,
        ModeRole::Coupling => &cfg.modes_coupling,
        ModeRole::Field => &cfg.modes_field,
    };
    if let Some(list) = specific.as_ref().or(cfg.modes.as_ref()) {
        return ModeSet::from_list(&dims, list);
    }
    Ok(ModeSet::from_cutoff(&dims, cfg.cutoffs[role.index()]))
}

/// The field variables' modes: Λ'₂ first, then Λ'₃ \ Λ'₂. Returns the set and
/// the number of leading coupling modes. Errors unless Λ'₂ ⊆ Λ'₃.
pub fn build_field_modes(cfg: &SimulationConfig) -> Result<(ModeSet, usize)> {
    let coupling = build_mode_set(cfg, ModeRole::Coupling)?;
    let field = build_mode_set(cfg, ModeRole::Field)?;
    for w in &coupling.half {
        if !field.contains_half(&w.s) {
            return Err(Error::Config(format!(
                "coupling mode {:?} is not a field mode; the coupling set must be contained in the field set",
                w.s
            )));
        }
    }
    let mut half = coupling.half.clone();
    half.extend(
        field
            .half
            .iter()
            .filter(|w| !coupling.contains_half(&w.s))
            .copied(),
    );
    Ok((ModeSet::from_half(half)?, coupling.n_half()))
}

/// Unit vectors e₁(k), e₂(k) ⟂ k with e_j(−k) = −e_j(k).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationFrame {
    vectors: HashMap<[i64; 3], [Vector3<f64>; 2]>,
}

fn frame_for(k: &Vector3<f64>) -> [Vector3<f64>; 2] {
    let khat = k / k.norm();
    let z = Vector3::new(0.0, 0.0, 1.0);
    let seed = if khat.cross(&z).norm() < 1e-8 {
        Vector3::new(0.0, 1.0, 0.0)
    } else {
        z
    };
    let mut e2 = (seed - khat * seed.dot(&khat)).normalize();
    // second pass restores orthogonality lost when k is nearly along the seed
    e2 = (e2 - khat * e2.dot(&khat)).normalize();
    let e1 = e2.cross(&khat);
    [e1, e2]
}

impl PolarizationFrame {
    pub fn get(&self, s: &[i64; 3]) -> Option<&[Vector3<f64>; 2]> {
        self.vectors.get(s)
    }

    /// e_l(k) for l ∈ {1, 2}; panics if k is not covered.
    pub fn e(&self, w: &WaveVector, l: usize) -> Vector3<f64> {
        self.vectors
            .get(&w.s)
            .unwrap_or_else(|| panic!("frame does not cover {:?}", w.s))[l - 1]
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Gram–Schmidt frame on Λ', extended to −k by negation.
pub fn build_polarization(modes: &ModeSet) -> Result<PolarizationFrame> {
    let mut vectors = HashMap::new();
    for w in &modes.half {
        if w.s == [0, 0, 0] {
            return Err(Error::Input("polarization undefined at k = 0".into()));
        }
        let pair = frame_for(&w.vector());
        vectors.insert(w.s, pair);
        vectors.insert(w.negated().s, [-pair[0], -pair[1]]);
    }
    Ok(PolarizationFrame { vectors })
}

/// Rows (s, k, e₁, e₂) for every k ∈ Λ, Λ' first.
pub fn mode_table(modes: &ModeSet, frame: &PolarizationFrame) -> Vec<ModeRow> {
    modes
        .full
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let [e1, e2] = frame.get(&w.s).copied().expect("frame covers the set");
            ModeRow {
                half: i < modes.n_half(),
                s1: w.s[0],
                s2: w.s[1],
                s3: w.s[2],
                k1: w.k[0],
                k2: w.k[1],
                k3: w.k[2],
                e1x: e1[0],
                e1y: e1[1],
                e1z: e1[2],
                e2x: e2[0],
                e2y: e2[1],
                e2z: e2[2],
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeRow {
    pub half: bool,
    pub s1: i64,
    pub s2: i64,
    pub s3: i64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub e1x: f64,
    pub e1y: f64,
    pub e1z: f64,
    pub e2x: f64,
    pub e2y: f64,
    pub e2z: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_pi_cube() -> BoxDims {
        BoxDims::cube(2.0 * std::f64::consts::PI)
    }

    #[test]
    fn cutoff_counts() {
        let m1 = ModeSet::from_cutoff(&two_pi_cube(), 1);
        assert_eq!((m1.full.len(), m1.n_half()), (26, 13));
        let m2 = ModeSet::from_cutoff(&two_pi_cube(), 2);
        assert_eq!((m2.full.len(), m2.n_half()), (124, 62));
    }

    #[test]
    fn wave_vector_arithmetic() {
        let dims = BoxDims([4.0 * std::f64::consts::PI, 1.0, 1.0]);
        let w = WaveVector::new([1, 0, 0], &dims);
        assert!((w.k[0] - 0.5).abs() < 1e-15 && w.k[1] == 0.0 && w.k[2] == 0.0);
    }

    #[test]
    fn canonical_frame_along_z() {
        let dims = two_pi_cube();
        let set = ModeSet::from_list(&dims, &[[0, 0, 1]]).unwrap();
        let f = build_polarization(&set).unwrap();
        let [e1, e2] = f.get(&[0, 0, 1]).unwrap();
        assert_eq!(*e1, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(*e2, Vector3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn explicit_lists_reject_duplicates_and_zero() {
        let dims = two_pi_cube();
        assert!(ModeSet::from_list(&dims, &[[1, 0, 0], [-1, 0, 0]]).is_err());
        assert!(ModeSet::from_list(&dims, &[[0, 0, 0]]).is_err());
        let set = ModeSet::from_list(&dims, &[[-1, 2, 0]]).unwrap();
        assert_eq!(set.half[0].s, [1, -2, 0]);
    }

    #[test]
    fn field_modes_put_coupling_modes_first() {
        let cfg = SimulationConfig {
            cutoffs: [1, 1, 2],
            ..Default::default()
        };
        let (set, n2) = build_field_modes(&cfg).unwrap();
        assert_eq!(n2, 13);
        assert_eq!(set.n_half(), 62);
        let coupling = ModeSet::from_cutoff(&BoxDims(cfg.box_lengths), 1);
        assert_eq!(&set.half[..13], &coupling.half[..]);
    }

    fn check_frame(set: &ModeSet) {
        let f = build_polarization(set).unwrap();
        for w in &set.full {
            let [e1, e2] = f.get(&w.s).unwrap();
            let khat = w.vector() / w.norm();
            assert!((e1.norm() - 1.0).abs() < 1e-14 && (e2.norm() - 1.0).abs() < 1e-14);
            assert!(
                e1.dot(e2).abs() < 1e-14
                    && e1.dot(&khat).abs() < 1e-14
                    && e2.dot(&khat).abs() < 1e-14
            );
            let det = nalgebra::Matrix3::from_columns(&[*e1, *e2, khat]).determinant();
            assert!((det.abs() - 1.0).abs() < 1e-12);
            let [m1, m2] = f.get(&w.negated().s).unwrap();
            assert_eq!(*m1, -e1);
            assert_eq!(*m2, -e2);
        }
    }

    proptest! {
        #[test]
        fn halving_partitions_the_set(m in 1u32..4, l1 in 0.5f64..20.0, l2 in 0.5f64..20.0, l3 in 0.5f64..20.0) {
            let set = ModeSet::from_cutoff(&BoxDims([l1, l2, l3]), m);
            let side = (2 * m + 1) as usize;
            prop_assert_eq!(set.full.len(), side * side * side - 1);
            prop_assert_eq!(set.full.len(), 2 * set.n_half());
            let half: std::collections::HashSet<_> = set.half.iter().map(|w| w.s).collect();
            for w in &set.half {
                prop_assert!(!half.contains(&w.negated().s));
            }
            let all: std::collections::HashSet<_> = set.full.iter().map(|w| w.s).collect();
            prop_assert_eq!(all.len(), set.full.len());
        }

        #[test]
        fn frames_are_orthonormal_and_odd(m in 1u32..3, l1 in 0.5f64..20.0, l2 in 0.5f64..20.0, l3 in 0.5f64..20.0) {
            check_frame(&ModeSet::from_cutoff(&BoxDims([l1, l2, l3]), m));
        }
    }
}
