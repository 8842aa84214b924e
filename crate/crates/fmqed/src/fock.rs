//! Ladder operators in the Hermite occupation basis, photon states, H_rad, the
//! truncated Hamiltonian and a spectral reference evolution.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FieldModel, FieldVar};
use crate::hermite;
use crate::quadrature;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Sparse complex matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C>,
    /// Set once hermiticity has been verified.
    pub hermitian: bool,
}

impl Operator {
    /// Duplicates are summed; exact zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet outside {dim}×{dim}");
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            indptr[r + 1] += indptr[r];
        }
        Operator {
            dim,
            indptr,
            indices,
            values,
            hermitian: false,
        }
        .pruned()
    }

    fn pruned(self) -> Self {
        let mut triplets = Vec::with_capacity(self.values.len());
        let mut indptr = vec![0; self.dim + 1];
        for r in 0..self.dim {
            for p in self.indptr[r]..self.indptr[r + 1] {
                if self.values[p] != ZERO {
                    triplets.push((self.indices[p], self.values[p]));
                }
            }
            indptr[r + 1] = triplets.len();
        }
        let (indices, values) = triplets.into_iter().unzip();
        Operator {
            dim: self.dim,
            indptr,
            indices,
            values,
            hermitian: self.hermitian,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut op = Self::from_triplets(
            d.len(),
            d.iter()
                .enumerate()
                .map(|(i, &v)| (i, i, C::new(v, 0.0)))
                .collect(),
        );
        op.hermitian = true;
        op
    }

    pub fn from_dense(m: &DMatrix<C>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != ZERO {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |p| (r, self.indices[p], self.values[p]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> C {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match row.binary_search(&c) {
            Ok(p) => self.values[self.indptr[r] + p],
            Err(_) => ZERO,
        }
    }

    pub fn apply(&self, v: &DVector<C>) -> DVector<C> {
        assert_eq!(v.len(), self.dim);
        let out: Vec<C> = (0..self.dim)
            .into_par_iter()
            .map(|r| {
                (self.indptr[r]..self.indptr[r + 1])
                    .map(|p| self.values[p] * v[self.indices[p]])
                    .sum()
            })
            .collect();
        DVector::from_vec(out)
    }

    pub fn matmul(&self, other: &Operator) -> Operator {
        assert_eq!(self.dim, other.dim);
        let rows: Vec<Vec<(usize, usize, C)>> = (0..self.dim)
            .into_par_iter()
            .map(|r| {
                let mut acc: HashMap<usize, C> = HashMap::new();
                for p in self.indptr[r]..self.indptr[r + 1] {
                    let k = self.indices[p];
                    for q in other.indptr[k]..other.indptr[k + 1] {
                        *acc.entry(other.indices[q]).or_insert(ZERO) +=
                            self.values[p] * other.values[q];
                    }
                }
                acc.into_iter().map(|(c, v)| (r, c, v)).collect()
            })
            .collect();
        Self::from_triplets(self.dim, rows.into_iter().flatten().collect())
    }

    pub fn add(&self, other: &Operator) -> Operator {
        self.axpy(ONE, other)
    }

    pub fn sub(&self, other: &Operator) -> Operator {
        self.axpy(-ONE, other)
    }

    /// self + α·other.
    pub fn axpy(&self, alpha: C, other: &Operator) -> Operator {
        assert_eq!(self.dim, other.dim);
        let t = self
            .triplets()
            .chain(other.triplets().map(|(r, c, v)| (r, c, alpha * v)))
            .collect();
        Self::from_triplets(self.dim, t)
    }

    pub fn scale(&self, alpha: C) -> Operator {
        Self::from_triplets(
            self.dim,
            self.triplets().map(|(r, c, v)| (r, c, alpha * v)).collect(),
        )
    }

    pub fn adjoint(&self) -> Operator {
        let mut op = Self::from_triplets(
            self.dim,
            self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect(),
        );
        op.hermitian = self.hermitian;
        op
    }

    pub fn commutator(a: &Operator, b: &Operator) -> Operator {
        a.matmul(b).sub(&b.matmul(a))
    }

    /// A ⊗ B with index (i·dim_B + a).
    pub fn kron(&self, other: &Operator) -> Operator {
        let db = other.dim;
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r, c, v) in self.triplets() {
            for (r2, c2, w) in other.triplets() {
                t.push((r * db + r2, c * db + c2, v * w));
            }
        }
        let mut op = Self::from_triplets(self.dim * db, t);
        op.hermitian = self.hermitian && other.hermitian;
        op
    }

    pub fn to_dense(&self) -> DMatrix<C> {
        let mut m = DMatrix::from_element(self.dim, self.dim, ZERO);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// max |A − A†|.
    pub fn hermiticity_defect(&self) -> f64 {
        self.sub(&self.adjoint()).max_abs()
    }

    /// Verify and set the hermitian flag.
    pub fn checked_hermitian(mut self, tol: f64) -> Result<Self> {
        let defect = self.hermiticity_defect();
        if defect > tol * self.max_abs().max(1.0) {
            return Err(Error::Invariant(format!(
                "operator is not hermitian: max |A - A†| = {defect:.3e}"
            )));
        }
        self.hermitian = true;
        Ok(self)
    }
}

/// Sparsity summary for reports.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorStats {
    pub dim: usize,
    pub nnz: usize,
    pub hermitian: bool,
    pub max_abs: f64,
}

impl From<&Operator> for OperatorStats {
    fn from(op: &Operator) -> Self {
        OperatorStats {
            dim: op.dim,
            nnz: op.nnz(),
            hermitian: op.hermitian,
            max_abs: op.max_abs(),
        }
    }
}

/// Complex coefficients on a product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub DVector<C>);

impl StateVector {
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::from_element(dim, ZERO);
        v[index] = ONE;
        StateVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// ⟨self, other⟩, antilinear in self.
    pub fn inner(&self, other: &StateVector) -> C {
        self.0.dotc(&other.0)
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Input("cannot normalize the zero vector".into()));
        }
        Ok(StateVector(self.0.unscale(n)))
    }

    pub fn distance(&self, other: &StateVector) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

/// Tensor basis of Hermite levels 0..=cap for each field variable; variable 0
/// is the most significant digit.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorBasis {
    pub cap: usize,
    /// Frequency c|k| per variable.
    pub frequencies: Vec<f64>,
    /// Oscillator length √(ħ|V|/(c|k|)) per variable.
    pub lengths: Vec<f64>,
}

impl OscillatorBasis {
    pub fn new(model: &FieldModel, cap: usize) -> Result<Self> {
        let n = model.layout.len();
        let dim = (cap as f64 + 1.0).powi(n as i32);
        if dim > 5.0e6 {
            return Err(Error::Budget(format!(
                "oscillator basis of dimension {dim:.0} exceeds the 5e6 budget"
            )));
        }
        let frequencies: Vec<f64> = (0..n).map(|o| model.frequency(o)).collect();
        let lengths = frequencies
            .iter()
            .map(|w| (model.hbar * model.volume() / w).sqrt())
            .collect();
        Ok(OscillatorBasis {
            cap,
            frequencies,
            lengths,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.frequencies.len()
    }

    pub fn dim(&self) -> usize {
        (self.cap + 1).pow(self.n_vars() as u32)
    }

    pub fn stride(&self, var: usize) -> usize {
        (self.cap + 1).pow((self.n_vars() - 1 - var) as u32)
    }

    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let base = self.cap + 1;
        let mut occ = vec![0; self.n_vars()];
        for v in (0..self.n_vars()).rev() {
            occ[v] = index % base;
            index /= base;
        }
        occ
    }

    pub fn index(&self, occ: &[usize]) -> Option<usize> {
        if occ.len() != self.n_vars() || occ.iter().any(|&n| n > self.cap) {
            return None;
        }
        Some(occ.iter().fold(0, |acc, &n| acc * (self.cap + 1) + n))
    }

    /// Every occupation is at most cap − margin.
    pub fn is_interior(&self, index: usize, margin: usize) -> bool {
        self.occupations(index)
            .iter()
            .all(|&n| n + margin <= self.cap)
    }

    /// Single-variable matrix M (levels × levels) acting on variable `var`.
    pub fn embed(&self, var: usize, m: &DMatrix<C>) -> Operator {
        let stride = self.stride(var);
        let mut t = Vec::new();
        for idx in 0..self.dim() {
            let n = (idx / stride) % (self.cap + 1);
            for row in 0..=self.cap {
                let v = m[(row, n)];
                if v != ZERO {
                    t.push((idx + row * stride - n * stride, idx, v));
                }
            }
        }
        Operator::from_triplets(self.dim(), t)
    }
}

/// Ladder operators and photon states over the field variables of a model.
#[derive(Debug, Clone)]
pub struct FockSpace {
    pub model: FieldModel,
    pub basis: OscillatorBasis,
}

impl FockSpace {
    pub fn new(model: &FieldModel, cap: usize) -> Result<Self> {
        Ok(FockSpace {
            model: model.clone(),
            basis: OscillatorBasis::new(model, cap)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn lowering(&self) -> DMatrix<C> {
        let n = self.basis.cap + 1;
        DMatrix::from_fn(n, n, |r, c| {
            if c == r + 1 {
                C::new((c as f64).sqrt(), 0.0)
            } else {
                ZERO
            }
        })
    }

    /// (â, â†) for one real variable a^{(i)}_{lk}, k ∈ Λ'.
    pub fn ladder_ops(&self, var: FieldVar) -> Result<(Operator, Operator)> {
        let layout = &self.model.layout;
        if var.mode >= layout.modes.n_half()
            || !(1..=2).contains(&var.l)
            || !(1..=2).contains(&var.i)
        {
            return Err(Error::Input(format!("no field variable {var:?}")));
        }
        let a = self.basis.embed(layout.offset(var), &self.lowering());
        let ad = a.adjoint();
        Ok((a, ad))
    }

    /// Same, addressed by the integer triple of k; k must lie in Λ'.
    pub fn ladder_ops_for(&self, s: [i64; 3], l: usize, i: usize) -> Result<(Operator, Operator)> {
        let mode = self.model.layout.modes.half_index(&s).ok_or_else(|| {
            Error::Input(format!("k with s = {s:?} is not in the halved mode set"))
        })?;
        self.ladder_ops(FieldVar { mode, l, i })
    }

    /// (â_{lk}, â†_{lk}) for k ∈ Λ, through the parity relations on −Λ'.
    pub fn complex_modes(&self, s: [i64; 3], l: usize) -> Result<(Operator, Operator)> {
        if s == [0, 0, 0] {
            return Err(Error::Input("complex mode undefined at k = 0".into()));
        }
        let modes = &self.model.layout.modes;
        let (canon, sign1) = if modes.contains_half(&s) {
            (s, 1.0)
        } else {
            let neg = [-s[0], -s[1], -s[2]];
            if !modes.contains_half(&neg) {
                return Err(Error::Input(format!(
                    "k with s = {s:?} is not in the mode set"
                )));
            }
            (neg, -1.0)
        };
        let (a1, _) = self.ladder_ops_for(canon, l, 1)?;
        let (a2, _) = self.ladder_ops_for(canon, l, 2)?;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let a = a1.scale(C::new(sign1 * r, 0.0)).axpy(C::new(0.0, -r), &a2);
        let ad = a.adjoint();
        Ok((a, ad))
    }

    fn diag_of(&self, weight: impl Fn(usize) -> f64) -> Operator {
        let d: Vec<f64> = (0..self.dim())
            .map(|idx| {
                self.basis
                    .occupations(idx)
                    .iter()
                    .enumerate()
                    .map(|(v, &n)| n as f64 * weight(v))
                    .sum()
            })
            .collect();
        Operator::diagonal(&d)
    }

    /// Σ ħc|k| â†â, diagonal with entries Σ n_v ħω_v.
    pub fn h_rad(&self) -> Operator {
        let hbar = self.model.hbar;
        self.diag_of(|v| hbar * self.basis.frequencies[v])
    }

    /// Total photon number.
    pub fn number(&self) -> Operator {
        self.diag_of(|_| 1.0)
    }

    /// Σ_{k∈Λ,l} ħk â†_{lk}â_{lk}, one operator per Cartesian component.
    pub fn momentum(&self) -> Result<[Operator; 3]> {
        let mut out = [
            Operator::from_triplets(self.dim(), vec![]),
            Operator::from_triplets(self.dim(), vec![]),
            Operator::from_triplets(self.dim(), vec![]),
        ];
        for w in &self.model.layout.modes.full {
            for l in 1..=2 {
                let (a, ad) = self.complex_modes(w.s, l)?;
                let n = ad.matmul(&a);
                for (c, o) in out.iter_mut().enumerate() {
                    *o = o.axpy(C::new(self.model.hbar * w.k[c], 0.0), &n);
                }
            }
        }
        Ok(out)
    }

    pub fn vacuum(&self) -> StateVector {
        StateVector::basis(self.dim(), 0)
    }

    /// Π (â†_{lk})^{n}/√(n!) Ψ₀ over the given (s, l) → n.
    pub fn photon_state(&self, occupations: &[([i64; 3], usize, usize)]) -> Result<StateVector> {
        // each ±k pair shares the two real variables of one polarization
        let mut load: HashMap<([i64; 3], usize), usize> = HashMap::new();
        for &(s, l, n) in occupations {
            let modes = &self.model.layout.modes;
            let canon = if modes.contains_half(&s) {
                s
            } else {
                [-s[0], -s[1], -s[2]]
            };
            *load.entry((canon, l)).or_insert(0) += n;
        }
        if let Some(((s, l), n)) = load.iter().find(|(_, &n)| n > self.basis.cap) {
            return Err(Error::Input(format!(
                "{n} photons in polarization {l} of ±{s:?} exceed the occupation cap {}",
                self.basis.cap
            )));
        }
        let mut state = self.vacuum().0;
        for &(s, l, n) in occupations {
            let (_, ad) = self.complex_modes(s, l)?;
            let mut fact = 1.0;
            for j in 1..=n {
                state = ad.apply(&state);
                fact *= j as f64;
            }
            state /= C::new(fact.sqrt(), 0.0);
        }
        Ok(StateVector(state))
    }

    /// The complex-mode occupation family within caps, with its labels.
    pub fn photon_family(&self) -> Result<Vec<(Vec<([i64; 3], usize, usize)>, StateVector)>> {
        let mut slots: Vec<Vec<([i64; 3], usize, usize)>> = vec![vec![]];
        let cap = self.basis.cap;
        for w in &self.model.layout.modes.half {
            for l in 1..=2 {
                let mut next = Vec::new();
                for prefix in &slots {
                    for n_plus in 0..=cap {
                        for n_minus in 0..=(cap - n_plus) {
                            let mut p = prefix.clone();
                            p.push((w.s, l, n_plus));
                            p.push((w.negated().s, l, n_minus));
                            next.push(p);
                        }
                    }
                }
                slots = next;
            }
        }
        slots
            .into_iter()
            .map(|occ| {
                let st = self.photon_state(&occ)?;
                Ok((occ, st))
            })
            .collect()
    }

    /// ψ(a) on one variable, by Gauss–Hermite quadrature in oscillator units.
    pub fn psi_matrix(&self, var: usize, power: i32) -> DMatrix<C> {
        let mol = self.model.mollifier;
        let ell = self.basis.lengths[var];
        one_variable_matrix(self.basis.cap, |u| mol.psi(ell * u).powi(power))
    }
}

/// ⟨h_m, f(u) h_n⟩ for m, n ≤ cap by 120-point Gauss–Hermite quadrature.
fn one_variable_matrix(cap: usize, f: impl Fn(f64) -> f64) -> DMatrix<C> {
    let rule = quadrature::gauss_hermite(120);
    let mut m = DMatrix::from_element(cap + 1, cap + 1, ZERO);
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let h = hermite::functions(*x, cap);
        let scale = w * (x * x).exp() * f(*x);
        for r in 0..=cap {
            for c in 0..=cap {
                m[(r, c)] += C::new(scale * h[r] * h[c], 0.0);
            }
        }
    }
    m
}

/// Matrix of −(ħ²|V|/2)∂² + ω²a²/(2|V|) − ħω/2 between Hermite functions in
/// the oscillator length of (ω, |V|, ħ), by direct quadrature of the
/// differential form.
pub fn oscillator_matrix_by_quadrature(
    omega: f64,
    volume: f64,
    hbar: f64,
    nmax: usize,
) -> DMatrix<f64> {
    let ell = (hbar * volume / omega).sqrt();
    let rule = quadrature::gauss_legendre(400);
    let half = 14.0;
    let mut m = DMatrix::zeros(nmax + 1, nmax + 1);
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let u = half * x;
        let a = ell * u;
        let h = hermite::functions(u, nmax);
        let h2 = hermite::second_derivatives(u, nmax);
        for c in 0..=nmax {
            // derivatives in a are 1/ℓ² times those in u; the measure da = ℓ du
            // cancels against the 1/√ℓ normalizations
            let applied = -0.5 * hbar * hbar * volume * h2[c] / (ell * ell)
                + omega * omega * a * a / (2.0 * volume) * h[c]
                - 0.5 * hbar * omega * h[c];
            for r in 0..=nmax {
                m[(r, c)] += half * w * h[r] * applied;
            }
        }
    }
    m
}

/// Periodic plane waves e^{iq·x}/√|V| with q = 2π(n₁/L₁, n₂/L₂, n₃/L₃).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBasis {
    pub momenta: Vec<[i64; 3]>,
}

impl ParticleBasis {
    /// |n_i| ≤ max in every direction.
    pub fn cube(max: u32) -> Self {
        let m = max as i64;
        let mut momenta = Vec::new();
        for a in -m..=m {
            for b in -m..=m {
                for c in -m..=m {
                    momenta.push([a, b, c]);
                }
            }
        }
        ParticleBasis { momenta }
    }

    /// Plane waves along one axis only.
    pub fn axis(axis: usize, max: u32) -> Self {
        let m = max as i64;
        let momenta = (-m..=m)
            .map(|n| {
                let mut v = [0; 3];
                v[axis] = n;
                v
            })
            .collect();
        ParticleBasis { momenta }
    }

    pub fn len(&self) -> usize {
        self.momenta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.momenta.is_empty()
    }
}

/// Trigonometric factor as Σ c_j e^{i 2π (s_j/L)·x}.
type Exponentials = Vec<(C, [i64; 3])>;

fn trig(s: [i64; 3], i: usize) -> Exponentials {
    let neg = [-s[0], -s[1], -s[2]];
    if i == 1 {
        vec![(C::new(0.5, 0.0), s), (C::new(0.5, 0.0), neg)]
    } else {
        vec![(C::new(0.0, -0.5), s), (C::new(0.0, 0.5), neg)]
    }
}

fn product(a: &Exponentials, b: &Exponentials) -> Exponentials {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for (ca, sa) in a {
        for (cb, sb) in b {
            out.push((ca * cb, [sa[0] + sb[0], sa[1] + sb[1], sa[2] + sb[2]]));
        }
    }
    out
}

/// (1/L)∫_{−L/2}^{L/2} cos(2πνt/L) g₁(t)^p dt with g₁ the Gaussian factor.
struct BoxFourier {
    lengths: [f64; 3],
    width: f64,
    cache: HashMap<(usize, i64, i32), f64>,
}

impl BoxFourier {
    fn factor(&mut self, axis: usize, nu: i64, power: i32) -> f64 {
        let (len, width) = (self.lengths[axis], self.width);
        *self.cache.entry((axis, nu, power)).or_insert_with(|| {
            let n = 48 + 2 * nu.unsigned_abs() as usize;
            let f = |t: f64| {
                (2.0 * std::f64::consts::PI * nu as f64 * t / len).cos()
                    * (-(power as f64) * t * t / (2.0 * width * width)).exp()
            };
            quadrature::fixed(&f, -0.5 * len, 0.5 * len, n) / len
        })
    }

    /// ⟨q_m | g^p Σ c_j e^{i s_j·x} | q_n⟩ on the plane-wave basis.
    fn matrix(&mut self, basis: &ParticleBasis, terms: &Exponentials, power: i32) -> DMatrix<C> {
        let n = basis.len();
        let mut m = DMatrix::from_element(n, n, ZERO);
        for r in 0..n {
            for c in 0..n {
                let mut acc = ZERO;
                for (coef, s) in terms {
                    let mut f = 1.0;
                    for ax in 0..3 {
                        f *= self.factor(
                            ax,
                            basis.momenta[c][ax] - basis.momenta[r][ax] + s[ax],
                            power,
                        );
                    }
                    acc += coef * f;
                }
                m[(r, c)] = acc;
            }
        }
        m
    }
}

/// Dense accumulator for Σ P ⊗ F terms.
struct KronSum {
    fdim: usize,
    m: DMatrix<C>,
}

impl KronSum {
    fn add(&mut self, alpha: C, p: &DMatrix<C>, f: &DMatrix<C>) {
        let fd = self.fdim;
        for pr in 0..p.nrows() {
            for pc in 0..p.ncols() {
                let pv = alpha * p[(pr, pc)];
                if pv == ZERO {
                    continue;
                }
                for fr in 0..fd {
                    for fc in 0..fd {
                        let fv = f[(fr, fc)];
                        if fv != ZERO {
                            self.m[(pr * fd + fr, pc * fd + fc)] += pv * fv;
                        }
                    }
                }
            }
        }
    }
}

/// H = (1/2m)|(ħ/i)∂ − (e/c)Ã|² + V₁ + H_rad on plane waves ⊗ Hermite levels.
///
/// With no particles this is H_rad. One particle is supported; V₁ vanishes
/// for it.
pub fn assemble_hamiltonian(
    fock: &FockSpace,
    masses: &[f64],
    charges: &[f64],
    particles: &ParticleBasis,
) -> Result<Operator> {
    let model = &fock.model;
    match masses.len() {
        0 => return Ok(fock.h_rad()),
        1 => {}
        n => {
            return Err(Error::Unsupported(format!(
                "Hamiltonian assembly supports at most one particle, got {n}"
            )))
        }
    }
    let (mass, charge) = (masses[0], charges[0]);
    let fdim = fock.dim();
    let dim = particles.len() * fdim;
    if dim > 6000 {
        return Err(Error::Budget(format!(
            "Hamiltonian dimension {dim} exceeds the dense budget 6000"
        )));
    }
    let hbar = model.hbar;
    let dims = model.dims.0;
    let qvec = |n: &[i64; 3]| -> [f64; 3] {
        [0, 1, 2].map(|a| 2.0 * std::f64::consts::PI * n[a] as f64 / dims[a])
    };

    let mut acc = KronSum {
        fdim,
        m: DMatrix::from_element(dim, dim, ZERO),
    };
    let ident_f = DMatrix::<C>::identity(fdim, fdim);
    let ident_p = DMatrix::<C>::identity(particles.len(), particles.len());
    let kinetic = DMatrix::from_fn(particles.len(), particles.len(), |r, c| {
        if r == c {
            let q = qvec(&particles.momenta[r]);
            C::new(
                hbar * hbar * (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]) / (2.0 * mass),
                0.0,
            )
        } else {
            ZERO
        }
    });
    acc.add(ONE, &kinetic, &ident_f);
    acc.add(ONE, &ident_p, &fock.h_rad().to_dense());

    let coupled: Vec<usize> = (0..4 * model.layout.n_coupled).collect();
    if charge != 0.0 && !coupled.is_empty() {
        let mut fourier = BoxFourier {
            lengths: dims,
            width: model.mollifier.width_g,
            cache: HashMap::new(),
        };
        let pref = model.prefactor();
        let evec = |v: usize| {
            let var = model.layout.var(v);
            model.frame.e(&model.layout.modes.half[var.mode], var.l)
        };
        let terms: Vec<Exponentials> = coupled
            .iter()
            .map(|&v| {
                let var = model.layout.var(v);
                trig(model.layout.modes.half[var.mode].s, var.i)
            })
            .collect();
        let psi: Vec<Operator> = coupled
            .iter()
            .map(|&v| fock.basis.embed(v, &fock.psi_matrix(v, 1)))
            .collect();

        // −(e/2mc) Σ_c (p_c Ã_c + Ã_c p_c): ⟨m|…|n⟩ = ħ(q_m + q_n)_c Ã_c,mn
        let lin = -charge / (2.0 * mass * model.c) * pref;
        for (j, &v) in coupled.iter().enumerate() {
            let g = fourier.matrix(particles, &terms[j], 1);
            let e = evec(v);
            let p = DMatrix::from_fn(particles.len(), particles.len(), |r, c| {
                let (qr, qc) = (qvec(&particles.momenta[r]), qvec(&particles.momenta[c]));
                let dot: f64 = (0..3).map(|a| hbar * (qr[a] + qc[a]) * e[a]).sum();
                g[(r, c)] * dot
            });
            acc.add(C::new(lin, 0.0), &p, &psi[j].to_dense());
        }

        // (e²/2mc²) Ã·Ã with g² T_v T_w and ψ_vψ_w built directly
        let quad = charge * charge / (2.0 * mass * model.c * model.c) * pref * pref;
        for (j, &v) in coupled.iter().enumerate() {
            for (k, &w) in coupled.iter().enumerate() {
                let dot = evec(v).dot(&evec(w));
                if dot.abs() < 1e-15 {
                    continue;
                }
                let g = fourier.matrix(particles, &product(&terms[j], &terms[k]), 2);
                let f = if v == w {
                    fock.basis.embed(v, &fock.psi_matrix(v, 2))
                } else {
                    psi[j].matmul(&psi[k])
                };
                acc.add(C::new(quad * dot, 0.0), &g, &f.to_dense());
            }
        }
    }
    Operator::from_dense(&acc.m).checked_hermitian(1e-8)
}

/// Eigendecomposition of a hermitian operator for exact evolution e^{−iHt/ħ}.
#[derive(Debug, Clone)]
pub struct SpectralEvolution {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<C>,
    pub hbar: f64,
}

impl SpectralEvolution {
    pub fn new(h: &Operator, hbar: f64) -> Result<Self> {
        let defect = h.hermiticity_defect();
        if defect > 1e-10 * h.max_abs().max(1.0) {
            return Err(Error::Input(format!(
                "reference evolution needs a hermitian operator (defect {defect:.3e})"
            )));
        }
        let dense = h.to_dense();
        let herm = (&dense + dense.adjoint()) * C::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        Ok(SpectralEvolution {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            hbar,
        })
    }

    pub fn evolve(&self, f: &StateVector, t: f64) -> StateVector {
        let mut coeff = self.eigenvectors.adjoint() * &f.0;
        for (c, e) in coeff.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= C::from_polar(1.0, -e * t / self.hbar);
        }
        StateVector(&self.eigenvectors * coeff)
    }
}

/// e^{−iHt/ħ} f.
pub fn reference_evolve(h: &Operator, f: &StateVector, t: f64, hbar: f64) -> Result<StateVector> {
    Ok(SpectralEvolution::new(h, hbar)?.evolve(f, t))
}

/// Eigenvalues of a diagonal operator grouped with multiplicities.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SpectrumLine {
    pub energy: f64,
    pub multiplicity: usize,
}

pub fn diagonal_spectrum(op: &Operator) -> Vec<SpectrumLine> {
    let mut values: Vec<f64> = (0..op.dim()).map(|i| op.get(i, i).re).collect();
    values.sort_by(f64::total_cmp);
    let mut lines: Vec<SpectrumLine> = Vec::new();
    for v in values {
        match lines.last_mut() {
            Some(last) if (last.energy - v).abs() <= 1e-9 * v.abs().max(1.0) => {
                last.multiplicity += 1
            }
            _ => lines.push(SpectrumLine {
                energy: v,
                multiplicity: 1,
            }),
        }
    }
    lines
}
