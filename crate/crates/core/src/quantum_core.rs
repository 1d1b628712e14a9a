//! Dense statevector simulation for small registers.
//!
//! Qubit `q` of an `n`-qubit register is bit `n - 1 - q` of the basis-state
//! index, so qubit 0 is the most significant bit: `|q0 q1 ... q(n-1)⟩`.
//! Every operation returns a new state; nothing mutates in place.

use std::fmt;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest register the simulator will build.
pub const MAX_QUBITS: usize = 8;

/// Tolerance on Σ|amplitude|² after every operation.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Tolerance used when checking that a caller-supplied matrix is unitary.
pub const UNITARY_TOLERANCE: f64 = 1e-10;

pub const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("basis index {index} out of range for {num_qubits} qubits")]
    IndexOutOfRange { num_qubits: usize, index: usize },
    #[error("register of {0} qubits exceeds the {MAX_QUBITS}-qubit limit")]
    TooManyQubits(usize),
    #[error("qubit {qubit} out of range for {num_qubits} qubits")]
    QubitOutOfRange { num_qubits: usize, qubit: usize },
    #[error("target qubits must be distinct")]
    DuplicateTargets,
    #[error("matrix of dimension {found} does not act on {targets} target qubits")]
    DimensionMismatch { targets: usize, found: usize },
    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("amplitude vector length {0} is not a power of two")]
    BadLength(usize),
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("states act on different numbers of qubits ({0} vs {1})")]
    StateDimensionMismatch(usize, usize),
    #[error("projection has zero probability")]
    ZeroProbability,
}

pub type Result<T> = std::result::Result<T, QuantumError>;

/// Single-qubit measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    /// Computational basis {|0⟩, |1⟩}.
    Z,
    /// Diagonal basis; outcome 0 is |+⟩, outcome 1 is |−⟩.
    X,
}

impl Basis {
    /// The ket for `bit` in this basis.
    pub fn ket(self, bit: u8) -> [Complex64; 2] {
        let r = FRAC_1_SQRT_2;
        match (self, bit & 1) {
            (Basis::Z, 0) => [c(1.0), c(0.0)],
            (Basis::Z, _) => [c(0.0), c(1.0)],
            (Basis::X, 0) => [c(r), c(r)],
            (Basis::X, _) => [c(r), c(-r)],
        }
    }
}

#[inline]
pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl Matrix {
    pub fn from_rows(rows: &[&[Complex64]]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "matrix rows must be square");
            data.extend_from_slice(row);
        }
        Matrix { dim, data }
    }

    pub fn from_vec(dim: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), dim * dim, "matrix data must be dim²");
        Matrix { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![Complex64::default(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = c(1.0);
        }
        Matrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn dagger(&self) -> Self {
        let n = self.dim;
        let mut data = vec![Complex64::default(); n * n];
        for r in 0..n {
            for col in 0..n {
                data[col * n + r] = self.data[r * n + col].conj();
            }
        }
        Matrix { dim: n, data }
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut data = vec![Complex64::default(); n * n];
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == Complex64::default() {
                    continue;
                }
                for col in 0..n {
                    data[r * n + col] += a * other.data[k * n + col];
                }
            }
        }
        Matrix { dim: n, data }
    }

    pub fn scale(&self, s: Complex64) -> Matrix {
        Matrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// Largest entrywise deviation of U†U from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.dagger().mul(self);
        let id = Matrix::identity(self.dim);
        prod.data
            .iter()
            .zip(&id.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    /// Maximum entrywise distance to another matrix.
    pub fn max_distance(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim;
        (0..n)
            .map(|r| (0..n).map(|k| self.data[r * n + k] * v[k]).sum())
            .collect()
    }
}

/// Hadamard gate.
pub fn hadamard() -> Matrix {
    let r = c(FRAC_1_SQRT_2);
    Matrix::from_rows(&[&[r, r], &[r, -r]])
}

/// Normalized pure state over `num_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn basis_state(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits > MAX_QUBITS {
            return Err(QuantumError::TooManyQubits(num_qubits));
        }
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(QuantumError::IndexOutOfRange { num_qubits, index });
        }
        let mut amplitudes = vec![Complex64::default(); dim];
        amplitudes[index] = c(1.0);
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    /// Builds a state from raw amplitudes, which must already be normalized.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(QuantumError::BadLength(len));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(QuantumError::TooManyQubits(num_qubits));
        }
        let norm = norm_sqr(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOLERANCE * 100.0 {
            return Err(QuantumError::NotNormalized(norm));
        }
        let mut s = StateVector {
            num_qubits,
            amplitudes,
        };
        s.renormalize();
        Ok(s)
    }

    /// Builds a state from unnormalized amplitudes, rescaling by a positive real.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(QuantumError::BadLength(len));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(QuantumError::TooManyQubits(num_qubits));
        }
        if norm_sqr(&amplitudes) < 1e-300 {
            return Err(QuantumError::ZeroProbability);
        }
        let mut s = StateVector {
            num_qubits,
            amplitudes,
        };
        s.renormalize();
        Ok(s)
    }

    /// One-qubit state `a|0⟩ + b|1⟩`.
    pub fn qubit(a: Complex64, b: Complex64) -> Result<Self> {
        Self::from_amplitudes(vec![a, b])
    }

    /// One-qubit eigenstate of `basis` with eigenvalue index `bit`.
    pub fn basis_ket(basis: Basis, bit: u8) -> Self {
        StateVector {
            num_qubits: 1,
            amplitudes: basis.ket(bit).to_vec(),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amplitudes[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    fn renormalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        for a in &mut self.amplitudes {
            *a /= n;
        }
    }

    #[inline]
    fn bit_of(&self, qubit: usize) -> usize {
        self.num_qubits - 1 - qubit
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            Err(QuantumError::QubitOutOfRange {
                num_qubits: self.num_qubits,
                qubit,
            })
        } else {
            Ok(())
        }
    }

    fn check_targets(&self, targets: &[usize]) -> Result<()> {
        for (i, &t) in targets.iter().enumerate() {
            self.check_qubit(t)?;
            if targets[..i].contains(&t) {
                return Err(QuantumError::DuplicateTargets);
            }
        }
        Ok(())
    }

    /// Kronecker product `self ⊗ other`; `other`'s qubits follow `self`'s.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let total = self.num_qubits + other.num_qubits;
        if total > MAX_QUBITS {
            return Err(QuantumError::TooManyQubits(total));
        }
        let mut amplitudes = Vec::with_capacity(1 << total);
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amplitudes.push(a * b);
            }
        }
        Ok(StateVector {
            num_qubits: total,
            amplitudes,
        })
    }

    /// Applies `matrix` to `targets`. `targets[0]` is the most significant
    /// bit of the matrix's row/column index.
    pub fn apply_unitary(&self, targets: &[usize], matrix: &Matrix) -> Result<StateVector> {
        self.check_targets(targets)?;
        let k = targets.len();
        if matrix.dim() != 1 << k {
            return Err(QuantumError::DimensionMismatch {
                targets: k,
                found: matrix.dim(),
            });
        }
        let defect = matrix.unitarity_defect();
        if defect > UNITARY_TOLERANCE {
            return Err(QuantumError::NotUnitary(defect));
        }
        let masks: Vec<usize> = targets.iter().map(|&t| 1 << self.bit_of(t)).collect();
        let target_mask: usize = masks.iter().sum();
        let sub = |local: usize| -> usize {
            masks
                .iter()
                .enumerate()
                .filter(|(j, _)| local >> (k - 1 - j) & 1 == 1)
                .map(|(_, m)| m)
                .sum()
        };
        let offsets: Vec<usize> = (0..1 << k).map(sub).collect();
        let mut out = self.amplitudes.clone();
        let mut buf = vec![Complex64::default(); 1 << k];
        for base in 0..self.amplitudes.len() {
            if base & target_mask != 0 {
                continue;
            }
            for (j, off) in offsets.iter().enumerate() {
                buf[j] = self.amplitudes[base | off];
            }
            let res = matrix.apply(&buf);
            for (j, off) in offsets.iter().enumerate() {
                out[base | off] = res[j];
            }
        }
        let mut s = StateVector {
            num_qubits: self.num_qubits,
            amplitudes: out,
        };
        s.renormalize();
        Ok(s)
    }

    /// Contracts the listed qubits with the bra `⟨ket|`, returning the
    /// probability of that projection and the normalized state of the
    /// remaining qubits (in their original relative order). Global phase of
    /// the remainder is kept as produced by the contraction.
    pub fn contract(&self, qubits: &[usize], ket: &[Complex64]) -> Result<(f64, Option<StateVector>)> {
        self.check_targets(qubits)?;
        let k = qubits.len();
        if ket.len() != 1 << k {
            return Err(QuantumError::DimensionMismatch {
                targets: k,
                found: ket.len(),
            });
        }
        let rest: Vec<usize> = (0..self.num_qubits).filter(|q| !qubits.contains(q)).collect();
        let mut out = vec![Complex64::default(); 1 << rest.len()];
        for (idx, amp) in self.amplitudes.iter().enumerate() {
            let mut sub = 0;
            for &q in qubits {
                sub = (sub << 1) | (idx >> self.bit_of(q) & 1);
            }
            let mut r = 0;
            for &q in &rest {
                r = (r << 1) | (idx >> self.bit_of(q) & 1);
            }
            out[r] += ket[sub].conj() * amp;
        }
        let prob = norm_sqr(&out);
        if prob < 1e-300 {
            return Ok((0.0, None));
        }
        if rest.is_empty() {
            return Ok((prob, None));
        }
        let n = prob.sqrt();
        for a in &mut out {
            *a /= n;
        }
        Ok((
            prob,
            Some(StateVector {
                num_qubits: rest.len(),
                amplitudes: out,
            }),
        ))
    }

    /// Projects `qubits` onto `|ket⟩` without removing them, returning the
    /// probability and the renormalized post-projection state.
    pub fn project(&self, qubits: &[usize], ket: &[Complex64]) -> Result<(f64, Option<StateVector>)> {
        self.check_targets(qubits)?;
        let k = qubits.len();
        if ket.len() != 1 << k {
            return Err(QuantumError::DimensionMismatch {
                targets: k,
                found: ket.len(),
            });
        }
        let mask: usize = qubits.iter().map(|&q| 1 << self.bit_of(q)).sum();
        let offsets: Vec<usize> = (0..1usize << k)
            .map(|local| {
                qubits
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| local >> (k - 1 - j) & 1 == 1)
                    .map(|(_, &q)| 1 << self.bit_of(q))
                    .sum()
            })
            .collect();
        let mut out = vec![Complex64::default(); self.amplitudes.len()];
        let mut prob = 0.0;
        for base in 0..self.amplitudes.len() {
            if base & mask != 0 {
                continue;
            }
            let overlap: Complex64 = offsets
                .iter()
                .zip(ket)
                .map(|(off, k)| k.conj() * self.amplitudes[base | off])
                .sum();
            prob += overlap.norm_sqr();
            for (off, k) in offsets.iter().zip(ket) {
                out[base | off] = k * overlap;
            }
        }
        if prob < 1e-300 {
            return Ok((0.0, None));
        }
        let n = prob.sqrt();
        for a in &mut out {
            *a /= n;
        }
        Ok((
            prob,
            Some(StateVector {
                num_qubits: self.num_qubits,
                amplitudes: out,
            }),
        ))
    }

    /// Born probability of `bit` when measuring `qubit` in `basis`.
    pub fn probability(&self, qubit: usize, basis: Basis, bit: u8) -> Result<f64> {
        Ok(self.project(&[qubit], &basis.ket(bit))?.0)
    }

    /// Projective single-qubit measurement. One uniform draw per call.
    pub fn measure(&self, qubit: usize, basis: Basis, rng: &mut SimRng) -> Result<(u8, StateVector)> {
        self.check_qubit(qubit)?;
        let kets = [basis.ket(0), basis.ket(1)];
        let outcomes = kets
            .iter()
            .map(|k| self.project(&[qubit], k))
            .collect::<Result<Vec<_>>>()?;
        let idx = sample(rng, outcomes.iter().map(|(p, _)| *p));
        let (_, state) = outcomes.into_iter().nth(idx).expect("two outcomes");
        Ok((idx as u8, state.ok_or(QuantumError::ZeroProbability)?))
    }

    /// Projective measurement of the pair in the Bell basis.
    pub fn measure_bell(&self, qubit_a: usize, qubit_b: usize, rng: &mut SimRng) -> Result<(BellOutcome, StateVector)> {
        self.check_targets(&[qubit_a, qubit_b])?;
        let outcomes = BellOutcome::ALL
            .iter()
            .map(|b| self.project(&[qubit_a, qubit_b], &b.ket()))
            .collect::<Result<Vec<_>>>()?;
        let idx = sample(rng, outcomes.iter().map(|(p, _)| *p));
        let (_, state) = outcomes.into_iter().nth(idx).expect("four outcomes");
        Ok((BellOutcome::ALL[idx], state.ok_or(QuantumError::ZeroProbability)?))
    }

    /// Reduced density matrix of `keep` (in the listed order).
    pub fn reduced_density(&self, keep: &[usize]) -> Result<DensityMatrix> {
        self.check_targets(keep)?;
        let k = keep.len();
        let dim = 1 << k;
        let traced: Vec<usize> = (0..self.num_qubits).filter(|q| !keep.contains(q)).collect();
        let split = |idx: usize| -> (usize, usize) {
            let mut a = 0;
            for &q in keep {
                a = (a << 1) | (idx >> self.bit_of(q) & 1);
            }
            let mut b = 0;
            for &q in &traced {
                b = (b << 1) | (idx >> self.bit_of(q) & 1);
            }
            (a, b)
        };
        let env = 1 << traced.len();
        let mut grid = vec![Complex64::default(); dim * env];
        for (idx, amp) in self.amplitudes.iter().enumerate() {
            let (a, b) = split(idx);
            grid[a * env + b] = *amp;
        }
        let mut data = vec![Complex64::default(); dim * dim];
        for r in 0..dim {
            for col in 0..dim {
                data[r * dim + col] = (0..env).map(|e| grid[r * env + e] * grid[col * env + e].conj()).sum();
            }
        }
        Ok(DensityMatrix(Matrix::from_vec(dim, data)))
    }

    /// Pure state of a single qubit when it is unentangled with the rest of
    /// the register, or `None` when the reduced state is mixed.
    pub fn qubit_state(&self, qubit: usize) -> Result<Option<StateVector>> {
        let rho = self.reduced_density(&[qubit])?;
        Ok(rho.as_pure(1e-9))
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if a.norm() < 1e-12 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:.4}{:+.4}i)|{:0w$b}⟩", a.re, a.im, i, w = self.num_qubits)?;
        }
        Ok(())
    }
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

/// Picks an index by cumulative probability with a single uniform draw.
fn sample(rng: &mut SimRng, probs: impl Iterator<Item = f64>) -> usize {
    let probs: Vec<f64> = probs.collect();
    let total: f64 = probs.iter().sum();
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if u < acc && *p > 0.0 {
            return i;
        }
    }
    last_nonzero
}

/// `|⟨a|b⟩|²`.
pub fn fidelity_up_to_phase(a: &StateVector, b: &StateVector) -> Result<f64> {
    if a.num_qubits != b.num_qubits {
        return Err(QuantumError::StateDimensionMismatch(a.num_qubits, b.num_qubits));
    }
    Ok(overlap(a, b).norm_sqr().min(1.0))
}

/// `⟨a|b⟩`.
pub fn overlap(a: &StateVector, b: &StateVector) -> Complex64 {
    a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x.conj() * y).sum()
}

/// Hermitian density matrix produced by a partial trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub Matrix);

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn purity(&self) -> f64 {
        self.0.mul(&self.0).trace().re
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn expectation(&self, psi: &StateVector) -> f64 {
        let v = self.0.apply(psi.amplitudes());
        psi.amplitudes().iter().zip(&v).map(|(a, b)| a.conj() * b).sum::<Complex64>().re
    }

    /// Trace distance ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let n = self.dim();
        assert_eq!(n, other.dim());
        let diff = nalgebra::DMatrix::<Complex64>::from_fn(n, n, |r, col| self.0.get(r, col) - other.0.get(r, col));
        let eig = nalgebra::SymmetricEigen::new(diff);
        eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>() / 2.0
    }

    pub fn as_pure(&self, tol: f64) -> Option<StateVector> {
        if (self.purity() - 1.0).abs() > tol {
            return None;
        }
        let n = self.dim();
        let col = (0..n)
            .max_by(|&a, &b| self.0.get(a, a).re.total_cmp(&self.0.get(b, b).re))
            .expect("non-empty");
        let v: Vec<Complex64> = (0..n).map(|r| self.0.get(r, col)).collect();
        StateVector::normalized(v).ok()
    }
}

impl Matrix {
    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }
}

/// Bell-basis outcome; classical bits φ⁺=00, φ⁻=01, ψ⁺=10, ψ⁻=11.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellOutcome {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellOutcome {
    pub const ALL: [BellOutcome; 4] = [
        BellOutcome::PhiPlus,
        BellOutcome::PhiMinus,
        BellOutcome::PsiPlus,
        BellOutcome::PsiMinus,
    ];

    pub fn classical_bits(self) -> [u8; 2] {
        match self {
            BellOutcome::PhiPlus => [0, 0],
            BellOutcome::PhiMinus => [0, 1],
            BellOutcome::PsiPlus => [1, 0],
            BellOutcome::PsiMinus => [1, 1],
        }
    }

    pub fn from_bits(hi: u8, lo: u8) -> Self {
        match (hi & 1, lo & 1) {
            (0, 0) => BellOutcome::PhiPlus,
            (0, 1) => BellOutcome::PhiMinus,
            (1, 0) => BellOutcome::PsiPlus,
            _ => BellOutcome::PsiMinus,
        }
    }

    /// Amplitudes over |00⟩, |01⟩, |10⟩, |11⟩.
    pub fn ket(self) -> [Complex64; 4] {
        let r = FRAC_1_SQRT_2;
        let z = c(0.0);
        match self {
            BellOutcome::PhiPlus => [c(r), z, z, c(r)],
            BellOutcome::PhiMinus => [c(r), z, z, c(-r)],
            BellOutcome::PsiPlus => [z, c(r), c(r), z],
            BellOutcome::PsiMinus => [z, c(r), c(-r), z],
        }
    }

    pub fn state(self) -> StateVector {
        StateVector {
            num_qubits: 2,
            amplitudes: self.ket().to_vec(),
        }
    }
}

impl fmt::Display for BellOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BellOutcome::PhiPlus => "φ+",
            BellOutcome::PhiMinus => "φ-",
            BellOutcome::PsiPlus => "ψ+",
            BellOutcome::PsiMinus => "ψ-",
        })
    }
}

/// The four single-qubit corrections the receiver may apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliCorrection {
    I,
    SigmaX,
    /// `iσy = |0⟩⟨1| − |1⟩⟨0|`, a real matrix.
    ISigmaY,
    SigmaZ,
}

impl PauliCorrection {
    pub const ALL: [PauliCorrection; 4] = [
        PauliCorrection::I,
        PauliCorrection::SigmaX,
        PauliCorrection::ISigmaY,
        PauliCorrection::SigmaZ,
    ];

    pub fn matrix(self) -> Matrix {
        let (o, z) = (c(1.0), c(0.0));
        match self {
            PauliCorrection::I => Matrix::from_rows(&[&[o, z], &[z, o]]),
            PauliCorrection::SigmaX => Matrix::from_rows(&[&[z, o], &[o, z]]),
            PauliCorrection::ISigmaY => Matrix::from_rows(&[&[z, o], &[-o, z]]),
            PauliCorrection::SigmaZ => Matrix::from_rows(&[&[o, z], &[z, -o]]),
        }
    }
}

impl fmt::Display for PauliCorrection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PauliCorrection::I => "I",
            PauliCorrection::SigmaX => "σx",
            PauliCorrection::ISigmaY => "iσy",
            PauliCorrection::SigmaZ => "σz",
        })
    }
}

/// Deterministic simulation RNG: ChaCha20 keyed by a 64-bit seed, with
/// independent numbered streams for components that must not share state.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha20Rng,
}

impl SimRng {
    pub fn from_seed(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SimRng { inner }
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bit(&mut self) -> u8 {
        (self.inner.next_u32() & 1) as u8
    }

    pub fn coin(&mut self) -> bool {
        self.bit() == 1
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: usize) -> usize {
        use rand::Rng;
        self.inner.gen_range(0..bound)
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// SplitMix64 finalizer; derives per-trial seeds from a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    fn plus() -> StateVector {
        StateVector::basis_ket(Basis::X, 0)
    }

    fn close(a: &StateVector, b: &StateVector) -> bool {
        a.amplitudes().iter().zip(b.amplitudes()).all(|(x, y)| (x - y).norm() < 1e-12)
    }

    #[test]
    fn basis_state_examples() {
        let s = StateVector::basis_state(1, 0).unwrap();
        assert_eq!(s.amplitudes(), &[c(1.0), c(0.0)]);
        let s = StateVector::basis_state(2, 3).unwrap();
        assert_eq!(s.amplitudes(), &[c(0.0), c(0.0), c(0.0), c(1.0)]);
        // |0101⟩: qubit 1 and qubit 3 are set
        let s = StateVector::basis_state(4, 5).unwrap();
        assert_eq!(s.probability(0, Basis::Z, 0).unwrap(), 1.0);
        assert_eq!(s.probability(1, Basis::Z, 1).unwrap(), 1.0);
        assert_eq!(s.probability(2, Basis::Z, 0).unwrap(), 1.0);
        assert_eq!(s.probability(3, Basis::Z, 1).unwrap(), 1.0);
        assert!(matches!(
            StateVector::basis_state(2, 4),
            Err(QuantumError::IndexOutOfRange { .. })
        ));
        assert!(StateVector::basis_state(9, 0).is_err());
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        let one = StateVector::basis_state(1, 1).unwrap();
        let zero = StateVector::basis_state(1, 0).unwrap();
        let s = one.tensor(&zero).unwrap();
        assert_eq!(s.amplitude(0b10), c(1.0));
    }

    #[test]
    fn tensor_examples() {
        let zero = StateVector::basis_state(1, 0).unwrap();
        let one = StateVector::basis_state(1, 1).unwrap();
        assert_eq!(zero.tensor(&one).unwrap(), StateVector::basis_state(2, 1).unwrap());
        let s = plus().tensor(&zero).unwrap();
        let r = FRAC_1_SQRT_2;
        assert!((s.amplitude(0) - c(r)).norm() < EPS);
        assert!((s.amplitude(2) - c(r)).norm() < EPS);
        assert!(s.amplitude(1).norm() < EPS && s.amplitude(3).norm() < EPS);

        let big = StateVector::basis_state(5, 0).unwrap();
        assert!(matches!(big.tensor(&big), Err(QuantumError::TooManyQubits(10))));
    }

    #[test]
    fn apply_unitary_examples() {
        let zero = StateVector::basis_state(1, 0).unwrap();
        let flipped = zero.apply_unitary(&[0], &PauliCorrection::SigmaX.matrix()).unwrap();
        assert_eq!(flipped, StateVector::basis_state(1, 1).unwrap());

        // iσy on a|1⟩ − b|0⟩ gives a|0⟩ + b|1⟩
        let (a, b) = (c(0.6), Complex64::new(0.0, 0.8));
        let collapsed = StateVector::qubit(-b, a).unwrap();
        let fixed = collapsed.apply_unitary(&[0], &PauliCorrection::ISigmaY.matrix()).unwrap();
        assert!(close(&fixed, &StateVector::qubit(a, b).unwrap()));
    }

    #[test]
    fn apply_unitary_rejects_bad_input() {
        let s = StateVector::basis_state(2, 0).unwrap();
        let h = hadamard();
        assert_eq!(s.apply_unitary(&[2], &h), Err(QuantumError::QubitOutOfRange { num_qubits: 2, qubit: 2 }));
        assert_eq!(s.apply_unitary(&[0, 0], &Matrix::identity(4)), Err(QuantumError::DuplicateTargets));
        assert!(matches!(
            s.apply_unitary(&[0, 1], &h),
            Err(QuantumError::DimensionMismatch { .. })
        ));
        let bad = Matrix::from_rows(&[&[c(1.0), c(1.0)], &[c(0.0), c(1.0)]]);
        assert!(matches!(s.apply_unitary(&[0], &bad), Err(QuantumError::NotUnitary(_))));
    }

    #[test]
    fn target_order_sets_matrix_bit_significance() {
        // CNOT with control = first listed target
        let (o, z) = (c(1.0), c(0.0));
        let cnot = Matrix::from_rows(&[&[o, z, z, z], &[z, o, z, z], &[z, z, z, o], &[z, z, o, z]]);
        let s = StateVector::basis_state(2, 0b01).unwrap();
        // control on qubit 1 (set), target qubit 0
        let out = s.apply_unitary(&[1, 0], &cnot).unwrap();
        assert_eq!(out, StateVector::basis_state(2, 0b11).unwrap());
    }

    #[test]
    fn measure_examples() {
        let mut rng = SimRng::from_seed(1);
        let zero = StateVector::basis_state(1, 0).unwrap();
        for _ in 0..50 {
            let (bit, post) = zero.measure(0, Basis::Z, &mut rng).unwrap();
            assert_eq!(bit, 0);
            assert_eq!(post, zero);
        }
        let minus = StateVector::basis_ket(Basis::X, 1);
        for _ in 0..50 {
            let (bit, post) = minus.measure(0, Basis::X, &mut rng).unwrap();
            assert_eq!(bit, 1);
            assert!(fidelity_up_to_phase(&post, &minus).unwrap() > 1.0 - EPS);
        }
    }

    #[test]
    fn measure_bell_examples() {
        let mut rng = SimRng::from_seed(3);
        let phi_minus = BellOutcome::PhiMinus.state();
        for _ in 0..20 {
            let (o, post) = phi_minus.measure_bell(0, 1, &mut rng).unwrap();
            assert_eq!(o, BellOutcome::PhiMinus);
            assert!(fidelity_up_to_phase(&post, &phi_minus).unwrap() > 1.0 - EPS);
        }
        let s = StateVector::basis_state(2, 0).unwrap();
        for b in BellOutcome::ALL {
            let p = s.project(&[0, 1], &b.ket()).unwrap().0;
            let expected = match b {
                BellOutcome::PhiPlus | BellOutcome::PhiMinus => 0.5,
                _ => 0.0,
            };
            assert!((p - expected).abs() < EPS, "{b}: {p}");
        }
        assert!(s.measure_bell(0, 0, &mut rng).is_err());
    }

    #[test]
    fn bell_bits_mapping() {
        assert_eq!(BellOutcome::PhiPlus.classical_bits(), [0, 0]);
        assert_eq!(BellOutcome::PhiMinus.classical_bits(), [0, 1]);
        assert_eq!(BellOutcome::PsiPlus.classical_bits(), [1, 0]);
        assert_eq!(BellOutcome::PsiMinus.classical_bits(), [1, 1]);
        for b in BellOutcome::ALL {
            let [h, l] = b.classical_bits();
            assert_eq!(BellOutcome::from_bits(h, l), b);
        }
    }

    #[test]
    fn pauli_matrices_are_unitary_and_match_definitions() {
        for p in PauliCorrection::ALL {
            assert!(p.matrix().is_unitary(1e-12), "{p}");
        }
        let m = PauliCorrection::ISigmaY.matrix();
        assert_eq!(m.get(0, 1), c(1.0));
        assert_eq!(m.get(1, 0), c(-1.0));
        let z = PauliCorrection::SigmaZ.matrix();
        assert_eq!(z.get(1, 1), c(-1.0));
    }

    #[test]
    fn fidelity_examples() {
        let zero = StateVector::basis_state(1, 0).unwrap();
        let one = StateVector::basis_state(1, 1).unwrap();
        assert_eq!(fidelity_up_to_phase(&zero, &zero).unwrap(), 1.0);
        assert_eq!(fidelity_up_to_phase(&zero, &one).unwrap(), 0.0);
        let (a, b) = (c(0.6), Complex64::new(0.0, 0.8));
        let s = StateVector::qubit(a, b).unwrap();
        let t = StateVector::qubit(-a, -b).unwrap();
        assert!((fidelity_up_to_phase(&s, &t).unwrap() - 1.0).abs() < EPS);
        let two = StateVector::basis_state(2, 0).unwrap();
        assert!(fidelity_up_to_phase(&zero, &two).is_err());
    }

    #[test]
    fn contract_keeps_phase() {
        // (|0⟩ − |1⟩)/√2 ⊗ |1⟩ contracted on qubit 1 with ⟨1| leaves |−⟩ exactly
        let s = StateVector::basis_ket(Basis::X, 1)
            .tensor(&StateVector::basis_state(1, 1).unwrap())
            .unwrap();
        let (p, rest) = s.contract(&[1], &Basis::Z.ket(1)).unwrap();
        assert!((p - 1.0).abs() < EPS);
        assert!(close(&rest.unwrap(), &StateVector::basis_ket(Basis::X, 1)));
        let (p, rest) = s.contract(&[1], &Basis::Z.ket(0)).unwrap();
        assert_eq!(p, 0.0);
        assert!(rest.is_none());
    }

    #[test]
    fn reduced_density_and_trace_distance() {
        let bell = BellOutcome::PhiPlus.state();
        let rho = bell.reduced_density(&[0]).unwrap();
        assert!((rho.purity() - 0.5).abs() < EPS);
        assert!(bell.qubit_state(0).unwrap().is_none());

        let prod = plus().tensor(&StateVector::basis_state(1, 1).unwrap()).unwrap();
        let q0 = prod.qubit_state(0).unwrap().unwrap();
        assert!((fidelity_up_to_phase(&q0, &plus()).unwrap() - 1.0).abs() < 1e-12);

        let r0 = StateVector::basis_state(1, 0).unwrap().reduced_density(&[0]).unwrap();
        let r1 = StateVector::basis_state(1, 1).unwrap().reduced_density(&[0]).unwrap();
        assert!((r0.trace_distance(&r1) - 1.0).abs() < EPS);
        assert!(r0.trace_distance(&r0) < EPS);
        let rp = plus().reduced_density(&[0]).unwrap();
        assert!((r0.trace_distance(&rp) - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn rng_streams_are_deterministic_and_distinct() {
        let mut a = SimRng::from_seed(42);
        let mut b = SimRng::from_seed(42);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        let mut c1 = SimRng::stream(42, 1);
        let zs: Vec<u64> = (0..16).map(|_| c1.next_u64()).collect();
        assert_ne!(xs, zs);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }
}
