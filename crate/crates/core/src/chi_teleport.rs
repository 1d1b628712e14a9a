//! Teleportation of one qubit over the four-particle χ state.
//!
//! Register layout for a full instance is `(m, 1, 2, 3, 4)`: qubit 0 is the
//! message particle and qubit `k` is χ particle `k`. Particle 2 is held by
//! the sender, 1 by the first assistant, 4 by the second assistant and 3 by
//! the receiver.
//!
//! The receiver's correction depends on three classical results: a Z
//! measurement of particle 1, a Bell measurement of `(m, 2)` and a Z
//! measurement of particle 4. [`correction_for`] is the lookup table and
//! [`oracle_verify_table1`] checks it against the full five-qubit state by
//! projecting onto each of the sixteen outcome branches.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum_core::{
    c, fidelity_up_to_phase, overlap, Basis, BellOutcome, PauliCorrection, QuantumError, SimRng, StateVector,
    FRAC_1_SQRT_2,
};

/// Amplitude magnitude of each nonzero χ term, 1/(2√2).
pub const CHI_AMPLITUDE: f64 = 0.353_553_390_593_273_8;

/// Nonzero kets of |χ⁰⁰⟩ over particles (1,2,3,4) with their signs.
pub const CHI_TERMS: [(usize, f64); 8] = [
    (0b0000, 1.0),
    (0b0011, 1.0),
    (0b0101, -1.0),
    (0b0110, 1.0),
    (0b1001, 1.0),
    (0b1010, 1.0),
    (0b1100, 1.0),
    (0b1111, -1.0),
];

pub const QUBIT_M: usize = 0;

/// Register index of χ particle `k` (1..=4) in the five-qubit layout.
pub const fn particle(k: usize) -> usize {
    k
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeleportError {
    #[error("message amplitudes violate |a|² + |b|² = 1 (got {0})")]
    NotNormalized(f64),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("branch {outcomes}: {what} fidelity {fidelity:.3e} below 1 - 1e-10")]
    BranchMismatch {
        outcomes: TeleportOutcomes,
        what: &'static str,
        fidelity: f64,
    },
    #[error("branch {outcomes}: probability {probability} differs from 1/16")]
    NonUniformBranch { outcomes: TeleportOutcomes, probability: f64 },
}

/// Message state `a|0⟩ + b|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MessageQubit {
    pub a: Complex64,
    pub b: Complex64,
}

impl MessageQubit {
    pub fn new(a: Complex64, b: Complex64) -> Result<Self, TeleportError> {
        let norm = a.norm_sqr() + b.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(TeleportError::NotNormalized(norm));
        }
        Ok(MessageQubit { a, b })
    }

    pub fn plus() -> Self {
        MessageQubit {
            a: c(FRAC_1_SQRT_2),
            b: c(FRAC_1_SQRT_2),
        }
    }

    pub fn minus() -> Self {
        MessageQubit {
            a: c(FRAC_1_SQRT_2),
            b: c(-FRAC_1_SQRT_2),
        }
    }

    /// Uniformly random pure state (Haar measure on the Bloch sphere).
    pub fn random(rng: &mut SimRng) -> Self {
        let cos_theta = 2.0 * rng.uniform() - 1.0;
        let phi = 2.0 * std::f64::consts::PI * rng.uniform();
        let half = (cos_theta.acos() / 2.0, phi);
        MessageQubit {
            a: c(half.0.cos()),
            b: Complex64::from_polar(half.0.sin(), half.1),
        }
    }
}

pub fn prepare_message(m: &MessageQubit) -> Result<StateVector, TeleportError> {
    let m = MessageQubit::new(m.a, m.b)?;
    Ok(StateVector::qubit(m.a, m.b)?)
}

/// |χ⁰⁰⟩ over particles (1,2,3,4).
pub fn prepare_chi() -> StateVector {
    let mut amps = vec![Complex64::default(); 16];
    for (idx, sign) in CHI_TERMS {
        amps[idx] = c(sign * CHI_AMPLITUDE);
    }
    StateVector::from_amplitudes(amps).expect("χ state is normalized")
}

/// Which participant holds a particle of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Particle {
    Message,
    One,
    Two,
    Three,
    Four,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TeleportRole {
    Sender,
    Assistant1,
    Assistant2,
    Receiver,
}

impl Particle {
    pub fn qubit(self) -> usize {
        match self {
            Particle::Message => QUBIT_M,
            Particle::One => particle(1),
            Particle::Two => particle(2),
            Particle::Three => particle(3),
            Particle::Four => particle(4),
        }
    }

    pub fn holder(self) -> TeleportRole {
        match self {
            Particle::Message | Particle::Two => TeleportRole::Sender,
            Particle::One => TeleportRole::Assistant1,
            Particle::Four => TeleportRole::Assistant2,
            Particle::Three => TeleportRole::Receiver,
        }
    }
}

/// One five-qubit teleportation register `|ξ⟩ₘ ⊗ |χ⁰⁰⟩₁₂₃₄`.
#[derive(Debug, Clone)]
pub struct ChiInstance {
    pub register: StateVector,
}

impl ChiInstance {
    pub fn new(m: &MessageQubit) -> Result<Self, TeleportError> {
        let register = prepare_message(m)?.tensor(&prepare_chi())?;
        Ok(ChiInstance { register })
    }

    pub fn qubit_of(&self, p: Particle) -> usize {
        p.qubit()
    }
}

/// Classical results of the three measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TeleportOutcomes {
    pub z1: u8,
    pub bell_m2: BellOutcome,
    pub z4: u8,
}

impl TeleportOutcomes {
    pub fn new(z1: u8, bell_m2: BellOutcome, z4: u8) -> Self {
        TeleportOutcomes {
            z1: z1 & 1,
            bell_m2,
            z4: z4 & 1,
        }
    }

    /// All sixteen outcome triples in table order.
    pub fn all() -> impl Iterator<Item = TeleportOutcomes> {
        (0..2u8).flat_map(|z1| {
            BellOutcome::ALL
                .into_iter()
                .flat_map(move |b| (0..2u8).map(move |z4| TeleportOutcomes::new(z1, b, z4)))
        })
    }
}

impl fmt::Display for TeleportOutcomes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(z1={}, {}, z4={})", self.z1, self.bell_m2, self.z4)
    }
}

/// Receiver's correction for a set of outcomes.
pub fn correction_for(o: TeleportOutcomes) -> PauliCorrection {
    use BellOutcome::*;
    use PauliCorrection::*;
    match (o.z1, o.bell_m2, o.z4) {
        (0, PhiPlus, 0) => I,
        (0, PhiPlus, _) => ISigmaY,
        (0, PhiMinus, 0) => SigmaZ,
        (0, PhiMinus, _) => SigmaX,
        (0, PsiPlus, 0) => SigmaX,
        (0, PsiPlus, _) => SigmaZ,
        (0, PsiMinus, 0) => ISigmaY,
        (0, PsiMinus, _) => I,
        (_, PhiPlus, 0) => SigmaX,
        (_, PhiPlus, _) => SigmaZ,
        (_, PhiMinus, 0) => ISigmaY,
        (_, PhiMinus, _) => I,
        (_, PsiPlus, 0) => I,
        (_, PsiPlus, _) => ISigmaY,
        (_, PsiMinus, 0) => SigmaZ,
        (_, PsiMinus, _) => SigmaX,
    }
}

/// Listed collapsed state of particle 3 as coefficients of (a, b) on |0⟩
/// and |1⟩: `[[c0a, c0b], [c1a, c1b]]` so that amplitude_k = cka·a + ckb·b.
fn collapsed_coefficients(o: TeleportOutcomes) -> [[f64; 2]; 2] {
    use BellOutcome::*;
    // a|0⟩+b|1⟩, a|1⟩−b|0⟩, a|0⟩−b|1⟩, a|1⟩+b|0⟩, and negated variants
    const A0_B1: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];
    const A1_MB0: [[f64; 2]; 2] = [[0.0, -1.0], [1.0, 0.0]];
    const A0_MB1: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, -1.0]];
    const A1_B0: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, 0.0]];
    const MA0_B1: [[f64; 2]; 2] = [[-1.0, 0.0], [0.0, 1.0]];
    const MA0_MB1: [[f64; 2]; 2] = [[-1.0, 0.0], [0.0, -1.0]];
    const MA1_B0: [[f64; 2]; 2] = [[0.0, 1.0], [-1.0, 0.0]];
    const MA1_MB0: [[f64; 2]; 2] = [[0.0, -1.0], [-1.0, 0.0]];
    match (o.z1, o.bell_m2, o.z4) {
        (0, PhiPlus, 0) => A0_B1,
        (0, PhiPlus, _) => A1_MB0,
        (0, PhiMinus, 0) => A0_MB1,
        (0, PhiMinus, _) => A1_B0,
        (0, PsiPlus, 0) => A1_B0,
        (0, PsiPlus, _) => MA0_B1,
        (0, PsiMinus, 0) => A1_MB0,
        (0, PsiMinus, _) => MA0_MB1,
        (_, PhiPlus, 0) => A1_B0,
        (_, PhiPlus, _) => A0_MB1,
        (_, PhiMinus, 0) => A1_MB0,
        (_, PhiMinus, _) => A0_B1,
        (_, PsiPlus, 0) => A0_B1,
        (_, PsiPlus, _) => MA1_B0,
        (_, PsiMinus, 0) => A0_MB1,
        (_, PsiMinus, _) => MA1_MB0,
    }
}

/// The particle-3 state listed for these outcomes, before correction.
pub fn collapsed_state_for(o: TeleportOutcomes, m: &MessageQubit) -> Result<StateVector, TeleportError> {
    let k = collapsed_coefficients(o);
    let amp = |row: [f64; 2]| m.a * row[0] + m.b * row[1];
    Ok(StateVector::qubit(amp(k[0]), amp(k[1]))?)
}

/// Runs the three-step protocol on a fresh instance with sampled outcomes.
pub fn run_teleportation(m: &MessageQubit, rng: &mut SimRng) -> Result<(TeleportOutcomes, StateVector), TeleportError> {
    let inst = ChiInstance::new(m)?;
    let (z1, s) = inst.register.measure(particle(1), Basis::Z, rng)?;
    let (bell, s) = s.measure_bell(QUBIT_M, particle(2), rng)?;
    let (z4, s) = s.measure(particle(4), Basis::Z, rng)?;
    let outcomes = TeleportOutcomes::new(z1, bell, z4);
    let p3 = s
        .qubit_state(particle(3))?
        .ok_or(QuantumError::ZeroProbability)?;
    let recovered = p3.apply_unitary(&[0], &correction_for(outcomes).matrix())?;
    Ok((outcomes, recovered))
}

/// Order in which the branch projections are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionOrder {
    /// Z on 1, Bell on (m,2), Z on 4.
    Forward,
    /// Z on 4, Bell on (m,2), Z on 1.
    Reverse,
}

/// Projects a fresh `|ξ⟩ₘ ⊗ |χ⁰⁰⟩` onto one outcome branch. Returns the
/// branch probability and particle 3's state with the phase produced by
/// the projection.
pub fn project_branch(
    m: &MessageQubit,
    o: TeleportOutcomes,
    order: ProjectionOrder,
) -> Result<(f64, StateVector), TeleportError> {
    let inst = ChiInstance::new(m)?;
    project_register(&inst.register, o, order)
}

/// Same as [`project_branch`] for an arbitrary five-qubit register.
pub fn project_register(
    register: &StateVector,
    o: TeleportOutcomes,
    order: ProjectionOrder,
) -> Result<(f64, StateVector), TeleportError> {
    // remaining qubit indices shift as qubits are contracted away
    let steps: Vec<(Vec<usize>, Vec<Complex64>)> = match order {
        ProjectionOrder::Forward => vec![
            (vec![1], Basis::Z.ket(o.z1).to_vec()),
            (vec![0, 1], o.bell_m2.ket().to_vec()),
            (vec![1], Basis::Z.ket(o.z4).to_vec()),
        ],
        ProjectionOrder::Reverse => vec![
            (vec![4], Basis::Z.ket(o.z4).to_vec()),
            (vec![0, 2], o.bell_m2.ket().to_vec()),
            (vec![0], Basis::Z.ket(o.z1).to_vec()),
        ],
    };
    let mut state = register.clone();
    let mut prob = 1.0;
    for (qubits, ket) in steps {
        let (p, rest) = state.contract(&qubits, &ket)?;
        prob *= p;
        state = rest.ok_or(QuantumError::ZeroProbability)?;
    }
    Ok((prob, state))
}

/// Per-branch result of the oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchReport {
    pub outcomes: TeleportOutcomes,
    pub probability: f64,
    pub collapsed_fidelity: f64,
    pub recovered_fidelity: f64,
    /// Global phase of the recovered state relative to |ξ⟩ₘ, in radians.
    pub recovered_phase: f64,
    pub correction: PauliCorrection,
    /// Every Pauli reaching fidelity 1 on this branch.
    pub achieving: Vec<PauliCorrection>,
    pub order_independent: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Report {
    pub message: MessageQubit,
    pub branches: Vec<BranchReport>,
}

impl Table1Report {
    /// Branches whose recovered state carries a −1 global phase.
    pub fn negative_phase_branches(&self) -> Vec<TeleportOutcomes> {
        self.branches
            .iter()
            .filter(|b| (b.recovered_phase.abs() - std::f64::consts::PI).abs() < 1e-6)
            .map(|b| b.outcomes)
            .collect()
    }
}

const ORACLE_TOLERANCE: f64 = 1e-10;

pub fn oracle_verify_table1(m: &MessageQubit) -> Result<Table1Report, TeleportError> {
    oracle_verify_with(m, correction_for)
}

/// Runs the projection oracle against an arbitrary lookup.
pub fn oracle_verify_with(
    m: &MessageQubit,
    lookup: impl Fn(TeleportOutcomes) -> PauliCorrection,
) -> Result<Table1Report, TeleportError> {
    let message = prepare_message(m)?;
    let mut branches = Vec::with_capacity(16);
    for outcomes in TeleportOutcomes::all() {
        let (probability, p3) = project_branch(m, outcomes, ProjectionOrder::Forward)?;
        if (probability - 1.0 / 16.0).abs() > 1e-12 {
            return Err(TeleportError::NonUniformBranch { outcomes, probability });
        }
        let collapsed_fidelity = fidelity_up_to_phase(&p3, &collapsed_state_for(outcomes, m)?)?;
        if collapsed_fidelity < 1.0 - ORACLE_TOLERANCE {
            return Err(TeleportError::BranchMismatch {
                outcomes,
                what: "collapsed-state",
                fidelity: collapsed_fidelity,
            });
        }
        let correction = lookup(outcomes);
        let recovered = p3.apply_unitary(&[0], &correction.matrix())?;
        let recovered_fidelity = fidelity_up_to_phase(&recovered, &message)?;
        if recovered_fidelity < 1.0 - ORACLE_TOLERANCE {
            return Err(TeleportError::BranchMismatch {
                outcomes,
                what: "recovery",
                fidelity: recovered_fidelity,
            });
        }
        let recovered_phase = overlap(&message, &recovered).arg();
        let achieving = PauliCorrection::ALL
            .into_iter()
            .filter(|p| {
                p3.apply_unitary(&[0], &p.matrix())
                    .and_then(|s| fidelity_up_to_phase(&s, &message))
                    .map(|f| f >= 1.0 - ORACLE_TOLERANCE)
                    .unwrap_or(false)
            })
            .collect();
        let (_, p3_rev) = project_branch(m, outcomes, ProjectionOrder::Reverse)?;
        let rev = p3_rev.apply_unitary(&[0], &correction.matrix())?;
        let order_independent = fidelity_up_to_phase(&rev, &message)? >= 1.0 - ORACLE_TOLERANCE;
        branches.push(BranchReport {
            outcomes,
            probability,
            collapsed_fidelity,
            recovered_fidelity,
            recovered_phase,
            correction,
            achieving,
            order_independent,
        });
    }
    Ok(Table1Report {
        message: *m,
        branches,
    })
}
