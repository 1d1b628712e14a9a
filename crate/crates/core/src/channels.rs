//! Quantum and classical channels between participants.
//!
//! Quantum↔quantum links are protected by decoy particles that the
//! receiver measures in announced bases. Links to a semiquantum party use
//! the SIFT/CTRL return check: each decoy is either Z-measured or reflected
//! back in a shuffled order. Adversaries act on every transmitted qubit.

use num_complex::Complex64;
use rand::seq::index;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto_keys::BitString;
use crate::lab::{Lab, QubitId};
use crate::party::{CapabilityError, OpLedger, PartyRole, QuantumOp};
use crate::quantum_core::{c, Basis, Matrix, QuantumError, SimRng, StateVector};
use crate::transcript::{ChannelId, Event, EventLog, Phase, Purpose, Receipt};

/// Probe register width; Eve's probe space has dimension at most 4.
pub const PROBE_QUBITS: usize = 2;
pub const PROBE_DIM: usize = 1 << PROBE_QUBITS;

const PARAM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("at least one decoy particle is required")]
    NoDecoys,
    #[error("eavesdropping detected on {channel}: {check} error rate {error_rate:.4} above {threshold}", channel = .channel.name())]
    EavesdroppingDetected {
        channel: ChannelId,
        check: CheckKind,
        checked: usize,
        errors: usize,
        error_rate: f64,
        threshold: f64,
    },
    #[error("invalid Eve parameters: {0}")]
    InvalidEveParams(String),
    #[error("sequence and preparer record disagree")]
    RecordMismatch,
    #[error(transparent)]
    Capability(#[from] CapabilityError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Decoy,
    Reflected,
    ZSift,
}

impl std::fmt::Display for CheckKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CheckKind::Decoy => "decoy",
            CheckKind::Reflected => "reflected",
            CheckKind::ZSift => "Z-sift",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecoyState {
    Zero,
    One,
    Plus,
    Minus,
}

impl DecoyState {
    pub const ALL: [DecoyState; 4] = [DecoyState::Zero, DecoyState::One, DecoyState::Plus, DecoyState::Minus];

    pub fn random(rng: &mut SimRng) -> Self {
        Self::ALL[rng.below(4)]
    }

    pub fn basis(self) -> Basis {
        match self {
            DecoyState::Zero | DecoyState::One => Basis::Z,
            DecoyState::Plus | DecoyState::Minus => Basis::X,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            DecoyState::Zero | DecoyState::Plus => 0,
            DecoyState::One | DecoyState::Minus => 1,
        }
    }

    pub fn state(self) -> StateVector {
        StateVector::basis_ket(self.basis(), self.bit())
    }
}

/// Qubits in transmission order, as seen by the receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantumSequence {
    pub qubits: Vec<QubitId>,
}

/// What the preparer knows about the decoys it inserted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoyRecord {
    pub channel: ChannelId,
    /// Sorted slot indices holding decoys.
    pub positions: Vec<usize>,
    pub states: Vec<DecoyState>,
    pub payload_len: usize,
}

impl DecoyRecord {
    /// Decoy positions as a mask over the transmitted sequence.
    pub fn position_mask(&self) -> BitString {
        let mut mask = BitString::zeros(self.payload_len + self.positions.len());
        for &p in &self.positions {
            mask.flip(p);
        }
        mask
    }

    /// Decoy bases, 0 for Z and 1 for X.
    pub fn basis_bits(&self) -> BitString {
        BitString::new(self.states.iter().map(|s| (s.basis() == Basis::X) as u8).collect())
    }
}

impl QuantumSequence {
    /// Splits into (payload in original order, decoys in insertion order).
    pub fn split(&self, record: &DecoyRecord) -> Result<(Vec<QubitId>, Vec<QubitId>), ChannelError> {
        if self.qubits.len() != record.payload_len + record.positions.len() {
            return Err(ChannelError::RecordMismatch);
        }
        let mut payload = Vec::with_capacity(record.payload_len);
        let mut decoys = Vec::with_capacity(record.positions.len());
        let mut next = record.positions.iter().peekable();
        for (i, q) in self.qubits.iter().enumerate() {
            if next.peek() == Some(&&i) {
                next.next();
                decoys.push(*q);
            } else {
                payload.push(*q);
            }
        }
        Ok((payload, decoys))
    }
}

/// Acts on each qubit crossing an attacked channel.
pub trait Adversary: Send {
    fn intercept(&mut self, lab: &mut Lab, qubit: QubitId, rng: &mut SimRng) -> Result<(), ChannelError>;
}

/// Measures each qubit and forwards the collapsed state.
#[derive(Debug, Clone, Default)]
pub struct InterceptResend {
    /// `None` picks Z or X uniformly per qubit.
    pub basis: Option<Basis>,
    pub intercepted: usize,
}

impl InterceptResend {
    pub fn random_basis() -> Self {
        InterceptResend {
            basis: None,
            intercepted: 0,
        }
    }

    pub fn fixed(basis: Basis) -> Self {
        InterceptResend {
            basis: Some(basis),
            intercepted: 0,
        }
    }
}

impl Adversary for InterceptResend {
    fn intercept(&mut self, lab: &mut Lab, qubit: QubitId, rng: &mut SimRng) -> Result<(), ChannelError> {
        let basis = self.basis.unwrap_or_else(|| if rng.coin() { Basis::X } else { Basis::Z });
        lab.measure(qubit, basis, rng)?;
        self.intercepted += 1;
        Ok(())
    }
}

/// Coupling `Ê` of a transmitted qubit to a probe:
/// `Ê|0⟩|ε⟩ = α₀₀|0⟩|ε₀₀⟩ + α₀₁|1⟩|ε₀₁⟩`, `Ê|1⟩|ε⟩ = α₁₀|0⟩|ε₁₀⟩ + α₁₁|1⟩|ε₁₁⟩`.
/// Probe vectors live in a space of dimension ≤ 4 and are zero padded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EveParams {
    /// α₀₀, α₀₁, α₁₀, α₁₁.
    pub alpha: [Complex64; 4],
    /// ε₀₀, ε₀₁, ε₁₀, ε₁₁.
    pub eps: [Vec<Complex64>; 4],
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn probe_ket(amps: &[f64]) -> Vec<Complex64> {
    amps.iter().map(|&x| c(x)).collect()
}

impl EveParams {
    pub fn new(alpha: [Complex64; 4], eps: [Vec<Complex64>; 4]) -> Result<Self, ChannelError> {
        let mut p = EveParams { alpha, eps };
        for e in &mut p.eps {
            if e.is_empty() || e.len() > PROBE_DIM {
                return Err(ChannelError::InvalidEveParams(format!(
                    "probe vectors need dimension 1..={PROBE_DIM}, got {}",
                    e.len()
                )));
            }
            e.resize(PROBE_DIM, Complex64::default());
        }
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), ChannelError> {
        for (i, e) in self.eps.iter().enumerate() {
            let n = norm2(e);
            if (n - 1.0).abs() > PARAM_TOLERANCE {
                return Err(ChannelError::InvalidEveParams(format!("probe state {i} has norm² {n}")));
            }
        }
        let [a00, a01, a10, a11] = self.alpha;
        for (row, n) in [("α00, α01", a00.norm_sqr() + a01.norm_sqr()), ("α10, α11", a10.norm_sqr() + a11.norm_sqr())] {
            if (n - 1.0).abs() > PARAM_TOLERANCE {
                return Err(ChannelError::InvalidEveParams(format!("|{row}|² sums to {n}")));
            }
        }
        let cross = a00.conj() * a10 * inner(&self.eps[0], &self.eps[2]) + a01.conj() * a11 * inner(&self.eps[1], &self.eps[3]);
        if cross.norm() > PARAM_TOLERANCE {
            return Err(ChannelError::InvalidEveParams(format!(
                "images of |0⟩|ε⟩ and |1⟩|ε⟩ overlap by {:.3e}; Ê would not be unitary",
                cross.norm()
            )));
        }
        Ok(())
    }

    /// α₀₁ = α₁₀ = 0 and α₀₀ε₀₀ = α₁₁ε₁₁.
    pub fn undetectable(tau: &[f64]) -> Result<Self, ChannelError> {
        let t = probe_ket(tau);
        let o = c(1.0);
        let z = c(0.0);
        EveParams::new([o, z, z, o], [t.clone(), t.clone(), t.clone(), t])
    }

    /// Rotates the qubit by `theta` and leaves the probe alone.
    pub fn leakage(theta: f64) -> Result<Self, ChannelError> {
        let (s, co) = theta.sin_cos();
        let e = probe_ket(&[1.0]);
        EveParams::new([c(co), c(s), c(-s), c(co)], [e.clone(), e.clone(), e.clone(), e])
    }

    /// Leaves the qubit alone and tags |1⟩ with a probe rotated by `phi`.
    pub fn probe_separation(phi: f64) -> Result<Self, ChannelError> {
        let (s, co) = phi.sin_cos();
        let e0 = probe_ket(&[1.0, 0.0]);
        let e1 = probe_ket(&[co, s]);
        EveParams::new([c(1.0), c(0.0), c(0.0), c(1.0)], [e0.clone(), e0, e1.clone(), e1])
    }

    /// Norm of the undetectability residual (α₀₁, α₁₀, α₀₀ε₀₀ − α₁₁ε₁₁).
    pub fn violation(&self) -> f64 {
        let [a00, a01, a10, a11] = self.alpha;
        let diff: Vec<Complex64> = self.eps[0]
            .iter()
            .zip(&self.eps[3])
            .map(|(x, y)| a00 * x - a11 * y)
            .collect();
        (a01.norm_sqr() + a10.norm_sqr() + norm2(&diff)).sqrt()
    }

    pub fn is_undetectable(&self, tol: f64) -> bool {
        self.violation() <= tol
    }

    /// 8×8 unitary on (qubit, probe₀, probe₁); the probe starts in |00⟩.
    /// Columns not fixed by Ê are completed by Gram–Schmidt.
    pub fn joint_unitary(&self) -> Matrix {
        let dim = 2 * PROBE_DIM;
        let [a00, a01, a10, a11] = self.alpha;
        let mut col0 = vec![Complex64::default(); dim];
        let mut col1 = vec![Complex64::default(); dim];
        for k in 0..PROBE_DIM {
            col0[k] = a00 * self.eps[0][k];
            col0[PROBE_DIM + k] = a01 * self.eps[1][k];
            col1[k] = a10 * self.eps[2][k];
            col1[PROBE_DIM + k] = a11 * self.eps[3][k];
        }
        let mut cols: Vec<Vec<Complex64>> = vec![col0, col1];
        for k in 0..dim {
            if cols.len() == dim {
                break;
            }
            let mut v = vec![Complex64::default(); dim];
            v[k] = c(1.0);
            for u in &cols {
                let proj = inner(u, &v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= proj * ui;
                }
            }
            let n = norm2(&v).sqrt();
            if n > 1e-6 {
                cols.push(v.into_iter().map(|x| x / n).collect());
            }
        }
        // input |0⟩|00⟩ is column 0 and |1⟩|00⟩ is column PROBE_DIM
        let mut order: Vec<usize> = vec![usize::MAX; dim];
        order[0] = 0;
        order[PROBE_DIM] = 1;
        let mut spare = 2..dim;
        for slot in order.iter_mut() {
            if *slot == usize::MAX {
                *slot = spare.next().expect("enough columns");
            }
        }
        let mut data = vec![Complex64::default(); dim * dim];
        for (col, &src) in order.iter().enumerate() {
            for row in 0..dim {
                data[row * dim + col] = cols[src][row];
            }
        }
        Matrix::from_vec(dim, data)
    }
}

/// Applies Ê to a (qubit ⊗ probe) state of three qubits.
pub fn eve_entangle_measure(params: &EveParams, joint: &StateVector) -> Result<StateVector, ChannelError> {
    params.validate()?;
    if joint.num_qubits() != 1 + PROBE_QUBITS {
        return Err(QuantumError::StateDimensionMismatch(1 + PROBE_QUBITS, joint.num_qubits()).into());
    }
    Ok(joint.apply_unitary(&[0, 1, 2], &params.joint_unitary())?)
}

/// Entangles a fresh probe with every intercepted qubit.
#[derive(Debug, Clone)]
pub struct EntangleMeasure {
    pub params: EveParams,
    unitary: Matrix,
    /// (attacked qubit, probe qubits) per interception.
    pub probes: Vec<(QubitId, [QubitId; PROBE_QUBITS])>,
}

impl EntangleMeasure {
    pub fn new(params: EveParams) -> Self {
        let unitary = params.joint_unitary();
        EntangleMeasure {
            params,
            unitary,
            probes: Vec::new(),
        }
    }
}

impl Adversary for EntangleMeasure {
    fn intercept(&mut self, lab: &mut Lab, qubit: QubitId, _rng: &mut SimRng) -> Result<(), ChannelError> {
        let probe = lab.alloc(StateVector::basis_state(PROBE_QUBITS, 0)?);
        lab.apply(&[qubit, probe[0], probe[1]], &self.unitary)?;
        self.probes.push((qubit, [probe[0], probe[1]]));
        Ok(())
    }
}

/// Interleaves `decoy_count` fresh decoys with `payload` at uniformly random
/// positions and passes every qubit through the adversary.
#[allow(clippy::too_many_arguments)]
pub fn send_with_decoys(
    lab: &mut Lab,
    channel: ChannelId,
    payload: &[QubitId],
    decoy_count: usize,
    rng: &mut SimRng,
    adversary: Option<&mut dyn Adversary>,
    ledger: &mut OpLedger,
) -> Result<(QuantumSequence, DecoyRecord), ChannelError> {
    if decoy_count == 0 {
        return Err(ChannelError::NoDecoys);
    }
    let (preparer, _) = channel.endpoints();
    let total = payload.len() + decoy_count;
    let mut positions = index::sample(rng, total, decoy_count).into_vec();
    positions.sort_unstable();
    let states: Vec<DecoyState> = (0..decoy_count).map(|_| DecoyState::random(rng)).collect();
    let mut qubits = Vec::with_capacity(total);
    let mut decoys = states.iter();
    let mut data = payload.iter();
    let mut next_decoy = positions.iter().peekable();
    for i in 0..total {
        if next_decoy.peek() == Some(&&i) {
            next_decoy.next();
            let s = decoys.next().expect("decoy per position");
            let op = match s.basis() {
                Basis::Z => QuantumOp::PrepareZ,
                Basis::X => QuantumOp::PrepareX,
            };
            ledger.perform(preparer, op)?;
            qubits.push(lab.prepare(s.basis(), s.bit()));
        } else {
            qubits.push(*data.next().expect("payload per slot"));
        }
    }
    if let Some(adv) = adversary {
        for &q in &qubits {
            adv.intercept(lab, q, rng)?;
        }
    }
    Ok((
        QuantumSequence { qubits },
        DecoyRecord {
            channel,
            positions,
            states,
            payload_len: payload.len(),
        },
    ))
}

/// Outcome of a decoy check between quantum parties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyCheck {
    pub decoys: usize,
    pub errors: usize,
    pub error_rate: f64,
}

fn rate(errors: usize, checked: usize) -> f64 {
    if checked == 0 {
        0.0
    } else {
        errors as f64 / checked as f64
    }
}

/// The preparer announces decoy positions and bases; the receiver measures
/// each decoy in its basis and reports back; the preparer counts mismatches.
#[allow(clippy::too_many_arguments)]
pub fn check_decoys(
    lab: &mut Lab,
    seq: &QuantumSequence,
    record: &DecoyRecord,
    rng: &mut SimRng,
    threshold: f64,
    ledger: &mut OpLedger,
    log: &mut EventLog,
    phase: Phase,
) -> Result<(Vec<QubitId>, DecoyCheck), ChannelError> {
    let (preparer, receiver) = record.channel.endpoints();
    let (payload, decoys) = seq.split(record)?;
    let tag = record.channel.name();
    classical_send(log, phase, preparer, receiver, format!("{tag} decoy positions"), Purpose::Detection, record.position_mask());
    classical_send(log, phase, preparer, receiver, format!("{tag} decoy bases"), Purpose::Detection, record.basis_bits());
    let mut results = BitString::default();
    let mut errors = 0;
    for (q, s) in decoys.iter().zip(&record.states) {
        let op = match s.basis() {
            Basis::Z => QuantumOp::MeasureZ,
            Basis::X => QuantumOp::MeasureX,
        };
        ledger.perform(receiver, op)?;
        let bit = lab.measure(*q, s.basis(), rng)?;
        results.push(bit);
        errors += (bit != s.bit()) as usize;
    }
    classical_send(log, phase, receiver, preparer, format!("{tag} decoy results"), Purpose::Detection, results);
    let check = DecoyCheck {
        decoys: decoys.len(),
        errors,
        error_rate: rate(errors, decoys.len()),
    };
    log.push(Event::DecoyCheck {
        phase,
        channel: record.channel,
        checker: preparer,
        decoys: check.decoys,
        errors,
        error_rate: check.error_rate,
        passed: check.error_rate <= threshold,
    });
    if check.error_rate > threshold {
        return Err(ChannelError::EavesdroppingDetected {
            channel: record.channel,
            check: CheckKind::Decoy,
            checked: check.decoys,
            errors,
            error_rate: check.error_rate,
            threshold,
        });
    }
    Ok((payload, check))
}

/// Outcome of the SIFT/CTRL return check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnCheck {
    pub reflected: usize,
    pub reflected_errors: usize,
    /// Decoys both prepared in Z and SIFTed.
    pub z_sift: usize,
    pub z_sift_errors: usize,
}

impl ReturnCheck {
    pub fn reflected_rate(&self) -> f64 {
        rate(self.reflected_errors, self.reflected)
    }

    pub fn z_sift_rate(&self) -> f64 {
        rate(self.z_sift_errors, self.z_sift)
    }
}

/// Encodes a permutation of `0..len` as fixed-width indices.
fn encode_permutation(perm: &[usize]) -> BitString {
    let width = usize::BITS - perm.len().saturating_sub(1).leading_zeros();
    let mut out = BitString::default();
    for &p in perm {
        for b in (0..width).rev() {
            out.push(((p >> b) & 1) as u8);
        }
    }
    out
}

/// Return check on a sequence sent from a quantum party to a semiquantum one.
///
/// Message order: the preparer announces decoy positions; the classical
/// party SIFTs or CTRLs each decoy and shuffles the reflected ones; the
/// preparer collects them and announces which decoys were Z-prepared; the
/// classical party reveals the CTRL set and the shuffle; the preparer
/// measures the reflected decoys in their preparation bases; finally the
/// classical party publishes its Z results.
#[allow(clippy::too_many_arguments)]
pub fn semiquantum_return_check(
    lab: &mut Lab,
    seq: &QuantumSequence,
    record: &DecoyRecord,
    rng: &mut SimRng,
    threshold: f64,
    ledger: &mut OpLedger,
    log: &mut EventLog,
    phase: Phase,
) -> Result<(Vec<QubitId>, ReturnCheck), ChannelError> {
    let (quantum, classical) = record.channel.endpoints();
    let (payload, decoys) = seq.split(record)?;
    let tag = record.channel.name();
    classical_send(log, phase, quantum, classical, format!("{tag} decoy positions"), Purpose::Detection, record.position_mask());

    let mut ctrl_mask = BitString::default();
    let mut reflected: Vec<usize> = Vec::new();
    let mut sift_results: Vec<(usize, u8)> = Vec::new();
    for (j, q) in decoys.iter().enumerate() {
        if rng.coin() {
            ledger.perform(classical, QuantumOp::MeasureZ)?;
            sift_results.push((j, lab.measure(*q, Basis::Z, rng)?));
            ctrl_mask.push(0);
        } else {
            ledger.perform(classical, QuantumOp::Reflect)?;
            reflected.push(j);
            ctrl_mask.push(1);
        }
    }
    let mut order: Vec<usize> = (0..reflected.len()).collect();
    order.shuffle(rng);
    ledger.perform(classical, QuantumOp::Reorder)?;
    // returned[k] is the decoy that arrives k-th
    let returned: Vec<QubitId> = order.iter().map(|&k| decoys[reflected[k]]).collect();

    let z_prepared = BitString::new(record.states.iter().map(|s| (s.basis() == Basis::Z) as u8).collect());
    classical_send(log, phase, quantum, classical, format!("{tag} Z-prepared decoys"), Purpose::Detection, z_prepared);
    classical_send(log, phase, classical, quantum, format!("{tag} CTRL decoys"), Purpose::Detection, ctrl_mask);
    classical_send(log, phase, classical, quantum, format!("{tag} reflection order"), Purpose::Detection, encode_permutation(&order));

    let mut reflected_errors = 0;
    for (arrival, &k) in order.iter().enumerate() {
        let s = record.states[reflected[k]];
        let op = match s.basis() {
            Basis::Z => QuantumOp::MeasureZ,
            Basis::X => QuantumOp::MeasureX,
        };
        ledger.perform(quantum, op)?;
        let bit = lab.measure(returned[arrival], s.basis(), rng)?;
        reflected_errors += (bit != s.bit()) as usize;
    }

    let published = BitString::new(sift_results.iter().map(|(_, b)| *b).collect());
    classical_send(log, phase, classical, quantum, format!("{tag} SIFT results"), Purpose::Detection, published);
    let mut z_sift = 0;
    let mut z_sift_errors = 0;
    for &(j, bit) in &sift_results {
        let s = record.states[j];
        if s.basis() == Basis::Z {
            z_sift += 1;
            z_sift_errors += (bit != s.bit()) as usize;
        }
    }
    let check = ReturnCheck {
        reflected: reflected.len(),
        reflected_errors,
        z_sift,
        z_sift_errors,
    };
    let passed = check.reflected_rate() <= threshold && check.z_sift_rate() <= threshold;
    log.push(Event::ReturnCheck {
        phase,
        channel: record.channel,
        classical_party: classical,
        reflected: check.reflected,
        reflected_errors,
        z_sift,
        z_sift_errors,
        passed,
    });
    if check.reflected_rate() > threshold {
        return Err(ChannelError::EavesdroppingDetected {
            channel: record.channel,
            check: CheckKind::Reflected,
            checked: check.reflected,
            errors: reflected_errors,
            error_rate: check.reflected_rate(),
            threshold,
        });
    }
    if check.z_sift_rate() > threshold {
        return Err(ChannelError::EavesdroppingDetected {
            channel: record.channel,
            check: CheckKind::ZSift,
            checked: z_sift,
            errors: z_sift_errors,
            error_rate: check.z_sift_rate(),
            threshold,
        });
    }
    Ok((payload, check))
}

/// Authenticated, ordered classical delivery; logged in full.
pub fn classical_send(
    log: &mut EventLog,
    phase: Phase,
    from: PartyRole,
    to: PartyRole,
    label: impl Into<String>,
    purpose: Purpose,
    payload: BitString,
) -> Receipt {
    log.push(Event::Classical {
        phase,
        from,
        to,
        label: label.into(),
        purpose,
        bits: payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum_core::fidelity_up_to_phase;

    fn send(
        lab: &mut Lab,
        channel: ChannelId,
        payload: &[QubitId],
        d: usize,
        rng: &mut SimRng,
        adv: Option<&mut dyn Adversary>,
    ) -> (QuantumSequence, DecoyRecord) {
        send_with_decoys(lab, channel, payload, d, rng, adv, &mut OpLedger::new()).unwrap()
    }

    #[test]
    fn zero_decoys_rejected() {
        let mut lab = Lab::new();
        let mut rng = SimRng::from_seed(1);
        let r = send_with_decoys(&mut lab, ChannelId::XiM, &[], 0, &mut rng, None, &mut OpLedger::new());
        assert_eq!(r.unwrap_err(), ChannelError::NoDecoys);
    }

    #[test]
    fn honest_channel_preserves_payload_order_and_states() {
        let mut lab = Lab::new();
        let mut rng = SimRng::from_seed(2);
        let payload: Vec<QubitId> = (0..6).map(|i| lab.prepare(Basis::X, (i % 2) as u8)).collect();
        let (seq, rec) = send(&mut lab, ChannelId::XiM, &payload, 5, &mut rng, None);
        assert_eq!(seq.qubits.len(), 11);
        let (back, decoys) = seq.split(&rec).unwrap();
        assert_eq!(back, payload);
        for (q, s) in decoys.iter().zip(&rec.states) {
            let st = lab.qubit_state(*q).unwrap().unwrap();
            assert!((fidelity_up_to_phase(&st, &s.state()).unwrap() - 1.0).abs() < 1e-12);
        }
        let mut log = EventLog::new();
        let (_, check) =
            check_decoys(&mut lab, &seq, &rec, &mut rng, 0.0, &mut OpLedger::new(), &mut log, Phase::SignAuth).unwrap();
        assert_eq!(check.error_rate, 0.0);
        assert_eq!(log.len(), 4);
    }

    #[test]
    fn decoy_states_uniform() {
        let mut rng = SimRng::from_seed(3);
        let mut counts = [0usize; 4];
        let trials = 40_000;
        for _ in 0..trials {
            counts[DecoyState::random(&mut rng) as usize] += 1;
        }
        let sd = (trials as f64 * 0.25 * 0.75).sqrt();
        for k in counts {
            assert!((k as f64 - trials as f64 / 4.0).abs() < 4.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn intercept_resend_disturbs_quarter_of_decoys() {
        let mut rng = SimRng::from_seed(4);
        let (mut checked, mut errors) = (0usize, 0usize);
        for _ in 0..500 {
            let mut lab = Lab::new();
            let mut eve = InterceptResend::random_basis();
            let (seq, rec) = send(&mut lab, ChannelId::XiM, &[], 40, &mut rng, Some(&mut eve));
            let mut log = EventLog::new();
            match check_decoys(&mut lab, &seq, &rec, &mut rng, 1.0, &mut OpLedger::new(), &mut log, Phase::SignAuth) {
                Ok((_, c)) => {
                    checked += c.decoys;
                    errors += c.errors;
                }
                Err(e) => panic!("{e}"),
            }
        }
        let p = errors as f64 / checked as f64;
        let sd = (0.25 * 0.75 / checked as f64).sqrt();
        assert!((p - 0.25).abs() < 3.0 * sd, "{p}");
    }

    #[test]
    fn threshold_breach_aborts() {
        let mut rng = SimRng::from_seed(5);
        let mut lab = Lab::new();
        let mut eve = InterceptResend::random_basis();
        let (seq, rec) = send(&mut lab, ChannelId::W2, &[], 64, &mut rng, Some(&mut eve));
        let mut log = EventLog::new();
        let err = check_decoys(&mut lab, &seq, &rec, &mut rng, 0.0, &mut OpLedger::new(), &mut log, Phase::SignAuth)
            .unwrap_err();
        assert!(matches!(
            err,
            ChannelError::EavesdroppingDetected {
                channel: ChannelId::W2,
                check: CheckKind::Decoy,
                ..
            }
        ));
    }

    #[test]
    fn return_check_honest_and_permutation_roundtrip() {
        let mut rng = SimRng::from_seed(6);
        for _ in 0..50 {
            let mut lab = Lab::new();
            let payload: Vec<QubitId> = (0..3).map(|_| lab.prepare(Basis::Z, 0)).collect();
            let (seq, rec) = send(&mut lab, ChannelId::W1, &payload, 12, &mut rng, None);
            let mut ledger = OpLedger::new();
            let mut log = EventLog::new();
            let (back, check) =
                semiquantum_return_check(&mut lab, &seq, &rec, &mut rng, 0.0, &mut ledger, &mut log, Phase::SignAuth)
                    .unwrap();
            assert_eq!(back, payload);
            assert_eq!(check.reflected_errors, 0);
            assert_eq!(check.z_sift_errors, 0);
            assert_eq!(ledger.count(PartyRole::Bob, QuantumOp::MeasureX), 0);
        }
    }

    #[test]
    fn z_measuring_adversary_disturbs_reflected_x_decoys() {
        let mut rng = SimRng::from_seed(7);
        let (mut x_reflected, mut x_err) = (0usize, 0usize);
        for _ in 0..2000 {
            let mut lab = Lab::new();
            let mut eve = InterceptResend::fixed(Basis::Z);
            let (seq, rec) = send(&mut lab, ChannelId::W4, &[], 1, &mut rng, Some(&mut eve));
            let x_decoy = rec.states[0].basis() == Basis::X;
            let mut log = EventLog::new();
            let res =
                semiquantum_return_check(&mut lab, &seq, &rec, &mut rng, 1.0, &mut OpLedger::new(), &mut log, Phase::SignAuth)
                    .unwrap();
            if x_decoy && res.1.reflected == 1 {
                x_reflected += 1;
                x_err += res.1.reflected_errors;
            }
            assert_eq!(res.1.z_sift_errors, 0);
        }
        let p = x_err as f64 / x_reflected as f64;
        let sd = (0.25 / x_reflected as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * sd, "{p} over {x_reflected}");
    }

    #[test]
    fn permutation_encoding_width() {
        assert_eq!(encode_permutation(&[1, 0]).to_string(), "10");
        assert_eq!(encode_permutation(&[2, 0, 1]).to_string(), "100001");
        assert!(encode_permutation(&[0]).is_empty());
    }

    #[test]
    fn eve_params_validation() {
        assert!(EveParams::undetectable(&[1.0]).is_ok());
        let o = c(1.0);
        let z = c(0.0);
        let e = vec![o];
        // |α00|² + |α01|² = 2
        assert!(EveParams::new([o, o, z, o], [e.clone(), e.clone(), e.clone(), e.clone()]).is_err());
        // both inputs map to |0⟩|ε⟩: not unitary
        assert!(EveParams::new([o, z, o, z], [e.clone(), e.clone(), e.clone(), e.clone()]).is_err());
        assert!(EveParams::new([o, z, z, o], [vec![c(0.5)], e.clone(), e.clone(), e.clone()]).is_err());
        assert!(EveParams::new([o, z, z, o], [vec![z; 5], e.clone(), e.clone(), e]).is_err());
    }

    #[test]
    fn joint_unitary_is_unitary_and_matches_definition() {
        for p in [
            EveParams::undetectable(&[0.6, 0.8]).unwrap(),
            EveParams::leakage(0.3).unwrap(),
            EveParams::probe_separation(1.1).unwrap(),
        ] {
            let u = p.joint_unitary();
            assert!(u.is_unitary(1e-12));
            for k in 0..PROBE_DIM {
                assert!((u.get(k, 0) - p.alpha[0] * p.eps[0][k]).norm() < 1e-12);
                assert!((u.get(PROBE_DIM + k, 0) - p.alpha[1] * p.eps[1][k]).norm() < 1e-12);
                assert!((u.get(k, PROBE_DIM) - p.alpha[2] * p.eps[2][k]).norm() < 1e-12);
                assert!((u.get(PROBE_DIM + k, PROBE_DIM) - p.alpha[3] * p.eps[3][k]).norm() < 1e-12);
            }
        }
    }

    fn attacked(params: &EveParams, d: DecoyState) -> StateVector {
        let joint = d.state().tensor(&StateVector::basis_state(2, 0).unwrap()).unwrap();
        eve_entangle_measure(params, &joint).unwrap()
    }

    #[test]
    fn undetectable_eve_leaves_decoys_alone() {
        let p = EveParams::undetectable(&[0.6, 0.0, 0.8]).unwrap();
        let tau = StateVector::from_amplitudes(vec![c(0.6), c(0.0), c(0.8), c(0.0)]).unwrap();
        for d in DecoyState::ALL {
            let out = attacked(&p, d);
            let expect = d.state().tensor(&tau).unwrap();
            assert!((fidelity_up_to_phase(&out, &expect).unwrap() - 1.0).abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn orthogonal_probe_eve_on_plus_and_zero() {
        let p = EveParams::probe_separation(std::f64::consts::FRAC_PI_2).unwrap();
        let out = attacked(&p, DecoyState::Plus);
        assert!((out.probability(0, Basis::X, 1).unwrap() - 0.5).abs() < 1e-12);
        let out = attacked(&p, DecoyState::Zero);
        assert!(out.probability(0, Basis::Z, 1).unwrap() < 1e-15);
        // ε00·ε11 overlap controls the X disturbance: (1 − Re⟨ε00|ε11⟩)/2
        let phi: f64 = 0.7;
        let p = EveParams::probe_separation(phi).unwrap();
        let out = attacked(&p, DecoyState::Plus);
        assert!((out.probability(0, Basis::X, 1).unwrap() - (1.0 - phi.cos()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn insertion_positions_uniform_over_interleavings() {
        let mut rng = SimRng::from_seed(11);
        let mut counts = std::collections::HashMap::<Vec<usize>, usize>::new();
        let trials = 100_000;
        for _ in 0..trials {
            let mut lab = Lab::new();
            let payload: Vec<QubitId> = (0..4).map(|_| lab.prepare(Basis::Z, 0)).collect();
            let (_, rec) = send(&mut lab, ChannelId::XiM, &payload, 4, &mut rng, None);
            *counts.entry(rec.positions).or_default() += 1;
        }
        assert_eq!(counts.len(), 70);
        let expected = trials as f64 / 70.0;
        let chi2: f64 = counts.values().map(|&k| (k as f64 - expected).powi(2) / expected).sum();
        // 69 degrees of freedom; the 0.999 quantile is about 111.1
        assert!(chi2 < 111.1, "chi² = {chi2}");
    }
}
