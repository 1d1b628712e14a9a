//! Classical key material: bit strings, one-time pads, the keyed hash shared
//! by the message owner and the verifier, and qubit-level simulations of
//! BB84 and semiquantum key distribution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channels::{Adversary, ChannelError};
use crate::lab::Lab;
use crate::party::{CapabilityError, OpLedger, PartyRole, QuantumOp};
use crate::quantum_core::{Basis, QuantumError, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeyError {
    #[error("bit strings differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("one-time pad exhausted: need {needed} bits, {available} unused")]
    PadExhausted { needed: usize, available: usize },
    #[error("{method} key establishment aborted: error rate {error_rate:.4} above threshold {threshold}")]
    Abort {
        method: &'static str,
        error_rate: f64,
        threshold: f64,
    },
    #[error("unsupported hash algorithm {0:?}")]
    UnsupportedHash(String),
    #[error("key length must be at least 1")]
    ZeroLength,
    #[error("invalid bit string: {0}")]
    Parse(String),
    #[error(transparent)]
    Capability(#[from] CapabilityError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Channel(#[from] Box<ChannelError>),
}

/// Ordered sequence of bits. Serializes as a string of `0`/`1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn new(bits: Vec<u8>) -> Self {
        BitString(bits.into_iter().map(|b| b & 1).collect())
    }

    pub fn zeros(len: usize) -> Self {
        BitString(vec![0; len])
    }

    pub fn ones(len: usize) -> Self {
        BitString(vec![1; len])
    }

    pub fn random(len: usize, rng: &mut SimRng) -> Self {
        BitString((0..len).map(|_| rng.bit()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn push(&mut self, bit: u8) {
        self.0.push(bit & 1);
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] ^= 1;
    }

    pub fn slice(&self, start: usize, end: usize) -> BitString {
        BitString(self.0[start..end].to_vec())
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString, KeyError> {
        if self.len() != other.len() {
            return Err(KeyError::LengthMismatch(self.len(), other.len()));
        }
        Ok(BitString(self.0.iter().zip(&other.0).map(|(a, b)| a ^ b).collect()))
    }

    pub fn hamming(&self, other: &BitString) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    /// Big-endian packing, zero padded in the last byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|chunk| chunk.iter().enumerate().fold(0u8, |acc, (i, b)| acc | (b << (7 - i))))
            .collect()
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> BitString {
        BitString((0..len).map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1).collect())
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|ch| match ch {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(KeyError::Parse(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<u8>, _>>()
            .map(BitString)
    }
}

impl From<Vec<u8>> for BitString {
    fn from(bits: Vec<u8>) -> Self {
        BitString::new(bits)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `g_i = g_A,i ⊕ K_A,i`.
pub fn xor_blind(message: &BitString, key: &BitString) -> Result<BitString, KeyError> {
    message.xor(key)
}

pub fn otp_encrypt(key: &BitString, msg: &BitString) -> Result<BitString, KeyError> {
    if key.len() < msg.len() {
        return Err(KeyError::PadExhausted {
            needed: msg.len(),
            available: key.len(),
        });
    }
    msg.xor(&key.slice(0, msg.len()))
}

pub fn otp_decrypt(key: &BitString, ciphertext: &BitString) -> Result<BitString, KeyError> {
    otp_encrypt(key, ciphertext)
}

/// One-time pad that hands out each key bit at most once.
#[derive(Debug, Clone)]
pub struct OneTimePad {
    key: BitString,
    cursor: usize,
}

impl OneTimePad {
    pub fn new(key: BitString) -> Self {
        OneTimePad { key, cursor: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.key.len() - self.cursor
    }

    /// XORs `msg` with the next unused key bits.
    pub fn apply(&mut self, msg: &BitString) -> Result<BitString, KeyError> {
        if msg.len() > self.remaining() {
            return Err(KeyError::PadExhausted {
                needed: msg.len(),
                available: self.remaining(),
            });
        }
        let out = msg.xor(&self.key.slice(self.cursor, self.cursor + msg.len()))?;
        self.cursor += msg.len();
        Ok(out)
    }
}

pub const SHA256_CTR: &str = "sha256-ctr";

/// Keyed hash configuration. The digest is
/// `SHA-256(counter ∥ |secret| ∥ secret ∥ |msg| ∥ msg)` over successive
/// 32-bit counters, concatenated and truncated to `output_bits`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashConfig {
    pub algorithm: String,
    pub output_bits: usize,
    pub secret_bits: usize,
}

impl Default for HashConfig {
    fn default() -> Self {
        HashConfig {
            algorithm: SHA256_CTR.to_string(),
            output_bits: 256,
            secret_bits: 256,
        }
    }
}

impl HashConfig {
    pub fn with_output_bits(output_bits: usize) -> Self {
        HashConfig {
            output_bits,
            ..Self::default()
        }
    }
}

pub fn keyed_hash(cfg: &HashConfig, secret: &BitString, msg: &BitString) -> Result<BitString, KeyError> {
    if cfg.algorithm != SHA256_CTR {
        return Err(KeyError::UnsupportedHash(cfg.algorithm.clone()));
    }
    if cfg.output_bits == 0 {
        return Err(KeyError::ZeroLength);
    }
    let secret_bytes = secret.to_bytes();
    let msg_bytes = msg.to_bytes();
    let mut out = Vec::with_capacity(cfg.output_bits.div_ceil(8));
    let mut counter: u32 = 0;
    while out.len() * 8 < cfg.output_bits {
        let mut h = Sha256::new();
        h.update(counter.to_be_bytes());
        h.update((secret.len() as u64).to_be_bytes());
        h.update(&secret_bytes);
        h.update((msg.len() as u64).to_be_bytes());
        h.update(&msg_bytes);
        out.extend_from_slice(h.finalize().as_slice());
        counter += 1;
    }
    Ok(BitString::from_bytes(&out, cfg.output_bits))
}

/// Key lengths fixed by the protocol for message length `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRing {
    /// Alice's local blinding key (n bits, never transmitted).
    pub k_a: BitString,
    /// Bob–Trent key (n bits).
    pub k_bt: BitString,
    /// Charlie–Trent key (n bits).
    pub k_ct: BitString,
    /// David–Trent key (2n bits).
    pub k_dt: BitString,
    /// Alice–Charlie hash secret.
    pub hash_secret: BitString,
}

impl KeyRing {
    pub fn new(
        n: usize,
        k_a: BitString,
        k_bt: BitString,
        k_ct: BitString,
        k_dt: BitString,
        hash_secret: BitString,
    ) -> Result<Self, KeyError> {
        for (got, want) in [
            (k_a.len(), n),
            (k_bt.len(), n),
            (k_ct.len(), n),
            (k_dt.len(), 2 * n),
        ] {
            if got != want {
                return Err(KeyError::LengthMismatch(got, want));
            }
        }
        Ok(KeyRing {
            k_a,
            k_bt,
            k_ct,
            k_dt,
            hash_secret,
        })
    }

    pub fn lengths(&self) -> (usize, usize, usize, usize) {
        (self.k_a.len(), self.k_bt.len(), self.k_ct.len(), self.k_dt.len())
    }
}

/// Outcome of a simulated key establishment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyExchange {
    /// Quantum party's key.
    pub sender: BitString,
    /// Peer's key.
    pub receiver: BitString,
    /// Mismatches over every checked position.
    pub error_rate: f64,
    pub raw_qubits: usize,
    pub sifted: usize,
    pub ctrl_checked: usize,
    pub ctrl_errors: usize,
    pub ctrl_x_checked: usize,
    pub ctrl_x_errors: usize,
}

impl KeyExchange {
    pub fn ctrl_x_error_rate(&self) -> f64 {
        ratio(self.ctrl_x_errors, self.ctrl_x_checked)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn random_basis(rng: &mut SimRng) -> Basis {
    if rng.coin() {
        Basis::X
    } else {
        Basis::Z
    }
}

fn prep_op(basis: Basis) -> QuantumOp {
    match basis {
        Basis::Z => QuantumOp::PrepareZ,
        Basis::X => QuantumOp::PrepareX,
    }
}

fn measure_op(basis: Basis) -> QuantumOp {
    match basis {
        Basis::Z => QuantumOp::MeasureZ,
        Basis::X => QuantumOp::MeasureX,
    }
}

/// BB84 between `sender` and `receiver` until `length` sifted bits exist.
/// The error rate compares the two sifted keys bit by bit.
pub fn establish_key_bb84(
    length: usize,
    rng: &mut SimRng,
    mut eve: Option<&mut dyn Adversary>,
    threshold: f64,
    parties: (PartyRole, PartyRole),
    ledger: &mut OpLedger,
) -> Result<KeyExchange, KeyError> {
    if length == 0 {
        return Err(KeyError::ZeroLength);
    }
    let (tx, rx) = parties;
    let mut lab = Lab::new();
    let mut sender = BitString::default();
    let mut receiver = BitString::default();
    let mut raw = 0;
    while sender.len() < length {
        let bit = rng.bit();
        let basis = random_basis(rng);
        ledger.perform(tx, prep_op(basis))?;
        let q = lab.prepare(basis, bit);
        if let Some(eve) = eve.as_deref_mut() {
            eve.intercept(&mut lab, q, rng).map_err(Box::new)?;
        }
        let rx_basis = random_basis(rng);
        ledger.perform(rx, measure_op(rx_basis))?;
        let m = lab.measure(q, rx_basis, rng)?;
        raw += 1;
        if rx_basis == basis {
            sender.push(bit);
            receiver.push(m);
        }
    }
    let error_rate = ratio(sender.hamming(&receiver), length);
    if error_rate > threshold {
        return Err(KeyError::Abort {
            method: "bb84",
            error_rate,
            threshold,
        });
    }
    Ok(KeyExchange {
        sender,
        receiver,
        error_rate,
        raw_qubits: raw,
        sifted: length,
        ctrl_checked: 0,
        ctrl_errors: 0,
        ctrl_x_checked: 0,
        ctrl_x_errors: 0,
    })
}

/// Semiquantum key distribution with a quantum `sender` and a classical
/// `receiver`. The receiver either SIFTs (Z-measures, then resends a fresh
/// Z-basis qubit) or CTRLs (reflects). Key bits come from SIFT positions
/// where the sender prepared in Z; CTRL positions are checked in the
/// preparation basis. The adversary acts on the forward leg.
pub fn establish_key_sqkd(
    length: usize,
    rng: &mut SimRng,
    mut eve: Option<&mut dyn Adversary>,
    threshold: f64,
    parties: (PartyRole, PartyRole),
    ledger: &mut OpLedger,
) -> Result<KeyExchange, KeyError> {
    if length == 0 {
        return Err(KeyError::ZeroLength);
    }
    let (tx, rx) = parties;
    let mut lab = Lab::new();
    let mut sender = BitString::default();
    let mut receiver = BitString::default();
    let (mut raw, mut ctrl, mut ctrl_err, mut ctrl_x, mut ctrl_x_err, mut resend_err) = (0, 0, 0, 0, 0, 0);
    while sender.len() < length {
        let bit = rng.bit();
        let basis = random_basis(rng);
        ledger.perform(tx, prep_op(basis))?;
        let q = lab.prepare(basis, bit);
        if let Some(eve) = eve.as_deref_mut() {
            eve.intercept(&mut lab, q, rng).map_err(Box::new)?;
        }
        raw += 1;
        let sift = rng.coin();
        let (returned, sifted_bit) = if sift {
            ledger.perform(rx, QuantumOp::MeasureZ)?;
            let r = lab.measure(q, Basis::Z, rng)?;
            ledger.perform(rx, QuantumOp::PrepareZ)?;
            (lab.prepare(Basis::Z, r), Some(r))
        } else {
            ledger.perform(rx, QuantumOp::Reflect)?;
            (q, None)
        };
        ledger.perform(tx, measure_op(basis))?;
        let m = lab.measure(returned, basis, rng)?;
        match sifted_bit {
            None => {
                ctrl += 1;
                let wrong = (m != bit) as usize;
                ctrl_err += wrong;
                if basis == Basis::X {
                    ctrl_x += 1;
                    ctrl_x_err += wrong;
                }
            }
            Some(r) if basis == Basis::Z => {
                resend_err += (m != r) as usize;
                sender.push(bit);
                receiver.push(r);
            }
            Some(_) => {}
        }
    }
    let key_err = sender.hamming(&receiver) + resend_err;
    let error_rate = ratio(ctrl_err + key_err, ctrl + length);
    if error_rate > threshold {
        return Err(KeyError::Abort {
            method: "sqkd",
            error_rate,
            threshold,
        });
    }
    Ok(KeyExchange {
        sender,
        receiver,
        error_rate,
        raw_qubits: raw,
        sifted: length,
        ctrl_checked: ctrl,
        ctrl_errors: ctrl_err,
        ctrl_x_checked: ctrl_x,
        ctrl_x_errors: ctrl_x_err,
    })
}
