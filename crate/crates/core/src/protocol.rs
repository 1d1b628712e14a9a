//! Five-party orchestration: initializing, blindness, authorization and
//! signing, verifying.
//!
//! Alice owns the message, Bob authorizes, David signs as proxy, Trent
//! recovers the teleported blind message and Charlie verifies. Bob and
//! Charlie are semiquantum. Every run is driven by one seed and produces a
//! [`Transcript`] that replays bit-exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channels::{
    check_decoys, classical_send, semiquantum_return_check, Adversary, ChannelError, CheckKind, DecoyRecord,
    EntangleMeasure, EveParams, InterceptResend, QuantumSequence,
};
use crate::chi_teleport::{correction_for, prepare_chi, project_branch, MessageQubit, ProjectionOrder, TeleportOutcomes};
use crate::crypto_keys::{
    establish_key_bb84, establish_key_sqkd, keyed_hash, otp_decrypt, otp_encrypt, BitString, HashConfig, KeyError,
    KeyExchange, KeyRing,
};
use crate::lab::{Lab, QubitId};
use crate::quantum_core::{fidelity_up_to_phase, Basis, BellOutcome, PauliCorrection, QuantumError, SimRng, StateVector};
use crate::transcript::{ChannelId, Event, EventLog, KeyMethod, Purpose};

pub use crate::party::{CapabilityError, OpLedger, PartyRole, QuantumOp};
pub use crate::transcript::Phase;

pub const TOOL_NAME: &str = "sqpbs";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// RNG stream reserved for Alice's private key.
pub const ALICE_KEY_STREAM: u64 = 1;
/// RNG stream used when a message is generated rather than supplied.
pub const MESSAGE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyMode {
    /// Qubit-level BB84 and SQKD.
    #[default]
    Simulated,
    /// Keys drawn directly from the run's RNG.
    Stubbed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Attack {
    #[default]
    None,
    /// Measure every qubit on `channel` and resend; `basis: None` picks
    /// Z or X at random per qubit.
    InterceptResend {
        channel: ChannelId,
        basis: Option<Basis>,
    },
    EntangleMeasure {
        channel: ChannelId,
        params: EveParams,
    },
    /// Outside attacker replaces E_K_DT(M_D) with uniform random bits.
    ForgeMd,
    /// Insider without K_DT who knows the honest M_D and encrypts it under
    /// a guessed key.
    InsiderForgeMd,
    /// Flips one bit of E_K_DT(M_D) in transit.
    FlipMdBit { index: usize },
    /// A party never sends its encrypted measurement record.
    Withhold { party: PartyRole },
}

impl Attack {
    fn channel(&self) -> Option<ChannelId> {
        match self {
            Attack::InterceptResend { channel, .. } | Attack::EntangleMeasure { channel, .. } => Some(*channel),
            _ => None,
        }
    }
}

/// Everything that determines a run apart from Alice's private inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n: usize,
    pub seed: u64,
    /// Decoys per quantum sequence; defaults to `n`.
    pub decoys: Option<usize>,
    /// Largest tolerated error rate in any check.
    pub threshold: f64,
    pub attack: Attack,
    pub hash: HashConfig,
    pub key_mode: KeyMode,
}

impl ProtocolConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        ProtocolConfig {
            n,
            seed,
            decoys: None,
            threshold: 0.0,
            attack: Attack::None,
            hash: HashConfig::default(),
            key_mode: KeyMode::Simulated,
        }
    }

    pub fn decoy_count(&self) -> usize {
        self.decoys.unwrap_or(self.n)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |s: String| Err(ProtocolError::Config(s));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.decoy_count() == 0 {
            return bad("at least one decoy per sequence is required".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if self.hash.output_bits == 0 || self.hash.secret_bits == 0 {
            return bad("hash output and secret lengths must be positive".into());
        }
        match &self.attack {
            Attack::FlipMdBit { index } if *index >= 2 * self.n => {
                bad(format!("M_D bit {index} out of range for n = {}", self.n))
            }
            Attack::Withhold { party } if !matches!(party, PartyRole::Bob | PartyRole::David | PartyRole::Charlie) => {
                bad(format!("{party} sends no measurement record"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum AbortReason {
    EavesdroppingDetected {
        channel: ChannelId,
        check: CheckKind,
        error_rate: f64,
        threshold: f64,
    },
    KeyEstablishment {
        key: String,
        error_rate: f64,
        threshold: f64,
    },
    /// Trent cannot recover ξₘ without this party's record.
    RecordWithheld { party: PartyRole },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    Invalid,
    Aborted { phase: Phase, cause: AbortReason },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("operation requires phase {expected:?}, run is in {found:?}")]
    WrongPhase { expected: Phase, found: Phase },
    #[error("message has {0} bits, expected {1}")]
    MessageLength(usize, usize),
    #[error("run aborted: {0:?}")]
    Aborted(AbortReason),
    #[error("keys held by {0:?} disagree")]
    KeyMismatch((PartyRole, PartyRole)),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Channel(ChannelError),
    #[error(transparent)]
    Capability(#[from] CapabilityError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

impl From<ChannelError> for ProtocolError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::EavesdroppingDetected {
                channel,
                check,
                error_rate,
                threshold,
                ..
            } => ProtocolError::Aborted(AbortReason::EavesdroppingDetected {
                channel,
                check,
                error_rate,
                threshold,
            }),
            ChannelError::Capability(c) => ProtocolError::Capability(c),
            ChannelError::Quantum(q) => ProtocolError::Quantum(q),
            other => ProtocolError::Channel(other),
        }
    }
}

/// Alice's private inputs; kept out of the public event record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliceInputs {
    pub message: BitString,
    pub alice_key: BitString,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub tool: String,
    pub version: String,
    pub config: ProtocolConfig,
    pub inputs: AliceInputs,
    pub events: Vec<Event>,
    pub verdict: Verdict,
}

impl Transcript {
    /// Everything observable by parties other than Alice.
    pub fn public_record(&self) -> (&ProtocolConfig, &[Event], &Verdict) {
        (&self.config, &self.events, &self.verdict)
    }

    /// Events in which `party` took part.
    pub fn view(&self, party: PartyRole) -> Vec<&Event> {
        self.events
            .iter()
            .filter(|e| matches!(e, Event::PhaseChange { .. }) || e.parties().contains(&party))
            .collect()
    }

    /// Bits of a named measurement record (`M_B`, `M_D`, `M_C`, `g'`, ...).
    pub fn record(&self, name: &str) -> Option<&BitString> {
        self.events.iter().find_map(|e| match e {
            Event::Record { name: n, bits, .. } if n == name => Some(bits),
            _ => None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Re-executes the embedded configuration and inputs.
    pub fn replay(&self) -> Result<Transcript, ProtocolError> {
        run_full(&self.inputs.message, Some(&self.inputs.alice_key), &self.config)
    }
}

/// Simulator-side facts that no party observes.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Alice's |ξᵢ⟩ₘ.
    pub sent_xi: Vec<StateVector>,
    pub corrections: Vec<PauliCorrection>,
    /// Fidelity up to phase of Trent's corrected qubit to Alice's |ξᵢ⟩ₘ.
    pub recovered_fidelity: Vec<f64>,
}

/// Qubits of one χ instance, particles 1..=4.
#[derive(Debug, Clone, Copy)]
struct ChiQubits([QubitId; 4]);

type Dispatched = (QuantumSequence, DecoyRecord);

pub struct ProtocolState {
    config: ProtocolConfig,
    rng: SimRng,
    lab: Lab,
    phase: Phase,
    log: EventLog,
    ops: OpLedger,
    detect: OpLedger,
    adversary: Option<Box<dyn Adversary>>,
    inputs: AliceInputs,
    keys: Option<KeyRing>,
    instances: Vec<ChiQubits>,
    w1: Option<Dispatched>,
    w2: Option<Dispatched>,
    w4: Option<Dispatched>,
    g: BitString,
    h_g: BitString,
    xi: Vec<QubitId>,
    g_prime: Option<Dispatched>,
    pub diagnostics: Diagnostics,
}

fn bits_of(outcome: BellOutcome) -> [u8; 2] {
    outcome.classical_bits()
}

impl ProtocolState {
    /// Sets up a run. `alice_key` overrides Alice's locally generated key.
    pub fn new(g_a: &BitString, alice_key: Option<&BitString>, config: &ProtocolConfig) -> Result<Self, ProtocolError> {
        config.validate()?;
        if g_a.len() != config.n {
            return Err(ProtocolError::MessageLength(g_a.len(), config.n));
        }
        let k_a = match alice_key {
            Some(k) if k.len() != config.n => return Err(ProtocolError::MessageLength(k.len(), config.n)),
            Some(k) => k.clone(),
            None => BitString::random(config.n, &mut SimRng::stream(config.seed, ALICE_KEY_STREAM)),
        };
        let adversary: Option<Box<dyn Adversary>> = match &config.attack {
            Attack::InterceptResend { basis, .. } => Some(Box::new(InterceptResend {
                basis: *basis,
                intercepted: 0,
            })),
            Attack::EntangleMeasure { params, .. } => Some(Box::new(EntangleMeasure::new(params.clone()))),
            _ => None,
        };
        Ok(ProtocolState {
            config: config.clone(),
            rng: SimRng::from_seed(config.seed),
            lab: Lab::new(),
            phase: Phase::Init,
            log: EventLog::new(),
            ops: OpLedger::new(),
            detect: OpLedger::new(),
            adversary,
            inputs: AliceInputs {
                message: g_a.clone(),
                alice_key: k_a,
            },
            keys: None,
            instances: Vec::new(),
            w1: None,
            w2: None,
            w4: None,
            g: BitString::default(),
            h_g: BitString::default(),
            xi: Vec::new(),
            g_prime: None,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn events(&self) -> &[Event] {
        self.log.events()
    }

    pub fn keys(&self) -> Option<&KeyRing> {
        self.keys.as_ref()
    }

    pub fn blind_message(&self) -> &BitString {
        &self.g
    }

    /// Channels on which a quantum sequence is in flight or held.
    pub fn dispatched(&self) -> Vec<ChannelId> {
        let mut out = Vec::new();
        for (ch, s) in [(ChannelId::W1, &self.w1), (ChannelId::W2, &self.w2), (ChannelId::W4, &self.w4)] {
            if s.is_some() {
                out.push(ch);
            }
        }
        out
    }

    /// Lab access for tests and experiments that inspect qubits directly.
    pub fn lab_mut(&mut self) -> &mut Lab {
        &mut self.lab
    }

    fn expect_phase(&self, expected: Phase) -> Result<(), ProtocolError> {
        if self.phase != expected {
            return Err(ProtocolError::WrongPhase {
                expected,
                found: self.phase,
            });
        }
        Ok(())
    }

    fn advance(&mut self) {
        let to = self.phase.next().expect("non-terminal phase");
        self.log.push(Event::PhaseChange { from: self.phase, to });
        self.phase = to;
    }

    fn flush_ops(&mut self, step: &str) {
        let phase = self.phase;
        for (ledger, purpose) in [(&mut self.ops, Purpose::Protocol), (&mut self.detect, Purpose::Detection)] {
            for e in ledger.drain() {
                self.log.push(Event::QuantumOps {
                    phase,
                    step: step.to_string(),
                    purpose,
                    party: e.party,
                    op: e.op,
                    count: e.count,
                });
            }
        }
    }

    fn send(&mut self, from: PartyRole, to: PartyRole, label: &str, purpose: Purpose, bits: BitString) {
        classical_send(&mut self.log, self.phase, from, to, label, purpose, bits);
    }

    fn record(&mut self, party: PartyRole, name: &str, bits: BitString) {
        self.log.push(Event::Record {
            phase: self.phase,
            party,
            name: name.to_string(),
            bits,
        });
    }

    fn transmit(&mut self, channel: ChannelId, payload: &[QubitId]) -> Result<Dispatched, ProtocolError> {
        let d = self.config.decoy_count();
        let attacked = self.config.attack.channel() == Some(channel);
        let adversary = match &mut self.adversary {
            Some(a) if attacked => Some(&mut **a as &mut dyn Adversary),
            _ => None,
        };
        let sent = crate::channels::send_with_decoys(
            &mut self.lab,
            channel,
            payload,
            d,
            &mut self.rng,
            adversary,
            &mut self.detect,
        )?;
        let (from, to) = channel.endpoints();
        self.log.push(Event::QuantumTransfer {
            phase: self.phase,
            from,
            to,
            sequence: channel,
            payload: payload.len(),
            decoys: d,
        });
        Ok(sent)
    }

    fn quantum_check(&mut self, sent: Dispatched) -> Result<Vec<QubitId>, ProtocolError> {
        let (seq, rec) = sent;
        let (_, receiver) = rec.channel.endpoints();
        let t = self.config.threshold;
        let payload = if receiver.is_semiquantum() {
            semiquantum_return_check(&mut self.lab, &seq, &rec, &mut self.rng, t, &mut self.detect, &mut self.log, self.phase)?.0
        } else {
            check_decoys(&mut self.lab, &seq, &rec, &mut self.rng, t, &mut self.detect, &mut self.log, self.phase)?.0
        };
        Ok(payload)
    }

    fn establish(
        &mut self,
        name: &str,
        length: usize,
        parties: (PartyRole, PartyRole),
        method: KeyMethod,
    ) -> Result<BitString, ProtocolError> {
        let (key, raw, error_rate) = match self.config.key_mode {
            KeyMode::Stubbed => (BitString::random(length, &mut self.rng), 0, 0.0),
            KeyMode::Simulated => {
                let mut ledger = OpLedger::new();
                let t = self.config.threshold;
                let res = if method == KeyMethod::Bb84 {
                    establish_key_bb84(length, &mut self.rng, None, t, parties, &mut ledger)
                } else {
                    establish_key_sqkd(length, &mut self.rng, None, t, parties, &mut ledger)
                };
                let ex: KeyExchange = match res {
                    Err(KeyError::Abort { error_rate, threshold, .. }) => {
                        return Err(ProtocolError::Aborted(AbortReason::KeyEstablishment {
                            key: name.to_string(),
                            error_rate,
                            threshold,
                        }))
                    }
                    other => other?,
                };
                if ex.sender != ex.receiver {
                    return Err(ProtocolError::KeyMismatch(parties));
                }
                for e in ledger.drain() {
                    self.log.push(Event::QuantumOps {
                        phase: self.phase,
                        step: format!("{name} distribution"),
                        purpose: Purpose::KeyDistribution,
                        party: e.party,
                        op: e.op,
                        count: e.count,
                    });
                }
                (ex.sender, ex.raw_qubits, ex.error_rate)
            }
        };
        let method = match self.config.key_mode {
            KeyMode::Stubbed => KeyMethod::Stubbed,
            KeyMode::Simulated => method,
        };
        self.log.push(Event::KeyEstablished {
            phase: self.phase,
            parties: vec![parties.0, parties.1],
            key: name.to_string(),
            method,
            key_bits: length,
            raw_qubits: raw,
            error_rate,
        });
        Ok(key)
    }

    /// Keys, χ preparation and dispatch of W₁′, W₂′, W₄′, blinding and H(g).
    pub fn phase_initialize(&mut self) -> Result<(), ProtocolError> {
        self.expect_phase(Phase::Init)?;
        let n = self.config.n;
        let k_dt = self.establish("K_DT", 2 * n, (PartyRole::Trent, PartyRole::David), KeyMethod::Bb84)?;
        let k_bt = self.establish("K_BT", n, (PartyRole::Trent, PartyRole::Bob), KeyMethod::Sqkd)?;
        let k_ct = self.establish("K_CT", n, (PartyRole::Trent, PartyRole::Charlie), KeyMethod::Sqkd)?;
        self.log.push(Event::KeyEstablished {
            phase: self.phase,
            parties: vec![PartyRole::Alice],
            key: "K_A".into(),
            method: KeyMethod::Local,
            key_bits: n,
            raw_qubits: 0,
            error_rate: 0.0,
        });
        let hash_secret = BitString::random(self.config.hash.secret_bits, &mut self.rng);
        self.log.push(Event::KeyEstablished {
            phase: self.phase,
            parties: vec![PartyRole::Alice, PartyRole::Charlie],
            key: "H".into(),
            method: KeyMethod::PreShared,
            key_bits: self.config.hash.secret_bits,
            raw_qubits: 0,
            error_rate: 0.0,
        });
        self.keys = Some(KeyRing::new(n, self.inputs.alice_key.clone(), k_bt, k_ct, k_dt, hash_secret)?);

        self.ops.perform_n(PartyRole::Trent, QuantumOp::PrepareChi, n)?;
        self.instances = (0..n)
            .map(|_| {
                let q = self.lab.alloc(prepare_chi());
                ChiQubits([q[0], q[1], q[2], q[3]])
            })
            .collect();
        let w = |k: usize, inst: &[ChiQubits]| inst.iter().map(|c| c.0[k - 1]).collect::<Vec<_>>();
        let (w1, w2, w4) = (w(1, &self.instances), w(2, &self.instances), w(4, &self.instances));
        self.flush_ops("Trent prepares χ states");
        self.w1 = Some(self.transmit(ChannelId::W1, &w1)?);
        self.w4 = Some(self.transmit(ChannelId::W4, &w4)?);
        self.w2 = Some(self.transmit(ChannelId::W2, &w2)?);
        self.flush_ops("Trent dispatches W1', W4', W2'");

        let keys = self.keys.as_ref().expect("keys set");
        self.g = crate::crypto_keys::xor_blind(&self.inputs.message, &keys.k_a)?;
        self.h_g = keyed_hash(&self.config.hash, &keys.hash_secret, &self.g)?;
        let h = self.h_g.clone();
        self.send(PartyRole::Alice, PartyRole::Charlie, "H(g)", Purpose::Protocol, h);
        self.advance();
        Ok(())
    }

    /// Alice encodes g as |+⟩/|−⟩.
    pub fn phase_blind(&mut self) -> Result<(), ProtocolError> {
        self.expect_phase(Phase::Blind)?;
        self.ops.perform_n(PartyRole::Alice, QuantumOp::PrepareX, self.config.n)?;
        let g = self.g.clone();
        self.xi = g.bits().iter().map(|&b| self.lab.prepare(Basis::X, b)).collect();
        self.diagnostics.sent_xi = g.bits().iter().map(|&b| StateVector::basis_ket(Basis::X, b)).collect();
        self.flush_ops("Alice prepares ξm");
        self.advance();
        Ok(())
    }

    fn withheld(&self, party: PartyRole) -> bool {
        self.config.attack == Attack::Withhold { party }
    }

    /// Authorization and signing; ends with G″ on its way to Charlie.
    pub fn phase_sign(&mut self) -> Result<(), ProtocolError> {
        self.expect_phase(Phase::SignAuth)?;
        let n = self.config.n;
        let keys = self.keys.clone().expect("keys set");

        // Steps 1-2: ξm' to David, decoy check, David asks Bob to authorize
        let xi = self.xi.clone();
        let sent = self.transmit(ChannelId::XiM, &xi)?;
        self.flush_ops("Alice sends ξm'");
        let xi = self.quantum_check(sent)?;
        self.flush_ops("decoy check on ξm'");
        self.send(PartyRole::David, PartyRole::Bob, "authorization request", Purpose::Protocol, BitString::default());

        // Steps 3-4: Bob checks W1', measures W1, sends E_K_BT[M_B]
        let sent = self.w1.take().expect("W1' dispatched");
        let w1 = self.quantum_check(sent)?;
        self.flush_ops("return check on W1'");
        let mut m_b = BitString::default();
        for q in &w1 {
            self.ops.perform(PartyRole::Bob, QuantumOp::MeasureZ)?;
            m_b.push(self.lab.measure(*q, Basis::Z, &mut self.rng)?);
        }
        self.flush_ops("Bob measures W1");
        self.record(PartyRole::Bob, "M_B", m_b.clone());
        if self.withheld(PartyRole::Bob) {
            return Err(ProtocolError::Aborted(AbortReason::RecordWithheld { party: PartyRole::Bob }));
        }
        let c_b = otp_encrypt(&keys.k_bt, &m_b)?;
        self.send(PartyRole::Bob, PartyRole::Trent, "E_K_BT[M_B]", Purpose::Protocol, c_b.clone());

        // Step 5
        let m_b_t = otp_decrypt(&keys.k_bt, &c_b)?;
        self.send(PartyRole::Trent, PartyRole::David, "signing notification", Purpose::Protocol, BitString::default());

        // Step 6: David checks W2', Bell-measures (ξi, W2i), sends E_K_DT(M_D)
        let sent = self.w2.take().expect("W2' dispatched");
        let w2 = self.quantum_check(sent)?;
        self.flush_ops("decoy check on W2'");
        let mut m_d = BitString::default();
        for (x, q) in xi.iter().zip(&w2) {
            self.ops.perform(PartyRole::David, QuantumOp::MeasureBell)?;
            for b in bits_of(self.lab.measure_bell(*x, *q, &mut self.rng)?) {
                m_d.push(b);
            }
        }
        self.flush_ops("David signs");
        self.record(PartyRole::David, "M_D", m_d.clone());
        if self.withheld(PartyRole::David) {
            return Err(ProtocolError::Aborted(AbortReason::RecordWithheld { party: PartyRole::David }));
        }
        let mut c_d = otp_encrypt(&keys.k_dt, &m_d)?;
        match self.config.attack {
            Attack::ForgeMd => c_d = BitString::random(2 * n, &mut self.rng),
            Attack::InsiderForgeMd => {
                let guess = BitString::random(2 * n, &mut self.rng);
                c_d = otp_encrypt(&guess, &m_d)?;
            }
            Attack::FlipMdBit { index } => c_d.flip(index),
            _ => {}
        }
        self.send(PartyRole::David, PartyRole::Trent, "E_K_DT(M_D)", Purpose::Protocol, c_d.clone());

        // Step 7
        let m_d_t = otp_decrypt(&keys.k_dt, &c_d)?;
        self.send(PartyRole::Trent, PartyRole::Charlie, "measure W4 notification", Purpose::Protocol, BitString::default());

        // Step 8: Charlie checks W4', measures W4, sends E_K_CT(M_C)
        let sent = self.w4.take().expect("W4' dispatched");
        let w4 = self.quantum_check(sent)?;
        self.flush_ops("return check on W4'");
        let mut m_c = BitString::default();
        for q in &w4 {
            self.ops.perform(PartyRole::Charlie, QuantumOp::MeasureZ)?;
            m_c.push(self.lab.measure(*q, Basis::Z, &mut self.rng)?);
        }
        self.flush_ops("Charlie measures W4");
        self.record(PartyRole::Charlie, "M_C", m_c.clone());
        if self.withheld(PartyRole::Charlie) {
            return Err(ProtocolError::Aborted(AbortReason::RecordWithheld {
                party: PartyRole::Charlie,
            }));
        }
        let c_c = otp_encrypt(&keys.k_ct, &m_c)?;
        self.send(PartyRole::Charlie, PartyRole::Trent, "E_K_CT(M_C)", Purpose::Protocol, c_c.clone());

        // Step 9: Trent corrects W3, reads ξm in X, prepares G' and sends G''
        let m_c_t = otp_decrypt(&keys.k_ct, &c_c)?;
        let mut g_prime = BitString::default();
        for i in 0..n {
            let outcomes = TeleportOutcomes::new(
                m_b_t.get(i),
                BellOutcome::from_bits(m_d_t.get(2 * i), m_d_t.get(2 * i + 1)),
                m_c_t.get(i),
            );
            let correction = correction_for(outcomes);
            let w3 = self.instances[i].0[2];
            self.ops.perform(PartyRole::Trent, QuantumOp::Unitary)?;
            self.lab.apply(&[w3], &correction.matrix())?;
            let fidelity = match self.lab.qubit_state(w3)? {
                Some(s) => fidelity_up_to_phase(&s, &self.diagnostics.sent_xi[i])?,
                None => {
                    let rho = self.lab.reduced(&[w3])?;
                    rho.expectation(&self.diagnostics.sent_xi[i])
                }
            };
            self.diagnostics.corrections.push(correction);
            self.diagnostics.recovered_fidelity.push(fidelity);
            self.ops.perform(PartyRole::Trent, QuantumOp::MeasureX)?;
            g_prime.push(self.lab.measure(w3, Basis::X, &mut self.rng)?);
        }
        self.ops.perform_n(PartyRole::Trent, QuantumOp::PrepareZ, n)?;
        let gp: Vec<QubitId> = g_prime.bits().iter().map(|&b| self.lab.prepare(Basis::Z, b)).collect();
        self.flush_ops("Trent recovers ξm and prepares G'");
        self.g_prime = Some(self.transmit(ChannelId::GPrime, &gp)?);
        self.flush_ops("Trent sends G''");
        self.advance();
        Ok(())
    }

    /// Charlie checks G″, reads g′ and compares H(g′) with H(g).
    pub fn phase_verify(&mut self) -> Result<Verdict, ProtocolError> {
        self.expect_phase(Phase::Verify)?;
        let keys = self.keys.clone().expect("keys set");
        let sent = self.g_prime.take().expect("G'' dispatched");
        let gp = self.quantum_check(sent)?;
        self.flush_ops("return check on G''");
        let mut g_prime = BitString::default();
        for q in &gp {
            self.ops.perform(PartyRole::Charlie, QuantumOp::MeasureZ)?;
            g_prime.push(self.lab.measure(*q, Basis::Z, &mut self.rng)?);
        }
        self.flush_ops("Charlie measures G'");
        self.record(PartyRole::Charlie, "g'", g_prime.clone());
        let h = keyed_hash(&self.config.hash, &keys.hash_secret, &g_prime)?;
        let verdict = if h == self.h_g { Verdict::Valid } else { Verdict::Invalid };
        self.advance();
        Ok(verdict)
    }

    fn abort(&mut self) {
        self.flush_ops("aborted step");
        self.log.push(Event::PhaseChange {
            from: self.phase,
            to: Phase::Aborted,
        });
    }

    pub fn into_transcript(self, verdict: Verdict) -> Transcript {
        Transcript {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            config: self.config,
            inputs: self.inputs,
            events: self.log.events().to_vec(),
            verdict,
        }
    }

    /// Runs every remaining phase. Aborts end up in the verdict.
    pub fn run_to_end(&mut self) -> Result<Verdict, ProtocolError> {
        let result = (|| {
            if self.phase == Phase::Init {
                self.phase_initialize()?;
            }
            if self.phase == Phase::Blind {
                self.phase_blind()?;
            }
            if self.phase == Phase::SignAuth {
                self.phase_sign()?;
            }
            self.phase_verify()
        })();
        match result {
            Ok(v) => Ok(v),
            Err(ProtocolError::Aborted(cause)) => {
                let phase = self.phase;
                self.abort();
                self.phase = Phase::Aborted;
                Ok(Verdict::Aborted { phase, cause })
            }
            Err(e) => Err(e),
        }
    }
}

/// Executes all four phases for message `g_a`.
pub fn run_full(g_a: &BitString, alice_key: Option<&BitString>, config: &ProtocolConfig) -> Result<Transcript, ProtocolError> {
    let (_, transcript) = run_with_state(g_a, alice_key, config)?;
    Ok(transcript)
}

/// Like [`run_full`] but also returns the simulator diagnostics.
pub fn run_with_state(
    g_a: &BitString,
    alice_key: Option<&BitString>,
    config: &ProtocolConfig,
) -> Result<(Diagnostics, Transcript), ProtocolError> {
    let mut state = ProtocolState::new(g_a, alice_key, config)?;
    let verdict = state.run_to_end()?;
    let diagnostics = std::mem::take(&mut state.diagnostics);
    Ok((diagnostics, state.into_transcript(verdict)))
}

/// Message derived from the seed when none is supplied.
pub fn seeded_message(n: usize, seed: u64) -> BitString {
    BitString::random(n, &mut SimRng::stream(seed, MESSAGE_STREAM))
}

/// Probability that one instance passes when Trent's M_D(i) is uniform:
/// averages over gᵢ, all sixteen true branches and the four substituted
/// Bell values, projecting Trent's corrected qubit onto |gᵢ⟩ in X.
pub fn forged_md_instance_acceptance() -> Result<f64, ProtocolError> {
    let mut total = 0.0;
    for g in 0..2u8 {
        let m = if g == 0 { MessageQubit::plus() } else { MessageQubit::minus() };
        for o in TeleportOutcomes::all() {
            let (p, p3) = project_branch(&m, o, ProjectionOrder::Forward).map_err(|e| match e {
                crate::chi_teleport::TeleportError::Quantum(q) => ProtocolError::Quantum(q),
                other => ProtocolError::Config(other.to_string()),
            })?;
            for forged in BellOutcome::ALL {
                let corr = correction_for(TeleportOutcomes::new(o.z1, forged, o.z4));
                let s = p3.apply_unitary(&[0], &corr.matrix())?;
                total += 0.5 * p * 0.25 * s.probability(0, Basis::X, g)?;
            }
        }
    }
    Ok(total)
}

/// Acceptance probability of a run with uniform M_D over `n` instances.
pub fn forged_md_acceptance(n: usize) -> Result<f64, ProtocolError> {
    Ok(forged_md_instance_acceptance()?.powi(n as i32))
}
