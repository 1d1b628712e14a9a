//! Append-only event log of a protocol run.

use serde::{Deserialize, Serialize};

use crate::crypto_keys::BitString;
use crate::party::{PartyRole, QuantumOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Blind,
    SignAuth,
    Verify,
    Done,
    Aborted,
}

impl Phase {
    /// The phase that follows a successful run of `self`.
    pub fn next(self) -> Option<Phase> {
        match self {
            Phase::Init => Some(Phase::Blind),
            Phase::Blind => Some(Phase::SignAuth),
            Phase::SignAuth => Some(Phase::Verify),
            Phase::Verify => Some(Phase::Done),
            Phase::Done | Phase::Aborted => None,
        }
    }
}

/// Quantum sequences that cross a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelId {
    /// W₁′, Trent → Bob.
    #[serde(rename = "W1'")]
    W1,
    /// W₂′, Trent → David.
    #[serde(rename = "W2'")]
    W2,
    /// W₄′, Trent → Charlie.
    #[serde(rename = "W4'")]
    W4,
    /// ξₘ′, Alice → David.
    #[serde(rename = "xi_m'")]
    XiM,
    /// G″, Trent → Charlie.
    #[serde(rename = "G''")]
    GPrime,
}

impl ChannelId {
    pub const ALL: [ChannelId; 5] = [ChannelId::W1, ChannelId::W2, ChannelId::W4, ChannelId::XiM, ChannelId::GPrime];

    pub fn endpoints(self) -> (PartyRole, PartyRole) {
        match self {
            ChannelId::W1 => (PartyRole::Trent, PartyRole::Bob),
            ChannelId::W2 => (PartyRole::Trent, PartyRole::David),
            ChannelId::W4 => (PartyRole::Trent, PartyRole::Charlie),
            ChannelId::XiM => (PartyRole::Alice, PartyRole::David),
            ChannelId::GPrime => (PartyRole::Trent, PartyRole::Charlie),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelId::W1 => "W1'",
            ChannelId::W2 => "W2'",
            ChannelId::W4 => "W4'",
            ChannelId::XiM => "xi_m'",
            ChannelId::GPrime => "G''",
        }
    }
}

/// Whether traffic counts toward the protocol's resource accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Protocol,
    Detection,
    KeyDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyMethod {
    Bb84,
    Sqkd,
    Local,
    PreShared,
    Stubbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    KeyEstablished {
        phase: Phase,
        parties: Vec<PartyRole>,
        key: String,
        method: KeyMethod,
        key_bits: usize,
        raw_qubits: usize,
        error_rate: f64,
    },
    QuantumOps {
        phase: Phase,
        step: String,
        purpose: Purpose,
        party: PartyRole,
        op: QuantumOp,
        count: usize,
    },
    QuantumTransfer {
        phase: Phase,
        from: PartyRole,
        to: PartyRole,
        sequence: ChannelId,
        payload: usize,
        decoys: usize,
    },
    Classical {
        phase: Phase,
        from: PartyRole,
        to: PartyRole,
        label: String,
        purpose: Purpose,
        bits: BitString,
    },
    DecoyCheck {
        phase: Phase,
        channel: ChannelId,
        checker: PartyRole,
        decoys: usize,
        errors: usize,
        error_rate: f64,
        passed: bool,
    },
    ReturnCheck {
        phase: Phase,
        channel: ChannelId,
        classical_party: PartyRole,
        reflected: usize,
        reflected_errors: usize,
        z_sift: usize,
        z_sift_errors: usize,
        passed: bool,
    },
    Record {
        phase: Phase,
        party: PartyRole,
        name: String,
        bits: BitString,
    },
    PhaseChange {
        from: Phase,
        to: Phase,
    },
}

impl Event {
    /// Parties that sent, received, or acted in this event.
    pub fn parties(&self) -> Vec<PartyRole> {
        match self {
            Event::KeyEstablished { parties, .. } => parties.clone(),
            Event::QuantumOps { party, .. } | Event::Record { party, .. } => vec![*party],
            Event::QuantumTransfer { from, to, .. } | Event::Classical { from, to, .. } => vec![*from, *to],
            Event::DecoyCheck { channel, .. } | Event::ReturnCheck { channel, .. } => {
                let (a, b) = channel.endpoints();
                vec![a, b]
            }
            Event::PhaseChange { .. } => vec![],
        }
    }
}

/// Index of a logged classical message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt(pub usize);

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) -> Receipt {
        self.events.push(event);
        Receipt(self.events.len() - 1)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}
