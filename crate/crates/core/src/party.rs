//! Participants and the quantum operations each one may perform.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyRole {
    /// Message owner (quantum).
    Alice,
    /// Original signer (semiquantum).
    Bob,
    /// Verifier (semiquantum).
    Charlie,
    /// Proxy signer (quantum).
    David,
    /// Third party (quantum).
    Trent,
    /// Outside adversary; never subject to capability checks.
    Eve,
}

impl PartyRole {
    pub fn is_semiquantum(self) -> bool {
        matches!(self, PartyRole::Bob | PartyRole::Charlie)
    }

    pub fn allows(self, op: QuantumOp) -> bool {
        if !self.is_semiquantum() {
            return true;
        }
        matches!(
            op,
            QuantumOp::MeasureZ | QuantumOp::PrepareZ | QuantumOp::Reflect | QuantumOp::Reorder
        )
    }
}

impl fmt::Display for PartyRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantumOp {
    PrepareZ,
    PrepareX,
    /// One four-qubit χ state.
    PrepareChi,
    MeasureZ,
    MeasureX,
    MeasureBell,
    Unitary,
    Reflect,
    Reorder,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{party} is semiquantum and cannot perform {op:?}")]
pub struct CapabilityError {
    pub party: PartyRole,
    pub op: QuantumOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpEntry {
    pub party: PartyRole,
    pub op: QuantumOp,
    pub count: usize,
}

/// Tally of quantum operations, checked against each party's capabilities.
#[derive(Debug, Clone, Default)]
pub struct OpLedger {
    entries: Vec<OpEntry>,
}

impl OpLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn perform(&mut self, party: PartyRole, op: QuantumOp) -> Result<(), CapabilityError> {
        self.perform_n(party, op, 1)
    }

    pub fn perform_n(&mut self, party: PartyRole, op: QuantumOp, count: usize) -> Result<(), CapabilityError> {
        if !party.allows(op) {
            return Err(CapabilityError { party, op });
        }
        if count == 0 {
            return Ok(());
        }
        match self.entries.iter_mut().find(|e| e.party == party && e.op == op) {
            Some(e) => e.count += count,
            None => self.entries.push(OpEntry { party, op, count }),
        }
        Ok(())
    }

    pub fn count(&self, party: PartyRole, op: QuantumOp) -> usize {
        self.entries
            .iter()
            .filter(|e| e.party == party && e.op == op)
            .map(|e| e.count)
            .sum()
    }

    pub fn drain(&mut self) -> Vec<OpEntry> {
        std::mem::take(&mut self.entries)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
