//! Arena of independent registers addressed by stable qubit handles.
//!
//! Protocol qubits are spread over many small registers (one per χ
//! instance, one per decoy). Operations that span registers merge them;
//! measurements factor the measured qubits back out so registers stay small.

use crate::quantum_core::{Basis, BellOutcome, DensityMatrix, Matrix, QuantumError, Result, SimRng, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QubitId(usize);

#[derive(Debug, Clone)]
struct Register {
    state: StateVector,
    qubits: Vec<QubitId>,
}

#[derive(Debug, Clone, Default)]
pub struct Lab {
    registers: Vec<Option<Register>>,
    location: Vec<(usize, usize)>,
}

impl Lab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Places `state` in a fresh register; handles follow qubit order.
    pub fn alloc(&mut self, state: StateVector) -> Vec<QubitId> {
        let reg = self.registers.len();
        let ids: Vec<QubitId> = (0..state.num_qubits())
            .map(|pos| {
                let id = QubitId(self.location.len());
                self.location.push((reg, pos));
                id
            })
            .collect();
        self.registers.push(Some(Register {
            state,
            qubits: ids.clone(),
        }));
        ids
    }

    pub fn prepare(&mut self, basis: Basis, bit: u8) -> QubitId {
        self.alloc(StateVector::basis_ket(basis, bit))[0]
    }

    pub fn prepare_state(&mut self, state: StateVector) -> Result<QubitId> {
        if state.num_qubits() != 1 {
            return Err(QuantumError::StateDimensionMismatch(1, state.num_qubits()));
        }
        Ok(self.alloc(state)[0])
    }

    fn register(&self, reg: usize) -> &Register {
        self.registers[reg].as_ref().expect("live register")
    }

    /// Moves every listed qubit into one register and returns its index.
    fn merge(&mut self, ids: &[QubitId]) -> Result<usize> {
        let mut regs: Vec<usize> = ids.iter().map(|id| self.location[id.0].0).collect();
        regs.dedup();
        regs.sort_unstable();
        regs.dedup();
        let target = regs[0];
        if regs.len() == 1 {
            return Ok(target);
        }
        let total: usize = regs.iter().map(|&r| self.register(r).qubits.len()).sum();
        if total > crate::quantum_core::MAX_QUBITS {
            return Err(QuantumError::TooManyQubits(total));
        }
        let mut merged = self.registers[target].take().expect("live register");
        for &r in &regs[1..] {
            let other = self.registers[r].take().expect("live register");
            merged.state = merged.state.tensor(&other.state)?;
            merged.qubits.extend(other.qubits);
        }
        for (pos, id) in merged.qubits.iter().enumerate() {
            self.location[id.0] = (target, pos);
        }
        self.registers[target] = Some(merged);
        Ok(target)
    }

    fn positions(&self, ids: &[QubitId]) -> Vec<usize> {
        ids.iter().map(|id| self.location[id.0].1).collect()
    }

    pub fn apply(&mut self, ids: &[QubitId], matrix: &Matrix) -> Result<()> {
        let reg = self.merge(ids)?;
        let pos = self.positions(ids);
        let r = self.registers[reg].as_mut().expect("live register");
        r.state = r.state.apply_unitary(&pos, matrix)?;
        Ok(())
    }

    /// Replaces the listed qubits' collapsed part with `ket` and splits them
    /// into their own register.
    fn collapse(&mut self, ids: &[QubitId], ket: &[num_complex::Complex64]) -> Result<()> {
        let reg = self.location[ids[0].0].0;
        let pos = self.positions(ids);
        let old = self.registers[reg].take().expect("live register");
        let (_, rest) = old.state.contract(&pos, ket)?;
        let remaining: Vec<QubitId> = old.qubits.iter().copied().filter(|q| !ids.contains(q)).collect();
        if let Some(rest) = rest {
            for (p, id) in remaining.iter().enumerate() {
                self.location[id.0] = (reg, p);
            }
            self.registers[reg] = Some(Register {
                state: rest,
                qubits: remaining,
            });
        } else if !remaining.is_empty() {
            return Err(QuantumError::ZeroProbability);
        }
        let split_reg = self.registers.len();
        for (p, id) in ids.iter().enumerate() {
            self.location[id.0] = (split_reg, p);
        }
        self.registers.push(Some(Register {
            state: StateVector::normalized(ket.to_vec())?,
            qubits: ids.to_vec(),
        }));
        Ok(())
    }

    pub fn measure(&mut self, id: QubitId, basis: Basis, rng: &mut SimRng) -> Result<u8> {
        let (reg, pos) = self.location[id.0];
        let (bit, _) = self.register(reg).state.measure(pos, basis, rng)?;
        self.collapse(&[id], &basis.ket(bit))?;
        Ok(bit)
    }

    pub fn measure_bell(&mut self, a: QubitId, b: QubitId, rng: &mut SimRng) -> Result<BellOutcome> {
        if a == b {
            return Err(QuantumError::DuplicateTargets);
        }
        let reg = self.merge(&[a, b])?;
        let pos = self.positions(&[a, b]);
        let (outcome, _) = self.register(reg).state.measure_bell(pos[0], pos[1], rng)?;
        self.collapse(&[a, b], &outcome.ket())?;
        Ok(outcome)
    }

    pub fn probability(&self, id: QubitId, basis: Basis, bit: u8) -> Result<f64> {
        let (reg, pos) = self.location[id.0];
        self.register(reg).state.probability(pos, basis, bit)
    }

    /// Reduced density matrix of the listed qubits.
    pub fn reduced(&mut self, ids: &[QubitId]) -> Result<DensityMatrix> {
        let reg = self.merge(ids)?;
        let pos = self.positions(ids);
        self.register(reg).state.reduced_density(&pos)
    }

    /// Pure state of one qubit, or `None` if it is entangled.
    pub fn qubit_state(&self, id: QubitId) -> Result<Option<StateVector>> {
        let (reg, pos) = self.location[id.0];
        self.register(reg).state.qubit_state(pos)
    }

    /// Number of qubits sharing a register with `id`.
    pub fn register_size(&self, id: QubitId) -> usize {
        self.register(self.location[id.0].0).qubits.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum_core::{fidelity_up_to_phase, PauliCorrection};

    #[test]
    fn bell_measurement_across_registers_merges_then_splits() {
        let mut lab = Lab::new();
        let mut rng = SimRng::from_seed(5);
        let a = lab.prepare(Basis::Z, 0);
        let b = lab.prepare(Basis::Z, 0);
        let o = lab.measure_bell(a, b, &mut rng).unwrap();
        assert!(matches!(o, BellOutcome::PhiPlus | BellOutcome::PhiMinus));
        assert_eq!(lab.register_size(a), 2);
        let rho = lab.reduced(&[a, b]).unwrap();
        assert!((rho.expectation(&o.state()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measurement_factors_qubit_out() {
        let mut lab = Lab::new();
        let mut rng = SimRng::from_seed(9);
        let ids = lab.alloc(BellOutcome::PhiPlus.state());
        let bit = lab.measure(ids[0], Basis::Z, &mut rng).unwrap();
        assert_eq!(lab.register_size(ids[0]), 1);
        assert_eq!(lab.register_size(ids[1]), 1);
        let other = lab.qubit_state(ids[1]).unwrap().unwrap();
        let expect = StateVector::basis_ket(Basis::Z, bit);
        assert!((fidelity_up_to_phase(&other, &expect).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_on_single_qubit() {
        let mut lab = Lab::new();
        let q = lab.prepare(Basis::Z, 0);
        lab.apply(&[q], &PauliCorrection::SigmaX.matrix()).unwrap();
        assert_eq!(lab.probability(q, Basis::Z, 1).unwrap(), 1.0);
    }
}
