//! Efficiency accounting, the comparison report and batch experiments.

use std::fmt;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{eve_entangle_measure, DecoyState, EveParams};
use crate::crypto_keys::BitString;
use crate::party::QuantumOp;
use crate::protocol::{
    forged_md_acceptance, run_full, seeded_message, AbortReason, Attack, ProtocolConfig, ProtocolError, Transcript,
    Verdict,
};
use crate::quantum_core::{derive_seed, DensityMatrix, SimRng, StateVector};
use crate::transcript::{Event, KeyMethod, Purpose};

/// Width of the reported confidence band, in standard errors.
pub const SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub protocol: String,
    /// Signature length.
    pub q_s: u64,
    /// Qubits consumed.
    pub q_t: u64,
    /// Classical bits exchanged.
    pub q_c: u64,
    pub eta: Ratio<u64>,
}

impl EfficiencyReport {
    pub fn new(protocol: impl Into<String>, q_s: u64, q_t: u64, q_c: u64) -> Self {
        EfficiencyReport {
            protocol: protocol.into(),
            q_s,
            q_t,
            q_c,
            eta: Ratio::new(q_s, q_t + q_c),
        }
    }

    pub fn eta_f64(&self) -> f64 {
        *self.eta.numer() as f64 / *self.eta.denom() as f64
    }
}

impl fmt::Display for EfficiencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: q_s={} q_t={} q_c={} eta={} ({:.6})",
            self.protocol,
            self.q_s,
            self.q_t,
            self.q_c,
            self.eta,
            self.eta_f64()
        )
    }
}

/// η = 2n / (30n + l + 4n) for message length `n` and hash length `l`.
pub fn qubit_efficiency(n: u64, l: u64) -> Result<EfficiencyReport, ProtocolError> {
    if n == 0 || l == 0 {
        return Err(ProtocolError::Config("n and l must be at least 1".into()));
    }
    Ok(EfficiencyReport::new("this protocol", 2 * n, 30 * n, l + 4 * n))
}

pub const W_STATE_BISIGNATURE_ETA: (u64, u64) = (2, 31);
pub const GHZ5_BLIND_SIGNATURE_ETA: (u64, u64) = (1, 29);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonColumn {
    pub protocol: String,
    pub quantum_resource: String,
    pub semiquantum_parties: String,
    pub message_owners: u32,
    pub proxy_signers: u32,
    pub eavesdropping_check: bool,
    pub quantum_party_measurements: String,
    pub semiquantum_party_measurements: String,
    pub pre_shared_keys: bool,
    pub teleportation: bool,
    pub unitary_operations: bool,
    /// Either an exact ratio or the symbolic form for this protocol.
    pub qubit_efficiency: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<ComparisonColumn>,
}

/// Reported figures for two earlier semiquantum signature schemes next to
/// this protocol. The earlier efficiencies are constants, not recomputed.
pub fn comparison_table() -> ComparisonTable {
    let w = Ratio::new(W_STATE_BISIGNATURE_ETA.0, W_STATE_BISIGNATURE_ETA.1);
    let g = Ratio::new(GHZ5_BLIND_SIGNATURE_ETA.0, GHZ5_BLIND_SIGNATURE_ETA.1);
    ComparisonTable {
        columns: vec![
            ComparisonColumn {
                protocol: "semiquantum bi-signature (W states)".into(),
                quantum_resource: "W states, single-particle states".into(),
                semiquantum_parties: "verifier".into(),
                message_owners: 2,
                proxy_signers: 0,
                eavesdropping_check: false,
                quantum_party_measurements: "three-particle entangled, Z".into(),
                semiquantum_party_measurements: "Z".into(),
                pre_shared_keys: true,
                teleportation: true,
                unitary_operations: true,
                qubit_efficiency: w.to_string(),
            },
            ComparisonColumn {
                protocol: "semiquantum blind signature (five-particle GHZ)".into(),
                quantum_resource: "five-particle GHZ states, single-particle states".into(),
                semiquantum_parties: "verifier".into(),
                message_owners: 1,
                proxy_signers: 0,
                eavesdropping_check: true,
                quantum_party_measurements: "Z".into(),
                semiquantum_party_measurements: "Z".into(),
                pre_shared_keys: true,
                teleportation: false,
                unitary_operations: true,
                qubit_efficiency: g.to_string(),
            },
            ComparisonColumn {
                protocol: "this protocol".into(),
                quantum_resource: "χ states, single-particle states".into(),
                semiquantum_parties: "original signer, verifier".into(),
                message_owners: 1,
                proxy_signers: 1,
                eavesdropping_check: true,
                quantum_party_measurements: "Bell, Z".into(),
                semiquantum_party_measurements: "Z".into(),
                pre_shared_keys: true,
                teleportation: true,
                unitary_operations: true,
                qubit_efficiency: "2n/(34n+l)".into(),
            },
        ],
    }
}

/// Where this protocol stands against the five-particle GHZ scheme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeFlag {
    pub n: u64,
    pub l: u64,
    pub eta: Ratio<u64>,
    /// η > 1/29, compared exactly.
    pub beats_ghz5: bool,
    /// l < 24n.
    pub inequality_holds: bool,
}

pub fn regime_flag(n: u64, l: u64) -> Result<RegimeFlag, ProtocolError> {
    let ours = qubit_efficiency(n, l)?;
    let other = Ratio::new(GHZ5_BLIND_SIGNATURE_ETA.0, GHZ5_BLIND_SIGNATURE_ETA.1);
    Ok(RegimeFlag {
        n,
        l,
        eta: ours.eta,
        beats_ghz5: ours.eta > other,
        inequality_holds: l < 24 * n,
    })
}

/// Qubits charged per established key bit, by method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyOverhead {
    pub bb84: u64,
    pub sqkd: u64,
}

impl Default for KeyOverhead {
    /// BB84 charged 4 qubits per key bit and SQKD 8, which reproduces the
    /// 8n + 8n + 8n key term for keys of length 2n, n and n.
    fn default() -> Self {
        KeyOverhead { bb84: 4, sqkd: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentedCounts {
    pub signature_bits: u64,
    /// Protocol qubits prepared during the run (χ, ξₘ, G′).
    pub prepared_qubits: u64,
    /// Key-establishment qubits under the overhead model.
    pub key_qubits: u64,
    /// Qubits the key simulations actually used.
    pub simulated_key_qubits: u64,
    pub classical_bits: u64,
    pub report: EfficiencyReport,
}

/// Counts resources in a finished transcript. Detection traffic is skipped.
pub fn instrumented_counts(t: &Transcript, overhead: KeyOverhead) -> InstrumentedCounts {
    let mut prepared = 0u64;
    let mut key_qubits = 0u64;
    let mut simulated = 0u64;
    let mut classical = 0u64;
    for e in &t.events {
        match e {
            Event::QuantumOps {
                purpose: Purpose::Protocol,
                op,
                count,
                ..
            } => {
                prepared += *count as u64
                    * match op {
                        QuantumOp::PrepareChi => 4,
                        QuantumOp::PrepareX | QuantumOp::PrepareZ => 1,
                        _ => 0,
                    };
            }
            Event::KeyEstablished {
                method,
                key_bits,
                raw_qubits,
                ..
            } => {
                simulated += *raw_qubits as u64;
                key_qubits += *key_bits as u64
                    * match method {
                        KeyMethod::Bb84 => overhead.bb84,
                        KeyMethod::Sqkd => overhead.sqkd,
                        _ => 0,
                    };
            }
            Event::Classical {
                purpose: Purpose::Protocol,
                bits,
                ..
            } => classical += bits.len() as u64,
            _ => {}
        }
    }
    let signature_bits = t.record("M_D").map(|b| b.len() as u64).unwrap_or(0);
    InstrumentedCounts {
        signature_bits,
        prepared_qubits: prepared,
        key_qubits,
        simulated_key_qubits: simulated,
        classical_bits: classical,
        report: EfficiencyReport::new("instrumented run", signature_bits, prepared + key_qubits, classical),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    /// Analytical or oracle prediction, when one exists.
    pub expected: Option<f64>,
    pub config: serde_json::Value,
}

impl ExperimentResult {
    pub fn new(experiment: &str, trials: u64, successes: u64, expected: Option<f64>, config: serde_json::Value) -> Self {
        let rate = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        let std_error = if trials == 0 {
            0.0
        } else {
            (rate * (1.0 - rate) / trials as f64).sqrt()
        };
        ExperimentResult {
            experiment: experiment.to_string(),
            trials,
            successes,
            rate,
            std_error,
            lower: (rate - SIGMAS * std_error).max(0.0),
            upper: (rate + SIGMAS * std_error).min(1.0),
            expected,
            config,
        }
    }

    /// Whether `p` lies within the 3σ band computed from `p` itself, which
    /// stays meaningful when the observed rate is 0 or 1.
    pub fn consistent_with(&self, p: f64) -> bool {
        let sd = (p * (1.0 - p) / self.trials as f64).sqrt();
        (self.rate - p).abs() <= SIGMAS * sd + 1e-12
    }
}

impl fmt::Display for ExperimentResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {}/{} = {:.6} [{:.6}, {:.6}]",
            self.experiment, self.successes, self.trials, self.rate, self.lower, self.upper
        )?;
        if let Some(e) = self.expected {
            write!(f, " expected {e:.6}")?;
        }
        Ok(())
    }
}

fn trial_config(base: &ProtocolConfig, i: u64) -> ProtocolConfig {
    ProtocolConfig {
        seed: derive_seed(base.seed, i),
        ..base.clone()
    }
}

fn count_parallel<F>(trials: u64, f: F) -> Result<u64, ProtocolError>
where
    F: Fn(u64) -> Result<bool, ProtocolError> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| f(i).map(u64::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// Probability that at least one of `d` decoys flags intercept-resend.
pub fn intercept_resend_detection(d: u32) -> f64 {
    1.0 - 0.75f64.powi(d as i32)
}

/// Fraction of runs aborted by a failed eavesdropping check.
pub fn experiment_detection(base: &ProtocolConfig, trials: u64) -> Result<ExperimentResult, ProtocolError> {
    let hits = count_parallel(trials, |i| {
        let cfg = trial_config(base, i);
        let t = run_full(&seeded_message(cfg.n, cfg.seed), None, &cfg)?;
        Ok(matches!(
            t.verdict,
            Verdict::Aborted {
                cause: AbortReason::EavesdroppingDetected { .. },
                ..
            }
        ))
    })?;
    let expected = match &base.attack {
        Attack::None => Some(0.0),
        Attack::InterceptResend { basis: None, .. } => Some(intercept_resend_detection(base.decoy_count() as u32)),
        Attack::EntangleMeasure { params, .. } if params.is_undetectable(1e-10) => Some(0.0),
        _ => None,
    };
    Ok(ExperimentResult::new("detection", trials, hits, expected, serde_json::to_value(base).expect("config")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForgeryModel {
    OutsideRandomMd,
    InsideNoKey,
    HonestControl,
}

/// Fraction of forged runs that Charlie accepts.
pub fn experiment_forgery(
    model: ForgeryModel,
    base: &ProtocolConfig,
    trials: u64,
) -> Result<ExperimentResult, ProtocolError> {
    let mut cfg = base.clone();
    cfg.attack = match model {
        ForgeryModel::OutsideRandomMd => Attack::ForgeMd,
        ForgeryModel::InsideNoKey => Attack::InsiderForgeMd,
        ForgeryModel::HonestControl => Attack::None,
    };
    let accepted = count_parallel(trials, |i| {
        let c = trial_config(&cfg, i);
        let t = run_full(&seeded_message(c.n, c.seed), None, &c)?;
        Ok(t.verdict == Verdict::Valid)
    })?;
    let expected = match model {
        ForgeryModel::HonestControl => 1.0,
        _ => forged_md_acceptance(cfg.n)?,
    };
    let mut echo = serde_json::to_value(&cfg).expect("config");
    echo["model"] = serde_json::to_value(model).expect("model");
    Ok(ExperimentResult::new("forgery", trials, accepted, Some(expected), echo))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMode {
    Random,
    Zero,
    AllOnes,
}

/// Runs (g_A, K_A) and (g_A ⊕ Δ, K_A ⊕ Δ) under the same seed and counts
/// runs whose public records differ. `successes` counts violations.
pub fn experiment_blindness(
    base: &ProtocolConfig,
    trials: u64,
    delta: DeltaMode,
) -> Result<ExperimentResult, ProtocolError> {
    let n = base.n;
    let violations = count_parallel(trials, |i| {
        let cfg = trial_config(base, i);
        let mut rng = SimRng::stream(cfg.seed, 3);
        let g_a = BitString::random(n, &mut rng);
        let k_a = BitString::random(n, &mut rng);
        let d = match delta {
            DeltaMode::Random => BitString::random(n, &mut rng),
            DeltaMode::Zero => BitString::zeros(n),
            DeltaMode::AllOnes => BitString::ones(n),
        };
        let a = run_full(&g_a, Some(&k_a), &cfg)?;
        let b = run_full(&g_a.xor(&d)?, Some(&k_a.xor(&d)?), &cfg)?;
        Ok(a.public_record() != b.public_record())
    })?;
    let mut echo = serde_json::to_value(base).expect("config");
    echo["delta"] = serde_json::to_value(delta).expect("delta");
    Ok(ExperimentResult::new("blindness", trials, violations, Some(0.0), echo))
}

fn attacked(params: &EveParams, d: DecoyState) -> Result<StateVector, ProtocolError> {
    let joint = d.state().tensor(&StateVector::basis_state(2, 0)?)?;
    eve_entangle_measure(params, &joint).map_err(ProtocolError::from)
}

/// Mean probability, over the four decoy states, that a receiver measuring
/// in the decoy's basis sees the wrong bit after Eve's coupling.
pub fn expected_decoy_error_rate(params: &EveParams) -> Result<f64, ProtocolError> {
    let mut total = 0.0;
    for d in DecoyState::ALL {
        let out = attacked(params, d)?;
        total += out.probability(0, d.basis(), 1 - d.bit())?;
    }
    Ok(total / 4.0)
}

/// Eve's probe state for each decoy input.
pub fn probe_states(params: &EveParams) -> Result<Vec<DensityMatrix>, ProtocolError> {
    DecoyState::ALL
        .iter()
        .map(|&d| Ok(attacked(params, d)?.reduced_density(&[1, 2])?))
        .collect()
}

/// Largest trace distance between Eve's probe states across inputs.
pub fn probe_distinguishability(params: &EveParams) -> Result<f64, ProtocolError> {
    let probes = probe_states(params)?;
    let mut worst = 0.0f64;
    for i in 0..probes.len() {
        for j in i + 1..probes.len() {
            worst = worst.max(probes[i].trace_distance(&probes[j]));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationFamily {
    /// Rotates the transmitted qubit; α₀₁, α₁₀ ≠ 0.
    Leakage,
    /// Tags |1⟩ with a rotated probe; ε₀₀ ≠ ε₁₁.
    ProbeSeparation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub family: ViolationFamily,
    pub angle: f64,
    /// Norm of the undetectability residual.
    pub distance: f64,
    pub expected_error: f64,
}

/// Residual norms sampled along each violation family.
pub const GRID_DISTANCES: [f64; 10] = [0.01, 0.02, 0.05, 0.08, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0];

/// Twenty parameter violations, ten per family, at the residual norms in
/// [`GRID_DISTANCES`].
pub fn violation_grid() -> Result<Vec<GridPoint>, ProtocolError> {
    let mut out = Vec::with_capacity(2 * GRID_DISTANCES.len());
    for family in [ViolationFamily::Leakage, ViolationFamily::ProbeSeparation] {
        for &d in &GRID_DISTANCES {
            let (angle, params) = match family {
                // residual √2·|sin θ|
                ViolationFamily::Leakage => {
                    let t = (d / std::f64::consts::SQRT_2).asin();
                    (t, EveParams::leakage(t)?)
                }
                // residual 2·sin(φ/2)
                ViolationFamily::ProbeSeparation => {
                    let p = 2.0 * (d / 2.0).asin();
                    (p, EveParams::probe_separation(p)?)
                }
            };
            out.push(GridPoint {
                family,
                angle,
                distance: params.violation(),
                expected_error: expected_decoy_error_rate(&params)?,
            });
        }
    }
    Ok(out)
}
