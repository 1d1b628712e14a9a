//! Command-line front end.
//!
//! Exit codes: 0 valid signature (or success), 1 failed check or I/O
//! error, 2 invalid signature, 3 aborted run, 4 configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{
    comparison_table, experiment_blindness, experiment_detection, experiment_forgery, instrumented_counts,
    qubit_efficiency, regime_flag, DeltaMode, ForgeryModel, KeyOverhead,
};
use crate::channels::EveParams;
use crate::chi_teleport::{correction_for, oracle_verify_with, MessageQubit, TeleportOutcomes};
use crate::crypto_keys::{BitString, HashConfig};
use crate::protocol::{run_full, seeded_message, Attack, KeyMode, ProtocolConfig, ProtocolError, Transcript, Verdict};
use crate::quantum_core::{BellOutcome, PauliCorrection, SimRng};
use crate::transcript::ChannelId;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

pub const SEED_ENV: &str = "SQPBS_SEED";

#[derive(Debug, Parser)]
#[command(name = "sqpbs", version, about = "Semiquantum proxy blind signature simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one protocol instance and write its transcript.
    Run(RunArgs),
    /// Check the teleportation correction table against projections.
    #[command(name = "verify-table1")]
    VerifyTable1(TableArgs),
    /// Run a batch experiment.
    Experiment(ExperimentArgs),
    /// Re-execute a transcript and compare.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackArg {
    None,
    InterceptResend,
    EntangleMeasure,
    ForgeMd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    W1,
    W2,
    W4,
    XiM,
    GPrime,
}

impl From<ChannelArg> for ChannelId {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::W1 => ChannelId::W1,
            ChannelArg::W2 => ChannelId::W2,
            ChannelArg::W4 => ChannelId::W4,
            ChannelArg::XiM => ChannelId::XiM,
            ChannelArg::GPrime => ChannelId::GPrime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KeyModeArg {
    Simulated,
    Stubbed,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Message length in bits.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Decoys per quantum sequence (default: n).
    #[arg(long)]
    pub decoys: Option<usize>,
    /// Largest tolerated error rate in any check.
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = AttackArg::None)]
    pub attack: AttackArg,
    /// Channel attacked by intercept-resend or entangle-measure.
    #[arg(long, value_enum, default_value_t = ChannelArg::XiM)]
    pub attack_channel: ChannelArg,
    /// JSON file with Eve's coupling parameters.
    #[arg(long)]
    pub eve_params: Option<PathBuf>,
    /// Hash output length l.
    #[arg(long = "hash-bits", visible_alias = "l", default_value_t = 256)]
    pub hash_bits: usize,
    #[arg(long, value_enum, default_value_t = KeyModeArg::Simulated)]
    pub key_mode: KeyModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Alice's message as a bit string (default: derived from the seed).
    #[arg(long)]
    pub message: Option<String>,
    #[arg(long, default_value = "transcript.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Test mode: replace the correction of one branch, given as
    /// `z1,bell,z4` with bell in {phi+,phi-,psi+,psi-}.
    #[arg(long, hide = true)]
    pub corrupt_branch: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    Detection,
    Forgery,
    Blindness,
    Efficiency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    OutsideRandomMd,
    InsideNoKey,
    HonestControl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeltaArg {
    Random,
    Zero,
    AllOnes,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub kind: ExperimentKind,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, value_enum, default_value_t = ModelArg::OutsideRandomMd)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = DeltaArg::Random)]
    pub delta: DeltaArg,
    /// Report path (default: `<kind>.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub transcript: PathBuf,
    /// Also write the replayed transcript here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Config(_) | ProtocolError::MessageLength(..) => CliError::Config(e.to_string()),
            other => CliError::Io(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl CommonArgs {
    pub fn to_config(&self) -> Result<ProtocolConfig, CliError> {
        let channel = ChannelId::from(self.attack_channel);
        let attack = match self.attack {
            AttackArg::None => Attack::None,
            AttackArg::InterceptResend => Attack::InterceptResend { channel, basis: None },
            AttackArg::EntangleMeasure => {
                let path = self
                    .eve_params
                    .as_ref()
                    .ok_or_else(|| CliError::Config("--attack entangle-measure requires --eve-params".into()))?;
                let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
                let raw: EveParams =
                    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let params = EveParams::new(raw.alpha, raw.eps).map_err(|e| CliError::Config(e.to_string()))?;
                Attack::EntangleMeasure { channel, params }
            }
            AttackArg::ForgeMd => Attack::ForgeMd,
        };
        let config = ProtocolConfig {
            n: self.n,
            seed: self.seed,
            decoys: self.decoys,
            threshold: self.threshold,
            attack,
            hash: HashConfig::with_output_bits(self.hash_bits),
            key_mode: match self.key_mode {
                KeyModeArg::Simulated => KeyMode::Simulated,
                KeyModeArg::Stubbed => KeyMode::Stubbed,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn verdict_exit_code(v: &Verdict) -> i32 {
    match v {
        Verdict::Valid => EXIT_OK,
        Verdict::Invalid => EXIT_INVALID,
        Verdict::Aborted { .. } => EXIT_ABORTED,
    }
}

fn cmd_run(args: &RunArgs) -> Result<i32, CliError> {
    let config = args.common.to_config()?;
    let message = match &args.message {
        Some(s) => s.parse::<BitString>().map_err(|e| CliError::Config(e.to_string()))?,
        None => seeded_message(config.n, config.seed),
    };
    let t = run_full(&message, None, &config)?;
    write_json(&args.out, &t)?;
    println!("seed {} n {} verdict {:?}", config.seed, config.n, t.verdict);
    println!("transcript written to {}", args.out.display());
    Ok(verdict_exit_code(&t.verdict))
}

fn parse_branch(s: &str) -> Result<TeleportOutcomes, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Config(format!("branch {s:?} is not z1,bell,z4"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let bit = |p: &str| match p {
        "0" => Ok(0u8),
        "1" => Ok(1u8),
        _ => Err(bad()),
    };
    let bell = match parts[1] {
        "phi+" => BellOutcome::PhiPlus,
        "phi-" => BellOutcome::PhiMinus,
        "psi+" => BellOutcome::PsiPlus,
        "psi-" => BellOutcome::PsiMinus,
        _ => return Err(bad()),
    };
    Ok(TeleportOutcomes::new(bit(parts[0])?, bell, bit(parts[2])?))
}

#[derive(Debug, Serialize)]
struct TableReport {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    trials: usize,
    branches_checked: usize,
    negative_phase_branches: Vec<String>,
    failures: Vec<String>,
}

fn cmd_verify_table1(args: &TableArgs) -> Result<i32, CliError> {
    if args.trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let corrupt = args.corrupt_branch.as_deref().map(parse_branch).transpose()?;
    let lookup = |o: TeleportOutcomes| {
        let c = correction_for(o);
        if Some(o) == corrupt {
            let i = PauliCorrection::ALL.iter().position(|p| *p == c).expect("listed");
            PauliCorrection::ALL[(i + 1) % 4]
        } else {
            c
        }
    };
    let mut rng = SimRng::from_seed(args.seed);
    let mut report = TableReport {
        tool: crate::protocol::TOOL_NAME,
        version: crate::protocol::TOOL_VERSION,
        seed: args.seed,
        trials: args.trials,
        branches_checked: 0,
        negative_phase_branches: Vec::new(),
        failures: Vec::new(),
    };
    for _ in 0..args.trials {
        let m = MessageQubit::random(&mut rng);
        match oracle_verify_with(&m, lookup) {
            Ok(r) => {
                report.branches_checked += r.branches.len();
                if report.negative_phase_branches.is_empty() {
                    report.negative_phase_branches = r.negative_phase_branches().iter().map(|o| o.to_string()).collect();
                }
            }
            Err(e) => {
                report.failures.push(e.to_string());
                break;
            }
        }
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    if report.failures.is_empty() {
        println!("table check passed: {} branch checks over {} messages", report.branches_checked, args.trials);
        Ok(EXIT_OK)
    } else {
        for f in &report.failures {
            eprintln!("table check failed: {f}");
        }
        Ok(EXIT_FAILURE)
    }
}

#[derive(Debug, Serialize)]
struct EfficiencyOutput {
    tool: &'static str,
    version: &'static str,
    n: u64,
    l: u64,
    report: crate::analysis::EfficiencyReport,
    regime: crate::analysis::RegimeFlag,
    comparison: crate::analysis::ComparisonTable,
    instrumented: crate::analysis::InstrumentedCounts,
}

#[derive(Debug, Serialize)]
struct ExperimentOutput {
    tool: &'static str,
    version: &'static str,
    #[serde(flatten)]
    result: crate::analysis::ExperimentResult,
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<i32, CliError> {
    let config = args.common.to_config()?;
    if args.trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let name = format!("{:?}", args.kind).to_lowercase();
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.json")));
    let wrap = |result| ExperimentOutput {
        tool: crate::protocol::TOOL_NAME,
        version: crate::protocol::TOOL_VERSION,
        result,
    };
    match args.kind {
        ExperimentKind::Efficiency => {
            let (n, l) = (config.n as u64, config.hash.output_bits as u64);
            let report = qubit_efficiency(n, l)?;
            let t = run_full(&seeded_message(config.n, config.seed), None, &config)?;
            let output = EfficiencyOutput {
                tool: crate::protocol::TOOL_NAME,
                version: crate::protocol::TOOL_VERSION,
                n,
                l,
                regime: regime_flag(n, l)?,
                comparison: comparison_table(),
                instrumented: instrumented_counts(&t, KeyOverhead::default()),
                report,
            };
            println!("{}", output.report);
            println!("instrumented: {}", output.instrumented.report);
            println!(
                "beats 1/29: {} (l < 24n: {})",
                output.regime.beats_ghz5, output.regime.inequality_holds
            );
            write_json(&out, &output)?;
        }
        ExperimentKind::Detection => {
            let r = experiment_detection(&config, args.trials)?;
            println!("{r}");
            write_json(&out, &wrap(r))?;
        }
        ExperimentKind::Forgery => {
            let model = match args.model {
                ModelArg::OutsideRandomMd => ForgeryModel::OutsideRandomMd,
                ModelArg::InsideNoKey => ForgeryModel::InsideNoKey,
                ModelArg::HonestControl => ForgeryModel::HonestControl,
            };
            let r = experiment_forgery(model, &config, args.trials)?;
            println!("{r}");
            write_json(&out, &wrap(r))?;
        }
        ExperimentKind::Blindness => {
            let delta = match args.delta {
                DeltaArg::Random => DeltaMode::Random,
                DeltaArg::Zero => DeltaMode::Zero,
                DeltaArg::AllOnes => DeltaMode::AllOnes,
            };
            let r = experiment_blindness(&config, args.trials, delta)?;
            println!("{r}");
            println!("violations: {}", r.successes);
            write_json(&out, &wrap(r))?;
        }
    }
    println!("report written to {}", out.display());
    Ok(EXIT_OK)
}

fn cmd_replay(args: &ReplayArgs) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&args.transcript).map_err(|e| io_err(&args.transcript, e))?;
    let original =
        Transcript::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.transcript.display())))?;
    let replayed = original.replay()?;
    if let Some(out) = &args.out {
        write_json(out, &replayed)?;
    }
    if replayed == original {
        println!("replay identical: seed {} verdict {:?}", original.config.seed, original.verdict);
        Ok(EXIT_OK)
    } else {
        let first = original
            .events
            .iter()
            .zip(&replayed.events)
            .position(|(a, b)| a != b)
            .unwrap_or(original.events.len().min(replayed.events.len()));
        eprintln!("replay differs (first differing event: {first})");
        Ok(EXIT_FAILURE)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::VerifyTable1(a) => cmd_verify_table1(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Config(m)) => {
            eprintln!("configuration error: {m}");
            EXIT_CONFIG
        }
        Err(CliError::Io(m)) => {
            eprintln!("error: {m}");
            EXIT_FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_branch_spec() {
        assert_eq!(
            parse_branch("0, psi+, 1").unwrap(),
            TeleportOutcomes::new(0, BellOutcome::PsiPlus, 1)
        );
        assert!(parse_branch("2,phi+,0").is_err());
        assert!(parse_branch("0,phi+").is_err());
    }

    #[test]
    fn zero_n_is_config_error() {
        assert_eq!(main_with_args(["sqpbs", "run", "--n", "0", "--out", "/nonexistent/x.json"]), EXIT_CONFIG);
    }

    #[test]
    fn entangle_measure_needs_params() {
        let args = ["sqpbs", "experiment", "detection", "--attack", "entangle-measure"];
        assert_eq!(main_with_args(args), EXIT_CONFIG);
    }

    #[test]
    fn unknown_experiment_kind_rejected() {
        assert_eq!(main_with_args(["sqpbs", "experiment", "teleport"]), EXIT_CONFIG);
    }
}
