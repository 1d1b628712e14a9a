//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use num_rational::Ratio;
use rayon::prelude::*;

use sqpbs::analysis::{
    comparison_table, experiment_blindness, experiment_detection, experiment_forgery, intercept_resend_detection,
    probe_distinguishability, qubit_efficiency, regime_flag, violation_grid, DeltaMode, ForgeryModel,
};
use sqpbs::channels::EveParams;
use sqpbs::chi_teleport::{oracle_verify_table1, prepare_chi, MessageQubit};
use sqpbs::crypto_keys::BitString;
use sqpbs::protocol::{run_full, seeded_message, AbortReason, Attack, ProtocolConfig, Transcript, Verdict};
use sqpbs::quantum_core::{derive_seed, SimRng};
use sqpbs::transcript::ChannelId;

const TABLE_FIDELITY_TOL: f64 = 1e-10;
const TABLE_PROBABILITY_TOL: f64 = 1e-12;
const TABLE_MESSAGES: usize = 100;
const TABLE_BUDGET: Duration = Duration::from_secs(1);
const CHI_TOL: f64 = 1e-12;
const HONEST_RUNS: usize = 1000;
const HONEST_SIZES: [usize; 4] = [1, 8, 32, 64];
const HONEST_BUDGET: Duration = Duration::from_secs(30);
const BLINDNESS_TRIALS: u64 = 1000;
const DETECTION_TRIALS: u64 = 10_000;
const DETECTION_DECOYS: usize = 20;
const EVE_TRIALS: u64 = 10_000;
const PROBE_TRACE_TOL: f64 = 1e-10;
const GRID_POINTS: usize = 20;
const GRID_MIN_DISTANCE: f64 = 0.05;
const GRID_MIN_ERROR: f64 = 1e-3;
const FORGERY_TRIALS: u64 = 10_000;
const SIGMAS: f64 = 3.0;
const BASE_SEED: u64 = 0x5150_2024;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_sigmas(observed: f64, p: f64, trials: u64) -> bool {
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    (observed - p).abs() <= SIGMAS * sd
}

fn table1_oracle() -> Outcome {
    let mut rng = SimRng::from_seed(BASE_SEED);
    let messages: Vec<MessageQubit> = (0..TABLE_MESSAGES).map(|_| MessageQubit::random(&mut rng)).collect();
    let complex_b = messages.iter().filter(|m| m.b.im.abs() > 1e-6).count();
    let start = Instant::now();
    let mut checks = 0;
    let mut worst_fidelity = 1.0f64;
    let mut worst_prob = 0.0f64;
    for m in &messages {
        let report = oracle_verify_table1(m).map_err(|e| e.to_string())?;
        for b in &report.branches {
            checks += 1;
            worst_fidelity = worst_fidelity.min(b.recovered_fidelity);
            worst_prob = worst_prob.max((b.probability - 1.0 / 16.0).abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        checks == 16 * TABLE_MESSAGES
            && complex_b > 0
            && worst_fidelity >= 1.0 - TABLE_FIDELITY_TOL
            && worst_prob <= TABLE_PROBABILITY_TOL
            && elapsed < TABLE_BUDGET,
        format!(
            "{checks} branches, {complex_b} messages with complex b, min fidelity {worst_fidelity:.15}, \
             max |p - 1/16| {worst_prob:.2e}, {elapsed:.2?}"
        ),
    )
}

fn chi_amplitudes() -> Outcome {
    let amp = 1.0 / (2.0 * 2f64.sqrt());
    let terms = [
        ("0000", 1.0),
        ("0011", 1.0),
        ("0101", -1.0),
        ("0110", 1.0),
        ("1001", 1.0),
        ("1010", 1.0),
        ("1100", 1.0),
        ("1111", -1.0),
    ];
    let chi = prepare_chi();
    let mut worst = 0.0f64;
    for idx in 0..16 {
        let ket = format!("{idx:04b}");
        let expected = terms
            .iter()
            .find(|(k, _)| *k == ket)
            .map(|(_, s)| Complex64::new(s * amp, 0.0))
            .unwrap_or_default();
        worst = worst.max((chi.amplitude(idx) - expected).norm());
    }
    check(worst <= CHI_TOL, format!("max amplitude deviation {worst:.2e}"))
}

fn honest_correctness() -> Outcome {
    let start = Instant::now();
    let per_size = HONEST_RUNS / HONEST_SIZES.len();
    let failures: Vec<String> = HONEST_SIZES
        .iter()
        .flat_map(|&n| (0..per_size).map(move |i| (n, i)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter_map(|(n, i)| {
            let seed = derive_seed(BASE_SEED ^ n as u64, i as u64);
            let mut rng = SimRng::stream(seed, 7);
            let g_a = BitString::random(n, &mut rng);
            let k_a = BitString::random(n, &mut rng);
            let t = match run_full(&g_a, Some(&k_a), &ProtocolConfig::new(n, seed)) {
                Ok(t) => t,
                Err(e) => return Some(format!("n={n} seed={seed}: {e}")),
            };
            let g = g_a.xor(&k_a).unwrap();
            let ok = t.verdict == Verdict::Valid && t.record("g'") == Some(&g);
            (!ok).then(|| format!("n={n} seed={seed}: {:?}", t.verdict))
        })
        .collect();
    let elapsed = start.elapsed();
    check(
        failures.is_empty() && elapsed < HONEST_BUDGET,
        format!(
            "{} runs over n in {HONEST_SIZES:?}, {} failures{}, {elapsed:.2?}",
            per_size * HONEST_SIZES.len(),
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

fn blindness() -> Outcome {
    let cfg = ProtocolConfig::new(8, BASE_SEED);
    let r = experiment_blindness(&cfg, BLINDNESS_TRIALS, DeltaMode::Random).map_err(|e| e.to_string())?;
    check(
        r.trials == BLINDNESS_TRIALS && r.successes == 0,
        format!("{} violations in {} paired runs", r.successes, r.trials),
    )
}

fn intercept_resend() -> Outcome {
    let mut cfg = ProtocolConfig::new(8, BASE_SEED);
    cfg.decoys = Some(DETECTION_DECOYS);
    cfg.attack = Attack::InterceptResend {
        channel: ChannelId::XiM,
        basis: None,
    };
    let r = experiment_detection(&cfg, DETECTION_TRIALS).map_err(|e| e.to_string())?;
    let p = intercept_resend_detection(DETECTION_DECOYS as u32);
    check(
        within_sigmas(r.rate, p, r.trials),
        format!("abort rate {:.4} ({}/{}), expected {p:.4}", r.rate, r.successes, r.trials),
    )
}

fn entangle_measure() -> Outcome {
    let tau = [0.6, 0.0, 0.0, 0.8];
    let params = EveParams::undetectable(&tau).map_err(|e| e.to_string())?;
    let (mut aborts, mut runs) = (0, 0);
    for (i, channel) in ChannelId::ALL.into_iter().enumerate() {
        let mut cfg = ProtocolConfig::new(4, BASE_SEED + i as u64);
        cfg.attack = Attack::EntangleMeasure {
            channel,
            params: params.clone(),
        };
        let r = experiment_detection(&cfg, EVE_TRIALS / ChannelId::ALL.len() as u64).map_err(|e| e.to_string())?;
        aborts += r.successes;
        runs += r.trials;
    }
    let trace = probe_distinguishability(&params).map_err(|e| e.to_string())?;
    let part_a = runs == EVE_TRIALS && aborts == 0 && trace <= PROBE_TRACE_TOL;

    let grid = violation_grid().map_err(|e| e.to_string())?;
    let all_positive = grid.iter().all(|p| p.expected_error > 0.0);
    let far: Vec<_> = grid.iter().filter(|p| p.distance >= GRID_MIN_DISTANCE).collect();
    let low: Vec<String> = far
        .iter()
        .filter(|p| p.expected_error < GRID_MIN_ERROR)
        .map(|p| format!("{:?} at distance {:.2}: {:.2e}", p.family, p.distance, p.expected_error))
        .collect();
    let part_b = grid.len() == GRID_POINTS && all_positive && low.is_empty();
    let detail = format!(
        "(a) {aborts} aborts in {runs} runs across all channels, probe trace distance {trace:.1e}: {}; \
         (b) {} grid points, all positive: {all_positive}, {} of {} far points below {GRID_MIN_ERROR:e}{}: {}",
        if part_a { "pass" } else { "fail" },
        grid.len(),
        low.len(),
        far.len(),
        if low.is_empty() { String::new() } else { format!(" [{}]", low.join("; ")) },
        if part_b { "pass" } else { "fail" },
    );
    check(part_a && part_b, detail)
}

fn forgery() -> Outcome {
    let large = experiment_forgery(ForgeryModel::OutsideRandomMd, &ProtocolConfig::new(32, BASE_SEED), FORGERY_TRIALS)
        .map_err(|e| e.to_string())?;
    let small = experiment_forgery(ForgeryModel::OutsideRandomMd, &ProtocolConfig::new(8, BASE_SEED), FORGERY_TRIALS)
        .map_err(|e| e.to_string())?;
    let oracle = small.expected.unwrap_or(f64::NAN);
    check(
        large.successes == 0 && within_sigmas(small.rate, oracle, small.trials),
        format!(
            "n=32: {}/{} accepted; n=8: rate {:.5} vs oracle {oracle:.5}",
            large.successes, large.trials, small.rate
        ),
    )
}

fn efficiency() -> Outcome {
    let mut exact = true;
    let mut regime = true;
    for n in 1..=64u64 {
        for l in [1, 8, 16, 128, 256, 24 * n - 1, 24 * n, 24 * n + 1, 4096] {
            let r = qubit_efficiency(n, l).map_err(|e| e.to_string())?;
            exact &= r.eta == Ratio::new(2 * n, 34 * n + l);
            let f = regime_flag(n, l).map_err(|e| e.to_string())?;
            regime &= f.beats_ghz5 == (l < 24 * n);
        }
    }
    let table = comparison_table();
    let cited = table.columns[0].qubit_efficiency == "2/31" && table.columns[1].qubit_efficiency == "1/29";
    check(
        exact && regime && cited,
        format!("exact ratios: {exact}, regime flag: {regime}, cited constants 2/31 and 1/29: {cited}"),
    )
}

fn replay() -> Outcome {
    let mut configs = Vec::new();
    for (i, n) in [1usize, 5, 16].into_iter().enumerate() {
        configs.push(ProtocolConfig::new(n, BASE_SEED + i as u64));
    }
    let mut attacked = ProtocolConfig::new(6, BASE_SEED);
    attacked.decoys = Some(40);
    attacked.attack = Attack::InterceptResend {
        channel: ChannelId::W4,
        basis: None,
    };
    configs.push(attacked);
    let mut eve = ProtocolConfig::new(3, BASE_SEED);
    eve.attack = Attack::EntangleMeasure {
        channel: ChannelId::W2,
        params: EveParams::probe_separation(0.9).map_err(|e| e.to_string())?,
    };
    eve.threshold = 0.5;
    configs.push(eve);
    let mut forged = ProtocolConfig::new(4, BASE_SEED);
    forged.attack = Attack::ForgeMd;
    configs.push(forged);

    let mut aborted = 0;
    for cfg in &configs {
        let t = run_full(&seeded_message(cfg.n, cfg.seed), None, cfg).map_err(|e| e.to_string())?;
        if matches!(
            t.verdict,
            Verdict::Aborted {
                cause: AbortReason::EavesdroppingDetected { .. },
                ..
            }
        ) {
            aborted += 1;
        }
        let parsed = Transcript::from_json(&t.to_json()).map_err(|e| e.to_string())?;
        let again = parsed.replay().map_err(|e| e.to_string())?;
        if again != t || again.to_json() != t.to_json() {
            return Err(format!("transcript for {cfg:?} did not replay"));
        }
    }
    check(
        aborted > 0,
        format!("{} transcripts replayed bit-identically, {aborted} of them aborted", configs.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("correction table oracle equivalence", table1_oracle),
        ("χ-state amplitudes", chi_amplitudes),
        ("end-to-end honest correctness", honest_correctness),
        ("blindness invariance", blindness),
        ("intercept-resend detection", intercept_resend),
        ("entangle-measure dichotomy", entangle_measure),
        ("forgery rejection", forgery),
        ("efficiency accounting", efficiency),
        ("determinism and replay", replay),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({elapsed:.2?}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({elapsed:.2?}): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
