use num_complex::Complex64;

use sqpbs::channels::DecoyState;
use sqpbs::chi_teleport::{run_teleportation, MessageQubit, TeleportOutcomes};
use sqpbs::quantum_core::{derive_seed, Basis, BellOutcome, SimRng, StateVector};

const TRIALS: usize = 100_000;

fn within_sigmas(count: usize, n: usize, p: f64, k: f64) -> bool {
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - n as f64 * p).abs() <= k * sd.max(1.0)
}

#[test]
fn born_rule_in_z_and_x() {
    let theta: f64 = 1.1;
    let phase = 0.7;
    let a = Complex64::new((theta / 2.0).cos(), 0.0);
    let b = Complex64::from_polar((theta / 2.0).sin(), phase);
    let psi = StateVector::qubit(a, b).unwrap();
    let p_z1 = b.norm_sqr();
    let p_x1 = (a - b).norm_sqr() / 2.0;

    let mut rng = SimRng::from_seed(11);
    let (mut z1, mut x1) = (0, 0);
    for _ in 0..TRIALS {
        z1 += psi.measure(0, Basis::Z, &mut rng).unwrap().0 as usize;
        x1 += psi.measure(0, Basis::X, &mut rng).unwrap().0 as usize;
    }
    assert!(within_sigmas(z1, TRIALS, p_z1, 3.0), "Z: {z1} vs {}", p_z1 * TRIALS as f64);
    assert!(within_sigmas(x1, TRIALS, p_x1, 3.0), "X: {x1} vs {}", p_x1 * TRIALS as f64);
}

#[test]
fn bell_measurement_of_product_state() {
    // |0⟩|+⟩ overlaps φ± and ψ± with weight 1/4 each.
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let psi = StateVector::basis_ket(Basis::Z, 0).tensor(&StateVector::qubit(Complex64::new(h, 0.0), Complex64::new(h, 0.0)).unwrap()).unwrap();
    let mut rng = SimRng::from_seed(12);
    let mut counts = [0usize; 4];
    for _ in 0..TRIALS {
        let (o, _) = psi.measure_bell(0, 1, &mut rng).unwrap();
        let [hi, lo] = o.classical_bits();
        counts[(hi * 2 + lo) as usize] += 1;
    }
    for c in counts {
        assert!(within_sigmas(c, TRIALS, 0.25, 3.0), "{counts:?}");
    }
    let phi_plus = BellOutcome::PhiPlus.state();
    let mut rng = SimRng::from_seed(13);
    for _ in 0..1000 {
        assert_eq!(phi_plus.measure_bell(0, 1, &mut rng).unwrap().0, BellOutcome::PhiPlus);
    }
}

#[test]
fn teleportation_outcomes_are_uniform() {
    let mut rng = SimRng::from_seed(14);
    let m = MessageQubit::random(&mut rng);
    let all: Vec<TeleportOutcomes> = TeleportOutcomes::all().collect();
    let mut counts = vec![0usize; all.len()];
    let trials = 32_000;
    for _ in 0..trials {
        let (o, _) = run_teleportation(&m, &mut rng).unwrap();
        counts[all.iter().position(|x| *x == o).unwrap()] += 1;
    }
    let expected = trials as f64 / 16.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 15 degrees of freedom, 0.999 quantile
    assert!(chi2 < 37.7, "chi2 {chi2} {counts:?}");
}

#[test]
fn decoy_states_are_uniform() {
    let mut rng = SimRng::from_seed(15);
    let mut counts = [0usize; 4];
    for _ in 0..TRIALS {
        let d = DecoyState::random(&mut rng);
        let i = match d {
            DecoyState::Zero => 0,
            DecoyState::One => 1,
            DecoyState::Plus => 2,
            DecoyState::Minus => 3,
        };
        counts[i] += 1;
    }
    for c in counts {
        assert!(within_sigmas(c, TRIALS, 0.25, 3.0), "{counts:?}");
    }
}

#[test]
fn derived_streams_are_independent_bits() {
    let mut ones = 0usize;
    let mut agree = 0usize;
    for i in 0..TRIALS as u64 {
        let a = SimRng::from_seed(derive_seed(99, i)).bit();
        let b = SimRng::from_seed(derive_seed(99, i + 1)).bit();
        ones += a as usize;
        agree += (a == b) as usize;
    }
    assert!(within_sigmas(ones, TRIALS, 0.5, 3.0));
    assert!(within_sigmas(agree, TRIALS, 0.5, 3.0));
}
