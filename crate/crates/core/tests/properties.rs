//! Property suites over random channels, states and measurement families.
//! Every generator is seeded, so a run is reproducible.

use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tptomo_core::channel::{
    apply_channel_chi, apply_channel_kraus, chi_to_kraus, chi_to_theta, kraus_to_chi, outcome_probability,
    random_cptp, theta_len, theta_to_chi, ThetaVector, TpParametrization, RANK_TOL,
};
use tptomo_core::experiment::{
    check_identifiable, exact_probabilities, minimal_qubit_setting, random_setting, simulate_counts,
};
use tptomo_core::linalg::{
    c, frobenius_norm, identity, kron, max_abs, partial_trace_first, partial_trace_second, projector_from_vector,
    trace, CMatrix,
};

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x7470_746f_6d6f),
        failure_persistence: None,
        ..Config::default()
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng))
    })
}

/// Random full-rank density matrix `AA†/tr(AA†)`.
fn random_density(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let a = gaussian_matrix(d, d, rng);
    let rho = &a * a.adjoint();
    let t = trace(&rho);
    rho / t
}

/// Haar unitary from the QR factor of a Gaussian matrix.
fn random_unitary(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    gaussian_matrix(d, d, rng).qr().q()
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn kraus_and_chi_application_agree(seed in any::<u64>(), d in 2usize..=3, rank_pick in 0usize..9) {
        let rank = 1 + rank_pick % (d * d);
        let (kraus, chi) = random_cptp(d, rank, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
        let rho = random_density(d, &mut rng);
        let via_chi = apply_channel_chi(&chi, &rho).unwrap();
        let via_kraus = apply_channel_kraus(&kraus, &rho).unwrap();
        prop_assert!(max_abs(&(via_chi - &via_kraus)) <= 1e-10);
        prop_assert!((trace(&via_kraus) - c(1.0, 0.0)).norm() <= 1e-10);
    }

    #[test]
    fn theta_chi_roundtrip(seed in any::<u64>(), d in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..theta_len(d)).map(|_| StandardNormal.sample(&mut rng)).collect();
        let theta = ThetaVector::new(d, coords.clone()).unwrap();
        let chi = theta_to_chi(&theta, d).unwrap();
        prop_assert!(chi.tp_deviation() <= 1e-12);
        let back = chi_to_theta(&chi).unwrap();
        for (a, b) in back.coords().iter().zip(&coords) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let (_, cptp) = random_cptp(d, 1 + (seed % (d * d) as u64) as usize, seed).unwrap();
        let again = theta_to_chi(&chi_to_theta(&cptp).unwrap(), d).unwrap();
        prop_assert!(max_abs(&(again.matrix() - cptp.matrix())) <= 1e-12);
    }

    #[test]
    fn complete_projector_families_normalize(seed in any::<u64>(), d in 2usize..=4) {
        let (_, chi) = random_cptp(d, 1 + (seed % (d * d) as u64) as usize, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17));
        let basis = random_unitary(d, &mut rng);
        let state_vec: DVector<_> = random_unitary(d, &mut rng).column(0).into_owned();
        let rho = projector_from_vector(&state_vec);
        let total: f64 = (0..d)
            .map(|j| {
                let v: DVector<_> = basis.column(j).into_owned();
                outcome_probability(&chi, &projector_from_vector(&v), &rho).unwrap()
            })
            .sum();
        prop_assert!((total - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn chi_to_kraus_reproduces_the_channel(seed in any::<u64>(), rank_pick in 0usize..4) {
        let (_, chi) = random_cptp(2, 1 + rank_pick, seed).unwrap();
        let kraus = chi_to_kraus(&chi, RANK_TOL).unwrap();
        prop_assert!(kraus.len() <= 1 + rank_pick);
        prop_assert!(max_abs(&(kraus_to_chi(&kraus).matrix() - chi.matrix())) <= 1e-10);
    }

    #[test]
    fn partial_traces_of_products(seed in any::<u64>(), m in 1usize..=3, n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian_matrix(m, m, &mut rng);
        let b = gaussian_matrix(n, n, &mut rng);
        let ab = kron(&a, &b);
        let tr2 = partial_trace_second(&ab, m, n).unwrap();
        let tr1 = partial_trace_first(&ab, m, n).unwrap();
        prop_assert!(max_abs(&(tr2 - &a * trace(&b))) <= 1e-10 * (1.0 + frobenius_norm(&ab)));
        prop_assert!(max_abs(&(tr1 - &b * trace(&a))) <= 1e-10 * (1.0 + frobenius_norm(&ab)));
    }

    #[test]
    fn identifiability_is_monotone(seed in any::<u64>()) {
        let setting = random_setting(2, 3, 4, seed, 100).unwrap();
        prop_assert!(check_identifiable(&setting).identifiable);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let v: DVector<_> = random_unitary(2, &mut rng).column(0).into_owned();
        let p = projector_from_vector(&v);
        prop_assert!(check_identifiable(&setting.with_state(p.clone()).unwrap()).identifiable);
        prop_assert!(check_identifiable(&setting.with_projector(p).unwrap()).identifiable);
        for k in 0..4 {
            prop_assert!(!check_identifiable(&setting.without_state(k).unwrap()).identifiable);
        }
        for j in 0..3 {
            prop_assert!(!check_identifiable(&setting.without_projector(j).unwrap()).identifiable);
        }
    }
}

proptest! {
    #![proptest_config(config(25))]

    #[test]
    fn binomial_simulator_is_within_four_sigma(seed in any::<u64>()) {
        let n = 1_000_000u64;
        let setting = minimal_qubit_setting();
        let (_, chi) = random_cptp(2, 1 + (seed % 4) as usize, seed).unwrap();
        let probs = exact_probabilities(&chi, &setting).unwrap();
        let data = simulate_counts(&chi, &setting, n, seed).unwrap();
        for (&count, &p) in data.counts().iter().zip(&probs) {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let f = count as f64 / n as f64;
            prop_assert!((f - p).abs() <= 4.0 * sigma + 1e-12, "f = {}, p = {}, sigma = {}", f, p, sigma);
        }
    }
}

#[test]
fn trace_preserving_parametrization_spans_identity_offset() {
    // χ(0) = I/d for every d: the TP offset alone.
    for d in 2..=4 {
        let param = TpParametrization::new(d);
        let chi0 = param.chi_matrix(&vec![0.0; param.len()]);
        assert!(max_abs(&(chi0 - identity(d * d).scale(1.0 / d as f64))) <= 1e-14);
    }
}
