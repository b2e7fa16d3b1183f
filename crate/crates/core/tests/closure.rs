//! Correlator equations against the brute-force Pauli-algebra derivation.

mod support;

use ddspin::mfqf::{f_terms_ising, f_terms_xy, g_terms, mfqf_rhs, pi_matrix, MfqfState};
use ddspin::{BlochVector, InteractionKind, LatticeSpec, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::pauli::{random_symmetric_state, Oracle};

fn lattices() -> Vec<LatticeSpec> {
    vec![
        LatticeSpec::cubic(1, 8).unwrap(),
        LatticeSpec::cubic(2, 5).unwrap(),
        LatticeSpec::cubic(2, 4).unwrap(),
        LatticeSpec::cubic(3, 3).unwrap(),
        LatticeSpec::fully_connected(6).unwrap(),
    ]
}

fn random_params(rng: &mut ChaCha8Rng, kind: InteractionKind) -> ModelParams {
    ModelParams::new(
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-1.5..1.5),
        rng.gen_range(-1.5..1.5),
        rng.gen_range(0.3..2.0),
        kind,
    )
    .unwrap()
}

#[test]
fn moment_equations_match_pauli_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    let mut states = 0;
    for lat in lattices() {
        for kind in [InteractionKind::Xy, InteractionKind::Ising] {
            for _ in 0..10 {
                let p = random_params(&mut rng, kind);
                let (mu, field) = random_symmetric_state(&lat, &mut rng, 0.1);
                let oracle = Oracle::new(&lat, &p);
                let pi = pi_matrix(&p);
                for r in field.stencil().classes() {
                    let want = oracle.theta_rate(mu, &field, r);
                    let th = ddspin::mfqf::field::sym_to_matrix(&field.theta(mu, r).unwrap());
                    let f = match kind {
                        InteractionKind::Xy => f_terms_xy(r, mu, &field, p.coupling),
                        InteractionKind::Ising => f_terms_ising(r, mu, &field, p.coupling),
                    }
                    .unwrap();
                    let got = pi * th + th * pi.transpose() + f + g_terms(mu, &th, p.gamma);
                    let got = ddspin::mfqf::field::matrix_to_sym(&got);
                    for i in 0..6 {
                        worst = worst.max((got[i] - want[i]).abs());
                    }
                }
                states += 1;
            }
        }
    }
    assert_eq!(states, 100);
    assert!(worst < 1e-12, "largest deviation {worst:e}");
}

#[test]
fn full_rate_matches_pauli_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for lat in lattices() {
        for kind in [InteractionKind::Xy, InteractionKind::Ising] {
            let p = random_params(&mut rng, kind);
            let (mu, field) = random_symmetric_state(&lat, &mut rng, 0.1);
            let oracle = Oracle::new(&lat, &p);
            let state = MfqfState {
                mu,
                field: field.clone(),
                time: 0.0,
            };
            let rate = mfqf_rhs(&state, &p).unwrap();
            let dmu = oracle.mu_rate(mu, &field);
            assert!(rate.mu.max_abs_diff(dmu) < 1e-12);
            let (m, d) = (mu.to_array(), dmu.to_array());
            let pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
            for (k, r) in field.stencil().classes().iter().enumerate() {
                let dth = oracle.theta_rate(mu, &field, r);
                for (i, (a, b)) in pairs.into_iter().enumerate() {
                    let want = dth[i] - d[a] * m[b] - m[a] * d[b];
                    assert!(
                        (rate.eta[k][i] - want).abs() < 1e-12,
                        "{lat:?} {kind} R={r} component {i}"
                    );
                }
            }
        }
    }
}

#[test]
fn ising_and_flipped_xy_share_the_magnetization_sector() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let lat = LatticeSpec::cubic(2, 6).unwrap();
    for _ in 0..20 {
        let (mu, field) = random_symmetric_state(&lat, &mut rng, 0.1);
        let state = MfqfState { mu, field, time: 0.0 };
        let jz = rng.gen_range(-2.0..2.0);
        let ising = mfqf_rhs(&state, &ModelParams::ising(0.4, 0.9, jz)).unwrap();
        let xy = mfqf_rhs(&state, &ModelParams::xy(0.4, 0.9, -jz)).unwrap();
        assert_eq!(ising.mu, xy.mu);
        assert_ne!(ising.eta, xy.eta);
    }
}

#[test]
fn uncorrelated_state_reduces_to_meanfield() {
    let lat = LatticeSpec::cubic(2, 8).unwrap();
    let mu = BlochVector::new(0.2, -0.3, -0.5);
    let state = MfqfState {
        mu,
        field: ddspin::mfqf::CorrelatorField::zeros(&lat).unwrap(),
        time: 0.0,
    };
    for j in [0.0, 0.8] {
        let p = ModelParams::xy(1.1, 0.6, j);
        let rate = mfqf_rhs(&state, &p).unwrap();
        assert_eq!(rate.mu, ddspin::meanfield::mf_rhs(mu, &p, 4.0));
        let eta_max = rate.max_abs_eta();
        if j == 0.0 {
            assert!(eta_max < 1e-15);
        } else {
            assert!(eta_max > 1e-3);
        }
    }
}
