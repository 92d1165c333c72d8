use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use timebin_core::certify::Scheme;
use timebin_core::sampling::{certify_exact, sample_counts};
use timebin_core::state::{dephase, fidelity, random_mixed, ReferenceState, TwoPhotonState};
use timebin_core::walk::{coin_single, WalkProgram};
use timebin_core::C64;

fn unitary_error(u: &DMatrix<C64>) -> f64 {
    let g = u.adjoint() * u;
    (g - DMatrix::<C64>::identity(u.ncols(), u.ncols())).norm()
}

proptest! {
    #[test]
    fn coin_is_unitary(theta in -10.0f64..10.0) {
        let c = coin_single(theta);
        let u = DMatrix::from_fn(2, 2, |r, k| c[r][k]);
        prop_assert!(unitary_error(&u) < 1e-12);
    }

    #[test]
    fn walk_is_isometry(n in 1usize..6, depth in 0usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = WalkProgram::new(n, depth);
        for r in 1..=depth {
            for b in 1..=p.n_bins_total {
                p.set(r, b, rand::Rng::random::<f64>(&mut rng) * core::f64::consts::FRAC_PI_2);
            }
        }
        let u = p.unitary().unwrap();
        prop_assert!(unitary_error(&u) < 1e-12);
    }

    #[test]
    fn dephasing_keeps_trace_and_lowers_purity(n in 2usize..5, alpha in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_mixed(n, 2, &mut rng);
        let d = dephase(&s, alpha, n).unwrap();
        prop_assert!((d.trace() - 1.0).abs() < 1e-10);
        prop_assert!(d.purity() <= s.purity() + 1e-12);
    }

    #[test]
    fn counts_sum_to_shots(w in prop::collection::vec(0.0f64..1.0, 1..12), shots in 0i64..5000, seed in any::<u64>()) {
        let t: f64 = w.iter().sum();
        prop_assume!(t > 0.0);
        let p: Vec<f64> = w.iter().map(|x| x / t).collect();
        let c = sample_counts(&p, shots, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(c.iter().sum::<u64>(), shots as u64);
        for (k, &pk) in p.iter().enumerate() {
            if pk == 0.0 { prop_assert_eq!(c[k], 0); }
        }
    }

    #[test]
    fn exact_bounds_are_sound(n in prop::sample::select(vec![2usize, 4]), rank in 1usize..5, seed in any::<u64>()) {
        let s = random_mixed(n, rank, &mut ChaCha8Rng::seed_from_u64(seed));
        let f = fidelity(&s, &ReferenceState::mes(n)).unwrap();
        for scheme in [Scheme::Compound, Scheme::Single] {
            prop_assert!(certify_exact(&s, scheme).unwrap().fid_bound <= f + 1e-10);
        }
    }
}

#[test]
fn comprehensive_bound_is_sound_and_tight_on_mes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..20 {
        let s = random_mixed(4, 1 + k % 4, &mut rng);
        let f = fidelity(&s, &ReferenceState::mes(4)).unwrap();
        assert!(certify_exact(&s, Scheme::Comprehensive).unwrap().fid_bound <= f + 1e-10);
    }
    let r = certify_exact(&TwoPhotonState::mes(4), Scheme::Comprehensive).unwrap();
    assert!((r.fid_bound - 1.0).abs() < 1e-9);
}
