//! Weight tables pinned as JSON files. `UPDATE_GOLDEN=1` rewrites them.

use std::path::PathBuf;

use nalgebra::DMatrix;
use timebin_cert::io::WeightsJson;
use timebin_core::certify::{single_setting_coeffs, window_coincidences};
use timebin_core::four_photon::MultiPairSetup;
use timebin_core::scheme::single_setting;
use timebin_core::state::TwoPhotonState;
use timebin_core::walk::walk_distribution;
use timebin_core::C64;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check(name: &str, fresh: &WeightsJson) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(fresh).unwrap() + "\n").unwrap();
    }
    let stored: WeightsJson = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!((stored.n_bins, &stored.scheme, &stored.profile, stored.dim), (fresh.n_bins, &fresh.scheme, &fresh.profile, fresh.dim));
    let diff = (stored.to_matrix() - fresh.to_matrix()).norm();
    assert!(diff < 1e-12, "{name} drifted by {diff}");
}

/// Weights recovered by propagating basis states and their pairwise
/// superpositions through the walk: `c_xy = (A + iB) / 2`.
fn single_oracle(n: usize) -> DMatrix<C64> {
    let (program, _) = single_setting(n).unwrap();
    let d = n * n;
    let p = |block: DMatrix<C64>| {
        let s = TwoPhotonState::from_short_block(n, &block).unwrap();
        window_coincidences(&walk_distribution(&s, &program, &program.angles).unwrap(), n)
    };
    let ket = |x: usize, y: usize, ph: C64| {
        let mut v = DMatrix::<C64>::zeros(d, 1);
        v[(x, 0)] += C64::new(1.0, 0.0);
        if x != y {
            v[(y, 0)] += ph;
        }
        let v = &v / C64::new(v.norm(), 0.0);
        &v * v.adjoint()
    };
    let diag: Vec<f64> = (0..d).map(|x| p(ket(x, x, C64::new(0.0, 0.0)))).collect();
    let mut c = DMatrix::<C64>::zeros(d, d);
    for x in 0..d {
        c[(x, x)] = C64::new(diag[x], 0.0);
        for y in x + 1..d {
            let a = 2.0 * p(ket(x, y, C64::new(1.0, 0.0))) - diag[x] - diag[y];
            let b = 2.0 * p(ket(x, y, C64::new(0.0, 1.0))) - diag[x] - diag[y];
            c[(x, y)] = C64::new(a, b) / 2.0;
            c[(y, x)] = c[(x, y)].conj();
        }
    }
    c
}

#[test]
fn single_setting_weights_n4() {
    let w = single_setting_coeffs(4).unwrap();
    let oracle = single_oracle(4);
    let err = (&w.c - &oracle).norm();
    assert!(err < 1e-12, "closed form vs propagated oracle: {err}");
    check("weights_n4_single_none.json", &WeightsJson::single(&w));
}

#[test]
fn four_photon_weights_n4() {
    let setup = MultiPairSetup::new(4).unwrap();
    check("weights_n4_multi_pair_none.json", &WeightsJson::four_photon(&setup.weights(false).unwrap(), false));
    check("weights_n4_phase_enhanced_pi_each_bin.json", &WeightsJson::four_photon(&setup.weights(true).unwrap(), true));
}
