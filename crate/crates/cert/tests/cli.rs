use std::path::Path;
use std::process::{Command, Output};

use timebin_cert::io::{read_csv, ResultFile, StateJson};
use timebin_core::state::{dephase, TwoPhotonState};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_timebin-cert"));
    c.env_remove("TIMEBIN_CERT_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn read_result(p: &Path) -> ResultFile {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn exact_pure_mes_certifies_full_dimension() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("r");
    let o = run(&["certify", "--set", "n_bins=4", "--set", "exact_mode=true", "--set", "coupler_noise_halfwidth=0", "--set", "trials=3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_result(&out.join("result_n4.json"));
    assert_eq!((r.result.scheme.as_str(), r.result.fid_bound, r.result.dimension), ("compound", 1.0, 4));
    assert_eq!(r.config_hash.len(), 64);
    let (h, rows) = read_csv(&std::fs::read(out.join("ensemble_n4.csv")).unwrap()).unwrap();
    assert_eq!(h, ["trial", "fid_bound", "dimension"]);
    assert_eq!(rows.len(), 3);
}

#[test]
fn malformed_config_leaves_no_outputs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.toml");
    std::fs::write(&cfg, "scheme = \"single\"\nn_bins = 6\n").unwrap();
    let out = d.path().join("r");
    let o = run(&["certify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let diag: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(diag["error"], "config");

    std::fs::write(&cfg, "scheme = [").unwrap();
    assert_eq!(run(&["certify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["certify", "--set", "purity=2", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bin_list_writes_one_ensemble_each() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "scheme = \"single\"\nn_bins = [2, 4]\npurity = 0.95\ntrials = 5\nbudget_population = 500\nbudget_walk = 500\n").unwrap();
    let out = d.path().join("r");
    assert!(run(&["certify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    for n in [2, 4] {
        assert!(out.join(format!("ensemble_n{n}.csv")).exists());
        assert_eq!(read_result(&out.join(format!("result_n{n}.json"))).result.n_bins, n);
    }
}

#[test]
fn manifest_rerun_and_threads_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let args = ["certify", "--set", "n_bins=4", "--set", "purity=0.9", "--set", "random_phases=true", "--set", "budget_phase=1000", "--set", "trials=11", "--seed", "17"];
    let mut c = bin();
    c.args(args).args(["--out", a.to_str().unwrap()]).env("TIMEBIN_CERT_THREADS", "1");
    assert!(c.output().unwrap().status.success());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 17);
    assert!(manifest["finished_unix"].is_u64());

    let b = d.path().join("b");
    let o = run(&["certify", "--config", a.join("manifest.json").to_str().unwrap(), "--threads", "3", "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["result_n4.json", "ensemble_n4.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn overwrite_needs_force() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("r");
    let args = ["certify", "--set", "n_bins=2", "--set", "trials=1", "--set", "exact_mode=true", "--out", out.to_str().unwrap()];
    assert!(run(&args).status.success());
    assert_eq!(run(&args).status.code(), Some(2));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(run(&forced).status.success());
}

#[test]
fn sweep_outputs() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("s");
    let o = run(&[
        "sweep", "--set", "n_bins=4", "--set", "exact_mode=true", "--set", "trials=1", "--set", "coupler_noise_halfwidth=0",
        "--axis", "purity=0.9,1.0", "--schemes", "compound,single", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&std::fs::read(out.join("sweep.csv")).unwrap()).unwrap();
    assert_eq!(h, ["axis_value", "scheme", "median", "q1", "q3", "true_fidelity"]);
    assert_eq!(rows.len(), 4);
    assert_eq!((rows[2][0].as_str(), rows[2][1].as_str(), rows[2][2].as_str()), ("1.0", "compound", "1"));
    assert!(rows.iter().all(|r| r[5].parse::<f64>().is_ok()));

    let e = d.path().join("e");
    assert_eq!(run(&["sweep", "--axis", "purity=", "--out", e.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--out", e.to_str().unwrap()]).status.code(), Some(2));
    assert!(!e.exists());
}

#[test]
fn dump_scheme_programs() {
    let o = run(&["dump-scheme", "--scheme", "compound", "-n", "4"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.matches("# compound n=4 setting").count(), 3);
    assert_eq!(text, String::from_utf8(run(&["dump-scheme", "--scheme", "compound", "-n", "4"]).stdout).unwrap());

    let d = tempfile::tempdir().unwrap();
    let o = run(&["dump-scheme", "--scheme", "single", "-n", "8", "--out", d.path().to_str().unwrap()]);
    assert!(o.status.success());
    let p: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("single_n8_setting1.json")).unwrap()).unwrap();
    assert_eq!(p["depth"], 14);
    assert_eq!(run(&["dump-scheme", "--scheme", "single", "-n", "6"]).status.code(), Some(2));
}

#[test]
fn certify_state_file() {
    let d = tempfile::tempdir().unwrap();
    let s = dephase(&TwoPhotonState::mes(4), 0.1, 4).unwrap();
    let path = d.path().join("state.json");
    std::fs::write(&path, serde_json::to_string(&StateJson::from(&s)).unwrap()).unwrap();
    let out = d.path().join("r");
    let o = run(&["certify", "--state", path.to_str().unwrap(), "--set", "scheme=compound", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_result(&out.join("result_n4.json"));
    // F = 0.9 + 0.1/16 minus 6 pair terms of 2 * (1/4) * 0.1/16.
    let expect = 0.9 + 0.1 / 16.0 - 6.0 * 0.5 * 0.1 / 16.0;
    assert!((r.result.fid_bound - expect).abs() < 1e-12, "{}", r.result.fid_bound);
    assert!(r.ensemble.is_none());
}

#[test]
fn four_photon_runs_exact_only() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("r");
    assert_eq!(run(&["certify", "--set", "scheme=multi_pair", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    let o = run(&["certify", "--set", "scheme=multi_pair", "--set", "exact_mode=true", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let r = read_result(&out.join("result_n4.json"));
    assert_eq!((r.result.dimension, r.result.reference_lambdas.len()), (10, 10));
}
