//! Subcommands of the `timebin-cert` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use timebin_core::certify::Scheme;
use timebin_core::sampling::{certify_exact, ExperimentConfig, TrialEnsemble};
use timebin_core::scheme::{comprehensive_program, compound_settings, diagram, multi_spdc_settings, phase_estimation_program, single_setting};
use timebin_core::walk::WalkProgram;

use crate::config::{parse_axis, parse_override, RunConfig};
use crate::ensemble::{run_ensemble, run_four_photon, thread_pool};
use crate::error::CliError;
use crate::io::{ensemble_csv, sweep_csv, to_json_bytes, write_atomic, ProgramJson, ResultFile, ResultJson, StateJson, SweepRow};
use crate::manifest::{unix_now, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "timebin-cert", version, about = "Simulate fiber-loop quantum-walk measurements and certify time-bin entanglement dimension")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one ensemble per configured bin count and write result files.
    Certify(CertifyArgs),
    /// Vary one config key and tabulate ensemble quartiles per scheme.
    Sweep(SweepArgs),
    /// Print the trajectory diagram and program JSON of a scheme.
    DumpScheme(DumpArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "TIMEBIN_CERT_THREADS")]
    pub threads: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Certify a state JSON with exact probabilities instead of simulating an ensemble.
    #[arg(long)]
    pub state: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `key=v1,v2,...`; `population_share` moves shots between populations and walks.
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated scheme names; defaults to the configured scheme.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    /// compound, single, comprehensive, multi_pair, phase_enhanced or phase_estimation.
    #[arg(long)]
    pub scheme: String,
    #[arg(long, short = 'n')]
    pub n_bins: usize,
    /// Write `.txt` and `.json` files here instead of printing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Certify(a) => cmd_certify(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::DumpScheme(a) => cmd_dump_scheme(&a),
    }
}

fn resolve_config(run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut overrides = run.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = run.seed {
        overrides.push(("seed".into(), toml::Value::Integer(seed as i64)));
    }
    RunConfig::load(run.config.as_deref(), &overrides)
}

fn ensure_free(paths: &[PathBuf], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(CliError::Config(format!("{} exists; pass --force to overwrite", p.display()))),
        None => Ok(()),
    }
}

fn names(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn ensemble_for(cfg: &RunConfig, n: usize) -> Result<TrialEnsemble, CliError> {
    let scheme = cfg.scheme()?;
    if cfg.is_four_photon() {
        return run_four_photon(scheme, n, cfg.purity, cfg.support()?, cfg.seed);
    }
    let exp = cfg.experiments()?.into_iter().find(|e| e.n_bins == n).expect("bin count from this config");
    run_ensemble(&exp)
}

pub fn cmd_certify(a: &CertifyArgs) -> Result<(), CliError> {
    let cfg = resolve_config(&a.run)?;
    let out = &a.run.out;
    let hash = cfg.hash();

    if let Some(state_path) = &a.state {
        let text = std::fs::read_to_string(state_path).map_err(|e| CliError::Config(format!("{}: {e}", state_path.display())))?;
        let sj: StateJson = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", state_path.display())))?;
        let state = sj.to_state()?;
        let scheme = cfg.scheme()?;
        if cfg.is_four_photon() {
            return Err(CliError::Config("state files hold two-photon states".into()));
        }
        let probe = ExperimentConfig { scheme, n_bins: state.n_bins(), ..Default::default() };
        probe.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let result_path = out.join(format!("result_n{}.json", state.n_bins()));
        let manifest_path = out.join("manifest.json");
        ensure_free(&[manifest_path.clone(), result_path.clone()], a.run.force)?;
        let mut m = RunManifest::new("certify", &cfg, names(std::slice::from_ref(&result_path)));
        m.write(&manifest_path)?;
        let r = certify_exact(&state, scheme)?;
        let file = ResultFile { result: ResultJson::from(&r), config_hash: hash, seed: cfg.seed, ensemble: None };
        write_atomic(&result_path, &to_json_bytes(&file))?;
        println!("{} n={} fid_bound={} dimension={}", scheme.name(), r.n_bins, r.fid_bound, r.dimension);
        m.finished_unix = Some(unix_now());
        return m.write(&manifest_path);
    }

    let bins = cfg.n_bins.values();
    let manifest_path = out.join("manifest.json");
    let mut outputs = Vec::new();
    for &n in &bins {
        outputs.push(out.join(format!("result_n{n}.json")));
        outputs.push(out.join(format!("ensemble_n{n}.csv")));
    }
    let mut all = outputs.clone();
    all.push(manifest_path.clone());
    ensure_free(&all, a.run.force)?;
    let pool = thread_pool(a.run.threads)?;

    let mut m = RunManifest::new("certify", &cfg, names(&outputs));
    m.write(&manifest_path)?;
    for &n in &bins {
        let e = pool.install(|| ensemble_for(&cfg, n))?;
        let file = ResultFile::from_ensemble(&e, &hash);
        write_atomic(&out.join(format!("result_n{n}.json")), &to_json_bytes(&file))?;
        write_atomic(&out.join(format!("ensemble_n{n}.csv")), &ensemble_csv(&e, &hash)?)?;
        println!(
            "{} n={n} trials={} median={} q1={} q3={} dimension={}",
            cfg.scheme,
            e.n_trials,
            e.summary.median,
            e.summary.q1,
            e.summary.q3,
            file.result.dimension
        );
    }
    m.finished_unix = Some(unix_now());
    m.write(&manifest_path)
}

fn axis_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        v => v.to_string(),
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let cfg = resolve_config(&a.run)?;
    let from_manifest = a
        .run
        .config
        .as_deref()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .map(RunManifest::read)
        .transpose()?;
    let axis = match (&a.axis, from_manifest.as_ref().and_then(|m| m.axis.clone())) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => s,
        (None, None) => return Err(CliError::Config("sweep needs --axis key=v1,v2,...".into())),
    };
    let (key, values) = parse_axis(&axis)?;
    let schemes = if !a.schemes.is_empty() {
        a.schemes.clone()
    } else if let Some(s) = from_manifest.and_then(|m| m.schemes) {
        s
    } else {
        vec![cfg.scheme.clone()]
    };

    // Every sweep point is validated before anything is written.
    let mut points = Vec::new();
    for v in &values {
        for s in &schemes {
            let c = cfg.with_axis("scheme", &toml::Value::String(s.clone()))?.with_axis(&key, v)?;
            let bins = c.n_bins.values();
            if bins.len() != 1 {
                return Err(CliError::Config("sweeps need a single n_bins value (or sweep over n_bins)".into()));
            }
            points.push((axis_label(v), s.clone(), c, bins[0]));
        }
    }

    let out = &a.run.out;
    let csv_path = out.join("sweep.csv");
    let manifest_path = out.join("manifest.json");
    ensure_free(&[csv_path.clone(), manifest_path.clone()], a.run.force)?;
    let pool = thread_pool(a.run.threads)?;
    let mut m = RunManifest::new("sweep", &cfg, names(std::slice::from_ref(&csv_path)));
    m.axis = Some(axis);
    m.schemes = Some(schemes);
    m.write(&manifest_path)?;

    let mut rows = Vec::new();
    for (label, scheme, c, n) in &points {
        let e = pool.install(|| ensemble_for(c, *n))?;
        println!("{key}={label} {scheme}: median={} q1={} q3={}", e.summary.median, e.summary.q1, e.summary.q3);
        rows.push(SweepRow {
            axis_value: label.clone(),
            scheme: scheme.clone(),
            median: e.summary.median,
            q1: e.summary.q1,
            q3: e.summary.q3,
            true_fidelity: e.true_fidelity.median,
        });
    }
    write_atomic(&csv_path, &sweep_csv(&rows, &cfg.hash(), cfg.seed)?)?;
    m.finished_unix = Some(unix_now());
    m.write(&manifest_path)
}

/// Programs a scheme runs, in setting order.
pub fn scheme_programs(scheme: &str, n: usize) -> Result<Vec<WalkProgram>, CliError> {
    let unsupported = |e: timebin_core::Error| CliError::Config(e.to_string());
    if scheme == "phase_estimation" {
        return Ok(vec![phase_estimation_program(n).map_err(unsupported)?.program]);
    }
    let s = Scheme::parse(scheme).ok_or_else(|| CliError::Config(format!("unknown scheme `{scheme}`")))?;
    Ok(match s {
        Scheme::Compound => compound_settings(n).map_err(unsupported)?.into_iter().map(|s| s.program).collect(),
        Scheme::Single => vec![single_setting(n).map_err(unsupported)?.0],
        Scheme::Comprehensive => vec![comprehensive_program(n).map_err(unsupported)?.program],
        Scheme::MultiPair | Scheme::PhaseEnhanced => multi_spdc_settings(n).map_err(unsupported)?.into_iter().map(|s| s.program).collect(),
    })
}

pub fn cmd_dump_scheme(a: &DumpArgs) -> Result<(), CliError> {
    let programs = scheme_programs(&a.scheme, a.n_bins)?;
    let mut files = Vec::new();
    for (k, p) in programs.iter().enumerate() {
        let text = format!("# {} n={} setting {} of {} (depth {})\n{}", a.scheme, a.n_bins, k + 1, programs.len(), p.depth, diagram(p)?);
        let json = to_json_bytes(&ProgramJson::from(p));
        match &a.out {
            None => {
                print!("{text}");
                println!("{}", String::from_utf8_lossy(&json).trim_end());
            }
            Some(dir) => {
                let stem = format!("{}_n{}_setting{}", a.scheme, a.n_bins, k + 1);
                files.push((dir.join(format!("{stem}.txt")), text.into_bytes()));
                files.push((dir.join(format!("{stem}.json")), json));
            }
        }
    }
    if !files.is_empty() {
        let paths: Vec<PathBuf> = files.iter().map(|(p, _)| p.clone()).collect();
        ensure_free(&paths, a.force)?;
        for (p, b) in &files {
            write_atomic(p, b)?;
        }
        println!("wrote {} files to {}", files.len(), a.out.as_deref().unwrap_or(Path::new(".")).display());
    }
    Ok(())
}
