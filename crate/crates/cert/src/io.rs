//! JSON and CSV formats, and atomic file output.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use timebin_core::certify::{CertificationResult, WeightTable};
use timebin_core::four_photon::MultiWeights;
use timebin_core::sampling::TrialEnsemble;
use timebin_core::state::TwoPhotonState;
use timebin_core::walk::WalkProgram;
use timebin_core::C64;

use crate::error::CliError;

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn complex(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

/// Density matrix over all `(bin, loop)` mode pairs, row-major `[re, im]` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateJson {
    pub n_bins: usize,
    pub n_modes: usize,
    pub matrix: Vec<[f64; 2]>,
}

impl From<&TwoPhotonState> for StateJson {
    fn from(s: &TwoPhotonState) -> Self {
        let m = s.matrix();
        let matrix = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| pair(m[(r, c)]))).collect();
        StateJson { n_bins: s.n_bins(), n_modes: s.n_modes(), matrix }
    }
}

impl StateJson {
    pub fn to_state(&self) -> Result<TwoPhotonState, CliError> {
        if self.n_modes != 2 * self.n_bins {
            return Err(CliError::Config(format!("n_modes {} != 2 * n_bins {}", self.n_modes, self.n_bins)));
        }
        let d = self.n_modes * self.n_modes;
        if self.matrix.len() != d * d {
            return Err(CliError::Config(format!("matrix has {} entries, expected {}", self.matrix.len(), d * d)));
        }
        let m = DMatrix::from_fn(d, d, |r, c| complex(self.matrix[r * d + c]));
        TwoPhotonState::from_matrix(self.n_bins, m).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramJson {
    pub n_bins_in: usize,
    pub depth: usize,
    pub n_bins_total: usize,
    pub angles: Vec<f64>,
    pub phase_imprint: Vec<f64>,
}

impl From<&WalkProgram> for ProgramJson {
    fn from(p: &WalkProgram) -> Self {
        ProgramJson {
            n_bins_in: p.n_bins_in,
            depth: p.depth,
            n_bins_total: p.n_bins_total,
            angles: p.angles.clone(),
            phase_imprint: p.phase_imprint.clone(),
        }
    }
}

impl ProgramJson {
    pub fn to_program(&self) -> Result<WalkProgram, CliError> {
        let p = WalkProgram {
            n_bins_in: self.n_bins_in,
            depth: self.depth,
            n_bins_total: self.n_bins_total,
            angles: self.angles.clone(),
            phase_imprint: self.phase_imprint.clone(),
        };
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub scheme: String,
    pub n_bins: usize,
    pub fid_bound: f64,
    pub correction_sum: f64,
    pub dimension: usize,
    pub reference_lambdas: Vec<[f64; 2]>,
}

impl From<&CertificationResult> for ResultJson {
    fn from(r: &CertificationResult) -> Self {
        ResultJson {
            scheme: r.scheme.name().to_string(),
            n_bins: r.n_bins,
            fid_bound: r.fid_bound,
            correction_sum: r.correction_sum,
            dimension: r.dimension,
            reference_lambdas: r.reference.lambdas().iter().map(|&z| pair(z)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleJson {
    pub trials: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub true_fidelity_median: f64,
}

/// A result file: the representative result plus provenance and ensemble quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    #[serde(flatten)]
    pub result: ResultJson,
    pub config_hash: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ensemble: Option<EnsembleJson>,
}

impl ResultFile {
    /// The trial whose bound is the ensemble median (lower middle for even counts)
    /// stands for the run; quartiles go alongside.
    pub fn from_ensemble(e: &TrialEnsemble, config_hash: &str) -> Self {
        let mut order: Vec<usize> = (0..e.outcomes.len()).collect();
        order.sort_by(|&a, &b| e.outcomes[a].result.fid_bound.total_cmp(&e.outcomes[b].result.fid_bound).then(a.cmp(&b)));
        let mid = &e.outcomes[order[(order.len() - 1) / 2]].result;
        let mut result = ResultJson::from(mid);
        result.fid_bound = e.summary.median;
        result.dimension = mid.reference.thresholds().dimension(e.summary.median);
        ResultFile {
            result,
            config_hash: config_hash.to_string(),
            seed: e.master_seed,
            ensemble: Some(EnsembleJson {
                trials: e.n_trials,
                q1: e.summary.q1,
                median: e.summary.median,
                q3: e.summary.q3,
                true_fidelity_median: e.true_fidelity.median,
            }),
        }
    }
}

/// Nonzero entries of a weight matrix as `[row, col, re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsJson {
    pub n_bins: usize,
    pub scheme: String,
    pub profile: String,
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64, f64)>,
}

impl WeightsJson {
    pub fn from_matrix(n_bins: usize, scheme: &str, profile: &str, m: &DMatrix<C64>) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                if z.norm() > 1e-14 {
                    entries.push((r, c, z.re, z.im));
                }
            }
        }
        WeightsJson { n_bins, scheme: scheme.to_string(), profile: profile.to_string(), dim: m.nrows(), entries }
    }

    pub fn single(w: &WeightTable) -> Self {
        Self::from_matrix(w.n, "single", "none", &w.c)
    }

    pub fn four_photon(w: &MultiWeights, enhanced: bool) -> Self {
        if enhanced {
            Self::from_matrix(w.n, "phase_enhanced", "pi_each_bin", &w.k)
        } else {
            Self::from_matrix(w.n, "multi_pair", "none", &w.k)
        }
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, re, im) in &self.entries {
            m[(r, c)] = C64::new(re, im);
        }
        m
    }
}

/// Leading comment line carried by every CSV output.
pub fn provenance_line(config_hash: &str, seed: u64) -> String {
    format!("# config_sha256={config_hash} seed={seed}\n")
}

/// `trial,fid_bound,dimension`, one row per trial.
pub fn ensemble_csv(e: &TrialEnsemble, config_hash: &str) -> Result<Vec<u8>, CliError> {
    let mut buf = provenance_line(config_hash, e.master_seed).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["trial", "fid_bound", "dimension"]).map_err(csv_err)?;
        for o in &e.outcomes {
            w.write_record([o.trial.to_string(), o.result.fid_bound.to_string(), o.result.dimension.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: String,
    pub scheme: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub true_fidelity: f64,
}

pub fn sweep_csv(rows: &[SweepRow], config_hash: &str, seed: u64) -> Result<Vec<u8>, CliError> {
    let mut buf = provenance_line(config_hash, seed).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["axis_value", "scheme", "median", "q1", "q3", "true_fidelity"]).map_err(csv_err)?;
        for r in rows {
            w.write_record([
                r.axis_value.clone(),
                r.scheme.clone(),
                r.median.to_string(),
                r.q1.to_string(),
                r.q3.to_string(),
                r.true_fidelity.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

/// Reads a CSV written by this crate, skipping the provenance comment.
pub fn read_csv(bytes: &[u8]) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.map(|x| x.iter().map(String::from).collect())).collect::<Result<_, _>>().map_err(csv_err)?;
    Ok((header, rows))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

pub fn to_json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("plain data serializes");
    b.push(b'\n');
    b
}

/// Writes to a temporary file in the target directory, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}
