//! Parallel trial ensembles. Each trial owns its generator stream, so thread
//! count and scheduling never change the output.

use rayon::prelude::*;
use timebin_core::certify::{CertificationResult, Scheme};
use timebin_core::four_photon::{dephase_four_on, exact_bounds, fidelity_four, two_pair_mes, DephasingSupport};
use timebin_core::sampling::{run_trial, ExperimentConfig, Prepared, ShotBudget, TrialEnsemble, TrialOutcome};
use timebin_core::state::alpha_for_purity;
use timebin_core::C64;

use crate::error::CliError;

pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| CliError::Config(e.to_string()))
}

pub fn run_ensemble(config: &ExperimentConfig) -> Result<TrialEnsemble, CliError> {
    let prep = Prepared::new(config).map_err(|e| CliError::Config(e.to_string()))?;
    let outcomes = (0..config.trials).into_par_iter().map(|t| run_trial(&prep, t)).collect::<Result<Vec<_>, _>>()?;
    Ok(TrialEnsemble::from_outcomes(config.seed, outcomes)?)
}

/// Dephased two-pair MES with exact probabilities: one deterministic trial.
pub fn run_four_photon(scheme: Scheme, n: usize, purity: f64, support: DephasingSupport, seed: u64) -> Result<TrialEnsemble, CliError> {
    let mes = two_pair_mes(n);
    let alpha = if purity < 1.0 { alpha_for_purity(purity, support.dim(n)).map_err(|e| CliError::Config(e.to_string()))? } else { 0.0 };
    let state = dephase_four_on(&mes, alpha, support)?;
    let (plain, enhanced) = exact_bounds(&state)?;
    let result: CertificationResult = if scheme == Scheme::PhaseEnhanced { enhanced } else { plain };
    let p = n * (n + 1) / 2;
    let true_fidelity = fidelity_four(&state, &vec![C64::new(1.0 / (p as f64).sqrt(), 0.0); p]);
    let outcome = TrialOutcome { trial: 0, result, true_fidelity, shots: ShotBudget::default() };
    Ok(TrialEnsemble::from_outcomes(seed, vec![outcome])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = ExperimentConfig { n_bins: 4, purity: 0.9, random_phases: true, trials: 9, seed: 3, ..Default::default() };
        let a = thread_pool(Some(1)).unwrap().install(|| run_ensemble(&cfg)).unwrap();
        let b = thread_pool(Some(4)).unwrap().install(|| run_ensemble(&cfg)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, timebin_core::sampling::run_experiment(&cfg).unwrap());
    }

    #[test]
    fn four_photon_pure() {
        let e = run_four_photon(Scheme::MultiPair, 4, 1.0, DephasingSupport::Full, 0).unwrap();
        assert!((e.summary.median - 1.0).abs() < 1e-9);
        assert_eq!(e.outcomes[0].result.dimension, 10);
    }
}
