//! Finite-statistics layer: multinomial detection counts, shot budgets and
//! the per-trial certification pipeline.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution as _};

use crate::certify::{
    comprehensive_bound, comprehensive_extract, comprehensive_profiles, compound_bound, learn_phases, phase_gradient,
    single_setting_bound, single_setting_coeffs, window_coincidences, CertificationResult, CoincidenceStats,
    PopulationTable, ProfileRuns, Scheme, WeightTable,
};
use crate::error::bail;
use crate::scheme::{comprehensive_program, compound_settings, is_power_of_two, phase_estimation_program, single_setting};
use crate::state::{alpha_for_purity, dephase, fidelity, ReferenceState, SchmidtThresholds, TwoPhotonState};
use crate::walk::{walk_distribution, CouplerNoise, Distribution, WalkProgram};
use crate::Result;
#[allow(unused_imports)]
use num_traits::Float;

/// Multinomial counts by sequential binomial draws; `probs` is renormalized.
pub fn sample_counts<R: Rng + ?Sized>(probs: &[f64], shots: i64, rng: &mut R) -> Result<Vec<u64>> {
    if shots < 0 {
        bail!(Validation, "negative shot count {shots}");
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 || probs.iter().any(|p| *p < 0.0) {
        bail!(Validation, "outcome probabilities sum to {total}");
    }
    let mut counts = vec![0u64; probs.len()];
    let mut left = shots as u64;
    let mut mass = 1.0;
    for (k, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        let p = p / total;
        if p <= 0.0 {
            continue;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let c = if q >= 1.0 { left } else { Binomial::new(left, q).expect("probability in [0,1]").sample(rng) };
        counts[k] = c;
        left -= c;
        mass -= p;
    }
    // Rounding can leave mass on the last populated outcome.
    if left > 0 {
        if let Some(k) = probs.iter().rposition(|p| *p > 0.0) {
            counts[k] += left;
        }
    }
    Ok(counts)
}

/// First quartile, median and third quartile by linear interpolation between
/// order statistics (position `(n-1) q`).
pub fn quartiles(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        bail!(Validation, "quartiles of an empty sample");
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let at = |q: f64| {
        let h = (v.len() - 1) as f64 * q;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(v.len() - 1);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Ok((at(0.25), at(0.5), at(0.75)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ShotBudget {
    pub n_population: u64,
    pub n_phase: u64,
    pub n_walk: u64,
}

impl ShotBudget {
    pub fn total(&self) -> u64 {
        self.n_population + self.n_phase + self.n_walk
    }

    /// Population and phase shares of `total`; the walk gets the rest.
    pub fn split(total: u64, population_share: f64, phase_share: f64) -> Self {
        let n_population = (total as f64 * population_share).round() as u64;
        let n_phase = ((total as f64 * phase_share).round() as u64).min(total - n_population.min(total));
        ShotBudget { n_population, n_phase, n_walk: total.saturating_sub(n_population + n_phase) }
    }
}

/// Equal split over `k` parts, remainder to the earliest.
pub fn split_evenly(shots: u64, k: usize) -> Vec<u64> {
    let k64 = k as u64;
    (0..k64).map(|i| shots / k64 + u64::from(i < shots % k64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub n_bins: usize,
    pub purity: f64,
    pub random_phases: bool,
    pub phase_correction: bool,
    pub coupler_noise_halfwidth: f64,
    /// Redraw coupler angles for every detected pair instead of every setting run.
    pub noise_per_shot: bool,
    pub budget: ShotBudget,
    pub trials: usize,
    pub seed: u64,
    pub exact_mode: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scheme: Scheme::Compound,
            n_bins: 4,
            purity: 1.0,
            random_phases: false,
            phase_correction: true,
            coupler_noise_halfwidth: 0.02 * PI,
            noise_per_shot: false,
            budget: ShotBudget { n_population: 1000, n_phase: 0, n_walk: 1000 },
            trials: 101,
            seed: 0,
            exact_mode: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match self.scheme {
            Scheme::Compound if self.n_bins < 2 => bail!(Unsupported, "compound scheme needs at least 2 bins"),
            Scheme::Single if !is_power_of_two(self.n_bins) => {
                bail!(Unsupported, "single-setting scheme needs a power-of-two bin count, got {}", self.n_bins)
            }
            Scheme::Comprehensive if self.n_bins != 4 => bail!(Unsupported, "comprehensive scheme is defined for 4 bins"),
            Scheme::MultiPair | Scheme::PhaseEnhanced => {
                bail!(Unsupported, "four-photon schemes are not driven by the two-photon simulator")
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.purity) || self.purity < 1.0 / (self.n_bins * self.n_bins) as f64 - 1e-12 {
            bail!(Validation, "purity {} not reachable by dephasing {} bins", self.purity, self.n_bins);
        }
        if self.coupler_noise_halfwidth.is_nan() || self.coupler_noise_halfwidth < 0.0 {
            bail!(Validation, "negative coupler noise half-width");
        }
        if self.trials == 0 {
            bail!(Validation, "at least one trial is needed");
        }
        Ok(())
    }

    fn noise(&self) -> CouplerNoise {
        if self.coupler_noise_halfwidth > 0.0 {
            CouplerNoise::uniform(self.coupler_noise_halfwidth)
        } else {
            CouplerNoise::NONE
        }
    }

    /// Generator for trial `trial`: the master seed selects the key, the trial the stream.
    pub fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub result: CertificationResult,
    /// Fidelity of the (phase-corrected) prepared state to the phase-free MES.
    pub true_fidelity: f64,
    pub shots: ShotBudget,
}

/// Inputs shared by every trial of one configuration.
pub struct Prepared {
    config: ExperimentConfig,
    alpha: f64,
    weights: Option<WeightTable>,
}

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_bins;
        let alpha = if config.purity < 1.0 { alpha_for_purity(config.purity, n * n)? } else { 0.0 };
        let weights = if config.scheme == Scheme::Single { Some(single_setting_coeffs(n)?) } else { None };
        Ok(Prepared { config: config.clone(), alpha, weights })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    noise: CouplerNoise,
    rng: ChaCha8Rng,
    used: u64,
}

impl Runner<'_> {
    /// Arrival statistics of one setting: exact probabilities or empirical frequencies.
    fn measure(&mut self, state: &TwoPhotonState, program: &WalkProgram, shots: u64) -> Result<Distribution> {
        if self.cfg.exact_mode {
            let angles = self.noise.realize(program, &mut self.rng);
            return walk_distribution(state, program, &angles);
        }
        self.used += shots;
        if self.cfg.noise_per_shot && self.noise.enabled {
            let mut counts = vec![0u64; program.n_modes() * program.n_modes()];
            for _ in 0..shots {
                let angles = self.noise.realize(program, &mut self.rng);
                let d = walk_distribution(state, program, &angles)?;
                let c = sample_counts(&d.probs, 1, &mut self.rng)?;
                counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
            }
            return Ok(frequencies(program.n_modes(), &counts, shots));
        }
        let angles = self.noise.realize(program, &mut self.rng);
        let d = walk_distribution(state, program, &angles)?;
        let counts = sample_counts(&d.probs, shots as i64, &mut self.rng)?;
        Ok(frequencies(program.n_modes(), &counts, shots))
    }
}

fn frequencies(n_modes: usize, counts: &[u64], shots: u64) -> Distribution {
    let s = shots.max(1) as f64;
    Distribution { n_modes, probs: counts.iter().map(|&c| c as f64 / s).collect() }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// One trial: prepare the state, measure populations, learn and undo phases,
/// run the walk settings, and bound the fidelity.
pub fn run_trial(prep: &Prepared, trial: usize) -> Result<TrialOutcome> {
    let cfg = &prep.config;
    let n = cfg.n_bins;
    let mut r = Runner { cfg, noise: cfg.noise(), rng: cfg.trial_rng(trial), used: 0 };
    let mut state = TwoPhotonState::mes(n);
    if prep.alpha > 0.0 {
        state = dephase(&state, prep.alpha, n)?;
    }
    if cfg.random_phases {
        let phi: Vec<f64> = (0..n).map(|_| r.rng.random::<f64>() * 2.0 * PI).collect();
        state = state.with_phases(&phi)?;
    }
    let mut shots = ShotBudget::default();

    let exact_pops = state.populations(n);
    let pops = if cfg.exact_mode {
        PopulationTable::new(n, exact_pops)?
    } else {
        let c = sample_counts(&exact_pops, cfg.budget.n_population as i64, &mut r.rng)?;
        shots.n_population = cfg.budget.n_population;
        if shots.n_population == 0 {
            PopulationTable::new(n, vec![0.0; n * n])?
        } else {
            PopulationTable::from_counts(n, &c)?
        }
    };

    let mut correction = vec![0.0; n];
    if cfg.phase_correction && (cfg.exact_mode || cfg.budget.n_phase > 0) {
        let setting = phase_estimation_program(n)?;
        let halves = split_evenly(cfg.budget.n_phase, 2);
        let mut stats = [CoincidenceStats::default(), CoincidenceStats::default()];
        for (k, phi) in [vec![0.0; n], phase_gradient(n)].iter().enumerate() {
            let program = setting.program.clone().with_phases(phi);
            let d = r.measure(&state, &program, halves[k])?;
            stats[k].push_setting(0, &setting, &d, if k == 0 { "none" } else { "gradient" });
        }
        correction = learn_phases(&stats[0], &stats[1], &pops)?.correction;
        if !cfg.exact_mode {
            shots.n_phase = cfg.budget.n_phase;
        }
    }

    let used_before_walk = r.used;
    let result = match cfg.scheme {
        Scheme::Compound => {
            let settings = compound_settings(n)?;
            let alloc = split_evenly(cfg.budget.n_walk, settings.len());
            let mut stats = CoincidenceStats::default();
            for (k, s) in settings.iter().enumerate() {
                let program = s.program.clone().with_phases(&correction);
                let d = r.measure(&state, &program, alloc[k])?;
                stats.push_setting(k, s, &d, "none");
            }
            compound_bound(&ReferenceState::mes(n), &pops, &stats)?
        }
        Scheme::Single => {
            let (program, _) = single_setting(n)?;
            let program = program.with_phases(&correction);
            let d = r.measure(&state, &program, cfg.budget.n_walk)?;
            let w = prep.weights.as_ref().expect("weights prepared for the single-setting scheme");
            single_setting_bound(&pops, window_coincidences(&d, n), w)?
        }
        Scheme::Comprehensive => {
            let scheme = comprehensive_program(n)?;
            let profiles = comprehensive_profiles(n);
            let alloc = split_evenly(cfg.budget.n_walk, profiles.len());
            let mut runs = Vec::with_capacity(profiles.len());
            for (k, p) in profiles.into_iter().enumerate() {
                let program = scheme.program.clone().with_phases(&add(&p, &correction));
                let d = r.measure(&state, &program, alloc[k])?;
                runs.push((p, d));
            }
            let est = comprehensive_extract(&scheme, &ProfileRuns { runs: &runs })?;
            comprehensive_bound(&ReferenceState::mes(n), &pops, &est)?
        }
        Scheme::MultiPair | Scheme::PhaseEnhanced => unreachable!("rejected by validate"),
    };
    if !cfg.exact_mode {
        shots.n_walk = r.used - used_before_walk;
    }
    let result = result.with_thresholds(&SchmidtThresholds::uniform(n));
    let true_fidelity = fidelity(&state.with_phases(&correction)?, &ReferenceState::mes(n))?;
    Ok(TrialOutcome { trial, result, true_fidelity, shots })
}

/// Noise-free bound for an arbitrary state from exact arrival probabilities,
/// without any phase correction.
pub fn certify_exact(state: &TwoPhotonState, scheme: Scheme) -> Result<CertificationResult> {
    let n = state.n_bins();
    let pops = PopulationTable::new(n, state.populations(n))?;
    let reference = ReferenceState::mes(n);
    match scheme {
        Scheme::Compound => {
            let mut stats = CoincidenceStats::default();
            for (k, s) in compound_settings(n)?.iter().enumerate() {
                stats.push_setting(k, s, &walk_distribution(state, &s.program, &s.program.angles)?, "none");
            }
            compound_bound(&reference, &pops, &stats)
        }
        Scheme::Single => {
            let (program, _) = single_setting(n)?;
            let d = walk_distribution(state, &program, &program.angles)?;
            single_setting_bound(&pops, window_coincidences(&d, n), &single_setting_coeffs(n)?)
        }
        Scheme::Comprehensive => {
            let cs = comprehensive_program(n)?;
            let mut runs = Vec::new();
            for p in comprehensive_profiles(n) {
                let program = cs.program.clone().with_phases(&p);
                let d = walk_distribution(state, &program, &program.angles)?;
                runs.push((p, d));
            }
            comprehensive_bound(&reference, &pops, &comprehensive_extract(&cs, &ProfileRuns { runs: &runs })?)
        }
        Scheme::MultiPair | Scheme::PhaseEnhanced => bail!(Unsupported, "{} needs a four-photon state", scheme.name()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        let (q1, median, q3) = quartiles(values)?;
        Ok(Summary { q1, median, q3 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialEnsemble {
    pub n_trials: usize,
    pub master_seed: u64,
    /// Stream index of each trial under the master seed.
    pub seeds: Vec<u64>,
    pub outcomes: Vec<TrialOutcome>,
    pub summary: Summary,
    pub true_fidelity: Summary,
}

impl TrialEnsemble {
    pub fn from_outcomes(master_seed: u64, mut outcomes: Vec<TrialOutcome>) -> Result<Self> {
        outcomes.sort_by_key(|o| o.trial);
        let f: Vec<f64> = outcomes.iter().map(|o| o.result.fid_bound).collect();
        let t: Vec<f64> = outcomes.iter().map(|o| o.true_fidelity).collect();
        Ok(TrialEnsemble {
            n_trials: outcomes.len(),
            master_seed,
            seeds: outcomes.iter().map(|o| o.trial as u64).collect(),
            summary: Summary::of(&f)?,
            true_fidelity: Summary::of(&t)?,
            outcomes,
        })
    }

    pub fn dimension_rate(&self, at_least: usize) -> f64 {
        let hits = self.outcomes.iter().filter(|o| o.result.dimension >= at_least).count();
        hits as f64 / self.n_trials as f64
    }
}

/// Runs all trials in order. Trials depend only on their index, so a parallel
/// driver produces the same ensemble.
pub fn run_experiment(config: &ExperimentConfig) -> Result<TrialEnsemble> {
    let prep = Prepared::new(config)?;
    let outcomes = (0..config.trials).map(|t| run_trial(&prep, t)).collect::<Result<Vec<_>>>()?;
    TrialEnsemble::from_outcomes(config.seed, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn counts_basic() {
        assert_eq!(sample_counts(&[1.0], 10, &mut rng()).unwrap(), vec![10]);
        assert_eq!(sample_counts(&[0.5, 0.5], 0, &mut rng()).unwrap(), vec![0, 0]);
        assert!(sample_counts(&[1.0], -1, &mut rng()).is_err());
        let c = sample_counts(&[0.25; 4], 4000, &mut rng()).unwrap();
        assert_eq!(c.iter().sum::<u64>(), 4000);
        assert!(c.iter().all(|&k| (k as f64 - 1000.0).abs() < 5.0 * 27.4));
    }

    #[test]
    fn counts_converge() {
        let p = [0.1, 0.0, 0.35, 0.05, 0.5];
        let shots = 1_000_000;
        let c = sample_counts(&p, shots, &mut rng()).unwrap();
        for (k, &pk) in p.iter().enumerate() {
            let sigma = (shots as f64 * pk * (1.0 - pk)).sqrt().max(1.0);
            assert!((c[k] as f64 - shots as f64 * pk).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn quartile_examples() {
        assert_eq!(quartiles(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), (2.0, 3.0, 4.0));
        assert_eq!(quartiles(&[7.0; 6]).unwrap(), (7.0, 7.0, 7.0));
        assert!(quartiles(&[]).is_err());
        let mut r = rng();
        let normal = rand_distr::StandardNormal;
        let v: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut r)).collect();
        let (a, b, c) = quartiles(&v).unwrap();
        assert_abs_diff_eq!(a, -0.674, epsilon = 0.03);
        assert_abs_diff_eq!(b, 0.0, epsilon = 0.03);
        assert_abs_diff_eq!(c, 0.674, epsilon = 0.03);
    }

    #[test]
    fn even_split() {
        assert_eq!(split_evenly(10, 3), vec![4, 3, 3]);
        assert_eq!(ShotBudget::split(4000, 0.5, 0.0), ShotBudget { n_population: 2000, n_phase: 0, n_walk: 2000 });
        assert_eq!(ShotBudget::split(4000, 0.25, 0.5).total(), 4000);
    }

    #[test]
    fn exact_pure_mes() {
        for scheme in [Scheme::Compound, Scheme::Single] {
            let cfg = ExperimentConfig {
                scheme,
                n_bins: 8,
                coupler_noise_halfwidth: 0.0,
                exact_mode: true,
                trials: 3,
                ..Default::default()
            };
            let e = run_experiment(&cfg).unwrap();
            assert_abs_diff_eq!(e.summary.median, 1.0, epsilon = 1e-9);
            assert!(e.outcomes.iter().all(|o| o.result.dimension == 8));
        }
    }

    #[test]
    fn exact_random_phases_corrected() {
        for scheme in [Scheme::Compound, Scheme::Comprehensive] {
            let cfg = ExperimentConfig {
                scheme,
                n_bins: 4,
                random_phases: true,
                coupler_noise_halfwidth: 0.0,
                exact_mode: true,
                trials: 5,
                ..Default::default()
            };
            let e = run_experiment(&cfg).unwrap();
            for o in &e.outcomes {
                assert_abs_diff_eq!(o.true_fidelity, 1.0, epsilon = 1e-9);
                assert_abs_diff_eq!(o.result.fid_bound, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn deterministic_and_accounted() {
        let cfg = ExperimentConfig {
            n_bins: 4,
            purity: 0.9,
            random_phases: true,
            budget: ShotBudget { n_population: 1000, n_phase: 2001, n_walk: 1001 },
            trials: 4,
            seed: 42,
            ..Default::default()
        };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        for o in &a.outcomes {
            assert_eq!(o.shots, cfg.budget);
        }
        let prep = Prepared::new(&cfg).unwrap();
        assert_eq!(run_trial(&prep, 2).unwrap(), a.outcomes[2]);
    }

    #[test]
    fn invalid_combinations() {
        let bad = ExperimentConfig { scheme: Scheme::Single, n_bins: 6, ..Default::default() };
        assert!(matches!(run_experiment(&bad), Err(crate::Error::Unsupported(_))));
        let bad = ExperimentConfig { scheme: Scheme::Comprehensive, n_bins: 5, ..Default::default() };
        assert!(run_experiment(&bad).is_err());
    }

    #[test]
    fn sampling_approaches_exact() {
        let base = ExperimentConfig {
            n_bins: 4,
            purity: 0.9,
            coupler_noise_halfwidth: 0.0,
            phase_correction: false,
            trials: 1,
            budget: ShotBudget { n_population: 1_000_000, n_phase: 0, n_walk: 3_000_000 },
            ..Default::default()
        };
        let sampled = run_experiment(&base).unwrap().summary.median;
        let exact = run_experiment(&ExperimentConfig { exact_mode: true, ..base }).unwrap().summary.median;
        assert_abs_diff_eq!(sampled, exact, epsilon = 0.01);
    }
}
