//! Estimators built from coincidence imbalances and population measurements,
//! and the fidelity lower bounds they feed.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use nalgebra::DMatrix;

use crate::error::bail;
use crate::scheme::{pair_idx, single_setting, single_setting_window, ComprehensiveScheme, Locus, Setting};
use crate::state::{PhotonMode, ReferenceState, SchmidtThresholds};
use crate::walk::Distribution;
use crate::{Result, C64};
#[allow(unused_imports)]
use num_traits::Float;

/// Below this magnitude a learned pair phase is considered undefined.
pub const PHASE_RESOLUTION: f64 = 1e-9;

/// `p(i,j) = <ij|rho|ij>` for bins `1..=n`, measured without a walk.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTable {
    pub n: usize,
    pub p: Vec<f64>,
}

impl PopulationTable {
    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n * n {
            bail!(Dimension, "population table of {} entries for {n} bins", p.len());
        }
        Ok(PopulationTable { n, p })
    }

    pub fn from_counts(n: usize, counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            bail!(Incomplete, "no population shots");
        }
        Self::new(n, counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[(i - 1) * self.n + j - 1]
    }
}

/// `sqrt(p(i,j) p(k,l))`, bounding `|<ij|rho|kl>|`. Negative estimates count as 0.
pub fn z_bound(pop: &PopulationTable, i: usize, j: usize, k: usize, l: usize) -> f64 {
    (pop.get(i, j).max(0.0) * pop.get(k, l).max(0.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairStats {
    pub bins: (usize, usize),
    pub p_c: f64,
    pub p_nc: f64,
    /// Imbalance divided by the locus scale, i.e. `2 Re[<ii|rho|jj> + <ij|rho|ji>]`.
    pub delta: f64,
    pub setting: usize,
    pub profile: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoincidenceStats {
    pub entries: Vec<PairStats>,
}

impl CoincidenceStats {
    pub fn get(&self, i: usize, j: usize) -> Option<&PairStats> {
        let key = (i.min(j), i.max(j));
        self.entries.iter().find(|e| e.bins == key)
    }

    pub fn delta(&self, i: usize, j: usize) -> Result<f64> {
        match self.get(i, j) {
            Some(e) => Ok(e.delta),
            None => bail!(Incomplete, "no coincidence data for pair ({i},{j})"),
        }
    }

    /// Reads every locus of `setting` off the arrival distribution.
    pub fn push_setting(&mut self, setting_id: usize, setting: &Setting, dist: &Distribution, profile: &str) {
        for l in &setting.plan.loci {
            if l.bins.len() == 2 {
                self.entries.push(locus_stats(dist, l, setting_id, profile));
            }
        }
    }
}

pub fn locus_stats(dist: &Distribution, locus: &Locus, setting: usize, profile: &str) -> PairStats {
    let (p, q) = (locus.short_port(), locus.long_port());
    let p_c = dist.get(p, p) + dist.get(q, q);
    let p_nc = dist.get(p, q) + dist.get(q, p);
    let (a, b) = locus.pair();
    PairStats {
        bins: (a.min(b), a.max(b)),
        p_c,
        p_nc,
        delta: (p_c - p_nc) / locus.scale,
        setting,
        profile: String::from(profile),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Compound,
    Single,
    Comprehensive,
    MultiPair,
    PhaseEnhanced,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Compound => "compound",
            Scheme::Single => "single",
            Scheme::Comprehensive => "comprehensive",
            Scheme::MultiPair => "multi_pair",
            Scheme::PhaseEnhanced => "phase_enhanced",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Scheme::Compound, Scheme::Single, Scheme::Comprehensive, Scheme::MultiPair, Scheme::PhaseEnhanced]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationResult {
    pub scheme: Scheme,
    pub n_bins: usize,
    pub fid_bound: f64,
    /// Total subtracted for unmeasured coherences.
    pub correction_sum: f64,
    pub dimension: usize,
    pub reference: ReferenceState,
}

impl CertificationResult {
    fn new(scheme: Scheme, fid_bound: f64, correction_sum: f64, reference: ReferenceState) -> Self {
        let dimension = reference.thresholds().dimension(fid_bound);
        CertificationResult { scheme, n_bins: reference.len(), fid_bound, correction_sum, dimension, reference }
    }

    pub fn with_thresholds(mut self, t: &SchmidtThresholds) -> Self {
        self.dimension = t.dimension(self.fid_bound);
        self
    }
}

/// Σλ_i² p(i,i) + Σ_{i<j} (λ_iλ_j Δ_ij − 2|λ_iλ_j| Z_ij^ji).
pub fn compound_bound(reference: &ReferenceState, pops: &PopulationTable, stats: &CoincidenceStats) -> Result<CertificationResult> {
    let Some(l) = reference.real_parts() else {
        bail!(Unsupported, "the compound bound needs a real reference state");
    };
    let n = l.len();
    if pops.n < n {
        bail!(Dimension, "populations cover {} bins, reference {n}", pops.n);
    }
    let mut f = 0.0;
    let mut corr = 0.0;
    for i in 1..=n {
        f += l[i - 1] * l[i - 1] * pops.get(i, i);
        for j in i + 1..=n {
            let w = l[i - 1] * l[j - 1];
            let c = 2.0 * w.abs() * z_bound(pops, i, j, j, i);
            f += w * stats.delta(i, j)?;
            corr += c;
        }
    }
    Ok(CertificationResult::new(Scheme::Compound, f - corr, corr, reference.clone()))
}

/// Coefficients `c[A,B]` of `rho_AB` (joint input indices `(i-1)n + (j-1)`) in the
/// expectation of `Σ w_e p(e)` after the single-photon map `u`.
pub fn observable_coefficients(u: &DMatrix<C64>, n: usize, events: &[((PhotonMode, PhotonMode), f64)]) -> DMatrix<C64> {
    let mut c = DMatrix::<C64>::zeros(n * n, n * n);
    let mut v = vec![C64::new(0.0, 0.0); n * n];
    for &((s, i), w) in events {
        let (rs, ri) = (s.index(), i.index());
        if rs >= u.nrows() || ri >= u.nrows() {
            continue;
        }
        for a in 0..n {
            for b in 0..n {
                v[a * n + b] = u[(rs, a)] * u[(ri, b)];
            }
        }
        for x in 0..n * n {
            if v[x].norm_sqr() == 0.0 {
                continue;
            }
            for y in 0..n * n {
                c[(x, y)] += v[x] * v[y].conj() * w;
            }
        }
    }
    c
}

/// Coefficients of the summed same-mode coincidences over the single-setting window.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub n: usize,
    pub c: DMatrix<C64>,
}

impl WeightTable {
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        self.c[(pair_idx(self.n, i, j), pair_idx(self.n, k, l))]
    }

    fn is_fidelity_term(&self, x: usize, y: usize) -> bool {
        let n = self.n;
        x / n == x % n && y / n == y % n
    }
}

pub fn single_setting_coeffs(n: usize) -> Result<WeightTable> {
    let (program, _) = single_setting(n)?;
    let u = program.unitary()?;
    let events: Vec<_> = single_setting_window(n).into_iter().map(|m| ((m, m), 1.0)).collect();
    Ok(WeightTable { n, c: observable_coefficients(&u, n, &events) })
}

/// Summed same-mode coincidences over the single-setting window.
pub fn window_coincidences(dist: &Distribution, n: usize) -> f64 {
    single_setting_window(n).into_iter().map(|m| dist.get(m, m)).sum()
}

/// `p_c_total − Σ|c| Z` over all coefficients outside the fidelity block.
pub fn single_setting_bound(pops: &PopulationTable, p_c_total: f64, weights: &WeightTable) -> Result<CertificationResult> {
    let n = weights.n;
    if pops.n < n {
        bail!(Incomplete, "populations cover {} bins, weights {n}", pops.n);
    }
    let mut corr = 0.0;
    for x in 0..n * n {
        for y in 0..n * n {
            let c = weights.c[(x, y)].norm();
            if c < 1e-14 || weights.is_fidelity_term(x, y) {
                continue;
            }
            corr += c * z_bound(pops, x / n + 1, x % n + 1, y / n + 1, y % n + 1);
        }
    }
    Ok(CertificationResult::new(Scheme::Single, p_c_total - corr, corr, ReferenceState::mes(n)))
}

/// `(Re, Im)` of `<ii|rho|jj>` from imbalances without phase, with `π/2` and
/// with `π/4` imprinted on bin `j`.
pub fn extract_real_imag(delta_0: f64, delta_half: f64, delta_quarter: f64) -> (f64, f64) {
    ((delta_0 - delta_half) / 4.0, -(delta_0 + delta_half) / 4.0 + delta_quarter / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEstimate {
    /// Per-bin local phase that undoes the learned phases when imprinted.
    pub correction: Vec<f64>,
    /// Estimated argument of `<ii|rho|i+1 i+1>` for each adjacent pair.
    pub pair_phases: Vec<f64>,
    /// Adjacent pairs (lower bin) whose phase was undefined and set to 0.
    pub degenerate: Vec<usize>,
    /// Largest `Z / |c|` over the pairs; small values mean the estimate is reliable.
    pub worst_ratio: f64,
}

/// Phase gradient imprinted for the second phase-estimation run.
pub fn phase_gradient(n: usize) -> Vec<f64> {
    (0..n).map(|j| j as f64 * FRAC_PI_4).collect()
}

pub fn learn_phases(stats0: &CoincidenceStats, stats_quarter: &CoincidenceStats, pops: &PopulationTable) -> Result<PhaseEstimate> {
    let n = pops.n;
    let mut pair_phases = Vec::with_capacity(n.saturating_sub(1));
    let mut degenerate = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for i in 1..n {
        let z = z_bound(pops, i, i + 1, i + 1, i);
        let c_r = stats0.delta(i, i + 1)? / 2.0 - z;
        let c_i = stats_quarter.delta(i, i + 1)? / 2.0 - z;
        let mag = c_r.hypot(c_i);
        if c_r <= 0.0 && c_i <= 0.0 && mag < PHASE_RESOLUTION {
            degenerate.push(i);
            pair_phases.push(0.0);
            worst_ratio = f64::INFINITY;
            continue;
        }
        worst_ratio = worst_ratio.max(z / mag);
        pair_phases.push(c_i.atan2(c_r));
    }
    let mut correction = vec![0.0; n];
    for j in 1..n {
        correction[j] = correction[j - 1] + pair_phases[j - 1] / 2.0;
    }
    Ok(PhaseEstimate { correction, pair_phases, degenerate, worst_ratio })
}

/// Real and, where accessible, imaginary part of `<ab|rho|cd>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceEstimate {
    pub ket: (usize, usize),
    pub bra: (usize, usize),
    pub re: f64,
    pub im: Option<f64>,
}

/// Phase profiles for the comprehensive walk, keyed by bins and imprinted phases.
pub fn comprehensive_profiles(n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n]];
    let mut push = |p: Vec<f64>| {
        if !out.iter().any(|q| q == &p) {
            out.push(p);
        }
    };
    for b in 0..n {
        for phi in [FRAC_PI_2, FRAC_PI_4] {
            let mut p = vec![0.0; n];
            p[b] = phi;
            push(p);
        }
    }
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            for (x, y) in [(FRAC_PI_4, -FRAC_PI_4), (FRAC_PI_2, FRAC_PI_2), (FRAC_PI_4, FRAC_PI_4)] {
                let mut p = vec![0.0; n];
                p[a] = x;
                p[b] = y;
                push(p);
            }
        }
    }
    out
}

fn profile(n: usize, set: &[(usize, f64)]) -> Vec<f64> {
    let mut p = vec![0.0; n];
    for &(b, phi) in set {
        p[b - 1] = phi;
    }
    p
}

/// Arrival distributions of the comprehensive walk under phase profiles.
pub struct ProfileRuns<'a> {
    pub runs: &'a [(Vec<f64>, Distribution)],
}

impl ProfileRuns<'_> {
    fn imbalance(&self, scheme: &ComprehensiveScheme, phases: &[f64], signal: usize, idler: usize) -> Result<f64> {
        let Some((_, dist)) = self.runs.iter().find(|(p, _)| p.iter().zip(phases).all(|(a, b)| (a - b).abs() < 1e-12)) else {
            bail!(Incomplete, "missing run for phase profile {phases:?}");
        };
        let loc = |port: usize| scheme.plan.loci.iter().find(|l| l.port == port).unwrap();
        let (s, t) = (loc(signal), loc(idler));
        let raw: f64 = crate::scheme::branch_imbalance(s, t).into_iter().map(|((a, b), w)| w * dist.get(a, b)).sum();
        Ok(raw / s.scale)
    }
}

fn pair_port(scheme: &ComprehensiveScheme, i: usize, j: usize) -> usize {
    scheme.plan.loci.iter().find(|l| l.bins.contains(&i) && l.bins.contains(&j)).map(|l| l.port).unwrap()
}

/// Coherences recovered from the comprehensive walk: `<ii|rho|jj>` fully,
/// `<ij|rho|ji>` real part only, and the shared-bin and four-bin families.
pub fn comprehensive_extract(scheme: &ComprehensiveScheme, runs: &ProfileRuns) -> Result<Vec<CoherenceEstimate>> {
    let n = scheme.program.n_bins_in;
    let mut out = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n {
            let port = pair_port(scheme, i, j);
            let d0 = runs.imbalance(scheme, &profile(n, &[]), port, port)?;
            let dh = runs.imbalance(scheme, &profile(n, &[(j, FRAC_PI_2)]), port, port)?;
            let dq = runs.imbalance(scheme, &profile(n, &[(j, FRAC_PI_4)]), port, port)?;
            let (re, im) = extract_real_imag(d0, dh, dq);
            out.push(CoherenceEstimate { ket: (i, i), bra: (j, j), re, im: Some(im) });
            out.push(CoherenceEstimate { ket: (i, j), bra: (j, i), re: (d0 + dh) / 4.0, im: None });
        }
    }
    for s in &scheme.shared {
        let (i, j, k) = s.bins;
        let sign = s.sign as f64;
        let d = |p: &[(usize, f64)]| -> Result<f64> {
            Ok(sign * runs.imbalance(scheme, &profile(n, p), s.signal_port, s.idler_port)?)
        };
        let d0 = d(&[])?;
        let d1 = d(&[(k, FRAC_PI_2)])?;
        let d2 = d(&[(k, FRAC_PI_4)])?;
        let d3 = d(&[(j, FRAC_PI_4), (i, -FRAC_PI_4)])?;
        let (re_a, re_b) = ((d0 - d1) / 4.0, (d0 + d1) / 4.0);
        out.push(CoherenceEstimate { ket: (k, k), bra: (i, j), re: re_a, im: Some(re_b - d2 / 2.0) });
        out.push(CoherenceEstimate { ket: (i, k), bra: (k, j), re: re_b, im: Some(d3 / 2.0 - re_a) });
    }
    for p in &scheme.disjoint {
        let (i, j, k, l) = p.bins;
        let sign = p.sign as f64;
        let d = |ph: &[(usize, f64)]| -> Result<f64> {
            Ok(sign * runs.imbalance(scheme, &profile(n, ph), p.signal_port, p.idler_port)?)
        };
        let d0 = d(&[])?;
        let d1 = d(&[(i, FRAC_PI_2), (k, FRAC_PI_2)])?;
        let d2 = d(&[(i, FRAC_PI_4), (k, FRAC_PI_4)])?;
        let d3 = d(&[(i, FRAC_PI_4), (k, -FRAC_PI_4)])?;
        let (re_a, re_b) = ((d0 - d1) / 4.0, (d0 + d1) / 4.0);
        out.push(CoherenceEstimate { ket: (i, k), bra: (j, l), re: re_a, im: Some(re_b - d2 / 2.0) });
        out.push(CoherenceEstimate { ket: (i, l), bra: (j, k), re: re_b, im: Some(re_a - d3 / 2.0) });
    }
    Ok(out)
}

/// Fidelity to an arbitrary (complex) reference from the recovered `<ii|rho|jj>`.
/// No coherence is left unmeasured, so nothing is subtracted.
pub fn comprehensive_bound(reference: &ReferenceState, pops: &PopulationTable, est: &[CoherenceEstimate]) -> Result<CertificationResult> {
    let l = reference.lambdas();
    let mut f = 0.0;
    for i in 1..=l.len() {
        f += l[i - 1].norm_sqr() * pops.get(i, i);
        for j in i + 1..=l.len() {
            let Some(e) = est.iter().find(|e| e.ket == (i, i) && e.bra == (j, j)) else {
                bail!(Incomplete, "no estimate of <{i}{i}|rho|{j}{j}>");
            };
            let rho = C64::new(e.re, e.im.unwrap_or(0.0));
            f += 2.0 * (l[i - 1].conj() * l[j - 1] * rho).re;
        }
    }
    Ok(CertificationResult::new(Scheme::Comprehensive, f, 0.0, reference.clone()))
}
