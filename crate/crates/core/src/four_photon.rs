//! Two indistinguishable photon pairs: symmetric two-photon spaces per
//! species, bosonic propagation, and the four-bin fidelity bounds.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};

use crate::certify::{CertificationResult, Scheme};
use crate::error::bail;
use crate::scheme::{compound_settings, multi_spdc_settings, Setting};
use crate::state::{PhotonMode, ReferenceState, SchmidtThresholds, TRACE_TOL};
use crate::walk::{coin_single, single_photon_unitary, CouplerNoise, WalkProgram};
use crate::{Result, C64};
#[allow(unused_imports)]
use num_traits::Float;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Unordered pairs `(a, b)`, `a <= b`, of `0..n` in lexicographic order.
pub fn sym_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect()
}

#[inline]
pub fn sym_index(n: usize, a: usize, b: usize) -> usize {
    let (a, b) = (a.min(b), a.max(b));
    a * n - a * (a + 1) / 2 + b
}

/// Density matrix over `Sym2(modes) x Sym2(modes)` (signal pair, idler pair).
#[derive(Debug, Clone, PartialEq)]
pub struct FourPhotonState {
    pub modes: Vec<PhotonMode>,
    pub matrix: DMatrix<C64>,
}

impl FourPhotonState {
    pub fn pair_dim(&self) -> usize {
        let m = self.modes.len();
        m * (m + 1) / 2
    }

    fn joint(&self, s: (usize, usize), t: (usize, usize)) -> usize {
        let m = self.modes.len();
        sym_index(m, s.0, s.1) * self.pair_dim() + sym_index(m, t.0, t.1)
    }

    /// `<s t|rho|s' t'>` with pairs given as 0-based mode positions.
    pub fn element(&self, s: (usize, usize), t: (usize, usize), s2: (usize, usize), t2: (usize, usize)) -> C64 {
        self.matrix[(self.joint(s, t), self.joint(s2, t2))]
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Populations of all basis states, ordered like the matrix.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|k| self.matrix[(k, k)].re).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.pair_dim() * self.pair_dim();
        if self.matrix.nrows() != d || self.matrix.ncols() != d {
            bail!(Dimension, "four-photon matrix must be {d}x{d}");
        }
        if (&self.matrix - self.matrix.adjoint()).norm() > TRACE_TOL * d as f64 {
            bail!(Validation, "four-photon matrix is not Hermitian");
        }
        if (self.trace() - 1.0).abs() > TRACE_TOL {
            bail!(Validation, "four-photon trace {}", self.trace());
        }
        let min = self.matrix.clone().symmetric_eigenvalues().min();
        if min < -TRACE_TOL {
            bail!(Validation, "four-photon matrix has eigenvalue {min}");
        }
        Ok(())
    }
}

fn input_modes(n: usize) -> Vec<PhotonMode> {
    (1..=n).map(PhotonMode::short).collect()
}

/// `Σ_{j<=k} α_jk |jk>_S |jk>_I`, amplitudes ordered as [`sym_pairs`].
pub fn make_two_pair_state(alpha: &[C64], n: usize) -> Result<FourPhotonState> {
    let p = n * (n + 1) / 2;
    if alpha.len() != p {
        bail!(Dimension, "{} amplitudes for {p} bin pairs", alpha.len());
    }
    let norm: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-9 {
        bail!(Validation, "two-pair amplitudes have squared norm {norm}");
    }
    let mut psi = vec![ZERO; p * p];
    for (k, a) in alpha.iter().enumerate() {
        psi[k * p + k] = *a;
    }
    Ok(FourPhotonState { modes: input_modes(n), matrix: DMatrix::from_fn(p * p, p * p, |r, c| psi[r] * psi[c].conj()) })
}

pub fn two_pair_mes(n: usize) -> FourPhotonState {
    let p = n * (n + 1) / 2;
    make_two_pair_state(&vec![C64::new(1.0 / (p as f64).sqrt(), 0.0); p], n).expect("uniform amplitudes are normalized")
}

/// Which four-photon basis states the white-noise part populates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DephasingSupport {
    /// Every state of the symmetric signal-idler space.
    Full,
    /// Only states where at least one signal and one idler photon share a bin,
    /// i.e. one surviving pair plus at most two stray photons.
    Paired,
}

impl DephasingSupport {
    pub fn contains(self, n: usize, x: usize) -> bool {
        match self {
            DephasingSupport::Full => true,
            DephasingSupport::Paired => {
                let pairs = sym_pairs(n);
                let p = pairs.len();
                let (s, t) = (pairs[x / p], pairs[x % p]);
                s.0 == t.0 || s.0 == t.1 || s.1 == t.0 || s.1 == t.1
            }
        }
    }

    pub fn dim(self, n: usize) -> usize {
        let p = n * (n + 1) / 2;
        (0..p * p).filter(|&x| self.contains(n, x)).count()
    }
}

/// Mixes with the identity on the whole symmetric signal-idler space.
pub fn dephase_four(state: &FourPhotonState, alpha: f64) -> Result<FourPhotonState> {
    dephase_four_on(state, alpha, DephasingSupport::Full)
}

/// Mixes with the normalized identity restricted to `support`.
pub fn dephase_four_on(state: &FourPhotonState, alpha: f64, support: DephasingSupport) -> Result<FourPhotonState> {
    if !(0.0..=1.0).contains(&alpha) {
        bail!(Validation, "mixing weight {alpha} outside [0,1]");
    }
    let n = state.modes.len();
    let d = support.dim(n);
    let mut m = &state.matrix * C64::new(1.0 - alpha, 0.0);
    for x in 0..m.nrows() {
        if support.contains(n, x) {
            m[(x, x)] += C64::new(alpha / d as f64, 0.0);
        }
    }
    Ok(FourPhotonState { modes: state.modes.clone(), matrix: m })
}

/// Random mixed state of the given rank on the symmetric signal-idler space.
pub fn random_mixed_four<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> FourPhotonState {
    let p = n * (n + 1) / 2;
    let g = DMatrix::<C64>::from_fn(p * p, rank, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let m = &g * g.adjoint();
    let t = m.trace().re;
    FourPhotonState { modes: input_modes(n), matrix: m / C64::new(t, 0.0) }
}

/// Two-pair state with random amplitudes, mixed with white noise of random weight up to `max_alpha`.
pub fn random_noisy_two_pair<R: Rng + ?Sized>(n: usize, max_alpha: f64, rng: &mut R) -> FourPhotonState {
    let p = n * (n + 1) / 2;
    let v: Vec<C64> = (0..p).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let v: Vec<C64> = v.into_iter().map(|z| z / norm).collect();
    let pure = make_two_pair_state(&v, n).expect("normalized amplitudes");
    let support = if rng.random::<bool>() { DephasingSupport::Full } else { DephasingSupport::Paired };
    dephase_four_on(&pure, rng.random::<f64>() * max_alpha, support).expect("weight in range")
}

/// Fidelity to `Σ λ_jk |jkjk>`, λ ordered as [`sym_pairs`].
pub fn fidelity_four(state: &FourPhotonState, lambdas: &[C64]) -> f64 {
    let p = state.pair_dim();
    let mut f = ZERO;
    for a in 0..lambdas.len() {
        for b in 0..lambdas.len() {
            f += lambdas[a].conj() * lambdas[b] * state.matrix[(a * p + a, b * p + b)];
        }
    }
    f.re
}

/// Row of `Sym2(u)` for the output pair `(y, z)` over all input pairs.
pub fn sym2_row(u: &DMatrix<C64>, y: usize, z: usize) -> Vec<C64> {
    let n = u.ncols();
    sym_pairs(n)
        .into_iter()
        .map(|(a, b)| match (y == z, a == b) {
            (false, false) => u[(y, a)] * u[(z, b)] + u[(z, a)] * u[(y, b)],
            (false, true) => u[(y, a)] * u[(z, a)] * SQRT_2,
            (true, false) => u[(y, a)] * u[(y, b)] * SQRT_2,
            (true, true) => u[(y, a)] * u[(y, a)],
        })
        .collect()
}

/// Action of a single-photon map on the symmetric two-photon space.
pub fn sym2(u: &DMatrix<C64>) -> DMatrix<C64> {
    let rows = sym_pairs(u.nrows());
    let mut out = DMatrix::zeros(rows.len(), u.ncols() * (u.ncols() + 1) / 2);
    for (r, &(y, z)) in rows.iter().enumerate() {
        for (c, v) in sym2_row(u, y, z).into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    out
}

/// Coupler on `{|SS>, |SL>, |LL>}` of one bin.
pub fn bosonic_coin(theta: f64) -> DMatrix<C64> {
    let c = coin_single(theta);
    sym2(&DMatrix::from_fn(2, 2, |r, k| c[r][k]))
}

/// Full output state over the modes the walk can reach. The dense result
/// grows as the fourth power of that count; event probabilities should use
/// [`event_coefficients`] instead.
pub fn four_photon_propagate<R: Rng + ?Sized>(
    state: &FourPhotonState,
    program: &WalkProgram,
    noise: &CouplerNoise,
    rng: &mut R,
) -> Result<FourPhotonState> {
    let n = state.modes.len();
    if state.modes != input_modes(n) || n > program.n_bins_in {
        bail!(Dimension, "state must live on the Short modes of the program's input bins");
    }
    let angles = noise.realize(program, rng);
    let u = single_photon_unitary(program, &angles)?.columns(0, n).into_owned();
    let active: Vec<usize> = (0..u.nrows()).filter(|&r| u.row(r).iter().any(|z| z.norm() > 0.0)).collect();
    let ua = DMatrix::from_fn(active.len(), n, |r, c| u[(active[r], c)]);
    let s = sym2(&ua);
    let w = s.kronecker(&s);
    let matrix = &w * &state.matrix * w.adjoint();
    Ok(FourPhotonState { modes: active.into_iter().map(PhotonMode::from_index).collect(), matrix })
}

/// Detection event: signal pair and idler pair of output modes.
pub type Event = ((PhotonMode, PhotonMode), (PhotonMode, PhotonMode));

/// Coefficients `c[A,B]` of `rho_AB` over the `n`-bin input basis in `Σ w_e p(e)`.
pub fn event_coefficients(u: &DMatrix<C64>, n: usize, events: &[(Event, f64)]) -> DMatrix<C64> {
    let u = u.columns(0, n).into_owned();
    let p = n * (n + 1) / 2;
    let mut c = DMatrix::<C64>::zeros(p * p, p * p);
    let mut v = vec![ZERO; p * p];
    for &(((s1, s2), (t1, t2)), w) in events {
        let rs = sym2_row(&u, s1.index(), s2.index());
        let rt = sym2_row(&u, t1.index(), t2.index());
        for a in 0..p {
            for b in 0..p {
                v[a * p + b] = rs[a] * rt[b];
            }
        }
        for x in 0..p * p {
            if v[x] == ZERO {
                continue;
            }
            for y in 0..p * p {
                c[(x, y)] += v[x] * v[y].conj() * w;
            }
        }
    }
    c
}

pub fn expectation(c: &DMatrix<C64>, state: &FourPhotonState) -> f64 {
    c.iter().zip(state.matrix.iter()).map(|(a, b)| (a * b).re).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// All four photons leave through the same port.
    Full,
    /// Both signals through one port, both idlers through the other.
    Species,
    /// One signal-idler pair per port.
    Pair,
}

pub fn port_events(kind: EventKind, a: PhotonMode, b: PhotonMode) -> Vec<(Event, f64)> {
    match kind {
        EventKind::Full => vec![(((a, a), (a, a)), 1.0), (((b, b), (b, b)), 1.0)],
        EventKind::Species => vec![(((a, a), (b, b)), 1.0), (((b, b), (a, a)), 1.0)],
        EventKind::Pair => vec![(((a, b), (a, b)), 1.0)],
    }
}

/// Four-bin event rates of one setting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FourBinEvents {
    pub full: f64,
    pub species: f64,
    pub pair: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventProbabilities {
    /// Per four-bin setting, one row per phase profile (profile 0 is phase-free,
    /// profile `n` imprints `π` on bin `n`).
    pub four_bin: Vec<Vec<FourBinEvents>>,
    /// One signal-idler pair per port of the two-bin locus `(i, j)`.
    pub pair_pc: Vec<((usize, usize), f64)>,
}

/// Single measured quantity entering a combination.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Term {
    FourBin { setting: usize, profile: usize, kind: EventKind },
    PairPc(usize, usize),
    /// `<iiii|rho|iiii>` from arrival times, 1-based bin.
    Coincident(usize),
}

struct Combination(Vec<(Term, f64)>);

fn combination(n: usize, enhanced: bool) -> Combination {
    let mut t = Vec::new();
    let profiles: Vec<(usize, f64)> = if enhanced { (1..=n).map(|k| (k, 2.0)).collect() } else { vec![(0, 8.0)] };
    for setting in 0..3 {
        for &(profile, w) in &profiles {
            t.push((Term::FourBin { setting, profile, kind: EventKind::Full }, w));
            t.push((Term::FourBin { setting, profile, kind: EventKind::Species }, -w));
            t.push((Term::FourBin { setting, profile, kind: EventKind::Pair }, 2.0 * w));
        }
    }
    for i in 1..=n {
        for j in i + 1..=n {
            t.push((Term::PairPc(i, j), 1.0));
        }
        t.push((Term::Coincident(i), -0.5));
    }
    Combination(t)
}

fn profile_phases(n: usize, profile: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    if profile > 0 {
        p[profile - 1] = PI;
    }
    p
}

/// The measurement layouts behind every term.
pub struct MultiPairSetup {
    pub n: usize,
    pub four_bin: Vec<Setting>,
    pub compound: Vec<Setting>,
}

impl MultiPairSetup {
    pub fn new(n: usize) -> Result<Self> {
        Ok(MultiPairSetup { n, four_bin: multi_spdc_settings(n)?, compound: compound_settings(n)? })
    }

    fn term_coefficients(&self, term: Term, noise: &CouplerNoise, rng: &mut impl Rng) -> Result<DMatrix<C64>> {
        let n = self.n;
        let p = n * (n + 1) / 2;
        let u_of = |program: WalkProgram, rng: &mut dyn rand::RngCore| -> Result<DMatrix<C64>> {
            let angles = noise.realize(&program, rng);
            single_photon_unitary(&program, &angles)
        };
        Ok(match term {
            Term::FourBin { setting, profile, kind } => {
                let s = &self.four_bin[setting];
                let program = s.program.clone().with_phases(&profile_phases(n, profile));
                let l = &s.plan.loci[0];
                event_coefficients(&u_of(program, rng)?, n, &port_events(kind, l.short_port(), l.long_port()))
            }
            Term::PairPc(i, j) => {
                let (s, l) = self
                    .compound
                    .iter()
                    .find_map(|s| s.plan.loci.iter().find(|l| l.pair() == (i, j)).map(|l| (s, l)))
                    .expect("compound settings cover every pair");
                let events = port_events(EventKind::Pair, l.short_port(), l.long_port());
                event_coefficients(&u_of(s.program.clone(), rng)?, n, &events)
            }
            Term::Coincident(i) => {
                let k = sym_index(n, i - 1, i - 1);
                let mut c = DMatrix::zeros(p * p, p * p);
                c[(k * p + k, k * p + k)] = C64::new(1.0, 0.0);
                c
            }
        })
    }

    /// Exact event rates for every four-bin setting and phase profile.
    pub fn measure<R: Rng + ?Sized>(&self, state: &FourPhotonState, noise: &CouplerNoise, rng: &mut R) -> Result<EventProbabilities> {
        let n = self.n;
        let mut rng = rng;
        let mut four_bin = Vec::new();
        for setting in 0..self.four_bin.len() {
            let mut rows = Vec::new();
            for profile in 0..=n {
                let mut e = FourBinEvents::default();
                for (kind, slot) in [(EventKind::Full, &mut e.full), (EventKind::Species, &mut e.species), (EventKind::Pair, &mut e.pair)] {
                    *slot = expectation(&self.term_coefficients(Term::FourBin { setting, profile, kind }, noise, &mut rng)?, state);
                }
                rows.push(e);
            }
            four_bin.push(rows);
        }
        let mut pair_pc = Vec::new();
        for i in 1..=n {
            for j in i + 1..=n {
                pair_pc.push(((i, j), expectation(&self.term_coefficients(Term::PairPc(i, j), noise, &mut rng)?, state)));
            }
        }
        Ok(EventProbabilities { four_bin, pair_pc })
    }

    /// Coefficient table of the combined quantity over the input basis.
    pub fn weights(&self, enhanced: bool) -> Result<MultiWeights> {
        let p = self.n * (self.n + 1) / 2;
        let mut k = DMatrix::<C64>::zeros(p * p, p * p);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for (term, w) in combination(self.n, enhanced).0 {
            k += self.term_coefficients(term, &CouplerNoise::NONE, &mut rng)? * C64::new(w, 0.0);
        }
        Ok(MultiWeights { n: self.n, k })
    }
}

fn lookup(events: &EventProbabilities, pops: &[f64], n: usize, term: Term) -> Result<f64> {
    let p = n * (n + 1) / 2;
    Ok(match term {
        Term::FourBin { setting, profile, kind } => {
            let Some(e) = events.four_bin.get(setting).and_then(|r| r.get(profile)) else {
                bail!(Incomplete, "no four-bin data for setting {setting}, profile {profile}");
            };
            match kind {
                EventKind::Full => e.full,
                EventKind::Species => e.species,
                EventKind::Pair => e.pair,
            }
        }
        Term::PairPc(i, j) => match events.pair_pc.iter().find(|(b, _)| *b == (i, j)) {
            Some((_, v)) => *v,
            None => bail!(Incomplete, "no pair coincidence for ({i},{j})"),
        },
        Term::Coincident(i) => {
            let k = sym_index(n, i - 1, i - 1);
            pops[k * p + k]
        }
    })
}

/// `8 Σ_α (p_FC − p_SC + 2 p_PC) + Σ_{i<j} p_PC(i,j) − ½ Σ_i <iiii|rho|iiii>`.
pub fn compound_quantity(events: &EventProbabilities, four_pops: &[f64], n: usize) -> Result<f64> {
    combination(n, false).0.into_iter().map(|(t, w)| Ok(w * lookup(events, four_pops, n, t)?)).sum()
}

/// As [`compound_quantity`] with the four-bin part replaced by
/// `2 Σ_n Σ_α (...)` over the profiles with `π` on bin `n`.
pub fn phase_enhanced_quantity(events: &EventProbabilities, four_pops: &[f64], n: usize) -> Result<f64> {
    combination(n, true).0.into_iter().map(|(t, w)| Ok(w * lookup(events, four_pops, n, t)?)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiWeights {
    pub n: usize,
    pub k: DMatrix<C64>,
}

impl MultiWeights {
    fn pairs(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    /// Index of `|jk>_S |jk>_I` for the pair with position `a` in [`sym_pairs`].
    fn fid_index(&self, a: usize) -> usize {
        a * self.pairs() + a
    }

    pub fn is_fidelity_term(&self, x: usize, y: usize) -> bool {
        let p = self.pairs();
        x / p == x % p && y / p == y % p
    }

    /// Largest deviation of the fidelity block from uniform weight one.
    pub fn fidelity_block_error(&self) -> f64 {
        let p = self.pairs();
        let mut e: f64 = 0.0;
        for a in 0..p {
            for b in 0..p {
                e = e.max((self.k[(self.fid_index(a), self.fid_index(b))] - C64::new(1.0, 0.0)).norm());
            }
        }
        e
    }

    /// `Σ |c| Z` over all coefficients outside the fidelity block.
    pub fn correction(&self, four_pops: &[f64]) -> f64 {
        let d = self.k.nrows();
        let mut s = 0.0;
        for x in 0..d {
            for y in 0..d {
                let c = self.k[(x, y)].norm();
                if c > 1e-12 && !self.is_fidelity_term(x, y) {
                    s += c * (four_pops[x].max(0.0) * four_pops[y].max(0.0)).sqrt();
                }
            }
        }
        s
    }
}

fn bound(scheme: Scheme, c: f64, four_pops: &[f64], weights: &MultiWeights) -> Result<CertificationResult> {
    if four_pops.len() != weights.k.nrows() {
        bail!(Incomplete, "{} four-photon populations for a {}-state basis", four_pops.len(), weights.k.nrows());
    }
    let p = weights.pairs();
    let corr = weights.correction(four_pops);
    let fid = (c - corr) / p as f64;
    Ok(CertificationResult {
        scheme,
        n_bins: weights.n,
        fid_bound: fid,
        correction_sum: corr,
        dimension: SchmidtThresholds::uniform(p).dimension(fid),
        reference: ReferenceState::mes(p),
    })
}

/// `2/(N(N+1)) (C − Σ|c| Z)` with thresholds `k / (N(N+1)/2)`.
pub fn multi_bound(c: f64, four_pops: &[f64], weights: &MultiWeights) -> Result<CertificationResult> {
    bound(Scheme::MultiPair, c, four_pops, weights)
}

pub fn phase_enhanced_bound(events: &EventProbabilities, four_pops: &[f64], weights: &MultiWeights) -> Result<CertificationResult> {
    if events.four_bin.iter().any(|r| r.len() < weights.n + 1) {
        bail!(Incomplete, "phase-enhanced bound needs all {} single-bin π profiles", weights.n);
    }
    bound(Scheme::PhaseEnhanced, phase_enhanced_quantity(events, four_pops, weights.n)?, four_pops, weights)
}

/// Both bounds for an `n`-bin state with exact probabilities and ideal couplers.
pub fn exact_bounds(state: &FourPhotonState) -> Result<(CertificationResult, CertificationResult)> {
    let n = state.modes.len();
    let setup = MultiPairSetup::new(n)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let ev = setup.measure(state, &CouplerNoise::NONE, &mut rng)?;
    let pops = state.populations();
    let plain = multi_bound(compound_quantity(&ev, &pops, n)?, &pops, &setup.weights(false)?)?;
    let enhanced = phase_enhanced_bound(&ev, &pops, &setup.weights(true)?)?;
    Ok((plain, enhanced))
}
