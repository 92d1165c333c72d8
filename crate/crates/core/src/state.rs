//! Two-photon time-bin states, reference states and Schmidt thresholds.
//!
//! Modes are laid out as `m = 2*(bin-1) + loop` with `Short = 0`, `Long = 1`,
//! and a joint two-photon index `m_signal * n_modes + m_idler`.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::bail;
use crate::{Result, C64};
/// Random mixed state of the given rank on the pre-walk block (Ginibre construction).
pub fn random_mixed<R: rand::Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> TwoPhotonState {
    let d = n * n;
    let g = DMatrix::<C64>::from_fn(d, rank, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let m = &g * g.adjoint();
    let t = m.trace().re;
    TwoPhotonState::from_short_block(n, &(m / C64::new(t, 0.0))).expect("Ginibre block is a valid state")
}

#[cfg(test)]
use crate::Error;
#[allow(unused_imports)]
use num_traits::Float;

pub const TRACE_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loop {
    Short = 0,
    Long = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhotonMode {
    pub bin: usize,
    pub lp: Loop,
}

impl PhotonMode {
    pub const fn short(bin: usize) -> Self {
        PhotonMode { bin, lp: Loop::Short }
    }

    pub const fn long(bin: usize) -> Self {
        PhotonMode { bin, lp: Loop::Long }
    }

    pub fn index(self) -> usize {
        debug_assert!(self.bin >= 1);
        2 * (self.bin - 1) + self.lp as usize
    }

    pub fn from_index(m: usize) -> Self {
        let lp = if m.is_multiple_of(2) { Loop::Short } else { Loop::Long };
        PhotonMode { bin: m / 2 + 1, lp }
    }
}

impl core::fmt::Display for PhotonMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let l = match self.lp {
            Loop::Short => 'S',
            Loop::Long => 'L',
        };
        write!(f, "{}{}", self.bin, l)
    }
}

/// Joint index of both photons in loop Short at bins `i`, `j` (1-based).
#[inline]
pub fn short_pair_index(n_modes: usize, i: usize, j: usize) -> usize {
    PhotonMode::short(i).index() * n_modes + PhotonMode::short(j).index()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    n_bins: usize,
    matrix: DMatrix<C64>,
}

impl TwoPhotonState {
    /// Validates Hermiticity, unit trace and positivity within `TRACE_TOL`.
    pub fn from_matrix(n_bins: usize, matrix: DMatrix<C64>) -> Result<Self> {
        let n_modes = 2 * n_bins;
        let dim = n_modes * n_modes;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            bail!(Dimension, "expected {dim}x{dim} matrix for {n_bins} bins, got {}x{}", matrix.nrows(), matrix.ncols());
        }
        check_density(&matrix)?;
        Ok(TwoPhotonState { n_bins, matrix })
    }

    /// Embeds an `n^2 x n^2` matrix over Short-loop pairs `(i, j)`, index `(i-1)n + (j-1)`.
    pub fn from_short_block(n_bins: usize, block: &DMatrix<C64>) -> Result<Self> {
        let n2 = n_bins * n_bins;
        if block.nrows() != n2 || block.ncols() != n2 {
            bail!(Dimension, "expected {n2}x{n2} block for {n_bins} bins");
        }
        let nm = 2 * n_bins;
        let idx: Vec<usize> = (0..n2).map(|x| short_pair_index(nm, x / n_bins + 1, x % n_bins + 1)).collect();
        let mut m = DMatrix::zeros(nm * nm, nm * nm);
        for r in 0..n2 {
            for c in 0..n2 {
                m[(idx[r], idx[c])] = block[(r, c)];
            }
        }
        Self::from_matrix(n_bins, m)
    }

    pub(crate) fn from_matrix_unchecked(n_bins: usize, matrix: DMatrix<C64>) -> Self {
        TwoPhotonState { n_bins, matrix }
    }

    /// Pure state `sum_j alpha_j e^{2i phi_j} |jj>` with both photons in loop Short.
    pub fn pure(alpha: &[C64], phi: &[f64]) -> Result<Self> {
        Self::pure_in(alpha, phi, alpha.len())
    }

    /// As [`TwoPhotonState::pure`], embedded in a mode space of `n_bins` bins.
    pub fn pure_in(alpha: &[C64], phi: &[f64], n_bins: usize) -> Result<Self> {
        let n = alpha.len();
        if phi.len() != n {
            bail!(Dimension, "phase vector has length {}, amplitudes {}", phi.len(), n);
        }
        if n > n_bins {
            bail!(Dimension, "{n} amplitudes do not fit into {n_bins} bins");
        }
        let norm: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            bail!(Validation, "amplitudes have squared norm {norm}, expected 1");
        }
        let n_modes = 2 * n_bins;
        let mut psi = vec![C64::new(0.0, 0.0); n_modes * n_modes];
        for j in 0..n {
            psi[short_pair_index(n_modes, j + 1, j + 1)] = alpha[j] * C64::from_polar(1.0, 2.0 * phi[j]);
        }
        Ok(Self::from_vector(n_bins, &psi))
    }

    pub fn mes(n: usize) -> Self {
        let a = C64::new(1.0 / (n as f64).sqrt(), 0.0);
        Self::pure(&vec![a; n], &vec![0.0; n]).expect("uniform amplitudes are normalized")
    }

    pub(crate) fn from_vector(n_bins: usize, psi: &[C64]) -> Self {
        let dim = psi.len();
        let matrix = DMatrix::from_fn(dim, dim, |r, c| psi[r] * psi[c].conj());
        TwoPhotonState { n_bins, matrix }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_modes(&self) -> usize {
        2 * self.n_bins
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    /// `<ij|rho|kl>` with all photons in loop Short.
    pub fn element(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        let nm = self.n_modes();
        self.matrix[(short_pair_index(nm, i, j), short_pair_index(nm, k, l))]
    }

    pub fn element_modes(&self, a: PhotonMode, b: PhotonMode, c: PhotonMode, d: PhotonMode) -> C64 {
        let nm = self.n_modes();
        self.matrix[(a.index() * nm + b.index(), c.index() * nm + d.index())]
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Time-bin populations `p(i,j) = <ij|rho|ij>` over the first `n` bins.
    pub fn populations(&self, n: usize) -> Vec<f64> {
        let mut p = vec![0.0; n * n];
        for i in 1..=n {
            for j in 1..=n {
                p[(i - 1) * n + j - 1] = self.element(i, j, i, j).re;
            }
        }
        p
    }

    /// Highest bin carrying any population.
    pub fn occupied_bins(&self) -> usize {
        let nm = self.n_modes();
        let mut top = 0;
        for idx in 0..nm * nm {
            if self.matrix[(idx, idx)].re > 0.0 {
                let (a, b) = (PhotonMode::from_index(idx / nm), PhotonMode::from_index(idx % nm));
                top = top.max(a.bin).max(b.bin);
            }
        }
        top
    }

    /// Applies the local phase `e^{i(phi_i + phi_j)}` to `|ij>` for Short modes.
    pub fn with_phases(&self, phi: &[f64]) -> Result<Self> {
        if phi.len() > self.n_bins {
            bail!(Dimension, "{} phases for {} bins", phi.len(), self.n_bins);
        }
        let nm = self.n_modes();
        let single: Vec<C64> = (0..nm)
            .map(|m| {
                let pm = PhotonMode::from_index(m);
                match (pm.lp, phi.get(pm.bin - 1)) {
                    (Loop::Short, Some(&p)) => C64::from_polar(1.0, p),
                    _ => C64::new(1.0, 0.0),
                }
            })
            .collect();
        let joint: Vec<C64> = (0..nm * nm).map(|x| single[x / nm] * single[x % nm]).collect();
        let m = DMatrix::from_fn(nm * nm, nm * nm, |r, c| joint[r] * self.matrix[(r, c)] * joint[c].conj());
        Ok(Self::from_matrix_unchecked(self.n_bins, m))
    }
}

fn check_density(m: &DMatrix<C64>) -> Result<()> {
    let dim = m.nrows();
    for r in 0..dim {
        for c in r..dim {
            if (m[(r, c)] - m[(c, r)].conj()).norm() > TRACE_TOL {
                bail!(Validation, "matrix is not Hermitian at ({r},{c})");
            }
        }
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        bail!(Validation, "trace {tr} differs from 1");
    }
    let floor = m.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    if floor < -TRACE_TOL {
        bail!(Validation, "matrix has eigenvalue {floor} below -{TRACE_TOL}");
    }
    Ok(())
}

/// `(1 - alpha) rho + alpha/N^2` on the Short-Short bin subspace of the first `N` bins.
pub fn dephase(state: &TwoPhotonState, alpha_mix: f64, n: usize) -> Result<TwoPhotonState> {
    if !(0.0..=1.0).contains(&alpha_mix) {
        bail!(Validation, "mixing weight {alpha_mix} outside [0,1]");
    }
    if n > state.n_bins() {
        bail!(Dimension, "{n} bins requested, state has {}", state.n_bins());
    }
    let nm = state.n_modes();
    let mut m = state.matrix() * C64::new(1.0 - alpha_mix, 0.0);
    let w = alpha_mix / (n * n) as f64;
    for i in 1..=n {
        for j in 1..=n {
            let x = short_pair_index(nm, i, j);
            m[(x, x)] += w;
        }
    }
    Ok(TwoPhotonState::from_matrix_unchecked(state.n_bins(), m))
}

/// Smaller root `x` of `(1-x)^2 + x(2-x)/dim = purity`: the mixing weight that
/// brings a pure state down to the requested purity.
pub fn alpha_for_purity(purity: f64, dim: usize) -> Result<f64> {
    let d = dim as f64;
    if dim == 0 || !(purity <= 1.0 && purity >= 1.0 / d - NORM_TOL) {
        bail!(Validation, "purity {purity} not reachable in dimension {dim}");
    }
    if dim == 1 {
        return Ok(0.0);
    }
    let a = 1.0 - 1.0 / d;
    let disc = (1.0 - (1.0 - purity) / a).max(0.0);
    Ok(1.0 - disc.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceState {
    lambdas: Vec<C64>,
}

impl ReferenceState {
    pub fn new(lambdas: Vec<C64>) -> Result<Self> {
        if lambdas.is_empty() {
            bail!(Validation, "empty reference state");
        }
        let norm: f64 = lambdas.iter().map(|l| l.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            bail!(Validation, "reference coefficients have squared norm {norm}");
        }
        Ok(ReferenceState { lambdas })
    }

    pub fn from_real(lambdas: &[f64]) -> Result<Self> {
        Self::new(lambdas.iter().map(|&l| C64::new(l, 0.0)).collect())
    }

    pub fn mes(n: usize) -> Self {
        ReferenceState { lambdas: vec![C64::new(1.0 / (n as f64).sqrt(), 0.0); n] }
    }

    pub fn lambdas(&self) -> &[C64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn is_real(&self) -> bool {
        self.lambdas.iter().all(|l| l.im == 0.0)
    }

    pub fn real_parts(&self) -> Option<Vec<f64>> {
        self.is_real().then(|| self.lambdas.iter().map(|l| l.re).collect())
    }

    pub fn thresholds(&self) -> SchmidtThresholds {
        let mut sq: Vec<f64> = self.lambdas.iter().map(|l| l.norm_sqr()).collect();
        sq.sort_by(|a, b| b.total_cmp(a));
        let mut b = Vec::with_capacity(sq.len() + 1);
        b.push(0.0);
        let mut acc = 0.0;
        for s in sq {
            acc += s;
            b.push(acc);
        }
        SchmidtThresholds { b }
    }
}

/// `b[k]` is the largest fidelity any state of Schmidt rank `k` can reach; `b[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtThresholds {
    pub b: Vec<f64>,
}

impl SchmidtThresholds {
    /// Uniform thresholds `k/d` for a maximally entangled reference of dimension `d`.
    pub fn uniform(d: usize) -> Self {
        SchmidtThresholds { b: (0..=d).map(|k| k as f64 / d as f64).collect() }
    }

    pub fn dimension(&self, fid_bound: f64) -> usize {
        let n = self.b.len() - 1;
        (1..=n).rev().find(|&d| fid_bound > self.b[d - 1]).unwrap_or(1)
    }
}

pub fn fidelity(state: &TwoPhotonState, reference: &ReferenceState) -> Result<f64> {
    let l = reference.lambdas();
    if l.len() > state.n_bins() {
        bail!(Dimension, "reference of length {} exceeds {} bins", l.len(), state.n_bins());
    }
    let mut f = C64::new(0.0, 0.0);
    for i in 0..l.len() {
        for j in 0..l.len() {
            f += l[i].conj() * l[j] * state.element(i + 1, i + 1, j + 1, j + 1);
        }
    }
    Ok(f.re)
}

pub fn certified_dimension(fid_bound: f64, reference: &ReferenceState) -> usize {
    reference.thresholds().dimension(fid_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn mode_index_round_trip() {
        for m in 0..40 {
            assert_eq!(PhotonMode::from_index(m).index(), m);
        }
        assert_eq!(PhotonMode::long(3).index(), 5);
    }

    #[test]
    fn single_bin_state() {
        let s = TwoPhotonState::pure(&[c(1.0), c(0.0)], &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(s.element(1, 1, 1, 1).re, 1.0);
        assert_abs_diff_eq!(s.purity(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn imprinted_coherence() {
        let h = 1.0 / 2f64.sqrt();
        let s = TwoPhotonState::pure(&[c(h), c(h)], &[0.0, PI / 8.0]).unwrap();
        let e = s.element(1, 1, 2, 2);
        let want = C64::from_polar(0.5, -PI / 4.0);
        assert_abs_diff_eq!(e.re, want.re, epsilon = 1e-14);
        assert_abs_diff_eq!(e.im, want.im, epsilon = 1e-14);
    }

    #[test]
    fn mes_coherences_uniform() {
        let s = TwoPhotonState::mes(5);
        for i in 1..=5 {
            for j in 1..=5 {
                assert_abs_diff_eq!(s.element(i, i, j, j).re, 0.2, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(matches!(TwoPhotonState::pure(&[c(1.0), c(1.0)], &[0.0, 0.0]), Err(Error::Validation(_))));
        assert!(matches!(TwoPhotonState::pure_in(&[c(1.0), c(0.0)], &[0.0, 0.0], 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn dephase_limits() {
        let s = TwoPhotonState::mes(2);
        assert_eq!(dephase(&s, 0.0, 2).unwrap(), s);
        let m = dephase(&s, 1.0, 2).unwrap();
        for i in 1..=2 {
            for j in 1..=2 {
                assert_abs_diff_eq!(m.element(i, j, i, j).re, 0.25, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(m.element(1, 1, 2, 2).norm(), 0.0);
        assert!(dephase(&s, 1.5, 2).is_err());
    }

    #[test]
    fn purity_inversion() {
        assert_eq!(alpha_for_purity(1.0, 64).unwrap(), 0.0);
        let a64 = alpha_for_purity(0.9, 64).unwrap();
        assert_abs_diff_eq!(a64, 0.05215, epsilon = 5e-5);
        assert_abs_diff_eq!(alpha_for_purity(0.9, 100).unwrap(), 0.05185, epsilon = 5e-5);
        let s = dephase(&TwoPhotonState::mes(8), a64, 8).unwrap();
        assert_abs_diff_eq!(s.purity(), 0.9, epsilon = 1e-10);
        assert!(alpha_for_purity(0.001, 64).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let mes = ReferenceState::mes(8);
        assert_abs_diff_eq!(fidelity(&TwoPhotonState::mes(8), &mes).unwrap(), 1.0, epsilon = 1e-12);
        let a = alpha_for_purity(0.9, 64).unwrap();
        let s = dephase(&TwoPhotonState::mes(8), a, 8).unwrap();
        let f = fidelity(&s, &mes).unwrap();
        assert_abs_diff_eq!(f, 1.0 - a + a / 64.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f, 0.9487, epsilon = 1e-4);
        let one = TwoPhotonState::pure(&[c(1.0), c(0.0), c(0.0), c(0.0)], &[0.0; 4]).unwrap();
        assert_abs_diff_eq!(fidelity(&one, &ReferenceState::mes(4)).unwrap(), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn dimension_thresholds() {
        let mes = ReferenceState::mes(8);
        assert_eq!(certified_dimension(1.0, &mes), 8);
        assert_eq!(certified_dimension(0.76, &mes), 7);
        assert_eq!(certified_dimension(0.1, &mes), 1);
        assert_eq!(SchmidtThresholds::uniform(10).dimension(0.609), 7);
        let t = mes.thresholds();
        assert_abs_diff_eq!(t.b[8], 1.0, epsilon = 1e-12);
        assert!(t.b.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn import_checks_positivity() {
        let mut m = DMatrix::<C64>::zeros(16, 16);
        m[(0, 0)] = c(1.5);
        m[(5, 5)] = c(-0.5);
        assert!(TwoPhotonState::from_matrix(2, m).is_err());
        assert!(TwoPhotonState::from_matrix(2, TwoPhotonState::mes(2).into_matrix()).is_ok());
    }
}
