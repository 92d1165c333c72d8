//! Coin, shift and phase-imprint operators and propagation through a walk.
//!
//! The same single-photon unitary acts on signal and idler, so every
//! two-photon quantity is computed from one `n_modes x n_in` single-photon
//! matrix instead of a dense two-photon unitary.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;
use nalgebra::DMatrix;
use rand::Rng;

use crate::error::bail;
use crate::state::{Loop, PhotonMode, TwoPhotonState, TRACE_TOL};
use crate::{Error, Result, C64};
#[allow(unused_imports)]
use num_traits::Float;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `[[cos, i sin], [i sin, cos]]` acting on `(Short, Long)` of one bin.
pub fn coin_single(theta: f64) -> [[C64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    [[C64::new(c, 0.0), C64::new(0.0, s)], [C64::new(0.0, s), C64::new(c, 0.0)]]
}

/// Shift of a single-photon amplitude vector: Long amplitude moves one bin later.
pub fn shift_single(amps: &mut [C64]) -> Result<()> {
    let n_modes = amps.len();
    if amps[n_modes - 1] != ZERO {
        return Err(Error::Overflow { round: 0 });
    }
    for m in (1..n_modes / 2).rev() {
        amps[2 * m + 1] = amps[2 * m - 1];
    }
    amps[1] = ZERO;
    Ok(())
}

/// Diagonal two-photon phase `e^{i(phi_i + phi_j)}` on the Short modes of the first `phi.len()` bins.
pub fn phase_imprint_op(phi: &[f64], n_bins: usize) -> Result<Vec<C64>> {
    if phi.len() > n_bins {
        bail!(Dimension, "{} phases for {n_bins} bins", phi.len());
    }
    let nm = 2 * n_bins;
    let single: Vec<C64> = (0..nm)
        .map(|m| {
            let pm = PhotonMode::from_index(m);
            match (pm.lp, phi.get(pm.bin - 1)) {
                (Loop::Short, Some(&p)) => C64::from_polar(1.0, p),
                _ => C64::new(1.0, 0.0),
            }
        })
        .collect();
    Ok((0..nm * nm).map(|x| single[x / nm] * single[x % nm]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkProgram {
    pub n_bins_in: usize,
    pub depth: usize,
    pub n_bins_total: usize,
    /// Row-major `depth x n_bins_total` coupler angles.
    pub angles: Vec<f64>,
    pub phase_imprint: Vec<f64>,
}

impl WalkProgram {
    /// All couplers reflecting, bins padded to `n_bins_in + depth`.
    pub fn new(n_bins_in: usize, depth: usize) -> Self {
        let n_bins_total = n_bins_in + depth;
        WalkProgram {
            n_bins_in,
            depth,
            n_bins_total,
            angles: vec![0.0; depth * n_bins_total],
            phase_imprint: vec![0.0; n_bins_in],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.len() != self.depth * self.n_bins_total {
            bail!(Dimension, "angle table has {} entries, expected {}", self.angles.len(), self.depth * self.n_bins_total);
        }
        if self.phase_imprint.len() != self.n_bins_in {
            bail!(Dimension, "phase imprint length {} != {}", self.phase_imprint.len(), self.n_bins_in);
        }
        if self.n_bins_total < self.n_bins_in {
            bail!(Dimension, "n_bins_total smaller than n_bins_in");
        }
        if let Some(a) = self.angles.iter().find(|a| !(0.0..=FRAC_PI_2 + 1e-15).contains(*a)) {
            bail!(Validation, "coupler angle {a} outside [0, pi/2]");
        }
        Ok(())
    }

    /// Angle at 1-based `round` and `bin`.
    pub fn angle(&self, round: usize, bin: usize) -> f64 {
        self.angles[(round - 1) * self.n_bins_total + bin - 1]
    }

    pub fn set(&mut self, round: usize, bin: usize, theta: f64) -> &mut Self {
        self.angles[(round - 1) * self.n_bins_total + bin - 1] = theta;
        self
    }

    pub fn with_phases(mut self, phi: &[f64]) -> Self {
        self.phase_imprint = phi.to_vec();
        self.phase_imprint.resize(self.n_bins_in, 0.0);
        self
    }

    pub fn n_modes(&self) -> usize {
        2 * self.n_bins_total
    }

    /// Noise-free single-photon propagator restricted to input Short modes.
    pub fn unitary(&self) -> Result<DMatrix<C64>> {
        single_photon_unitary(self, &self.angles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerNoise {
    pub half_width: f64,
    pub enabled: bool,
}

impl CouplerNoise {
    pub const NONE: CouplerNoise = CouplerNoise { half_width: 0.0, enabled: false };

    pub fn uniform(half_width: f64) -> Self {
        CouplerNoise { half_width, enabled: half_width > 0.0 }
    }

    /// Realized angles: each programmed angle redrawn from `[theta - w, theta + w]`,
    /// clamped to `[0, pi/2]`. Draws one number per (round, bin) when enabled.
    pub fn realize<R: Rng + ?Sized>(&self, program: &WalkProgram, rng: &mut R) -> Vec<f64> {
        if !self.enabled || self.half_width <= 0.0 {
            return program.angles.clone();
        }
        let w = self.half_width;
        program
            .angles
            .iter()
            .map(|&t| (t + rng.random_range(-w..=w)).clamp(0.0, FRAC_PI_2))
            .collect()
    }
}

/// Columns: input Short modes of bins `1..=n_bins_in` (phase imprint applied).
/// Rows: all modes of the program's `n_bins_total` bins.
pub fn single_photon_unitary(program: &WalkProgram, angles: &[f64]) -> Result<DMatrix<C64>> {
    program.validate()?;
    let nm = program.n_modes();
    let nb = program.n_bins_total;
    let mut u = DMatrix::<C64>::zeros(nm, program.n_bins_in);
    let mut amps = vec![ZERO; nm];
    for (col, &phi) in program.phase_imprint.iter().enumerate() {
        amps.iter_mut().for_each(|a| *a = ZERO);
        amps[PhotonMode::short(col + 1).index()] = C64::from_polar(1.0, phi);
        for round in 0..program.depth {
            for bin in 0..nb {
                let (s, l) = (amps[2 * bin], amps[2 * bin + 1]);
                if s == ZERO && l == ZERO {
                    continue;
                }
                let c = coin_single(angles[round * nb + bin]);
                amps[2 * bin] = c[0][0] * s + c[0][1] * l;
                amps[2 * bin + 1] = c[1][0] * s + c[1][1] * l;
            }
            shift_single(&mut amps).map_err(|_| Error::Overflow { round: round + 1 })?;
        }
        for (m, a) in amps.iter().enumerate() {
            u[(m, col)] = *a;
        }
    }
    Ok(u)
}

/// Dense joint-outcome probabilities over `n_modes x n_modes` (signal-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub n_modes: usize,
    pub probs: Vec<f64>,
}

impl Distribution {
    pub fn get(&self, signal: PhotonMode, idler: PhotonMode) -> f64 {
        let (a, b) = (signal.index(), idler.index());
        if a >= self.n_modes || b >= self.n_modes {
            return 0.0;
        }
        self.probs[a * self.n_modes + b]
    }

    /// Clamps rounding negatives and renormalizes; rejects real deficits.
    fn sanitize(mut self) -> Result<Self> {
        let mut total = 0.0;
        for p in self.probs.iter_mut() {
            if *p < -TRACE_TOL {
                bail!(Numerical, "negative probability {p}");
            }
            *p = p.max(0.0);
            total += *p;
        }
        if (total - 1.0).abs() > 1e-9 {
            bail!(Numerical, "outcome probabilities sum to {total}");
        }
        self.probs.iter_mut().for_each(|p| *p /= total);
        Ok(self)
    }

    pub fn iter_nonzero(&self) -> impl Iterator<Item = (PhotonMode, PhotonMode, f64)> + '_ {
        let n = self.n_modes;
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(move |(x, p)| (PhotonMode::from_index(x / n), PhotonMode::from_index(x % n), *p))
    }
}

pub fn outcome_distribution(state: &TwoPhotonState) -> Result<Distribution> {
    let nm = state.n_modes();
    let d = Distribution { n_modes: nm, probs: (0..nm * nm).map(|x| state.matrix()[(x, x)].re).collect() };
    d.sanitize()
}

/// Restriction of a state to the Short modes of its first `n` bins: an `n^2 x n^2` block.
pub(crate) fn short_block(state: &TwoPhotonState, n: usize) -> DMatrix<C64> {
    let nm = state.n_modes();
    let idx: Vec<usize> =
        (0..n * n).map(|x| crate::state::short_pair_index(nm, x / n + 1, x % n + 1)).collect();
    DMatrix::from_fn(n * n, n * n, |r, c| state.matrix()[(idx[r], idx[c])])
}

fn check_support(state: &TwoPhotonState, n_in: usize) -> Result<()> {
    let nm = state.n_modes();
    for x in 0..nm * nm {
        let (a, b) = (PhotonMode::from_index(x / nm), PhotonMode::from_index(x % nm));
        let inside = a.lp == Loop::Short && b.lp == Loop::Short && a.bin <= n_in && b.bin <= n_in;
        if !inside && state.matrix()[(x, x)].re > TRACE_TOL {
            bail!(Dimension, "state populates {a},{b} outside the {n_in} input bins of the program");
        }
    }
    Ok(())
}

/// `rho_out = (U x U) rho (U x U)^dag` as a dense state over the program's bins.
/// Only practical for small programs; distributions should use [`walk_distribution`].
pub fn propagate<R: Rng + ?Sized>(
    state: &TwoPhotonState,
    program: &WalkProgram,
    noise: &CouplerNoise,
    rng: &mut R,
) -> Result<TwoPhotonState> {
    let angles = noise.realize(program, rng);
    let u = single_photon_unitary(program, &angles)?;
    let n_in = program.n_bins_in.min(state.n_bins());
    check_support(state, n_in)?;
    let w = u.columns(0, n_in).into_owned();
    let uu = w.kronecker(&w);
    let rho = short_block(state, n_in);
    let out = &uu * rho * uu.adjoint();
    Ok(TwoPhotonState::from_matrix_unchecked(program.n_bins_total, out))
}

/// Diagonal of `(W x W) rho (W x W)^dag` for an `n_out x k` single-photon map `W`
/// and a `k^2 x k^2` input block, contracted one photon at a time.
pub(crate) fn contract_diagonal(w: &DMatrix<C64>, rho: &DMatrix<C64>) -> Vec<f64> {
    let (n_out, k) = (w.nrows(), w.ncols());
    let rows: Vec<usize> = (0..n_out).filter(|&a| w.row(a).iter().any(|z| *z != ZERO)).collect();
    let k2 = k * k;
    let mut probs = vec![0.0; n_out * n_out];
    // t1[y, col] = sum_x W[a,x] rho[(x,y), col]
    let mut t1 = vec![ZERO; k * k2];
    for &a in &rows {
        t1.iter_mut().for_each(|z| *z = ZERO);
        for x in 0..k {
            let wax = w[(a, x)];
            if wax == ZERO {
                continue;
            }
            for y in 0..k {
                let r = x * k + y;
                for col in 0..k2 {
                    t1[y * k2 + col] += wax * rho[(r, col)];
                }
            }
        }
        for &b in &rows {
            let mut p = ZERO;
            for col in 0..k2 {
                let (xp, yp) = (col / k, col % k);
                let bra = (w[(a, xp)] * w[(b, yp)]).conj();
                if bra == ZERO {
                    continue;
                }
                let mut t2 = ZERO;
                for y in 0..k {
                    t2 += w[(b, y)] * t1[y * k2 + col];
                }
                p += t2 * bra;
            }
            probs[a * n_out + b] = p.re;
        }
    }
    probs
}

/// Joint arrival distribution after the walk, computed without forming the
/// output density matrix.
pub fn walk_distribution(state: &TwoPhotonState, program: &WalkProgram, angles: &[f64]) -> Result<Distribution> {
    let u = single_photon_unitary(program, angles)?;
    let n_in = program.n_bins_in.min(state.n_bins());
    check_support(state, n_in)?;
    let w = u.columns(0, n_in).into_owned();
    let rho = short_block(state, n_in);
    let d = Distribution { n_modes: program.n_modes(), probs: contract_diagonal(&w, &rho) };
    d.sanitize()
}

/// Convenience: realize noise, then [`walk_distribution`].
pub fn noisy_distribution<R: Rng + ?Sized>(
    state: &TwoPhotonState,
    program: &WalkProgram,
    noise: &CouplerNoise,
    rng: &mut R,
) -> Result<Distribution> {
    let angles = noise.realize(program, rng);
    walk_distribution(state, program, &angles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::dephase;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::FRAC_PI_4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_bin_program(q: usize, r: usize, n: usize) -> WalkProgram {
        let d = r - q;
        let mut p = WalkProgram::new(n, d + 1);
        p.set(1, q, FRAC_PI_2).set(d + 1, r, FRAC_PI_4);
        p
    }

    #[test]
    fn coin_limits() {
        let id = coin_single(0.0);
        assert_eq!(id[0][0], C64::new(1.0, 0.0));
        assert_eq!(id[0][1], ZERO);
        let t = coin_single(FRAC_PI_2);
        assert_abs_diff_eq!(t[0][0].norm(), 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(t[1][0].im, 1.0);
        let b = coin_single(FRAC_PI_4);
        let h = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(b[0][0].re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1][0].im, h, epsilon = 1e-15);
        for th in [0.0, 0.3, FRAC_PI_4, 1.2, FRAC_PI_2] {
            let c = coin_single(th);
            for i in 0..2 {
                for j in 0..2 {
                    let dot: C64 = (0..2).map(|k| c[k][i].conj() * c[k][j]).sum();
                    assert_abs_diff_eq!(dot.re, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-14);
                    assert_abs_diff_eq!(dot.im, 0.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn shift_moves_long_only() {
        let mut a = vec![ZERO; 8];
        a[PhotonMode::long(1).index()] = C64::new(1.0, 0.0);
        a[PhotonMode::short(3).index()] = C64::new(0.5, 0.0);
        shift_single(&mut a).unwrap();
        assert_eq!(a[PhotonMode::long(2).index()], C64::new(1.0, 0.0));
        assert_eq!(a[PhotonMode::short(3).index()], C64::new(0.5, 0.0));
        assert_eq!(a[PhotonMode::long(1).index()], ZERO);
        let mut b = vec![ZERO; 4];
        b[3] = C64::new(1.0, 0.0);
        assert!(shift_single(&mut b).is_err());
    }

    #[test]
    fn backward_propagation_of_two_bin_program() {
        // U^dag |rS> = (|rS> - |qS>)/sqrt2
        let p = two_bin_program(2, 4, 4);
        let u = p.unitary().unwrap();
        let row = PhotonMode::short(4).index();
        let h = 1.0 / 2f64.sqrt();
        for col in 0..4 {
            let want = match col + 1 {
                4 => h,
                2 => -h,
                _ => 0.0,
            };
            assert_abs_diff_eq!(u[(row, col)].conj().re, want, epsilon = 1e-14);
            assert_abs_diff_eq!(u[(row, col)].im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn isometry_on_inputs() {
        let mut p = WalkProgram::new(5, 4);
        for r in 1..=4 {
            for b in 1..=p.n_bins_total {
                p.set(r, b, 0.13 * (r * b) as f64 % FRAC_PI_2);
            }
        }
        p.phase_imprint = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        let u = p.unitary().unwrap();
        let g = u.adjoint() * &u;
        let err = (g - DMatrix::<C64>::identity(5, 5)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn overflow_detected() {
        let mut p = WalkProgram::new(1, 1);
        p.set(1, 1, FRAC_PI_2);
        assert!(p.unitary().is_ok());
        p.n_bins_total = 1;
        p.angles = vec![FRAC_PI_2];
        assert_eq!(p.unitary(), Err(Error::Overflow { round: 1 }));
    }

    #[test]
    fn imprint_diagonal() {
        let v = phase_imprint_op(&[0.0, core::f64::consts::PI], 2);
        let v = v.unwrap();
        let nm = 4;
        let i12 = crate::state::short_pair_index(nm, 1, 2);
        let i22 = crate::state::short_pair_index(nm, 2, 2);
        assert_abs_diff_eq!(v[i12].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[i22].re, 1.0, epsilon = 1e-15);
        assert!(phase_imprint_op(&[0.0; 3], 2).is_err());
    }

    #[test]
    fn depth_zero_is_identity() {
        let s = dephase(&TwoPhotonState::mes(3), 0.2, 3).unwrap();
        let p = WalkProgram::new(3, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = propagate(&s, &p, &CouplerNoise::NONE, &mut rng).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn fast_distribution_matches_dense() {
        let s = dephase(&TwoPhotonState::mes(3).with_phases(&[0.3, -0.2, 1.1]).unwrap(), 0.3, 3).unwrap();
        let mut p = WalkProgram::new(3, 3);
        p.set(1, 1, 0.7).set(2, 2, 0.4).set(3, 3, FRAC_PI_4).set(2, 4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dense = outcome_distribution(&propagate(&s, &p, &CouplerNoise::NONE, &mut rng).unwrap()).unwrap();
        let fast = walk_distribution(&s, &p, &p.angles).unwrap();
        for (a, b) in dense.probs.iter().zip(&fast.probs) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn two_bin_coincidence_identity() {
        let h = 1.0 / 2f64.sqrt();
        let alpha = [C64::new(h, 0.0), C64::new(0.0, 0.0), C64::new(0.5, 0.0), C64::new(0.0, 0.5)];
        let s = dephase(&TwoPhotonState::pure(&alpha, &[0.0, 0.0, 0.4, 0.0]).unwrap(), 0.1, 4).unwrap();
        let p = two_bin_program(1, 3, 4);
        let d = walk_distribution(&s, &p, &p.angles).unwrap();
        let (ps, pl) = (PhotonMode::short(3), PhotonMode::long(4));
        let delta = d.get(ps, ps) + d.get(pl, pl) - d.get(ps, pl) - d.get(pl, ps);
        let want = 2.0 * (s.element(1, 1, 3, 3) + s.element(1, 3, 3, 1)).re;
        assert_abs_diff_eq!(delta, want, epsilon = 1e-14);
    }

    #[test]
    fn noise_bounds_and_noop() {
        let mut p = WalkProgram::new(4, 3);
        p.set(1, 1, FRAC_PI_2).set(2, 2, FRAC_PI_4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(CouplerNoise::NONE.realize(&p, &mut rng), p.angles);
        assert_eq!(CouplerNoise::uniform(0.0).realize(&p, &mut rng), p.angles);
        let w = 0.02 * core::f64::consts::PI;
        for _ in 0..50 {
            let a = CouplerNoise::uniform(w).realize(&p, &mut rng);
            for (x, t) in a.iter().zip(&p.angles) {
                assert!((x - t).abs() <= w + 1e-15 && (0.0..=FRAC_PI_2).contains(x));
            }
        }
    }

    #[test]
    fn mixed_two_bin_state_is_uniform() {
        let mut m = DMatrix::<C64>::zeros(16, 16);
        for (i, j) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            let x = crate::state::short_pair_index(4, i, j);
            m[(x, x)] = C64::new(0.25, 0.0);
        }
        let s = TwoPhotonState::from_matrix(2, m).unwrap();
        let d = outcome_distribution(&s).unwrap();
        assert_eq!(d.iter_nonzero().count(), 4);
        assert!(d.iter_nonzero().all(|(_, _, p)| (p - 0.25).abs() < 1e-15));
    }
}
