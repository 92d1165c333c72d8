//! Constructors for the measurement walks and the bookkeeping of which
//! output modes trace back to which input bins.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use core::fmt::Write;
use nalgebra::DMatrix;

use crate::certify::observable_coefficients;
use crate::error::bail;
use crate::state::{Loop, PhotonMode};
use crate::walk::WalkProgram;
use crate::{Result, C64};
#[allow(unused_imports)]
use num_traits::Float;

const T: f64 = FRAC_PI_2;
const B: f64 = FRAC_PI_4;

/// Coupler angle that keeps a third of the Short amplitude's weight in place.
pub fn third_keep_angle() -> f64 {
    (1.0 / 3f64.sqrt()).acos()
}

/// Coupler angle that keeps two thirds in place.
pub fn two_thirds_keep_angle() -> f64 {
    (2.0f64 / 3.0).sqrt().acos()
}

/// Balanced interference of copies of `bins` at Short port `port` and Long
/// port `port + 1`. `scale` is the factor by which the raw coincidence
/// imbalance is smaller than for full-weight copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Locus {
    pub bins: Vec<usize>,
    pub port: usize,
    pub scale: f64,
}

impl Locus {
    pub fn short_port(&self) -> PhotonMode {
        PhotonMode::short(self.port)
    }

    pub fn long_port(&self) -> PhotonMode {
        PhotonMode::long(self.port + 1)
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.bins[0], self.bins[1])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairingPlan {
    pub loci: Vec<Locus>,
}

impl PairingPlan {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.loci.iter().filter(|l| l.bins.len() == 2).map(|l| l.pair())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub program: WalkProgram,
    pub plan: PairingPlan,
}

/// Round-robin schedule by the circle method; bins are 1-based, pairs ordered.
pub fn round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n < 2 {
        return Vec::new();
    }
    let m = n + n % 2;
    let spin = m - 1;
    (0..spin)
        .map(|k| {
            let mut pairs = vec![(m - 1, k)];
            for i in 1..m / 2 {
                pairs.push(((k + i) % spin, (k + spin - i) % spin));
            }
            let mut out: Vec<(usize, usize)> = pairs
                .into_iter()
                .filter(|&(a, b)| a < n && b < n)
                .map(|(a, b)| (a.min(b) + 1, a.max(b) + 1))
                .collect();
            out.sort();
            out
        })
        .collect()
}

/// Each pair's earlier bin is sent into the Long loop just early enough to
/// meet its partner in the final round, where a balanced splitter closes it.
pub fn compound_setting(n: usize, pairs: &[(usize, usize)]) -> Setting {
    let dmax = pairs.iter().map(|&(q, r)| r - q).max().unwrap_or(0);
    let mut program = WalkProgram::new(n, dmax + 1);
    let mut loci = Vec::new();
    for &(q, r) in pairs {
        let d = r - q;
        program.set(dmax - d + 1, q, T).set(dmax + 1, r, B);
        loci.push(Locus { bins: vec![q, r], port: r, scale: 1.0 });
    }
    Setting { program, plan: PairingPlan { loci } }
}

pub fn compound_settings(n: usize) -> Result<Vec<Setting>> {
    if n < 2 {
        bail!(Unsupported, "compound scheme needs at least 2 bins, got {n}");
    }
    Ok(round_robin(n).iter().map(|m| compound_setting(n, m)).collect())
}

/// One nearest-neighbour locus per adjacent pair, two rounds deep.
pub fn phase_estimation_program(n: usize) -> Result<Setting> {
    if n < 2 {
        bail!(Unsupported, "phase estimation needs at least 2 bins, got {n}");
    }
    let mut program = WalkProgram::new(n, 2);
    for b in 1..=n {
        program.set(1, b, B);
    }
    for b in 2..=n {
        program.set(2, b, B);
    }
    let loci = (2..=n).map(|j| Locus { bins: vec![j - 1, j], port: j, scale: 0.25 }).collect();
    Ok(Setting { program, plan: PairingPlan { loci } })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub bin: usize,
    /// Phase as a power of `i`.
    pub quarter_turns: u8,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputTrace {
    pub mode: PhotonMode,
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceMap {
    pub outputs: Vec<OutputTrace>,
}

impl TraceMap {
    /// Reads contributions off a noise-free single-photon propagator. Each
    /// loop switch contributes a factor `i`, so all phases are powers of `i`.
    pub fn from_unitary(u: &DMatrix<C64>) -> Result<Self> {
        let mut outputs = Vec::new();
        for row in 0..u.nrows() {
            let mut contributions = Vec::new();
            for col in 0..u.ncols() {
                let z = u[(row, col)];
                if z.norm() < 1e-12 {
                    continue;
                }
                let q = z.arg() / FRAC_PI_2;
                let qr = q.round();
                if (q - qr).abs() > 1e-9 {
                    bail!(Numerical, "amplitude {z} is not a power of i times a real weight");
                }
                contributions.push(Contribution {
                    bin: col + 1,
                    quarter_turns: (qr as i64).rem_euclid(4) as u8,
                    weight: z.norm(),
                });
            }
            if !contributions.is_empty() {
                outputs.push(OutputTrace { mode: PhotonMode::from_index(row), contributions });
            }
        }
        Ok(TraceMap { outputs })
    }

    pub fn get(&self, mode: PhotonMode) -> Option<&OutputTrace> {
        self.outputs.iter().find(|o| o.mode == mode)
    }
}

pub fn is_power_of_two(n: usize) -> bool {
    n >= 2 && n.is_power_of_two()
}

/// Output window of the single-setting walk: Short at bins `N..3N/2-1`,
/// Long at `3N/2..2N-1`.
pub fn single_setting_window(n: usize) -> Vec<PhotonMode> {
    let h = n / 2;
    let mut w: Vec<PhotonMode> = (n..n + h).map(PhotonMode::short).collect();
    w.extend((n + h..2 * n).map(PhotonMode::long));
    w
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    lp: Loop,
    bin: usize,
    round: usize,
}

impl Packet {
    fn at(&self, round: usize) -> usize {
        match self.lp {
            Loop::Short => self.bin,
            Loop::Long => self.bin + round - self.round,
        }
    }
}

#[derive(Default)]
struct Events(BTreeMap<(usize, usize), f64>);

impl Events {
    fn put(&mut self, round: usize, bin: usize, theta: f64) {
        if let Some(old) = self.0.insert((round, bin), theta) {
            assert_eq!(old, theta, "conflicting coupler settings at round {round}, bin {bin}");
        }
    }

    fn last_round(&self) -> usize {
        self.0.keys().map(|k| k.0).max().unwrap_or(0)
    }
}

fn split(bin: usize, round: usize) -> [Packet; 2] {
    [Packet { lp: Loop::Short, bin, round }, Packet { lp: Loop::Long, bin, round }]
}

/// Recursive full-interference walk for `N = 2^n`.
///
/// The first stage delays the earlier half onto the later half. Every later
/// stage merges neighbouring groups: Long copies of the left group that sit on
/// Short copies of the right group are mixed at once, the remaining Short
/// copies on the left are sent into the Long loop and the remaining Long copies
/// on the right are parked until the two meet, innermost first.
pub fn single_setting(n: usize) -> Result<(WalkProgram, TraceMap)> {
    if !is_power_of_two(n) {
        bail!(Unsupported, "single-setting walk needs a power of two >= 2, got {n}");
    }
    let depth = 2 * (n - 1);
    let h = n / 2;
    let mut ev = Events::default();
    for b in 1..=h {
        ev.put(1, b, T);
    }
    let mut groups: Vec<Vec<Packet>> = Vec::new();
    for b in h + 1..=n {
        ev.put(h + 1, b, B);
        groups.push(split(b, h + 1).to_vec());
    }
    while groups.len() > 1 {
        let start = ev.last_round() + 1;
        let mut next = Vec::new();
        for pair in groups.chunks(2) {
            let (left, right) = (&pair[0], &pair[1]);
            let mut merged = Vec::new();
            let mut left_short: Vec<Packet> = Vec::new();
            let mut right_long: Vec<Packet> = Vec::new();
            let mut used_right = vec![false; right.len()];
            for p in left {
                let x = p.at(start);
                let hit = right.iter().position(|q| q.lp == Loop::Short && q.bin == x);
                match (p.lp, hit) {
                    (Loop::Long, Some(k)) => {
                        used_right[k] = true;
                        ev.put(start, x, B);
                        merged.extend(split(x, start));
                    }
                    (Loop::Short, _) => left_short.push(*p),
                    (Loop::Long, None) => bail!(Numerical, "unpaired Long copy at bin {x}, round {start}"),
                }
            }
            for (k, q) in right.iter().enumerate() {
                if !used_right[k] {
                    if q.lp != Loop::Long {
                        bail!(Numerical, "unpaired Short copy at bin {}, round {start}", q.bin);
                    }
                    right_long.push(*q);
                }
            }
            if left_short.len() != right_long.len() {
                bail!(Numerical, "unbalanced merge at round {start}");
            }
            left_short.sort_by_key(|m| core::cmp::Reverse(m.bin));
            right_long.sort_by_key(|q| q.at(start));
            for (p, q) in left_short.iter().zip(&right_long) {
                let (x, y) = (p.bin, q.at(start));
                ev.put(start, x, T);
                ev.put(start, y, T);
                ev.put(start + y - x, y, B);
                merged.extend(split(y, start + y - x));
            }
            next.push(merged);
        }
        groups = next;
    }
    if ev.last_round() > depth {
        bail!(Numerical, "construction exceeded depth {depth}");
    }
    let mut program = WalkProgram::new(n, depth);
    for (&(r, b), &theta) in &ev.0 {
        program.set(r, b, theta);
    }
    let trace = TraceMap::from_unitary(&program.unitary()?)?;
    Ok((program, trace))
}

/// Loci read off a noise-free walk: Short port `r` and Long port `r + 1`
/// carrying copies of the same two bins.
pub fn find_two_bin_loci(program: &WalkProgram) -> Result<Vec<Locus>> {
    let trace = TraceMap::from_unitary(&program.unitary()?)?;
    let mut loci = Vec::new();
    for o in &trace.outputs {
        if o.mode.lp != Loop::Short || o.contributions.len() != 2 {
            continue;
        }
        let Some(l) = trace.get(PhotonMode::long(o.mode.bin + 1)) else { continue };
        let bins: Vec<usize> = o.contributions.iter().map(|c| c.bin).collect();
        if l.contributions.iter().map(|c| c.bin).collect::<Vec<_>>() != bins {
            continue;
        }
        let w: f64 = o.contributions.iter().chain(&l.contributions).map(|c| c.weight * c.weight).product();
        loci.push(Locus { bins, port: o.mode.bin, scale: 4.0 * w.sqrt() });
    }
    Ok(loci)
}

/// Pair of interference branches whose photons share one bin of origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSign {
    /// Short port of the branch where the signal is detected.
    pub signal_port: usize,
    pub idler_port: usize,
    /// Bins `(i, j, k)`: signal traces to `i, k`, idler to `j, k`.
    pub bins: (usize, usize, usize),
    pub sign: i8,
}

/// Two branches `(signal_port, idler_port)` with disjoint bins `(i, j)` and `(k, l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPair {
    pub signal_port: usize,
    pub idler_port: usize,
    pub bins: (usize, usize, usize, usize),
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComprehensiveScheme {
    pub program: WalkProgram,
    pub plan: PairingPlan,
    pub trace: TraceMap,
    pub shared: Vec<BranchSign>,
    pub disjoint: Vec<BranchPair>,
}

/// Port imbalance `p(rS,qS) + p(r'L,q'L) - p(rS,q'L) - p(r'L,qS)`.
pub fn branch_imbalance(signal: &Locus, idler: &Locus) -> Vec<((PhotonMode, PhotonMode), f64)> {
    let (a, a2) = (signal.short_port(), signal.long_port());
    let (b, b2) = (idler.short_port(), idler.long_port());
    vec![((a, b), 1.0), ((a2, b2), 1.0), ((a, b2), -1.0), ((a2, b), -1.0)]
}

/// Single walk realizing all six two-bin loci for `N = 4` with copies of a
/// third of each bin's weight. Depth five: no four-round layout exists in
/// which every locus mixes single-bin copies.
pub fn comprehensive_program(n: usize) -> Result<ComprehensiveScheme> {
    if n != 4 {
        bail!(Unsupported, "comprehensive walk is only defined for 4 bins, got {n}");
    }
    let (keep_third, keep_two_thirds) = (third_keep_angle(), two_thirds_keep_angle());
    let mut program = WalkProgram::new(4, 5);
    program.set(1, 1, keep_third).set(1, 2, keep_two_thirds).set(1, 3, keep_two_thirds).set(1, 4, T);
    program.set(2, 5, keep_two_thirds);
    program.set(3, 6, B);
    program.set(4, 1, T).set(4, 2, B).set(4, 3, B).set(4, 4, B).set(4, 7, T);
    for b in 2..=7 {
        program.set(5, b, B);
    }
    let trace = TraceMap::from_unitary(&program.unitary()?)?;
    let loci = find_two_bin_loci(&program)?;
    if loci.len() != 6 {
        bail!(Numerical, "comprehensive walk realizes {} loci", loci.len());
    }
    let u = program.unitary()?;
    let mut shared = Vec::new();
    let mut disjoint = Vec::new();
    for s in &loci {
        for t in &loci {
            if s.port == t.port {
                continue;
            }
            let common: Vec<usize> = s.bins.iter().filter(|b| t.bins.contains(b)).cloned().collect();
            let obs = branch_imbalance(s, t);
            let coeff = observable_coefficients(&u, 4, &obs);
            match common.as_slice() {
                [k] => {
                    let i = *s.bins.iter().find(|b| *b != k).unwrap();
                    let j = *t.bins.iter().find(|b| *b != k).unwrap();
                    let c = coeff[(pair_idx(4, *k, *k), pair_idx(4, i, j))].re;
                    shared.push(BranchSign {
                        signal_port: s.port,
                        idler_port: t.port,
                        bins: (i, j, *k),
                        sign: if c > 0.0 { 1 } else { -1 },
                    });
                }
                [] => {
                    let (i, j, k, l) = (s.bins[0], s.bins[1], t.bins[0], t.bins[1]);
                    let c = coeff[(pair_idx(4, i, k), pair_idx(4, j, l))].re;
                    disjoint.push(BranchPair {
                        signal_port: s.port,
                        idler_port: t.port,
                        bins: (i, j, k, l),
                        sign: if c > 0.0 { 1 } else { -1 },
                    });
                }
                _ => {}
            }
        }
    }
    Ok(ComprehensiveScheme { program, plan: PairingPlan { loci }, trace, shared, disjoint })
}

#[inline]
pub(crate) fn pair_idx(n: usize, i: usize, j: usize) -> usize {
    (i - 1) * n + (j - 1)
}

/// The three four-bin settings for two photon pairs: each pairs the bins as a
/// compound setting with loci on the adjacent central bins 3 and 4, then
/// merges the Long output of the bin-3 locus with the Short output of the
/// bin-4 locus one round later.
pub fn multi_spdc_settings(n: usize) -> Result<Vec<Setting>> {
    if n != 4 {
        bail!(Unsupported, "multi-pair settings are only defined for 4 bins, got {n}");
    }
    let merged = |port| Locus { bins: vec![1, 2, 3, 4], port, scale: 1.0 };
    // (1,2),(3,4): bin 2 is parked at bin 3 while bin 3 leaves, so both loci
    // land on bins 3 and 4 in the same round.
    let mut a = WalkProgram::new(4, 4);
    a.set(1, 1, T).set(1, 2, T).set(2, 3, T).set(3, 3, B).set(3, 4, B).set(4, 4, B);
    let mut b = WalkProgram::new(4, 4);
    b.set(1, 1, T).set(1, 2, T).set(3, 3, B).set(3, 4, B).set(4, 4, B);
    let mut c = WalkProgram::new(4, 5);
    c.set(1, 1, T).set(3, 2, T).set(4, 3, B).set(4, 4, B).set(5, 4, B);
    Ok([a, b, c]
        .into_iter()
        .map(|program| Setting { program, plan: PairingPlan { loci: vec![merged(4)] } })
        .collect())
}

fn angle_label(theta: f64) -> String {
    if theta == 0.0 {
        String::from(".")
    } else if (theta - T).abs() < 1e-12 {
        String::from("T")
    } else if (theta - B).abs() < 1e-12 {
        String::from("B")
    } else {
        format!("{:.3}", theta)
    }
}

/// Bin-by-round grid: coupler setting and occupied loops at the start of each round.
pub fn diagram(program: &WalkProgram) -> Result<String> {
    program.validate()?;
    let nb = program.n_bins_total;
    let mut occ = vec![[false; 2]; nb];
    for o in occ.iter_mut().take(program.n_bins_in) {
        o[0] = true;
    }
    let mut amps: Vec<Vec<C64>> = (0..program.n_bins_in)
        .map(|b| {
            let mut v = vec![C64::new(0.0, 0.0); 2 * nb];
            v[2 * b] = C64::new(1.0, 0.0);
            v
        })
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:>5} |", "round");
    for b in 1..=nb {
        let _ = write!(out, "{:>8}", b);
    }
    out.push('\n');
    for round in 1..=program.depth {
        let _ = write!(out, "{:>5} |", round);
        for (b, o) in occ.iter().enumerate() {
            let mark = match o {
                [true, true] => "SL",
                [true, false] => "S",
                [false, true] => "L",
                _ => "",
            };
            let cell = if mark.is_empty() { String::from("-") } else { format!("{}:{}", angle_label(program.angle(round, b + 1)), mark) };
            let _ = write!(out, "{:>8}", cell);
        }
        out.push('\n');
        for v in amps.iter_mut() {
            for b in 0..nb {
                let c = crate::walk::coin_single(program.angle(round, b + 1));
                let (s, l) = (v[2 * b], v[2 * b + 1]);
                v[2 * b] = c[0][0] * s + c[0][1] * l;
                v[2 * b + 1] = c[1][0] * s + c[1][1] * l;
            }
            crate::walk::shift_single(v).map_err(|_| crate::Error::Overflow { round })?;
        }
        for (b, o) in occ.iter_mut().enumerate() {
            *o = [
                amps.iter().any(|v| v[2 * b].norm() > 1e-12),
                amps.iter().any(|v| v[2 * b + 1].norm() > 1e-12),
            ];
        }
    }
    let _ = write!(out, "{:>5} |", "out");
    for o in &occ {
        let mark = match o {
            [true, true] => "SL",
            [true, false] => "S",
            [false, true] => "L",
            _ => "-",
        };
        let _ = write!(out, "{:>8}", mark);
    }
    out.push('\n');
    Ok(out)
}
