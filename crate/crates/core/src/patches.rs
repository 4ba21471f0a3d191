//! Equal-area patch decomposition of the Fermi sphere, per-`k` index sets and
//! exact pair counts `m_alpha(k)^2`.
//!
//! Patch indices are 1-based: `1..=M/2` cover the northern hemisphere (index 1
//! is the polar cap) and `alpha + M/2` is the antipodal image of `alpha`.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lattice::{lattice_points_within, FermiBall, ModeSet, Momentum};

const ANGLE_EPS: f64 = 1e-12;

/// `M = N^{16/45}` rounded to the nearest even integer, at least 2.
pub fn default_patch_count(n: usize) -> usize {
    let target = (n as f64).powf(16.0 / 45.0);
    let m = 2.0 * (target / 2.0).round();
    (m as usize).max(2)
}

pub const DEFAULT_DELTA: f64 = 2.0 / 15.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Azimuth {
    FullRing,
    Interval(f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub alpha: usize,
    pub center: [f64; 3],
    pub area: f64,
    /// Polar interval measured from the patch's own pole (north for
    /// `alpha <= M/2`, south otherwise).
    pub polar: (f64, f64),
    pub azimuth: Azimuth,
}

impl Patch {
    pub fn is_geographic_north(&self, m: usize) -> bool {
        self.alpha <= m / 2
    }

    fn contains_north(&self, theta: f64, phi: f64) -> bool {
        if theta < self.polar.0 - ANGLE_EPS || theta > self.polar.1 + ANGLE_EPS {
            return false;
        }
        match self.azimuth {
            Azimuth::FullRing => true,
            Azimuth::Interval(a, b) => {
                let inside = |p: f64| p >= a - ANGLE_EPS && p <= b + ANGLE_EPS;
                inside(phi) || inside(phi - 2.0 * PI)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    m: usize,
    corridor_halfwidth: f64,
    kf: f64,
    n: usize,
    delta: f64,
    patches: Vec<Patch>,
    corridor_area: f64,
    whole_sphere: bool,
    collars: Vec<usize>,
    warnings: Vec<String>,
}

/// Builds the cap/collar decomposition; `corridor_halfwidth` is `R` in lattice
/// units, giving corridors of angular width `2R/kF`.
pub fn build_patch_set(m: usize, kf: f64, n: usize, delta: f64, corridor_halfwidth: f64) -> Result<PatchSet> {
    if m < 2 || !m.is_multiple_of(2) {
        return Err(Error::Patch(format!("M must be even and >= 2, got {m}")));
    }
    if !(corridor_halfwidth >= 0.0) {
        return Err(Error::Patch(format!("corridor half-width must be >= 0, got {corridor_halfwidth}")));
    }
    if corridor_halfwidth > 0.0 && !(kf > 0.0) {
        return Err(Error::Patch("corridors need kF > 0".into()));
    }
    let half = if corridor_halfwidth > 0.0 { corridor_halfwidth / kf } else { 0.0 };
    let mf = m as f64;
    let cells = m / 2 - 1;
    let collars = collar_split(m, cells);

    // cos of the polar boundaries, pole first.
    let mut cos_bounds = vec![1.0, 1.0 - 2.0 / mf];
    let mut acc = 0usize;
    for &c in &collars {
        acc += c;
        cos_bounds.push(if acc == cells { 0.0 } else { 1.0 - 2.0 * (1 + acc) as f64 / mf });
    }
    if cells == 0 {
        cos_bounds[1] = 0.0;
    }
    let theta: Vec<f64> = cos_bounds.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect();

    let mut north = Vec::with_capacity(m / 2);
    let mut lost = 0.0;
    // polar cap
    {
        let top = 0.0;
        let bot = theta[1] - half;
        if bot <= 0.0 {
            return Err(Error::Patch("corridor swallows the polar cap".into()));
        }
        let area = 2.0 * PI * (1.0 - bot.cos());
        lost += 2.0 * PI * (1.0 - theta[1].cos()) - area;
        north.push(Patch { alpha: 1, center: [0.0, 0.0, 1.0], area, polar: (top, bot), azimuth: Azimuth::FullRing });
    }
    for (j, &count) in collars.iter().enumerate() {
        let (a0, b0) = (theta[j + 1], theta[j + 2]);
        let (a, b) = (a0 + half, b0 - half);
        if b <= a {
            return Err(Error::Patch(format!("corridor swallows collar {}", j + 1)));
        }
        let band = a.cos() - b.cos();
        let band0 = a0.cos() - b0.cos();
        let mid = 0.5 * (a0 + b0);
        let cos_c = 0.5 * (a.cos() + b.cos());
        let sin_c = (1.0 - cos_c * cos_c).max(0.0).sqrt();
        for i in 0..count {
            let width = 2.0 * PI / count as f64;
            let (azimuth, dphi, phi_c) = if count == 1 {
                (Azimuth::FullRing, 2.0 * PI, PI)
            } else {
                let shrink = if half > 0.0 { half / mid.sin() } else { 0.0 };
                let (pa, pb) = (i as f64 * width + shrink, (i + 1) as f64 * width - shrink);
                if pb <= pa {
                    return Err(Error::Patch(format!("corridor swallows a cell of collar {}", j + 1)));
                }
                (Azimuth::Interval(pa, pb), pb - pa, 0.5 * (pa + pb))
            };
            let area = dphi * band;
            lost += width * band0 - area;
            north.push(Patch {
                alpha: north.len() + 1,
                center: [sin_c * phi_c.cos(), sin_c * phi_c.sin(), cos_c],
                area,
                polar: (a, b),
                azimuth,
            });
        }
    }
    debug_assert_eq!(north.len(), m / 2);
    let mut patches = north.clone();
    for p in &north {
        patches.push(Patch {
            alpha: p.alpha + m / 2,
            center: [-p.center[0], -p.center[1], -p.center[2]],
            ..p.clone()
        });
    }
    let mut warnings = Vec::new();
    let nf = n as f64;
    if n > 1 && (mf <= nf.powf(2.0 * delta) || mf >= nf.powf(2.0 / 3.0 - 2.0 * delta)) {
        warnings.push(format!(
            "M = {m} outside the admissible window ({:.3}, {:.3})",
            nf.powf(2.0 * delta),
            nf.powf(2.0 / 3.0 - 2.0 * delta)
        ));
    }
    Ok(PatchSet {
        m,
        corridor_halfwidth,
        kf,
        n,
        delta,
        patches,
        corridor_area: 2.0 * lost,
        whole_sphere: false,
        collars,
        warnings,
    })
}

/// Cells per collar: `ceil(sqrt(M)/2)` collars of equal polar width, counts
/// rounded cumulatively; collars that would be empty are merged away.
fn collar_split(m: usize, cells: usize) -> Vec<usize> {
    if cells == 0 {
        return Vec::new();
    }
    let mf = m as f64;
    let theta_cap = (1.0 - 2.0 / mf).acos();
    let mut n_col = ((mf.sqrt() / 2.0).ceil() as usize).clamp(1, cells);
    loop {
        let step = (PI / 2.0 - theta_cap) / n_col as f64;
        let mut out = Vec::with_capacity(n_col);
        let mut cum_ideal = 0.0;
        let mut prev = 0usize;
        for j in 0..n_col {
            let a = theta_cap + j as f64 * step;
            let b = if j + 1 == n_col { PI / 2.0 } else { a + step };
            cum_ideal += 0.5 * mf * (a.cos() - b.cos());
            let cum = if j + 1 == n_col { cells } else { (cum_ideal.round() as usize).min(cells) };
            out.push(cum.saturating_sub(prev));
            prev = cum.max(prev);
        }
        if out.iter().all(|&c| c > 0) || n_col == 1 {
            return out;
        }
        n_col -= 1;
    }
}

impl PatchSet {
    /// A single patch covering the whole sphere with threshold 0; used to
    /// count every shell pair without geometric filtering.
    pub fn whole_sphere(kf: f64, n: usize) -> PatchSet {
        PatchSet {
            m: 1,
            corridor_halfwidth: 0.0,
            kf,
            n,
            delta: 0.0,
            patches: vec![Patch {
                alpha: 1,
                center: [0.0, 0.0, 1.0],
                area: 4.0 * PI,
                polar: (0.0, PI),
                azimuth: Azimuth::FullRing,
            }],
            corridor_area: 0.0,
            whole_sphere: true,
            collars: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn kf(&self) -> f64 {
        self.kf
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn corridor_halfwidth(&self) -> f64 {
        self.corridor_halfwidth
    }
    pub fn corridor_area(&self) -> f64 {
        self.corridor_area
    }
    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }
    pub fn patch(&self, alpha: usize) -> &Patch {
        &self.patches[alpha - 1]
    }
    pub fn is_whole_sphere(&self) -> bool {
        self.whole_sphere
    }
    /// Cells per collar (the cap excluded).
    pub fn collars(&self) -> &[usize] {
        &self.collars
    }
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
    pub fn total_area(&self) -> f64 {
        self.patches.iter().map(|p| p.area).sum()
    }

    /// The index-set threshold `N^{-delta}` (0 for the whole-sphere patch).
    pub fn threshold(&self) -> f64 {
        if self.whole_sphere {
            0.0
        } else {
            (self.n as f64).powf(-self.delta)
        }
    }

    /// Patch containing the direction of `p`; ties go to the lower index.
    /// The origin is assigned to patch 1. Points in corridors give `None`.
    pub fn patch_of(&self, p: Momentum) -> Option<usize> {
        if self.whole_sphere || p == Momentum::ZERO {
            return Some(1);
        }
        let [x, y, z] = p.as_f64();
        let (x, y, z, offset) = if z >= 0.0 { (x, y, z, 0) } else { (-x, -y, -z, self.m / 2) };
        let theta = (x * x + y * y).sqrt().atan2(z);
        let mut phi = y.atan2(x);
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        self.patches[..self.m / 2].iter().find(|pa| pa.contains_north(theta, phi)).map(|pa| pa.alpha + offset)
    }
}

/// Sign of the hemisphere rule: pairs use `p - sign*k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Hemisphere {
    North,
    South,
}

impl Hemisphere {
    pub fn sign(self) -> i64 {
        match self {
            Hemisphere::North => 1,
            Hemisphere::South => -1,
        }
    }
    pub fn label(self) -> &'static str {
        match self {
            Hemisphere::North => "north",
            Hemisphere::South => "south",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexSet {
    pub k: Momentum,
    pub north: Vec<usize>,
    pub south: Vec<usize>,
}

impl IndexSet {
    pub fn hemisphere_of(&self, alpha: usize) -> Option<Hemisphere> {
        if self.north.contains(&alpha) {
            Some(Hemisphere::North)
        } else if self.south.contains(&alpha) {
            Some(Hemisphere::South)
        } else {
            None
        }
    }

    pub fn all(&self) -> impl Iterator<Item = (usize, Hemisphere)> + '_ {
        let mut v: Vec<(usize, Hemisphere)> = self
            .north
            .iter()
            .map(|&a| (a, Hemisphere::North))
            .chain(self.south.iter().map(|&a| (a, Hemisphere::South)))
            .collect();
        v.sort();
        v.into_iter()
    }
}

pub fn index_set(ps: &PatchSet, k: Momentum) -> IndexSet {
    let tau = ps.threshold();
    let mut north = Vec::new();
    let mut south = Vec::new();
    if ps.whole_sphere {
        north.push(1);
    } else {
        for p in &ps.patches {
            let d = k.dot(p.center);
            if d >= tau {
                north.push(p.alpha);
            } else if d <= -tau {
                south.push(p.alpha);
            }
        }
    }
    IndexSet { k, north, south }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairWeight {
    pub alpha: usize,
    pub k: Momentum,
    pub hemisphere: Hemisphere,
    /// Exact number of pairs `m_alpha(k)^2`.
    pub count_sq: u64,
    /// `n_alpha(k) = sqrt(m^2)`.
    pub n: f64,
    /// `eps_alpha(k) = 2 kF |k . omega_alpha|`.
    pub epsilon: f64,
    /// `k . omega_alpha`.
    pub k_dot_omega: f64,
}

impl PairWeight {
    /// The shift `k'` used by the pairs `(p, p - k')`.
    pub fn shift(&self) -> Momentum {
        if self.hemisphere == Hemisphere::North {
            self.k
        } else {
            -self.k
        }
    }
}

/// All pair weights over `k` in `gamma` and `alpha` in `I_k`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct WeightTable {
    pub entries: Vec<PairWeight>,
    /// `(k, alpha)` pairs of `I_k` dropped for having no pairs.
    pub dropped: Vec<(Momentum, usize)>,
}

impl WeightTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn for_k(&self, k: Momentum) -> impl Iterator<Item = &PairWeight> {
        self.entries.iter().filter(move |w| w.k == k)
    }
    pub fn get(&self, k: Momentum, alpha: usize) -> Option<&PairWeight> {
        self.entries.iter().find(|w| w.k == k && w.alpha == alpha)
    }
}

/// Lattice points in the shell `kF^2 < |p|^2 <= (kF + reach)^2`.
fn shell(ball: &FermiBall, reach: f64) -> Vec<Momentum> {
    let outer = ((ball.kf() + reach).powi(2) + 1e-9).floor() as i64;
    lattice_points_within(outer).into_iter().filter(|p| !ball.contains(*p)).collect()
}

/// Counts `#{p : p in B_F^c and B_alpha, p - k' in B_F and B_alpha}` for every
/// `alpha` in `I_k`, keyed by alpha. `modes` restricts both members of a pair.
fn counts_for_k(
    ball: &FermiBall,
    ps: &PatchSet,
    k: Momentum,
    idx: &IndexSet,
    shell_pts: &[Momentum],
    cache: &HashMap<Momentum, Option<usize>>,
    modes: Option<&ModeSet>,
) -> HashMap<usize, u64> {
    let mut counts: HashMap<usize, u64> = HashMap::new();
    let lookup = |q: Momentum| cache.get(&q).copied().unwrap_or_else(|| ps.patch_of(q));
    let in_modes = |q: Momentum| modes.is_none_or(|ms| ms.contains(q));
    for &p in shell_pts {
        if !in_modes(p) {
            continue;
        }
        let Some(ap) = lookup(p) else { continue };
        let hemi = match idx.hemisphere_of(ap) {
            Some(h) => h,
            None => continue,
        };
        let h = if hemi == Hemisphere::North { p - k } else { p + k };
        if ball.contains(h) && in_modes(h) && lookup(h) == Some(ap) {
            *counts.entry(ap).or_insert(0) += 1;
        }
    }
    counts
}

fn weight_for(ps: &PatchSet, k: Momentum, alpha: usize, hemi: Hemisphere, count: u64) -> PairWeight {
    let kdw = if ps.whole_sphere { k.norm() } else { k.dot(ps.patch(alpha).center) };
    PairWeight {
        alpha,
        k,
        hemisphere: hemi,
        count_sq: count,
        n: (count as f64).sqrt(),
        epsilon: 2.0 * ps.kf * kdw.abs(),
        k_dot_omega: kdw,
    }
}

/// Exact pair count for a single `(alpha, k)`; `alpha` must lie in `I_k`.
pub fn pair_count(ball: &FermiBall, ps: &PatchSet, alpha: usize, k: Momentum) -> Result<PairWeight> {
    let idx = index_set(ps, k);
    let hemi = idx
        .hemisphere_of(alpha)
        .ok_or_else(|| Error::Patch(format!("alpha = {alpha} is not in I_k for k = {k}")))?;
    let pts = shell(ball, k.norm());
    let counts = counts_for_k(ball, ps, k, &idx, &pts, &HashMap::new(), None);
    Ok(weight_for(ps, k, alpha, hemi, counts.get(&alpha).copied().unwrap_or(0)))
}

/// Weights for every `k` in `gamma` and `alpha` in `I_k`; zero counts are
/// moved to `dropped`. With `modes`, only pairs inside the mode set count.
pub fn weight_table(ball: &FermiBall, ps: &PatchSet, gamma: &[Momentum], modes: Option<&ModeSet>) -> WeightTable {
    let reach = gamma.iter().map(|k| k.norm()).fold(0.0, f64::max);
    let pts = shell(ball, reach);
    let cache: HashMap<Momentum, Option<usize>> = pts.iter().map(|&p| (p, ps.patch_of(p))).collect();
    let mut table = WeightTable::default();
    for &k in gamma {
        let idx = index_set(ps, k);
        let counts = counts_for_k(ball, ps, k, &idx, &pts, &cache, modes);
        for (alpha, hemi) in idx.all() {
            match counts.get(&alpha) {
                Some(&c) if c > 0 => table.entries.push(weight_for(ps, k, alpha, hemi, c)),
                _ => table.dropped.push((k, alpha)),
            }
        }
    }
    table
}

/// The explicit pairs `(p, p - k')` of a weight, restricted to `modes`.
pub fn pairs_of(ball: &FermiBall, ps: &PatchSet, w: &PairWeight, modes: &ModeSet) -> Vec<(Momentum, Momentum)> {
    let shift = w.shift();
    modes
        .modes()
        .iter()
        .filter(|p| !ball.contains(**p))
        .filter_map(|&p| {
            let h = p - shift;
            (ball.contains(h) && modes.contains(h) && ps.patch_of(p) == Some(w.alpha) && ps.patch_of(h) == Some(w.alpha))
                .then_some((p, h))
        })
        .collect()
}

/// `sqrt((4 pi kF^2 / M) |k . omega_alpha|)`.
pub fn n_alpha_asymptotic(ps: &PatchSet, alpha: usize, k: Momentum) -> f64 {
    let kdw = k.dot(ps.patch(alpha).center).abs();
    (4.0 * PI * ps.kf * ps.kf / ps.m as f64 * kdw).sqrt()
}

/// Pair-count sums over the two signed halves of `I_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedSums {
    /// `sum_{alpha in I_k^+} m_alpha(k)^2`.
    pub north: f64,
    /// `sum_{alpha in I_k^-} m_alpha(k)^2`.
    pub south: f64,
    /// `kF^2 |k| pi`, the asymptotic value of each half.
    pub comparator: f64,
}

impl SignedSums {
    pub fn total(&self) -> f64 {
        self.north + self.south
    }
    /// Largest relative deviation of either half from the comparator.
    pub fn worst_error(&self) -> f64 {
        (self.north / self.comparator - 1.0).abs().max((self.south / self.comparator - 1.0).abs())
    }
}

pub fn sum_n_squared(ball: &FermiBall, ps: &PatchSet, k: Momentum) -> SignedSums {
    signed_sums(&weight_table(ball, ps, &[k], None), ps.kf, k)
}

/// Signed sums for `k` read off an existing table.
pub fn signed_sums(table: &WeightTable, kf: f64, k: Momentum) -> SignedSums {
    let mut north = 0.0;
    let mut south = 0.0;
    for w in table.for_k(k) {
        match w.hemisphere {
            Hemisphere::North => north += w.count_sq as f64,
            Hemisphere::South => south += w.count_sq as f64,
        }
    }
    SignedSums { north, south, comparator: kf * kf * k.norm() * PI }
}

/// One row of `patches stats`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchStatRow {
    pub k: Momentum,
    pub alpha: usize,
    pub hemisphere: Hemisphere,
    pub m_sq: u64,
    pub n_asym_sq: f64,
    pub ratio: f64,
}

pub fn patch_stats(ps: &PatchSet, table: &WeightTable) -> Vec<PatchStatRow> {
    table
        .entries
        .iter()
        .map(|w| {
            let asym = n_alpha_asymptotic(ps, w.alpha, w.k).powi(2);
            PatchStatRow {
                k: w.k,
                alpha: w.alpha,
                hemisphere: w.hemisphere,
                m_sq: w.count_sq,
                n_asym_sq: asym,
                ratio: w.count_sq as f64 / asym,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_m_is_even() {
        for n in [7, 19, 33, 1000, 268_000] {
            assert_eq!(default_patch_count(n) % 2, 0);
        }
        assert_eq!(default_patch_count(7), 2);
    }

    #[test]
    fn collar_split_sums_to_cells() {
        for m in (2..=200).step_by(2) {
            let cells = m / 2 - 1;
            let c = collar_split(m, cells);
            assert_eq!(c.iter().sum::<usize>(), cells, "M={m}");
            assert!(c.iter().all(|&x| x > 0));
        }
    }
}
