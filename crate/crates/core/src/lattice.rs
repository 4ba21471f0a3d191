//! Momentum-lattice geometry: the Fermi ball, the interaction support and its
//! half-set, and truncated mode sets used by the Fock simulator.
//!
//! Every radius comparison is done on integer squared norms.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Integer lattice momentum. Ordering is lexicographic in `(kx, ky, kz)` and
/// fixes every fermionic sign convention downstream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Momentum {
    pub kx: i64,
    pub ky: i64,
    pub kz: i64,
}

impl Momentum {
    pub const ZERO: Momentum = Momentum { kx: 0, ky: 0, kz: 0 };

    pub const fn new(kx: i64, ky: i64, kz: i64) -> Self {
        Momentum { kx, ky, kz }
    }

    pub fn norm_sq(self) -> i64 {
        self.kx * self.kx + self.ky * self.ky + self.kz * self.kz
    }

    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn dot(self, v: [f64; 3]) -> f64 {
        self.kx as f64 * v[0] + self.ky as f64 * v[1] + self.kz as f64 * v[2]
    }

    pub fn as_f64(self) -> [f64; 3] {
        [self.kx as f64, self.ky as f64, self.kz as f64]
    }

    pub fn to_array(self) -> [i64; 3] {
        [self.kx, self.ky, self.kz]
    }

    /// Lexicographic half-space representative test used for the half-set.
    pub fn is_positive_representative(self) -> bool {
        self.kz > 0 || (self.kz == 0 && self.ky > 0) || (self.kz == 0 && self.ky == 0 && self.kx > 0)
    }
}

impl std::ops::Add for Momentum {
    type Output = Momentum;
    fn add(self, o: Momentum) -> Momentum {
        Momentum::new(self.kx + o.kx, self.ky + o.ky, self.kz + o.kz)
    }
}

impl std::ops::Sub for Momentum {
    type Output = Momentum;
    fn sub(self, o: Momentum) -> Momentum {
        Momentum::new(self.kx - o.kx, self.ky - o.ky, self.kz - o.kz)
    }
}

impl std::ops::Neg for Momentum {
    type Output = Momentum;
    fn neg(self) -> Momentum {
        Momentum::new(-self.kx, -self.ky, -self.kz)
    }
}

impl fmt::Display for Momentum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.kx, self.ky, self.kz)
    }
}

/// Integer bound on squared norms for a real radius, robust to `r*r` landing
/// just below an integer (e.g. `sqrt(2)^2`).
pub fn radius_sq_floor(radius: f64) -> i64 {
    (radius * radius + 1e-9).floor() as i64
}

/// All lattice points with `|k|^2 <= r2`, sorted lexicographically.
pub fn lattice_points_within(r2: i64) -> Vec<Momentum> {
    let r = (r2.max(0) as f64).sqrt().floor() as i64 + 1;
    let mut out = Vec::new();
    for kx in -r..=r {
        for ky in -r..=r {
            for kz in -r..=r {
                let k = Momentum::new(kx, ky, kz);
                if k.norm_sq() <= r2 {
                    out.push(k);
                }
            }
        }
    }
    out
}

/// The Fermi ball `B_F = {k : |k| <= kF}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FermiBall {
    kf: f64,
    radius_sq: i64,
    modes: Vec<Momentum>,
    energy_pw: i64,
}

impl FermiBall {
    pub fn new(kf: f64) -> Result<Self> {
        if !(kf >= 0.0) || !kf.is_finite() {
            return Err(Error::InvalidParameter(format!("kF must be finite and >= 0, got {kf}")));
        }
        let radius_sq = radius_sq_floor(kf);
        let modes = lattice_points_within(radius_sq);
        let energy_pw = modes.iter().map(|k| k.norm_sq()).sum();
        Ok(FermiBall { kf, radius_sq, modes, energy_pw })
    }

    pub fn kf(&self) -> f64 {
        self.kf
    }

    /// `floor(kF^2)`, the integer membership bound.
    pub fn radius_sq(&self) -> i64 {
        self.radius_sq
    }

    pub fn modes(&self) -> &[Momentum] {
        &self.modes
    }

    /// Particle number `N = |B_F|`.
    pub fn n(&self) -> usize {
        self.modes.len()
    }

    /// Plane-wave energy `sum |k|^2` over the ball.
    pub fn energy_pw(&self) -> i64 {
        self.energy_pw
    }

    pub fn contains(&self, k: Momentum) -> bool {
        k.norm_sq() <= self.radius_sq
    }
}

/// Shorthand for [`FermiBall::new`].
pub fn build_fermi_ball(kf: f64) -> Result<FermiBall> {
    FermiBall::new(kf)
}

/// Even, nonnegative interaction potential with finite support.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    values: BTreeMap<Momentum, f64>,
    norm_l1: f64,
    norm_l2: f64,
    norm_weighted: f64,
}

impl Potential {
    /// Entries with value zero are dropped from the support.
    pub fn new(entries: impl IntoIterator<Item = (Momentum, f64)>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, v) in entries {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Potential(format!("value at {k} must be finite and >= 0, got {v}")));
            }
            if values.insert(k, v).is_some() {
                return Err(Error::Potential(format!("duplicate entry for {k}")));
            }
        }
        for (&k, &v) in &values {
            match values.get(&-k) {
                Some(&w) if w == v => {}
                Some(&w) => {
                    return Err(Error::Potential(format!("not even: V({k}) = {v} but V({}) = {w}", -k)))
                }
                None => return Err(Error::Potential(format!("not even: {k} present but {} missing", -k))),
            }
        }
        values.retain(|_, v| *v != 0.0);
        let norm_l1 = values.values().sum();
        let norm_l2 = values.values().map(|v| v * v).sum::<f64>().sqrt();
        let norm_weighted = values.iter().map(|(k, v)| k.norm() * v * v).sum::<f64>().sqrt();
        Ok(Potential { values, norm_l1, norm_l2, norm_weighted })
    }

    /// `V(k) = value` on the six nearest neighbours `|k| = 1`.
    pub fn unit_shell(value: f64) -> Result<Self> {
        Self::shell(1, value)
    }

    /// Constant `value` on every nonzero `k` with `|k|^2 <= r2`.
    pub fn shell(r2: i64, value: f64) -> Result<Self> {
        Self::new(
            lattice_points_within(r2)
                .into_iter()
                .filter(|k| *k != Momentum::ZERO)
                .map(|k| (k, value)),
        )
    }

    /// Reads `kx ky kz value` lines; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let perr = |msg: String| Error::Parse { path: origin.to_string(), line: i + 1, msg };
            if fields.len() != 4 {
                return Err(perr(format!("expected `kx ky kz value`, got {} fields", fields.len())));
            }
            let mut k = [0i64; 3];
            for (slot, f) in k.iter_mut().zip(&fields[..3]) {
                *slot = f.parse().map_err(|_| perr(format!("bad integer `{f}`")))?;
            }
            let v: f64 = fields[3].parse().map_err(|_| perr(format!("bad number `{}`", fields[3])))?;
            entries.push((Momentum::new(k[0], k[1], k[2]), v));
        }
        Self::new(entries)
    }

    pub fn value(&self, k: Momentum) -> f64 {
        self.values.get(&k).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = Momentum> + '_ {
        self.values.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Momentum, f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    pub fn support_len(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_l1(&self) -> f64 {
        self.norm_l1
    }

    pub fn norm_l2(&self) -> f64 {
        self.norm_l2
    }

    /// `(sum_k |k| V(k)^2)^{1/2}` over the full support; the constant of the
    /// small-time branch of the eta bound.
    pub fn norm_weighted(&self) -> f64 {
        self.norm_weighted
    }

    /// Largest `|k|` in the support (0 for the zero potential).
    pub fn support_radius(&self) -> f64 {
        self.values.keys().map(|k| k.norm()).fold(0.0, f64::max)
    }

    pub fn max_norm_sq(&self) -> i64 {
        self.values.keys().map(|k| k.norm_sq()).max().unwrap_or(0)
    }
}

/// One representative of each `+-k` pair of the support.
pub fn gamma_set(v: &Potential) -> Result<Vec<Momentum>> {
    if v.values.contains_key(&Momentum::ZERO) {
        return Err(Error::Potential("support contains 0, which has no half-set representative".into()));
    }
    Ok(v.support().filter(|k| k.is_positive_representative()).collect())
}

/// Ordered modes with inside/outside flags relative to a Fermi ball.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSet {
    modes: Vec<Momentum>,
    inside: Vec<bool>,
    radius_sq: i64,
}

impl ModeSet {
    /// Explicit mode list (sorted and deduplicated); must contain the whole ball.
    pub fn from_modes(ball: &FermiBall, modes: impl IntoIterator<Item = Momentum>) -> Result<Self> {
        let mut modes: Vec<Momentum> = modes.into_iter().collect();
        modes.sort();
        modes.dedup();
        for k in ball.modes() {
            if modes.binary_search(k).is_err() {
                return Err(Error::InvalidParameter(format!("mode set is missing ball mode {k}")));
            }
        }
        if modes.len() > 64 {
            return Err(Error::TooLarge { what: "mode set".into(), size: modes.len() as u128, limit: 64 });
        }
        let inside = modes.iter().map(|k| ball.contains(*k)).collect();
        Ok(ModeSet { modes, inside, radius_sq: ball.radius_sq() })
    }

    pub fn modes(&self) -> &[Momentum] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn is_inside(&self, i: usize) -> bool {
        self.inside[i]
    }

    pub fn index_of(&self, k: Momentum) -> Option<usize> {
        self.modes.binary_search(&k).ok()
    }

    pub fn contains(&self, k: Momentum) -> bool {
        self.index_of(k).is_some()
    }

    /// Bit mask of the modes inside the ball.
    pub fn inside_mask(&self) -> u64 {
        self.inside.iter().enumerate().filter(|(_, &b)| b).fold(0u64, |m, (i, _)| m | (1 << i))
    }

    pub fn n_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// `floor(kF^2)` of the ball the flags refer to.
    pub fn ball_radius_sq(&self) -> i64 {
        self.radius_sq
    }
}

/// Every lattice point with `|p| <= p_cut`, flagged against `ball`.
///
/// `V` is accepted so callers can check hop coverage; the truncation itself is
/// purely radial.
pub fn build_mode_set(ball: &FermiBall, _v: &Potential, p_cut: f64) -> Result<ModeSet> {
    if p_cut + 1e-12 < ball.kf() {
        return Err(Error::InvalidParameter(format!("p_cut = {p_cut} is below kF = {}", ball.kf())));
    }
    ModeSet::from_modes(ball, lattice_points_within(radius_sq_floor(p_cut)))
}
