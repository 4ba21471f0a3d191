//! Finite-mode fermionic Fock spaces with Jordan–Wigner signs, the
//! particle-hole transformation, pair operators, and an exactly bosonic oracle.
//!
//! Bit `i` of a basis bitstring is the occupation of mode `i` of the mode set,
//! so the lexicographic mode order fixes every sign. A basis state is
//! `a*_{i1} a*_{i2} ... a*_{ik} Omega` with `i1 < i2 < ... < ik`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::krylov::dense_unitary_exp;
use crate::lattice::{FermiBall, ModeSet, Momentum};
use crate::patches::{pairs_of, PairWeight, PatchSet};
use crate::sparse::{SparseOperator, StateVector, C64, I, ONE, ZERO};

pub const MAX_FULL_MODES: usize = 28;
pub const MAX_SECTOR_DIM: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sector {
    Full,
    FixedParticleNumber(usize),
    /// Total occupation `<= m` (after the particle-hole transformation this
    /// bounds the excitation number).
    ExcitationCutoff(usize),
    /// Equal numbers of occupied modes inside and outside the ball, i.e. the
    /// image of a fixed-`N` sector under the particle-hole transformation;
    /// optionally at most `max_pairs` pairs.
    ParticleHole { max_pairs: Option<usize> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladder {
    Create,
    Annihilate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockSpace {
    modes: ModeSet,
    sector: Sector,
    basis: Vec<u64>,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// All `k`-subsets of the bit positions in `positions`, as masks.
fn subsets(positions: &[usize], k: usize) -> Vec<u64> {
    let n = positions.len();
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(binomial(n, k) as usize);
    if k == 0 {
        out.push(0);
        return out;
    }
    // Gosper's hack over local indices, then map to positions.
    let mut x: u64 = (1u64 << k) - 1;
    let limit = 1u64 << n;
    while x < limit {
        let mut mask = 0u64;
        let mut bits = x;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            mask |= 1 << positions[b];
            bits &= bits - 1;
        }
        out.push(mask);
        let c = x & x.wrapping_neg();
        let r = x + c;
        x = (((r ^ x) >> 2) / c) | r;
    }
    out
}

fn too_large(what: &str, size: u128, limit: u128) -> Error {
    Error::TooLarge { what: what.into(), size, limit }
}

impl FockSpace {
    pub fn new(modes: ModeSet, sector: Sector) -> Result<Self> {
        let n = modes.len();
        let all: Vec<usize> = (0..n).collect();
        let inside: Vec<usize> = (0..n).filter(|&i| modes.is_inside(i)).collect();
        let outside: Vec<usize> = (0..n).filter(|&i| !modes.is_inside(i)).collect();
        let mut basis = match sector {
            Sector::Full => {
                if n > MAX_FULL_MODES {
                    return Err(too_large("full Fock space (modes)", n as u128, MAX_FULL_MODES as u128));
                }
                (0..(1u64 << n)).collect()
            }
            Sector::FixedParticleNumber(k) => {
                let size = binomial(n, k);
                if size > MAX_SECTOR_DIM {
                    return Err(too_large("fixed-particle sector", size, MAX_SECTOR_DIM));
                }
                subsets(&all, k)
            }
            Sector::ExcitationCutoff(m) => {
                let size: u128 = (0..=m.min(n)).map(|j| binomial(n, j)).sum();
                if size > MAX_SECTOR_DIM {
                    return Err(too_large("excitation-cutoff sector", size, MAX_SECTOR_DIM));
                }
                (0..=m.min(n)).flat_map(|j| subsets(&all, j)).collect()
            }
            Sector::ParticleHole { max_pairs } => {
                let top = max_pairs.unwrap_or(n).min(inside.len()).min(outside.len());
                let size: u128 = (0..=top).map(|j| binomial(inside.len(), j) * binomial(outside.len(), j)).sum();
                if size > MAX_SECTOR_DIM {
                    return Err(too_large("particle-hole sector", size, MAX_SECTOR_DIM));
                }
                let mut v = Vec::with_capacity(size as usize);
                for j in 0..=top {
                    let ins = subsets(&inside, j);
                    let outs = subsets(&outside, j);
                    for a in &ins {
                        for b in &outs {
                            v.push(a | b);
                        }
                    }
                }
                v
            }
        };
        basis.sort_unstable();
        Ok(FockSpace { modes, sector, basis })
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }
    pub fn sector(&self) -> Sector {
        self.sector
    }
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
    pub fn basis(&self) -> &[u64] {
        &self.basis
    }
    pub fn state(&self, i: usize) -> u64 {
        self.basis[i]
    }
    pub fn index_of(&self, bits: u64) -> Option<usize> {
        self.basis.binary_search(&bits).ok()
    }

    /// Index of the all-empty state, if it belongs to the sector.
    pub fn vacuum_index(&self) -> Option<usize> {
        self.index_of(0)
    }

    pub fn vacuum(&self) -> Result<StateVector> {
        let i = self
            .vacuum_index()
            .ok_or_else(|| Error::InvalidParameter("sector does not contain the vacuum".into()))?;
        Ok(StateVector::basis(self.dim(), i))
    }

    pub fn mode_index(&self, p: Momentum) -> Result<usize> {
        self.modes.index_of(p).ok_or(Error::UnknownMode(p.to_array()))
    }

    /// Applies `ops` right to left to a bitstring: returns the image and sign.
    pub fn apply_string(bits: u64, ops: &[(Ladder, usize)]) -> Option<(u64, f64)> {
        let mut x = bits;
        let mut sign = 1.0;
        for &(kind, i) in ops.iter().rev() {
            let bit = 1u64 << i;
            let occupied = x & bit != 0;
            match kind {
                Ladder::Create if occupied => return None,
                Ladder::Annihilate if !occupied => return None,
                _ => {}
            }
            if (x & (bit - 1)).count_ones() % 2 == 1 {
                sign = -sign;
            }
            x ^= bit;
        }
        Some((x, sign))
    }

    /// Matrix of a product of ladder operators (leftmost applied last),
    /// restricted to the space.
    pub fn ladder_string(&self, ops: &[(Ladder, usize)], coeff: C64) -> SparseOperator {
        let mut trip = Vec::new();
        for (col, &b) in self.basis.iter().enumerate() {
            if let Some((y, s)) = Self::apply_string(b, ops) {
                if let Some(row) = self.index_of(y) {
                    trip.push((row, col, coeff * s));
                }
            }
        }
        SparseOperator::from_triplets(self.dim(), self.dim(), trip)
    }

    /// Sum of weighted ladder strings, built in one pass.
    pub fn ladder_sum(&self, terms: &[(C64, Vec<(Ladder, usize)>)]) -> SparseOperator {
        let mut trip = Vec::new();
        for (col, &b) in self.basis.iter().enumerate() {
            for (c, ops) in terms {
                if let Some((y, s)) = Self::apply_string(b, ops) {
                    if let Some(row) = self.index_of(y) {
                        trip.push((row, col, *c * s));
                    }
                }
            }
        }
        SparseOperator::from_triplets(self.dim(), self.dim(), trip)
    }

    pub fn a_dagger(&self, p: Momentum) -> Result<SparseOperator> {
        Ok(self.ladder_string(&[(Ladder::Create, self.mode_index(p)?)], ONE))
    }

    pub fn a(&self, p: Momentum) -> Result<SparseOperator> {
        Ok(self.ladder_string(&[(Ladder::Annihilate, self.mode_index(p)?)], ONE))
    }

    /// Diagonal operator `f(bitstring)`.
    pub fn diagonal_op(&self, f: impl Fn(u64) -> f64) -> SparseOperator {
        SparseOperator::diagonal(&self.basis.iter().map(|&b| f(b)).collect::<Vec<_>>())
    }

    /// Number operator `N`.
    pub fn number(&self) -> SparseOperator {
        self.diagonal_op(|b| b.count_ones() as f64)
    }

    /// `(N + shift)^power`.
    pub fn number_power(&self, shift: f64, power: f64) -> SparseOperator {
        self.diagonal_op(|b| (b.count_ones() as f64 + shift).powf(power))
    }

    /// The filled-ball basis state `Omega_0`, with the sign of
    /// `a*_{j1} ... a*_{jN} Omega` (ascending ball modes).
    pub fn filled_ball(&self) -> Result<StateVector> {
        let mask = self.modes.inside_mask();
        let i = self
            .index_of(mask)
            .ok_or_else(|| Error::InvalidParameter("sector does not contain the filled ball".into()))?;
        Ok(StateVector::basis(self.dim(), i))
    }
}

/// Particle-hole transformation `R` on bitstrings.
///
/// `R0 |x> = prod_{i in x} (R a*_i R) Omega_0` with `R a*_i R = a_i` inside the
/// ball. `R0^2 = c` with `c = +-1`; the returned phase makes `R = phase * R0`
/// an involution (`phase = i` when `c = -1`).
#[derive(Clone, Debug)]
pub struct ParticleHole {
    inside_mask: u64,
    phase: C64,
}

impl ParticleHole {
    pub fn new(modes: &ModeSet) -> Self {
        let inside_mask = modes.inside_mask();
        let mut ph = ParticleHole { inside_mask, phase: ONE };
        let (y, s1) = ph.map_bits_raw(0);
        let (z, s2) = ph.map_bits_raw(y);
        debug_assert_eq!(z, 0);
        ph.phase = if s1 * s2 > 0.0 { ONE } else { I };
        ph
    }

    fn omega0(&self) -> (u64, f64) {
        let ops: Vec<(Ladder, usize)> =
            (0..64).filter(|i| self.inside_mask >> i & 1 == 1).map(|i| (Ladder::Create, i)).collect();
        FockSpace::apply_string(0, &ops).expect("filled ball")
    }

    fn map_bits_raw(&self, bits: u64) -> (u64, f64) {
        let (start, s0) = self.omega0();
        let ops: Vec<(Ladder, usize)> = (0..64)
            .filter(|i| bits >> i & 1 == 1)
            .map(|i| (if self.inside_mask >> i & 1 == 1 { Ladder::Annihilate } else { Ladder::Create }, i))
            .collect();
        let (y, s) = FockSpace::apply_string(start, &ops).expect("particle-hole image exists");
        (y, s * s0)
    }

    /// Image bitstring and amplitude of `R |bits>`.
    pub fn map_bits(&self, bits: u64) -> (u64, C64) {
        let (y, s) = self.map_bits_raw(bits);
        (y, self.phase * s)
    }

    pub fn phase(&self) -> C64 {
        self.phase
    }

    /// `R` as a map `from -> to` (rows index `to`). Errors if some image falls
    /// outside `to`.
    pub fn matrix_between(&self, from: &FockSpace, to: &FockSpace) -> Result<SparseOperator> {
        let mut trip = Vec::with_capacity(from.dim());
        for (col, &b) in from.basis().iter().enumerate() {
            let (y, amp) = self.map_bits(b);
            let row = to
                .index_of(y)
                .ok_or_else(|| Error::InvalidParameter(format!("particle-hole image {y:#b} not in target space")))?;
            trip.push((row, col, amp));
        }
        Ok(SparseOperator::from_triplets(to.dim(), from.dim(), trip))
    }
}

/// `R` on a space closed under the transformation (e.g. `Full`).
pub fn particle_hole(space: &FockSpace) -> Result<SparseOperator> {
    ParticleHole::new(space.modes()).matrix_between(space, space)
}

/// `c*_alpha(k) = (1/n) sum a*_p a*_{p-k'}` over the pairs inside the mode set.
/// `n` is taken from the pairs actually present so the operator is normalized
/// on the truncated space.
#[derive(Clone, Debug)]
pub struct PairOperator {
    pub weight: PairWeight,
    /// Pair members as mode indices `(particle, hole)`.
    pub pairs: Vec<(usize, usize)>,
    pub create: SparseOperator,
    pub annihilate: SparseOperator,
}

pub fn pair_operator(space: &FockSpace, ball: &FermiBall, ps: &PatchSet, weight: &PairWeight) -> Result<PairOperator> {
    let pairs = pairs_of(ball, ps, weight, space.modes());
    if pairs.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no pairs for alpha = {} and k = {} inside the mode set",
            weight.alpha, weight.k
        )));
    }
    let idx: Vec<(usize, usize)> =
        pairs.iter().map(|&(p, h)| Ok((space.mode_index(p)?, space.mode_index(h)?))).collect::<Result<_>>()?;
    let n = (idx.len() as f64).sqrt();
    let terms: Vec<(C64, Vec<(Ladder, usize)>)> = idx
        .iter()
        .map(|&(p, h)| (C64::new(1.0 / n, 0.0), vec![(Ladder::Create, p), (Ladder::Create, h)]))
        .collect();
    let create = space.ladder_sum(&terms);
    let annihilate = create.adjoint();
    let mut weight = weight.clone();
    weight.count_sq = idx.len() as u64;
    weight.n = n;
    Ok(PairOperator { weight, pairs: idx, create, annihilate })
}

/// `E_alpha(k,k') = [c_alpha(k), c*_alpha(k')] - delta_{kk'}`.
pub fn ccr_error(c: &PairOperator, c2: &PairOperator) -> SparseOperator {
    let comm = c.annihilate.commutator(&c2.create);
    if c.weight.k == c2.weight.k && c.weight.alpha == c2.weight.alpha {
        comm.sub(&SparseOperator::identity(comm.nrows()))
    } else {
        comm
    }
}

/// Truncated bosonic Fock space over a list of modes.
#[derive(Clone, Debug)]
pub struct BosonicOracleSpace {
    pub modes: Vec<OracleMode>,
    pub n_max: usize,
    dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleMode {
    pub k: Momentum,
    pub alpha: usize,
    pub epsilon: f64,
    pub coupling: f64,
}

impl BosonicOracleSpace {
    pub fn new(modes: Vec<OracleMode>, n_max: usize) -> Result<Self> {
        let size = (n_max as u128 + 1).checked_pow(modes.len() as u32).unwrap_or(u128::MAX);
        if size > MAX_SECTOR_DIM {
            return Err(too_large("bosonic oracle space", size, MAX_SECTOR_DIM));
        }
        Ok(BosonicOracleSpace { modes, n_max, dim: size as usize })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Occupations of basis state `i` (mode 0 is the slowest digit).
    pub fn occupations(&self, mut i: usize) -> Vec<usize> {
        let base = self.n_max + 1;
        let mut occ = vec![0; self.modes.len()];
        for slot in occ.iter_mut().rev() {
            *slot = i % base;
            i /= base;
        }
        occ
    }

    fn stride(&self, j: usize) -> usize {
        (self.n_max + 1).pow((self.modes.len() - 1 - j) as u32)
    }

    pub fn annihilation(&self, j: usize) -> SparseOperator {
        let stride = self.stride(j);
        let mut trip = Vec::new();
        for col in 0..self.dim {
            let occ = self.occupations(col)[j];
            if occ > 0 {
                trip.push((col - stride, col, C64::new((occ as f64).sqrt(), 0.0)));
            }
        }
        SparseOperator::from_triplets(self.dim, self.dim, trip)
    }

    pub fn creation(&self, j: usize) -> SparseOperator {
        self.annihilation(j).adjoint()
    }

    pub fn boson_number(&self) -> SparseOperator {
        SparseOperator::diagonal(
            &(0..self.dim).map(|i| self.occupations(i).iter().sum::<usize>() as f64).collect::<Vec<_>>(),
        )
    }

    /// `N_fermion = 2 * (boson number)`.
    pub fn fermion_number(&self) -> SparseOperator {
        self.boson_number().scale_real(2.0)
    }

    pub fn vacuum(&self) -> StateVector {
        StateVector::basis(self.dim, 0)
    }

    /// `e^{c*(eta) - c(eta)}` applied to the vacuum. The modes commute, so the
    /// truncated exponential is the tensor product of one small dense
    /// exponential per mode.
    pub fn weyl_vacuum(&self, eta: &[C64]) -> Result<StateVector> {
        if eta.len() != self.modes.len() {
            return Err(Error::InvalidParameter(format!("{} amplitudes for {} oracle modes", eta.len(), self.modes.len())));
        }
        let base = self.n_max + 1;
        let mut out = vec![ONE];
        for &a in eta {
            let mut b = DMatrix::<C64>::zeros(base, base);
            for n in 1..base {
                let s = (n as f64).sqrt();
                b[(n, n - 1)] = a * s;
                b[(n - 1, n)] = -a.conj() * s;
            }
            let column = dense_unitary_exp(&b).column(0).clone_owned();
            out = out.iter().flat_map(|&x| column.iter().map(move |&y| x * y)).collect();
        }
        Ok(StateVector(out))
    }

    /// Weight of basis states with some mode at the cutoff.
    pub fn tail_mass(&self, psi: &[C64]) -> f64 {
        (0..self.dim)
            .filter(|&i| self.occupations(i).contains(&self.n_max))
            .map(|i| psi[i].norm_sqr())
            .sum()
    }

    /// Indicator of the interior (every occupation below `n_max`).
    pub fn interior(&self) -> Vec<usize> {
        (0..self.dim).filter(|&i| self.occupations(i).iter().all(|&o| o < self.n_max)).collect()
    }
}

/// Sparse operator restricted to a subset of the basis, for dense checks.
pub fn restrict(op: &SparseOperator, keep: &[usize]) -> SparseOperator {
    op.restrict(keep)
}

pub fn zero_state(dim: usize) -> StateVector {
    StateVector(vec![ZERO; dim])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gosper_subsets_are_complete_and_sorted() {
        let pos = [0, 2, 3, 5, 6];
        let s = subsets(&pos, 2);
        assert_eq!(s.len(), 10);
        let mut sorted = s.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 10);
        assert!(s.iter().all(|m| m.count_ones() == 2 && m & !0b1101101 == 0));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(19, 7), 50388);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn jordan_wigner_sign() {
        // a*_0 a*_1 Omega = |11>, a*_1 a*_0 Omega = -|11>
        let a = FockSpace::apply_string(0, &[(Ladder::Create, 0), (Ladder::Create, 1)]).unwrap();
        let b = FockSpace::apply_string(0, &[(Ladder::Create, 1), (Ladder::Create, 0)]).unwrap();
        assert_eq!(a, (0b11, 1.0));
        assert_eq!(b, (0b11, -1.0));
    }

    #[test]
    fn factorized_weyl_matches_krylov() {
        use crate::krylov::{expm_hermitian, KrylovOptions};
        let mode = |e: f64| OracleMode { k: Momentum::new(0, 0, 1), alpha: 1, epsilon: e, coupling: 1.0 };
        let space = BosonicOracleSpace::new(vec![mode(0.5), mode(1.0), mode(2.0)], 9).unwrap();
        let eta = [C64::new(0.3, -0.4), C64::new(-0.2, 0.1), C64::new(0.0, 0.6)];
        let mut gen = SparseOperator::zero(space.dim(), space.dim());
        for (j, &a) in eta.iter().enumerate() {
            gen = gen.add(&space.creation(j).scale(a)).sub(&space.annihilation(j).scale(a.conj()));
        }
        let (krylov, _) = expm_hermitian(&gen.scale(I), &space.vacuum(), 1.0, KrylovOptions::default()).unwrap();
        let direct = space.weyl_vacuum(&eta).unwrap();
        let diff: f64 = krylov.iter().zip(direct.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(diff < 1e-9, "{diff}");
    }
}
