//! Sparse Hamiltonians: the microscopic model, its particle-hole transformed
//! pieces, the bosonized kinetic energy, the effective Hamiltonian and the
//! Weyl operator.

use nalgebra::DMatrix;

use crate::coherent::ImpurityCoupling;
use crate::error::{Error, Result};
use crate::fock::{pair_operator, BosonicOracleSpace, FockSpace, Ladder, PairOperator, ParticleHole, Sector};
use crate::krylov::{dense_unitary_exp, expm_hermitian, KrylovOptions, KrylovStats};
use crate::lattice::{gamma_set, lattice_points_within, FermiBall, ModeSet, Momentum, Potential};
use crate::patches::{build_patch_set, default_patch_count, weight_table, PatchSet, WeightTable, DEFAULT_DELTA};
use crate::sparse::{SparseOperator, StateVector, C64, CERT_TOL, I, ONE, ZERO};

/// Dimension up to which the Weyl operator is formed as a dense matrix.
pub const DENSE_WEYL_LIMIT: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ImpurityMode {
    /// `y = 0`, no impurity kinetic term.
    Static,
    /// Impurity momenta `|q|^2 <= q_cut_sq` with kinetic term `beta |q|^2`.
    Truncated { q_cut_sq: i64, beta: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpuritySpace {
    momenta: Vec<Momentum>,
    beta: f64,
}

impl ImpuritySpace {
    pub fn new(mode: ImpurityMode) -> Result<Self> {
        match mode {
            ImpurityMode::Static => Ok(ImpuritySpace { momenta: vec![Momentum::ZERO], beta: 0.0 }),
            ImpurityMode::Truncated { q_cut_sq, beta } => {
                if q_cut_sq < 0 || !(beta >= 0.0) {
                    return Err(Error::InvalidParameter("truncated impurity needs q_cut^2 >= 0 and beta >= 0".into()));
                }
                Ok(ImpuritySpace { momenta: lattice_points_within(q_cut_sq), beta })
            }
        }
    }

    pub fn is_static(&self) -> bool {
        self.momenta.len() == 1 && self.beta == 0.0
    }
    pub fn dim(&self) -> usize {
        self.momenta.len()
    }
    pub fn momenta(&self) -> &[Momentum] {
        &self.momenta
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Multiplication by `e^{iky}`: `|q> -> |q + k>`, out-of-range images dropped.
    pub fn shift(&self, k: Momentum) -> SparseOperator {
        if self.dim() == 1 && self.momenta[0] == Momentum::ZERO && self.beta == 0.0 {
            return SparseOperator::identity(1);
        }
        let trip = self
            .momenta
            .iter()
            .enumerate()
            .filter_map(|(c, &q)| self.momenta.binary_search(&(q + k)).ok().map(|r| (r, c, ONE)))
            .collect();
        SparseOperator::from_triplets(self.dim(), self.dim(), trip)
    }

    /// `-Delta_y`, diagonal `|q|^2`.
    pub fn laplacian(&self) -> SparseOperator {
        SparseOperator::diagonal(&self.momenta.iter().map(|q| q.norm_sq() as f64).collect::<Vec<_>>())
    }

    /// `h_0 = -beta Delta_y`.
    pub fn kinetic(&self) -> SparseOperator {
        self.laplacian().scale_real(self.beta)
    }

    pub fn plane_wave(&self, q: Momentum) -> Result<StateVector> {
        let i = self.momenta.binary_search(&q).map_err(|_| Error::UnknownMode(q.to_array()))?;
        Ok(StateVector::basis(self.dim(), i))
    }
}

/// Treatment of hops `a*_p a_{p-k}` whose target lies outside the mode set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HopPolicy {
    #[default]
    Drop,
    Reject,
}

/// A desk-scale system in the particle-hole picture.
#[derive(Clone, Debug)]
pub struct DeskSystem {
    pub ball: FermiBall,
    pub potential: Potential,
    pub lambda: f64,
    pub patches: PatchSet,
    /// Pair weights counted inside the mode set.
    pub weights: WeightTable,
    pub fock: FockSpace,
    pub impurity: ImpuritySpace,
    pub pairs: Vec<PairOperator>,
}

#[derive(Clone, Debug)]
pub struct DeskConfig {
    pub kf: f64,
    pub lambda: f64,
    pub potential: Potential,
    pub modes: Vec<Momentum>,
    pub sector: Sector,
    pub impurity: ImpurityMode,
    pub m: Option<usize>,
    pub delta: f64,
}

impl DeskConfig {
    pub fn new(kf: f64, lambda: f64, potential: Potential, modes: Vec<Momentum>, sector: Sector) -> Self {
        DeskConfig { kf, lambda, potential, modes, sector, impurity: ImpurityMode::Static, m: None, delta: DEFAULT_DELTA }
    }
}

impl DeskSystem {
    pub fn new(cfg: &DeskConfig) -> Result<Self> {
        let ball = FermiBall::new(cfg.kf)?;
        let modes = ModeSet::from_modes(&ball, cfg.modes.iter().copied())?;
        let m = cfg.m.unwrap_or_else(|| default_patch_count(ball.n()));
        let patches = build_patch_set(m, cfg.kf, ball.n(), cfg.delta, 0.0)?;
        let gamma = gamma_set(&cfg.potential)?;
        let weights = weight_table(&ball, &patches, &gamma, Some(&modes));
        let fock = FockSpace::new(modes, cfg.sector)?;
        let pairs = weights
            .entries
            .iter()
            .map(|w| pair_operator(&fock, &ball, &patches, w))
            .collect::<Result<Vec<_>>>()?;
        Ok(DeskSystem {
            ball,
            potential: cfg.potential.clone(),
            lambda: cfg.lambda,
            patches,
            weights,
            fock,
            impurity: ImpuritySpace::new(cfg.impurity)?,
            pairs,
        })
    }

    pub fn dim(&self) -> usize {
        self.impurity.dim() * self.fock.dim()
    }

    pub fn e_pw(&self) -> f64 {
        self.ball.energy_pw() as f64
    }

    /// `1 (x) op`.
    pub fn lift(&self, op: &SparseOperator) -> SparseOperator {
        if self.impurity.dim() == 1 {
            return op.clone();
        }
        SparseOperator::identity(self.impurity.dim()).kron(op)
    }

    /// `e^{iky} (x) op`.
    pub fn couple(&self, k: Momentum, op: &SparseOperator) -> SparseOperator {
        if self.impurity.dim() == 1 {
            return op.clone();
        }
        self.impurity.shift(k).kron(op)
    }

    pub fn number(&self) -> SparseOperator {
        self.lift(&self.fock.number())
    }

    /// `phi (x) Omega` with `phi` the plane wave `q0` (ignored when static).
    pub fn product_vacuum(&self, q0: Momentum) -> Result<StateVector> {
        let phi = if self.impurity.dim() == 1 { StateVector::basis(1, 0) } else { self.impurity.plane_wave(q0)? };
        let omega = self.fock.vacuum()?;
        let mut out = Vec::with_capacity(self.dim());
        for a in phi.iter() {
            out.extend(omega.iter().map(|b| a * b));
        }
        Ok(StateVector(out))
    }

    /// `op (x) 1` for an impurity operator.
    pub fn lift_impurity(&self, op: &SparseOperator) -> SparseOperator {
        op.kron(&SparseOperator::identity(self.fock.dim()))
    }

    /// `h_0 (x) 1`.
    pub fn impurity_kinetic(&self) -> SparseOperator {
        if self.impurity.dim() == 1 {
            return SparseOperator::zero(self.dim(), self.dim());
        }
        self.impurity.kinetic().kron(&SparseOperator::identity(self.fock.dim()))
    }

    fn inside(&self, p: Momentum) -> bool {
        self.ball.contains(p)
    }

    /// Support momenta `k` with the fermionic pair strings `(p, p - k)` kept in
    /// the mode set and passing `select`.
    fn hop_terms(&self, select: impl Fn(bool, bool) -> bool) -> Vec<(Momentum, f64, Vec<(usize, usize)>)> {
        let modes = self.fock.modes();
        self.potential
            .iter()
            .map(|(k, v)| {
                let hops = modes
                    .modes()
                    .iter()
                    .enumerate()
                    .filter_map(|(ip, &p)| {
                        let q = p - k;
                        let iq = modes.index_of(q)?;
                        select(self.inside(p), self.inside(q)).then_some((ip, iq))
                    })
                    .collect();
                (k, v, hops)
            })
            .collect()
    }

    /// `H_0 = sum e(k) a*_k a_k` with `e(k) = -|k|^2` inside the ball.
    pub fn build_h0(&self) -> SparseOperator {
        let modes = self.fock.modes();
        let e: Vec<f64> = modes
            .modes()
            .iter()
            .enumerate()
            .map(|(i, p)| if modes.is_inside(i) { -(p.norm_sq() as f64) } else { p.norm_sq() as f64 })
            .collect();
        let d = self.fock.diagonal_op(|b| (0..e.len()).filter(|i| b >> i & 1 == 1).map(|i| e[i]).sum());
        self.lift(&d)
    }

    /// `b*(h~) = sum_k lambda V(k) e^{iky} sum_{p out, p-k in} a*_p a*_{p-k}`.
    pub fn build_b_dagger(&self) -> SparseOperator {
        let mut acc = SparseOperator::zero(self.dim(), self.dim());
        for (k, v, hops) in self.hop_terms(|p_in, q_in| !p_in && q_in) {
            if hops.is_empty() {
                continue;
            }
            let terms: Vec<_> =
                hops.iter().map(|&(p, q)| (C64::new(self.lambda * v, 0.0), vec![(Ladder::Create, p), (Ladder::Create, q)])).collect();
            acc = acc.add(&self.couple(k, &self.fock.ladder_sum(&terms)));
        }
        acc
    }

    /// Hole-hole and particle-particle scattering left over after bosonization.
    pub fn build_nonbosonizable(&self) -> SparseOperator {
        let mut acc = SparseOperator::zero(self.dim(), self.dim());
        for (k, v, hops) in self.hop_terms(|p_in, q_in| p_in == q_in) {
            if hops.is_empty() {
                continue;
            }
            let c = C64::new(self.lambda * v, 0.0);
            let terms: Vec<_> = hops
                .iter()
                .map(|&(p, q)| {
                    if self.fock.modes().is_inside(p) {
                        (c, vec![(Ladder::Annihilate, p), (Ladder::Create, q)])
                    } else {
                        (c, vec![(Ladder::Create, p), (Ladder::Annihilate, q)])
                    }
                })
                .collect();
            acc = acc.add(&self.couple(k, &self.fock.ladder_sum(&terms)));
        }
        acc
    }

    /// `h_0 + H_0 + b* + b + E_pw + E`, the conjugated Hamiltonian assembled
    /// from its pieces.
    pub fn reconstruct_conjugated(&self) -> SparseOperator {
        let bd = self.build_b_dagger();
        SparseOperator::sum(
            self.dim(),
            self.dim(),
            [
                (ONE, &self.impurity_kinetic()),
                (ONE, &self.build_h0()),
                (ONE, &bd),
                (ONE, &bd.adjoint()),
                (C64::new(self.e_pw(), 0.0), &SparseOperator::identity(self.dim())),
                (ONE, &self.build_nonbosonizable()),
            ],
        )
    }

    /// Original-picture space matching the particle-hole sector.
    pub fn original_space(&self) -> Result<FockSpace> {
        FockSpace::new(self.fock.modes().clone(), Sector::FixedParticleNumber(self.ball.n()))
    }

    /// `R` as a map from the particle-hole space into `original`, lifted.
    pub fn particle_hole_map(&self, original: &FockSpace) -> Result<SparseOperator> {
        let r = ParticleHole::new(self.fock.modes()).matrix_between(&self.fock, original)?;
        Ok(self.lift(&r))
    }

    /// `R^dag H R` for `H` on `imp (x) original`.
    pub fn conjugate(&self, original: &FockSpace, h: &SparseOperator) -> Result<SparseOperator> {
        let r = self.particle_hole_map(original)?;
        if h.nrows() != r.nrows() {
            return Err(Error::Dimension(h.nrows(), r.nrows()));
        }
        Ok(r.adjoint().matmul(&h.matmul(&r)))
    }

    /// Microscopic Hamiltonian on `imp (x) original`.
    pub fn build_micro(&self, original: &FockSpace, policy: HopPolicy) -> Result<MicroHamiltonian> {
        let modes = original.modes();
        let n = modes.len();
        let mut dropped = Vec::new();
        let kin = original.diagonal_op(|b| (0..n).filter(|i| b >> i & 1 == 1).map(|i| modes.modes()[i].norm_sq() as f64).sum());
        let mut h = SparseOperator::sum(
            self.dim(),
            self.dim(),
            [(ONE, &self.impurity_kinetic()), (ONE, &lift_with(&self.impurity, &kin))],
        );
        for (k, v) in self.potential.iter() {
            let mut terms = Vec::new();
            for (iq, &q) in modes.modes().iter().enumerate() {
                let p = q + k;
                match modes.index_of(p) {
                    Some(ip) => terms.push((C64::new(self.lambda * v, 0.0), vec![(Ladder::Create, ip), (Ladder::Annihilate, iq)])),
                    None if self.ball.contains(q) => {
                        if policy == HopPolicy::Reject {
                            return Err(Error::UnrepresentableHop { from: q.to_array(), by: k.to_array() });
                        }
                        dropped.push((q, k, self.lambda * v));
                    }
                    None => {}
                }
            }
            h = h.add(&couple_with(&self.impurity, k, &original.ladder_sum(&terms)));
        }
        let op = h.certify_hermitian(CERT_TOL)?;
        Ok(MicroHamiltonian { op, dropped })
    }

    /// Collective modes built from the pair operators.
    pub fn collective(&self, coupling: ImpurityCoupling) -> CollectiveModes {
        let entries = self
            .pairs
            .iter()
            .map(|p| {
                let create = self.lift(&p.create);
                let shift = p.weight.shift();
                let coupled_create = match coupling {
                    ImpurityCoupling::PlaneWaveShift if self.impurity.dim() > 1 => self.couple(shift, &p.create),
                    _ => create.clone(),
                };
                CollectiveMode {
                    k: p.weight.k,
                    alpha: p.weight.alpha,
                    shift,
                    epsilon: p.weight.epsilon,
                    h: self.lambda * self.potential.value(p.weight.k) * p.weight.n,
                    annihilate: create.adjoint(),
                    coupled_annihilate: coupled_create.adjoint(),
                    create,
                    coupled_create,
                }
            })
            .collect();
        CollectiveModes {
            dim: self.dim(),
            entries,
            number: self.number(),
            e_pw: self.e_pw(),
            kinetic: self.impurity_kinetic(),
        }
    }

    /// `[H_0, c*] - eps c*` for pair `i` (this is `E^lin_i*`).
    pub fn e_lin_dagger(&self, h0: &SparseOperator, modes: &CollectiveModes, i: usize) -> SparseOperator {
        let m = &modes.entries[i];
        h0.commutator(&m.create).sub(&m.create.scale_real(m.epsilon))
    }

    /// `E^lin_i*` as the weighted pair operator `(1/n) sum g(p) a*_p a*_h`,
    /// `g = |p|^2 - |h|^2 - eps`.
    pub fn e_lin_dagger_direct(&self, i: usize) -> SparseOperator {
        let pair = &self.pairs[i];
        let modes = self.fock.modes().modes();
        let terms: Vec<_> = pair
            .pairs
            .iter()
            .map(|&(p, h)| {
                let g = (modes[p].norm_sq() - modes[h].norm_sq()) as f64 - pair.weight.epsilon;
                (C64::new(g / pair.weight.n, 0.0), vec![(Ladder::Create, p), (Ladder::Create, h)])
            })
            .collect();
        self.lift(&self.fock.ladder_sum(&terms))
    }

    /// `b(k)` pieces: for `k` in `Gamma`, `sum_{p out, p-k in} a_{p-k} a_p`.
    pub fn b_of_k(&self, k: Momentum) -> SparseOperator {
        let modes = self.fock.modes();
        let terms: Vec<_> = modes
            .modes()
            .iter()
            .enumerate()
            .filter(|(_, p)| !self.inside(**p))
            .filter_map(|(ip, &p)| {
                let iq = modes.index_of(p - k)?;
                self.inside(p - k).then(|| (ONE, vec![(Ladder::Create, ip), (Ladder::Create, iq)]))
            })
            .collect();
        self.lift(&self.fock.ladder_sum(&terms).adjoint())
    }
}

fn lift_with(imp: &ImpuritySpace, op: &SparseOperator) -> SparseOperator {
    if imp.dim() == 1 {
        op.clone()
    } else {
        SparseOperator::identity(imp.dim()).kron(op)
    }
}

fn couple_with(imp: &ImpuritySpace, k: Momentum, op: &SparseOperator) -> SparseOperator {
    if imp.dim() == 1 {
        op.clone()
    } else {
        imp.shift(k).kron(op)
    }
}

#[derive(Clone, Debug)]
pub struct MicroHamiltonian {
    pub op: SparseOperator,
    /// Dropped hops `(source in the ball, k, weight)`.
    pub dropped: Vec<(Momentum, Momentum, f64)>,
}

impl MicroHamiltonian {
    pub fn dropped_weight(&self) -> f64 {
        self.dropped.iter().map(|d| d.2.abs()).sum()
    }
}

/// One collective mode `c*_alpha(k)` with its energy and coupling.
#[derive(Clone, Debug)]
pub struct CollectiveMode {
    pub k: Momentum,
    pub alpha: usize,
    pub shift: Momentum,
    pub epsilon: f64,
    /// `h_alpha(k) = lambda V(k) n_alpha(k)`.
    pub h: f64,
    pub create: SparseOperator,
    pub annihilate: SparseOperator,
    /// `e^{ik'y} c*`, equal to `create` for a static impurity.
    pub coupled_create: SparseOperator,
    pub coupled_annihilate: SparseOperator,
}

/// The operator content shared by the fermionic and the exactly bosonic model.
#[derive(Clone, Debug)]
pub struct CollectiveModes {
    pub dim: usize,
    pub entries: Vec<CollectiveMode>,
    /// Number operator (fermion count; twice the boson count for the oracle).
    pub number: SparseOperator,
    pub e_pw: f64,
    /// Impurity kinetic term `h_0`.
    pub kinetic: SparseOperator,
}

impl CollectiveModes {
    pub fn from_oracle(space: &BosonicOracleSpace, e_pw: f64) -> Self {
        let entries = space
            .modes
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let annihilate = space.annihilation(j);
                let create = annihilate.adjoint();
                CollectiveMode {
                    k: m.k,
                    alpha: m.alpha,
                    shift: m.k,
                    epsilon: m.epsilon,
                    h: m.coupling,
                    coupled_create: create.clone(),
                    coupled_annihilate: annihilate.clone(),
                    create,
                    annihilate,
                }
            })
            .collect();
        CollectiveModes {
            dim: space.dim(),
            entries,
            number: space.fermion_number(),
            e_pw,
            kinetic: SparseOperator::zero(space.dim(), space.dim()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn couplings(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.h).collect()
    }

    /// `D_B = sum eps c* c`.
    pub fn build_db(&self) -> SparseOperator {
        let mut acc = SparseOperator::zero(self.dim, self.dim);
        for e in &self.entries {
            acc = acc.add(&e.create.matmul(&e.annihilate).scale_real(e.epsilon));
        }
        acc
    }

    /// `c*(eta) = sum eta c*` with the impurity coupling.
    pub fn c_dagger_of(&self, eta: &[C64]) -> SparseOperator {
        SparseOperator::sum(self.dim, self.dim, self.entries.iter().zip(eta).map(|(e, &a)| (a, &e.coupled_create)))
    }

    /// `c(eta) = c*(eta)^dag`.
    pub fn c_of(&self, eta: &[C64]) -> SparseOperator {
        SparseOperator::sum(self.dim, self.dim, self.entries.iter().zip(eta).map(|(e, &a)| (a.conj(), &e.coupled_annihilate)))
    }

    /// `Phi(h) = c*(h) + c(h)`.
    pub fn build_phi(&self) -> SparseOperator {
        let h: Vec<C64> = self.entries.iter().map(|e| C64::new(e.h, 0.0)).collect();
        self.c_dagger_of(&h).add(&self.c_of(&h))
    }

    /// `h_0 + D_B + Phi + E_pw`.
    pub fn build_heff(&self) -> Result<SparseOperator> {
        self.heff_with(true)
    }

    /// `h_0 + D_B + E_pw`.
    pub fn build_heff_tilde(&self) -> Result<SparseOperator> {
        self.heff_with(false)
    }

    fn heff_with(&self, coupled: bool) -> Result<SparseOperator> {
        let mut h = self.kinetic.add(&self.build_db());
        if coupled {
            h = h.add(&self.build_phi());
        }
        h = h.add(&SparseOperator::identity(self.dim).scale_real(self.e_pw));
        h.certify_hermitian(CERT_TOL)
    }

    /// `[D_B, c*] - eps c*` for mode `i` (this is `E^B_i*`).
    pub fn e_bos_dagger(&self, db: &SparseOperator, i: usize) -> SparseOperator {
        let m = &self.entries[i];
        db.commutator(&m.create).sub(&m.create.scale_real(m.epsilon))
    }

    /// `E(i, j) = [c_i, c*_j] - delta_ij` for modes of the same patch.
    pub fn ccr_error(&self, i: usize, j: usize) -> SparseOperator {
        let comm = self.entries[i].annihilate.commutator(&self.entries[j].create);
        if i == j {
            comm.sub(&SparseOperator::identity(self.dim))
        } else {
            comm
        }
    }

    /// `B = c*(eta) - c(eta)`, certified anti-hermitian.
    pub fn weyl_generator(&self, eta: &[C64]) -> Result<SparseOperator> {
        self.c_dagger_of(eta).sub(&self.c_of(eta)).certify_antihermitian(CERT_TOL)
    }

    /// `G(xi, eta) = [c(xi), c*(eta)] - <xi, eta>`, the operator whose
    /// conjugates build the shift remainder.
    pub fn shift_kernel(&self, xi: &[C64], eta: &[C64]) -> SparseOperator {
        let overlap: C64 = xi.iter().zip(eta).map(|(a, b)| a.conj() * b).sum();
        self.c_of(xi).commutator(&self.c_dagger_of(eta)).sub(&SparseOperator::identity(self.dim).scale(overlap))
    }
}

/// `e^{sigma B} psi` by Krylov (`B` anti-hermitian, `iB` hermitian).
pub fn weyl_apply(b: &SparseOperator, psi: &[C64], sigma: f64, opts: KrylovOptions) -> Result<(Vec<C64>, KrylovStats)> {
    let k = b.scale(I);
    expm_hermitian(&k, psi, sigma, opts)
}

/// Dense `W_sigma = e^{sigma B}`.
pub fn weyl_matrix(b: &SparseOperator, sigma: f64) -> Result<DMatrix<C64>> {
    if b.nrows() > DENSE_WEYL_LIMIT {
        return Err(Error::TooLarge { what: "dense Weyl operator".into(), size: b.nrows() as u128, limit: DENSE_WEYL_LIMIT as u128 });
    }
    Ok(dense_unitary_exp(&b.to_dense().map(|v| v * sigma)))
}

/// Per-mode amplitude vector from a coherent field, in the order of `modes`.
pub fn amplitudes(modes: &CollectiveModes, field: &crate::coherent::EtaField) -> Vec<C64> {
    modes
        .entries
        .iter()
        .map(|e| field.get(e.k, e.alpha).unwrap_or(ZERO))
        .collect()
}
