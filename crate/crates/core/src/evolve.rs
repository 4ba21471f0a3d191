//! Time propagation and the dynamical diagnostics: distance to the effective
//! evolution, distance to the coherent ansatz, the gap to the uncoupled
//! evolution and number-operator moments.

use std::io::Write;


use crate::coherent::{eta_at, phase_p, CoherentParams, ImpurityCoupling};
use crate::error::{Error, Result};
use crate::fock::{BosonicOracleSpace, OracleMode, Sector};
use crate::hamiltonians::{amplitudes, weyl_apply, CollectiveModes, DeskConfig, DeskSystem, ImpurityMode};
use crate::krylov::{expm_hermitian, HermitianEigen, KrylovOptions};
use crate::lattice::{lattice_points_within, Momentum, Potential};
use crate::lowerbound::{corollary_floor, d_of, FloorParams, ThetaMode};
use crate::patches::WeightTable;
use crate::sparse::{distance, norm, SparseOperator, StateVector, C64};

/// Dimension up to which propagation diagonalizes densely.
pub const DENSE_PROPAGATION_LIMIT: usize = 2000;

/// `e^{-iHt}` applied to states, dense or Krylov.
pub struct Propagator<'a> {
    op: &'a SparseOperator,
    dense: Option<HermitianEigen>,
    opts: KrylovOptions,
}

impl<'a> Propagator<'a> {
    pub fn new(op: &'a SparseOperator, opts: KrylovOptions) -> Self {
        let dense = (op.nrows() <= DENSE_PROPAGATION_LIMIT).then(|| HermitianEigen::new(&op.to_dense()));
        Propagator { op, dense, opts }
    }

    pub fn krylov_only(op: &'a SparseOperator, opts: KrylovOptions) -> Self {
        Propagator { op, dense: None, opts }
    }

    pub fn apply(&self, psi: &[C64], t: f64) -> Result<Vec<C64>> {
        if t == 0.0 {
            return Ok(psi.to_vec());
        }
        match &self.dense {
            Some(eig) => Ok(eig.propagate(psi, t)),
            None => Ok(expm_hermitian(self.op, psi, t, self.opts)?.0),
        }
    }
}

/// `e^{-iHt} psi`, dense for `dim <= 2000`.
pub fn propagate(h: &SparseOperator, psi: &StateVector, t: f64) -> Result<StateVector> {
    Ok(StateVector(Propagator::new(h, KrylovOptions::default()).apply(psi, t)?))
}

/// Named columns over a time grid plus reproduction metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvolutionReport {
    pub grid: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
    pub metadata: Vec<(String, String)>,
}

impl EvolutionReport {
    pub fn new(grid: Vec<f64>) -> Self {
        EvolutionReport { grid, ..Default::default() }
    }

    pub fn push_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.grid.len() {
            return Err(Error::Dimension(values.len(), self.grid.len()));
        }
        self.columns.push((name.to_string(), values));
        Ok(())
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// CSV with `# key = value` header lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k} = {v}")?;
        }
        write!(out, "t")?;
        for (n, _) in &self.columns {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
        for (i, t) in self.grid.iter().enumerate() {
            write!(out, "{t}")?;
            for (_, c) in &self.columns {
                write!(out, ",{}", c[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Uniform grid `0, t/n, ..., t`.
pub fn uniform_grid(t_max: f64, points: usize) -> Vec<f64> {
    let n = points.max(2) - 1;
    (0..=n).map(|i| t_max * i as f64 / n as f64).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.first() != Some(&0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("time grid must start at 0 and increase strictly".into()));
    }
    Ok(())
}

/// Named desk-scale spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeskPreset {
    /// `kF = 1`, modes `|p|^2 <= 2`, full particle-hole sector (dim 50388).
    KfOne,
    /// `kF = sqrt 2`, modes `|p|^2 <= 3`, at most two pairs (dim 4941).
    KfSqrtTwo,
    /// `kF = 1` ball plus `(1,0,1), (0,1,1), (1,1,0)`.
    Reduced,
    /// `kF = 2`, modes `|p|^2 <= 5`, at most two pairs (dim 146521, three
    /// collective modes).
    Wide,
}

impl DeskPreset {
    pub fn name(self) -> &'static str {
        match self {
            DeskPreset::KfOne => "kf1",
            DeskPreset::KfSqrtTwo => "kf_sqrt2",
            DeskPreset::Reduced => "reduced",
            DeskPreset::Wide => "wide",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [DeskPreset::KfOne, DeskPreset::KfSqrtTwo, DeskPreset::Reduced, DeskPreset::Wide].into_iter().find(|p| p.name() == s)
    }

    pub fn config(self, lambda: f64, potential: Potential) -> DeskConfig {
        match self {
            DeskPreset::KfOne => {
                DeskConfig::new(1.0, lambda, potential, lattice_points_within(2), Sector::ParticleHole { max_pairs: None })
            }
            DeskPreset::KfSqrtTwo => DeskConfig::new(
                2f64.sqrt(),
                lambda,
                potential,
                lattice_points_within(3),
                Sector::ParticleHole { max_pairs: Some(2) },
            ),
            DeskPreset::Reduced => {
                let mut modes = lattice_points_within(1);
                modes.extend([Momentum::new(1, 0, 1), Momentum::new(0, 1, 1), Momentum::new(1, 1, 0)]);
                DeskConfig::new(1.0, lambda, potential, modes, Sector::ParticleHole { max_pairs: None })
            }
            DeskPreset::Wide => {
                DeskConfig::new(2.0, lambda, potential, lattice_points_within(5), Sector::ParticleHole { max_pairs: Some(2) })
            }
        }
    }
}

/// Inputs shared by the desk-space diagnostics.
#[derive(Clone, Debug)]
pub struct SimParams {
    pub desk: DeskConfig,
    pub beta: f64,
    /// Impurity plane-wave momentum of the initial state.
    pub q0: Momentum,
    pub coupling: ImpurityCoupling,
    pub krylov: KrylovOptions,
    /// Simpson panels per grid interval for the Duhamel integrals (even).
    pub refine: usize,
}

impl SimParams {
    pub fn new(desk: DeskConfig) -> Self {
        SimParams {
            desk,
            beta: 0.0,
            q0: Momentum::ZERO,
            coupling: ImpurityCoupling::Static,
            krylov: KrylovOptions::default(),
            refine: 4,
        }
    }

    pub fn with_impurity(mut self, q_cut_sq: i64, beta: f64) -> Self {
        self.desk.impurity = ImpurityMode::Truncated { q_cut_sq, beta };
        self.beta = beta;
        self.coupling = ImpurityCoupling::PlaneWaveShift;
        self
    }
}

struct Desk {
    sys: DeskSystem,
    modes: CollectiveModes,
    psi: StateVector,
}

fn desk(params: &SimParams) -> Result<Desk> {
    let sys = DeskSystem::new(&params.desk)?;
    let modes = sys.collective(params.coupling);
    let psi = sys.product_vacuum(params.q0)?;
    Ok(Desk { sys, modes, psi })
}

fn describe(report: &mut EvolutionReport, params: &SimParams, sys: &DeskSystem) {
    report.meta("kf", params.desk.kf);
    report.meta("lambda", params.desk.lambda);
    report.meta("beta", params.beta);
    report.meta("modes", sys.fock.modes().len());
    report.meta("sector", format!("{:?}", params.desk.sector));
    report.meta("impurity", format!("{:?}", params.desk.impurity));
    report.meta("dim", sys.dim());
    report.meta("patches", sys.patches.m());
    report.meta("delta", params.desk.delta);
    report.meta("pair_modes", sys.pairs.len());
    report.meta("q0", format!("{:?}", params.q0.to_array()));
}

/// Refined grid: each interval split into `refine` equal panels.
fn refined(grid: &[f64], refine: usize) -> Vec<f64> {
    let mut out = vec![grid[0]];
    for w in grid.windows(2) {
        for j in 1..=refine {
            out.push(w[0] + (w[1] - w[0]) * j as f64 / refine as f64);
        }
    }
    out
}

/// Cumulative composite Simpson integral on the refined grid, sampled at the
/// original grid points.
fn cumulative_simpson(fine: &[f64], values: &[f64], refine: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for block in (0..fine.len() - 1).step_by(refine) {
        for j in (block..block + refine).step_by(2) {
            let h = fine[j + 1] - fine[j];
            acc += h / 3.0 * (values[j] + 4.0 * values[j + 1] + values[j + 2]);
        }
        out.push(acc);
    }
    out
}

/// Smallest `C` with `value <= C (e^{C rate t} - 1) scale` on the grid, by bisection.
pub fn fit_exponential_constant(grid: &[f64], values: &[f64], rate: f64, scale: f64) -> Option<f64> {
    let holds = |c: f64| {
        grid.iter().zip(values).all(|(&t, &v)| v <= c * (c * rate * t).exp_m1() * scale + 1e-14)
    };
    let mut hi = 1.0;
    while !holds(hi) {
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn continuity_column(residual: &[f64], duhamel: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    for i in 1..residual.len() {
        let jump = (residual[i] - residual[i - 1]).abs();
        let budget = 2.0 * (duhamel[i] - duhamel[i - 1]) + 1e-9;
        out.push(jump / budget);
    }
    out
}

/// `||R* e^{-iHt} R psi - e^{-i H^eff t} psi||` with the Duhamel integral of
/// `||(R*HR - H^eff) e^{-i H^eff s} psi||`.
pub fn thm1_residual(params: &SimParams, grid: &[f64]) -> Result<EvolutionReport> {
    check_grid(grid)?;
    let Desk { sys, modes, psi } = desk(params)?;
    let h_ph = sys.reconstruct_conjugated().certify_hermitian(crate::sparse::CERT_TOL)?;
    let heff = modes.build_heff()?;
    let mismatch = h_ph.sub(&heff);
    let full = Propagator::new(&h_ph, params.krylov);
    let eff = Propagator::new(&heff, params.krylov);

    let fine = refined(grid, params.refine);
    let mut integrand = Vec::with_capacity(fine.len());
    let mut residual = Vec::with_capacity(grid.len());
    let mut norm_drift: f64 = 0.0;
    let (mut a, mut b) = (psi.0.clone(), psi.0.clone());
    for (i, &t) in fine.iter().enumerate() {
        if i > 0 {
            let dt = t - fine[i - 1];
            a = full.apply(&a, dt)?;
            b = eff.apply(&b, dt)?;
        }
        integrand.push(norm(&mismatch.apply(&b)));
        if i % params.refine == 0 {
            residual.push(distance(&a, &b));
            norm_drift = norm_drift.max((norm(&a) - 1.0).abs()).max((norm(&b) - 1.0).abs());
        }
    }
    let duhamel = cumulative_simpson(&fine, &integrand, params.refine);
    let d = d_of(
        sys.patches.m() as f64,
        sys.ball.n() as f64,
        params.desk.delta,
        params.beta,
        params.desk.kf,
        params.desk.lambda,
    );
    let rate = params.desk.lambda * params.desk.kf;
    let c_fit = fit_exponential_constant(grid, &residual, rate, d);

    let mut report = EvolutionReport::new(grid.to_vec());
    describe(&mut report, params, &sys);
    report.meta("d", d);
    report.meta("c_fit", c_fit.map_or("none".to_string(), |c| c.to_string()));
    report.meta("norm_drift", norm_drift);
    let bound = grid.iter().map(|&t| c_fit.map_or(f64::NAN, |c| c * (c * rate * t).exp_m1() * d)).collect();
    report.push_column("continuity", continuity_column(&residual, &duhamel))?;
    report.push_column("residual", residual)?;
    report.push_column("duhamel", duhamel)?;
    report.push_column("bound_fit", bound)?;
    Ok(report)
}

/// Which model carries the effective evolution in the coherent comparison.
#[derive(Clone, Debug)]
pub enum CoherentModel {
    Fermionic(SimParams),
    BosonicOracle(OracleSetup),
}

/// Exactly bosonic modes taken from the first entries of a weight table.
#[derive(Clone, Debug)]
pub struct OracleSetup {
    pub kf: f64,
    pub lambda: f64,
    pub potential: Potential,
    pub weights: WeightTable,
    pub e_pw: f64,
    pub max_modes: usize,
    /// Occupation cutoff; chosen from the largest amplitude when `None`.
    pub n_max: Option<usize>,
}

impl OracleSetup {
    pub fn params(&self) -> Result<CoherentParams> {
        let mut weights = self.weights.clone();
        weights.entries.truncate(self.max_modes);
        CoherentParams::new(self.lambda, self.kf, self.potential.clone(), weights, self.e_pw)
    }

    pub fn oracle_modes(params: &CoherentParams) -> Vec<OracleMode> {
        params.couplings().iter().map(|c| OracleMode { k: c.k, alpha: c.alpha, epsilon: c.epsilon, coupling: c.h }).collect()
    }
}

/// Smallest cutoff whose Poisson tail beyond it is below `tol` for every
/// mean in `means`.
pub fn poisson_cutoff(means: &[f64], tol: f64) -> usize {
    let mu = means.iter().copied().fold(0.0, f64::max);
    let mut n = 0usize;
    let mut term = (-mu).exp();
    let mut cdf = term;
    while 1.0 - cdf > tol && n < 10_000 {
        n += 1;
        term *= mu / n as f64;
        cdf += term;
        if term < tol * 1e-3 && (n as f64) > mu {
            break;
        }
    }
    (n + 2).max(3)
}

/// Five-point time derivative step for the coherent ansatz.
const ANSATZ_STEP: f64 = 1e-3;

/// `||e^{-i H^eff t} psi - e^{iP(t)} W(eta_t) psi||` with the Duhamel integral
/// of the ansatz defect `||(i d/dt - H^eff) xi_t||`.
pub fn thm2_residual(model: &CoherentModel, grid: &[f64]) -> Result<EvolutionReport> {
    check_grid(grid)?;
    let mut report = EvolutionReport::new(grid.to_vec());
    let (modes, psi, params, krylov, refine, tail) = match model {
        CoherentModel::Fermionic(p) => {
            let Desk { sys, modes, psi } = desk(p)?;
            describe(&mut report, p, &sys);
            report.meta("model", "fermionic");
            let cp = CoherentParams::new(p.desk.lambda, p.desk.kf, p.desk.potential.clone(), sys.weights.clone(), sys.e_pw())?
                .with_coupling(p.coupling);
            (modes, psi, cp, p.krylov, p.refine, None)
        }
        CoherentModel::BosonicOracle(setup) => {
            let cp = setup.params()?;
            let t_max = *grid.last().unwrap_or(&0.0);
            let means: Vec<f64> = cp
                .couplings()
                .iter()
                .map(|c| {
                    let bound = if c.epsilon > 0.0 { (2.0 / c.epsilon).min(t_max) } else { t_max };
                    (c.h * bound).powi(2)
                })
                .collect();
            let n_max = setup.n_max.unwrap_or_else(|| poisson_cutoff(&means, 1e-12));
            let space = BosonicOracleSpace::new(OracleSetup::oracle_modes(&cp), n_max)?;
            report.meta("model", "bosonic_oracle");
            report.meta("kf", setup.kf);
            report.meta("lambda", setup.lambda);
            report.meta("oracle_modes", space.modes.len());
            report.meta("n_max", n_max);
            report.meta("dim", space.dim());
            let modes = CollectiveModes::from_oracle(&space, setup.e_pw);
            let psi = space.vacuum();
            (modes, psi, cp, KrylovOptions::default(), 4, Some(space))
        }
    };
    // the constant E_pw is removed from both sides so the time derivative of
    // the ansatz stays resolvable by finite differences
    let heff = modes.build_heff()?.sub(&SparseOperator::identity(modes.dim).scale_real(modes.e_pw));
    let eff = Propagator::new(&heff, krylov);
    let ansatz = |t: f64| -> Result<Vec<C64>> {
        let eta = amplitudes(&modes, &eta_at(&params, t));
        let w = match &tail {
            Some(space) => space.weyl_vacuum(&eta)?.0,
            None => weyl_apply(&modes.weyl_generator(&eta)?, &psi, 1.0, krylov)?.0,
        };
        let phase = C64::from_polar(1.0, phase_p(&params, t) + params.e_pw * t);
        Ok(w.into_iter().map(|x| x * phase).collect())
    };
    let fine = refined(grid, refine);
    let mut integrand = Vec::with_capacity(fine.len());
    let mut residual = Vec::new();
    let mut tails = Vec::new();
    let mut eta_norm = Vec::new();
    let mut u = psi.0.clone();
    for (i, &t) in fine.iter().enumerate() {
        if i > 0 {
            u = eff.apply(&u, t - fine[i - 1])?;
        }
        let xi = ansatz(t)?;
        // forward stencil near t = 0
        let h = ANSATZ_STEP * grid.last().copied().unwrap_or(1.0).max(1e-12);
        let dxi: Vec<C64> = if t - 2.0 * h < 0.0 {
            let f: Vec<Vec<C64>> = (0..5).map(|j| ansatz(t + j as f64 * h)).collect::<Result<_>>()?;
            (0..xi.len())
                .map(|r| (-25.0 * f[0][r] + 48.0 * f[1][r] - 36.0 * f[2][r] + 16.0 * f[3][r] - 3.0 * f[4][r]) / (12.0 * h))
                .collect()
        } else {
            let m2 = ansatz(t - 2.0 * h)?;
            let m1 = ansatz(t - h)?;
            let p1 = ansatz(t + h)?;
            let p2 = ansatz(t + 2.0 * h)?;
            (0..xi.len()).map(|r| (m2[r] - 8.0 * m1[r] + 8.0 * p1[r] - p2[r]) / (12.0 * h)).collect()
        };
        let hxi = heff.apply(&xi);
        let defect: Vec<C64> = dxi.iter().zip(&hxi).map(|(d, h)| C64::new(0.0, 1.0) * d - h).collect();
        integrand.push(norm(&defect));
        if i % refine == 0 {
            residual.push(distance(&u, &xi));
            eta_norm.push(eta_at(&params, t).norm());
            if let Some(space) = &tail {
                tails.push(space.tail_mass(&u).max(space.tail_mass(&xi)));
            }
        }
    }
    let duhamel = cumulative_simpson(&fine, &integrand, refine);
    let kf = params.kf;
    let scale = kf.powf(-2.0 / 15.0);
    let beta = match model {
        CoherentModel::Fermionic(p) => p.beta,
        CoherentModel::BosonicOracle(_) => 0.0,
    };
    let ratio = grid.iter().zip(&residual).map(|(&t, r)| r / scale.max(beta * t)).collect();
    report.push_column("continuity", continuity_column(&residual, &duhamel))?;
    report.push_column("residual", residual)?;
    report.push_column("duhamel", duhamel)?;
    report.push_column("eta_norm", eta_norm)?;
    report.push_column("q_ratio", ratio)?;
    if !tails.is_empty() {
        report.meta("max_tail_mass", tails.iter().copied().fold(0.0, f64::max));
        report.push_column("tail_mass", tails)?;
    }
    Ok(report)
}

/// Gap `||R* e^{-iHt} R psi - e^{-i H~eff t} psi||` against the floor.
pub fn cor_gap(params: &SimParams, grid: &[f64]) -> Result<EvolutionReport> {
    check_grid(grid)?;
    let Desk { sys, modes, psi } = desk(params)?;
    let h_ph = sys.reconstruct_conjugated().certify_hermitian(crate::sparse::CERT_TOL)?;
    let tilde = modes.build_heff_tilde()?;
    let full = Propagator::new(&h_ph, params.krylov);
    let free = Propagator::new(&tilde, params.krylov);
    let floor_params = FloorParams::new(
        params.desk.lambda,
        params.desk.kf,
        params.beta,
        sys.patches.m() as f64,
        sys.ball.n() as f64,
        params.desk.delta,
        params.desk.potential.clone(),
        ThetaMode::Exact(&sys.weights),
    )?;
    let (mut a, mut b) = (psi.0.clone(), psi.0.clone());
    let mut gap = Vec::new();
    let mut floor = Vec::new();
    let mut flag = Vec::new();
    for (i, &t) in grid.iter().enumerate() {
        if i > 0 {
            let dt = t - grid[i - 1];
            a = full.apply(&a, dt)?;
            b = free.apply(&b, dt)?;
        }
        let g = distance(&a, &b);
        let f = corollary_floor(&floor_params, t).value;
        gap.push(g);
        floor.push(f);
        flag.push(if g >= f { 1.0 } else { 0.0 });
    }
    let mut report = EvolutionReport::new(grid.to_vec());
    describe(&mut report, params, &sys);
    report.meta("theta", floor_params.theta);
    report.meta("d", floor_params.d);
    report.push_column("gap", gap)?;
    report.push_column("floor", floor)?;
    report.push_column("gap_exceeds_floor", flag)?;
    Ok(report)
}

/// Flow whose number-operator moments are tracked.
#[derive(Clone, Debug)]
pub enum MomentFlow {
    /// `e^{-i H^eff t}`, time grid.
    Heff,
    /// `e^{tau B}` with `B` built from `eta_s` at the given `s`; the grid holds `tau`.
    WeylB { s: f64 },
}

/// Fitted constants of a moment trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentFit {
    /// Smallest `C` with `<(N+1)^n>_t <= e^{n C rate |t|} <(N+3)^n>_0`.
    pub c_min: f64,
    /// Least-squares slope of `log <(N+1)^n>_t` against `n rate |t|`.
    pub c_growth: f64,
    pub growth_residual: f64,
}

fn moment(diag: &[f64], psi: &[C64], shift: f64, n: u32) -> f64 {
    diag.iter().zip(psi).map(|(d, a)| a.norm_sqr() * (d + shift).powi(n as i32)).sum()
}

pub fn fit_moments(grid: &[f64], moments: &[f64], start3: f64, n: u32, rate: f64) -> MomentFit {
    let mut c_min: f64 = 0.0;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    let y0 = moments[0].ln();
    for (&t, &m) in grid.iter().zip(moments) {
        let x = n as f64 * rate * t.abs();
        if x > 0.0 {
            c_min = c_min.max((m / start3).ln() / x);
        }
        let y = m.ln() - y0;
        sxx += x * x;
        sxy += x * y;
    }
    // slope through the origin since y(0) = 0
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let resid = grid
        .iter()
        .zip(moments)
        .map(|(&t, &m)| {
            let x = n as f64 * rate * t.abs();
            (m.ln() - y0 - slope * x).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    MomentFit { c_min, c_growth: slope, growth_residual: resid }
}

/// Moments `<(N+1)^n>` along a flow, started from `psi` (or `phi (x) Omega`).
pub fn moment_growth_on(
    modes: &CollectiveModes,
    psi: &StateVector,
    params: &CoherentParams,
    n: u32,
    grid: &[f64],
    flow: &MomentFlow,
    krylov: KrylovOptions,
) -> Result<(EvolutionReport, MomentFit)> {
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidParameter(format!("moment order must be 1, 2 or 3, got {n}")));
    }
    let diag = modes.number.diagonal_real();
    let start3 = moment(&diag, psi, 3.0, n);
    let mut values = Vec::with_capacity(grid.len());
    let rate;
    match flow {
        MomentFlow::Heff => {
            check_grid(grid)?;
            let heff = modes.build_heff()?;
            let prop = Propagator::new(&heff, krylov);
            let mut u = psi.0.clone();
            for (i, &t) in grid.iter().enumerate() {
                if i > 0 {
                    u = prop.apply(&u, t - grid[i - 1])?;
                }
                values.push(moment(&diag, &u, 1.0, n));
            }
            rate = params.lambda * params.kf;
        }
        MomentFlow::WeylB { s } => {
            let eta = amplitudes(modes, &eta_at(params, *s));
            let b = modes.weyl_generator(&eta)?;
            for &tau in grid {
                let (w, _) = weyl_apply(&b, psi, tau, krylov)?;
                values.push(moment(&diag, &w, 1.0, n));
            }
            rate = norm(&eta);
        }
    }
    let fit = fit_moments(grid, &values, start3, n, rate);
    let mut report = EvolutionReport::new(grid.to_vec());
    report.meta("n", n);
    report.meta("rate", rate);
    report.meta("c_min", fit.c_min);
    report.meta("c_growth", fit.c_growth);
    report.meta("growth_residual", fit.growth_residual);
    let bound = grid.iter().map(|&t| (n as f64 * fit.c_min * rate * t.abs()).exp() * start3).collect();
    report.push_column("moment", values)?;
    report.push_column("bound", bound)?;
    Ok((report, fit))
}

pub fn moment_growth(params: &SimParams, n: u32, grid: &[f64], flow: &MomentFlow) -> Result<(EvolutionReport, MomentFit)> {
    let Desk { sys, modes, psi } = desk(params)?;
    let cp = CoherentParams::new(params.desk.lambda, params.desk.kf, params.desk.potential.clone(), sys.weights.clone(), sys.e_pw())?
        .with_coupling(params.coupling);
    let (mut report, fit) = moment_growth_on(&modes, &psi, &cp, n, grid, flow, params.krylov)?;
    let mut meta = std::mem::take(&mut report.metadata);
    describe(&mut report, params, &sys);
    report.metadata.append(&mut meta);
    Ok((report, fit))
}

/// `||Delta_y W(eta_t) phi (x) Omega||` against `(|eta| + |eta|^4)(e^{|eta|} + 1)`.
pub fn laplacian_diagnostic(params: &SimParams, grid: &[f64]) -> Result<EvolutionReport> {
    check_grid(grid)?;
    if !matches!(params.desk.impurity, ImpurityMode::Truncated { .. }) {
        return Err(Error::InvalidParameter("the Laplacian diagnostic needs a truncated impurity".into()));
    }
    let Desk { sys, modes, psi } = desk(params)?;
    let cp = CoherentParams::new(params.desk.lambda, params.desk.kf, params.desk.potential.clone(), sys.weights.clone(), sys.e_pw())?
        .with_coupling(params.coupling);
    let lap = sys.lift_impurity(&sys.impurity.laplacian());
    let mut values = Vec::new();
    let mut shape = Vec::new();
    for &t in grid {
        let eta = amplitudes(&modes, &eta_at(&cp, t));
        let b = modes.weyl_generator(&eta)?;
        let (w, _) = weyl_apply(&b, &psi, 1.0, params.krylov)?;
        values.push(norm(&lap.apply(&w)));
        let e = norm(&eta);
        shape.push((e + e.powi(4)) * (e.exp() + 1.0));
    }
    let c_fit = grid
        .iter()
        .zip(values.iter().zip(&shape))
        .filter(|(_, (_, s))| **s > 0.0)
        .map(|(_, (v, s))| v / s)
        .fold(0.0, f64::max);
    let mut report = EvolutionReport::new(grid.to_vec());
    describe(&mut report, params, &sys);
    report.meta("c_fit", c_fit);
    report.push_column("laplacian_norm", values)?;
    report.push_column("shape", shape)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let grid = [0.0, 0.5, 1.5];
        let fine = refined(&grid, 4);
        let vals: Vec<f64> = fine.iter().map(|t| t * t * t).collect();
        let c = cumulative_simpson(&fine, &vals, 4);
        assert!((c[1] - 0.5f64.powi(4) / 4.0).abs() < 1e-14);
        assert!((c[2] - 1.5f64.powi(4) / 4.0).abs() < 1e-13);
    }

    #[test]
    fn poisson_cutoff_grows_with_mean() {
        assert!(poisson_cutoff(&[0.1], 1e-10) < poisson_cutoff(&[2.0], 1e-10));
    }
}
