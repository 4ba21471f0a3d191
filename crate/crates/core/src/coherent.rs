//! Closed-form coherent-state trajectory `eta_s`, the phase data and the norm
//! bounds.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Momentum, Potential};
use crate::patches::WeightTable;
use crate::quadrature::integrate_pieces;
use crate::special::kernels::{expm1_lin_over_sq, expm1_over, sinc_half, x_minus_sin_over_sq};
use crate::special::{log_minus_ci_plus_gamma, NeumaierSum};

/// How the impurity enters the coupling `h_y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ImpurityCoupling {
    /// `y = 0`, `e^{iky} = 1`.
    #[default]
    Static,
    /// Amplitudes act together with the shift `|q> -> |q + k>` of the impurity.
    PlaneWaveShift,
}

/// One coupling constant `h_alpha(k) = lambda V(k) n_alpha(k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coupling {
    pub k: Momentum,
    pub alpha: usize,
    pub epsilon: f64,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherentParams {
    pub lambda: f64,
    pub kf: f64,
    pub potential: Potential,
    pub weights: WeightTable,
    /// Plane-wave energy entering the phase.
    pub e_pw: f64,
    pub coupling: ImpurityCoupling,
    couplings: Vec<Coupling>,
    warnings: Vec<String>,
}

impl CoherentParams {
    pub fn new(lambda: f64, kf: f64, potential: Potential, weights: WeightTable, e_pw: f64) -> Result<Self> {
        if !(kf > 0.0) || !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidParameter(format!("need kF > 0 and lambda >= 0, got kF = {kf}, lambda = {lambda}")));
        }
        let mut warnings = Vec::new();
        let lo = kf.powf(-1.0 / 6.0);
        if lambda < lo || lambda > 1.0 {
            warnings.push(format!("lambda = {lambda} outside [kF^(-1/6), 1] = [{lo:.4}, 1]"));
        }
        let couplings = weights
            .entries
            .iter()
            .map(|w| Coupling { k: w.k, alpha: w.alpha, epsilon: w.epsilon, h: lambda * potential.value(w.k) * w.n })
            .collect();
        Ok(CoherentParams {
            lambda,
            kf,
            potential,
            weights,
            e_pw,
            coupling: ImpurityCoupling::Static,
            couplings,
            warnings,
        })
    }

    pub fn with_coupling(mut self, coupling: ImpurityCoupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `||h_y||^2 = sum |h_alpha(k)|^2` over the weight table.
    pub fn h_norm_sq(&self) -> f64 {
        compensated(self.couplings.iter().map(|c| c.h * c.h))
    }
}

fn compensated(it: impl Iterator<Item = f64>) -> f64 {
    let mut acc = NeumaierSum::default();
    it.for_each(|x| acc.add(x));
    acc.value()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EtaEntry {
    pub k: Momentum,
    pub alpha: usize,
    pub epsilon: f64,
    pub amplitude: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EtaField {
    pub entries: Vec<EtaEntry>,
    pub coupling: ImpurityCoupling,
    pub s: f64,
}

impl EtaField {
    pub fn norm_sq(&self) -> f64 {
        compensated(self.entries.iter().map(|e| e.amplitude.norm_sqr()))
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn get(&self, k: Momentum, alpha: usize) -> Option<Complex64> {
        self.entries.iter().find(|e| e.k == k && e.alpha == alpha).map(|e| e.amplitude)
    }
}

/// `eta_s(k, alpha) = ((e^{-is eps} - 1)/eps) h_alpha(k)`, limit `-is h` at `eps = 0`.
pub fn eta_at(params: &CoherentParams, s: f64) -> EtaField {
    let entries = params
        .couplings
        .iter()
        .map(|c| EtaEntry { k: c.k, alpha: c.alpha, epsilon: c.epsilon, amplitude: expm1_over(c.epsilon * s) * (s * c.h) })
        .collect();
    EtaField { entries, coupling: params.coupling, s }
}

/// `nu_s = sum ((e^{-is eps} + is eps - 1)/eps^2) |h|^2`.
pub fn nu_at(params: &CoherentParams, s: f64) -> Complex64 {
    let mut re = NeumaierSum::default();
    let mut im = NeumaierSum::default();
    for c in &params.couplings {
        let v = expm1_lin_over_sq(c.epsilon * s) * (s * s * c.h * c.h);
        re.add(v.re);
        im.add(v.im);
    }
    Complex64::new(re.value(), im.value())
}

/// `Im int_0^t <d eta/ds, eta_s> ds = sum |h|^2 (t - sin(eps t)/eps)/eps`.
pub fn im_integral(params: &CoherentParams, t: f64) -> f64 {
    compensated(params.couplings.iter().map(|c| c.h * c.h * t * t * x_minus_sin_over_sq(c.epsilon * t)))
}

/// The same integral by adaptive quadrature of `sum |h|^2 (1 - cos(eps s))/eps`.
pub fn im_integral_quadrature(params: &CoherentParams, t: f64) -> f64 {
    let integrand = |s: f64| {
        compensated(params.couplings.iter().map(|c| {
            let x = c.epsilon * s;
            // (1 - cos x)/eps = s * (1 - cos x)/x
            let k = if x.abs() < 1e-4 { x / 2.0 - x * x * x / 24.0 } else { (1.0 - x.cos()) / x };
            c.h * c.h * s * k
        }))
    };
    let emax = params.couplings.iter().map(|c| c.epsilon).fold(0.0, f64::max);
    let pieces = ((emax * t / PI).ceil() as usize).clamp(1, 10_000);
    let breaks: Vec<f64> = (0..=pieces).map(|i| t * i as f64 / pieces as f64).collect();
    integrate_pieces(integrand, &breaks, 1e-14, 1e-12)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseData {
    pub nu: Complex64,
    pub p: f64,
    pub im_integral: f64,
}

/// `P(t) = 2 Im nu_t - E_pw t - Im int_0^t <d eta, eta>`.
pub fn phase_data(params: &CoherentParams, t: f64) -> PhaseData {
    let nu = nu_at(params, t);
    let im_integral = im_integral(params, t);
    PhaseData { nu, p: 2.0 * nu.im - params.e_pw * t - im_integral, im_integral }
}

pub fn phase_p(params: &CoherentParams, t: f64) -> f64 {
    phase_data(params, t).p
}

/// `P(t)` with the integral term from quadrature.
pub fn phase_p_quadrature(params: &CoherentParams, t: f64) -> f64 {
    2.0 * nu_at(params, t).im - params.e_pw * t - im_integral_quadrature(params, t)
}

/// `sum |eta_s|^2` from the weights, `|eta| = |h| |sin(eps s/2)/(eps/2)|`.
pub fn norm_sq_exact(params: &CoherentParams, s: f64) -> f64 {
    compensated(params.couplings.iter().map(|c| {
        let a = c.h * s * sinc_half(c.epsilon * s);
        a * a
    }))
}

/// `pi lambda^2 sum_k (V(k)^2/|k|)(log(2 kF|k| s) - Ci(2 kF|k| s) + gamma)`,
/// summed over the full support of `V`.
pub fn norm_sq_closed(params: &CoherentParams, s: f64) -> f64 {
    let sum = compensated(
        params
            .potential
            .iter()
            .map(|(k, v)| v * v / k.norm() * log_minus_ci_plus_gamma(2.0 * params.kf * k.norm() * s)),
    );
    PI * params.lambda * params.lambda * sum
}

/// `min{sqrt(pi) |V|_w lambda kF s, sqrt(2 pi) |V|_2 lambda log(4 kF s + 2)}`.
pub fn bound_eta(params: &CoherentParams, s: f64) -> f64 {
    let v = &params.potential;
    let short = PI.sqrt() * v.norm_weighted() * params.lambda * params.kf * s;
    let long = (2.0 * PI).sqrt() * v.norm_l2() * params.lambda * (4.0 * params.kf * s + 2.0).ln();
    short.min(long)
}

/// `f_y(x)`, the exponential-moment envelope with `f_y(0) = 1`.
pub fn bound_f(potential: &Potential, y: f64, x: f64) -> f64 {
    let first = (PI.sqrt() * potential.norm_weighted() * y * x).exp();
    let l2 = potential.norm_l2();
    let second = ((2.0 * PI).sqrt() * l2 * (18f64.ln() + 1.0 / 9.0) * y).exp() * ((8.0 * PI).sqrt() / 9.0 * l2 * y * x).exp();
    first.min(second)
}

/// Leading term `2 ||eta_s||^2` of the excitation number.
pub fn expected_excitations(params: &CoherentParams, s: f64) -> f64 {
    2.0 * norm_sq_exact(params, s)
}

/// `(sum_k || |k|^n eta_s(k) ||, <eta_s, |k|^n eta_s>)`.
pub fn weighted_eta_norms(params: &CoherentParams, s: f64, n: u32) -> (f64, f64) {
    let eta = eta_at(params, s);
    let mut per_k: Vec<(Momentum, f64)> = Vec::new();
    let mut second = NeumaierSum::default();
    for e in &eta.entries {
        let w = e.k.norm().powi(n as i32);
        let a2 = e.amplitude.norm_sqr();
        second.add(w * a2);
        match per_k.iter_mut().find(|(k, _)| *k == e.k) {
            Some(slot) => slot.1 += w * w * a2,
            None => per_k.push((e.k, w * w * a2)),
        }
    }
    (compensated(per_k.iter().map(|(_, x)| x.sqrt())), second.value())
}

/// `max_supp |k|^n * |Gamma|`.
pub fn weighted_norm_constant(params: &CoherentParams, n: u32) -> f64 {
    let gamma = params.potential.support_len() / 2;
    params.potential.support_radius().powi(n as i32) * gamma as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    pub s: f64,
    pub norm_sq_exact: f64,
    pub norm_sq_closed: f64,
    pub bound_eta: f64,
    pub expected_excitations: f64,
}

pub const CURVE_HEADER: &str = "s,norm_sq_exact,norm_sq_closed,bound_eta,expected_excitations";

pub fn curve_rows(params: &CoherentParams, grid: &[f64]) -> Result<Vec<CurveRow>> {
    check_grid(grid)?;
    Ok(grid
        .iter()
        .map(|&s| CurveRow {
            s,
            norm_sq_exact: norm_sq_exact(params, s),
            norm_sq_closed: norm_sq_closed(params, s),
            bound_eta: bound_eta(params, s),
            expected_excitations: expected_excitations(params, s),
        })
        .collect())
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidParameter("grid values must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
    }
    Ok(())
}

pub fn write_curve<W: Write>(rows: &[CurveRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.s, r.norm_sq_exact, r.norm_sq_closed, r.bound_eta, r.expected_excitations)?;
    }
    Ok(())
}

pub fn emit_curve(params: &CoherentParams, grid: &[f64], path: &Path) -> Result<()> {
    let rows = curve_rows(params, grid)?;
    let io = |source| Error::Io { path: path.display().to_string(), source };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    write_curve(&rows, &mut w).map_err(io)?;
    w.flush().map_err(io)
}
