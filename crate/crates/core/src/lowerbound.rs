//! Lower-bound machinery showing the linear coupling acts at leading order.
//!
//! All unnamed constants are set to 1; outputs are scales, constants suppressed.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lattice::Potential;
use crate::patches::WeightTable;
use crate::quadrature::integrate_pieces;
use crate::special::compensated_sum;

/// Source of `||h_y||^2`.
#[derive(Clone, Copy, Debug)]
pub enum ThetaMode<'a> {
    /// `lambda^2 sum V^2 n^2` from exact pair counts.
    Exact(&'a WeightTable),
    /// `lambda^2 pi kF^2 sum_supp V^2 |k|`.
    Closed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloorParams {
    pub lambda: f64,
    pub kf: f64,
    pub beta: f64,
    pub m: f64,
    pub n: f64,
    pub delta: f64,
    pub potential: Potential,
    pub theta: f64,
    pub d: f64,
}

impl FloorParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lambda: f64,
        kf: f64,
        beta: f64,
        m: f64,
        n: f64,
        delta: f64,
        potential: Potential,
        mode: ThetaMode<'_>,
    ) -> Result<Self> {
        if !(kf > 0.0 && lambda > 0.0 && beta >= 0.0 && m > 0.0 && n > 0.0) {
            return Err(Error::InvalidParameter(
                "floor needs kF, lambda, M, N > 0 and beta >= 0".into(),
            ));
        }
        let theta = theta_of(lambda, kf, &potential, mode);
        let d = d_of(m, n, delta, beta, kf, lambda);
        Ok(FloorParams { lambda, kf, beta, m, n, delta, potential, theta, d })
    }
}

pub fn h_norm_sq(lambda: f64, kf: f64, potential: &Potential, mode: ThetaMode<'_>) -> f64 {
    match mode {
        ThetaMode::Exact(table) => {
            lambda * lambda
                * compensated_sum(table.entries.iter().map(|w| potential.value(w.k).powi(2) * w.count_sq as f64))
        }
        ThetaMode::Closed => {
            lambda * lambda * PI * kf * kf * compensated_sum(potential.iter().map(|(k, v)| v * v * k.norm()))
        }
    }
}

/// `theta = ||h|| + (2/kF) ||h||^2`.
pub fn theta_of(lambda: f64, kf: f64, potential: &Potential, mode: ThetaMode<'_>) -> f64 {
    let h2 = h_norm_sq(lambda, kf, potential, mode);
    h2.sqrt() + 2.0 / kf * h2
}

/// `d = max{M N^{-2/3 + delta}, beta / (kF lambda)}`.
pub fn d_of(m: f64, n: f64, delta: f64, beta: f64, kf: f64, lambda: f64) -> f64 {
    (m * n.powf(-2.0 / 3.0 + delta)).max(beta / (kf * lambda))
}

/// Branch point `pi / (4 kF |k|)`.
pub fn branch_time(kf: f64, k_norm: f64) -> f64 {
    PI / (4.0 * kf * k_norm)
}

pub fn b_dot(params: &FloorParams, t: f64) -> f64 {
    let kf = params.kf;
    let pre = PI * params.lambda * params.lambda * kf;
    pre * compensated_sum(params.potential.iter().map(|(k, v)| {
        let a = 2.0 * kf * k.norm() * t;
        let shape = if a > PI / 2.0 { 1.0 / a } else { 4.0 * a / (PI * PI) };
        v * v * shape
    }))
}

/// Closed antiderivative of `b_dot`, quadratic then logarithmic.
pub fn b_of(params: &FloorParams, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let kf = params.kf;
    let pre = PI * params.lambda * params.lambda * kf;
    pre * compensated_sum(params.potential.iter().map(|(k, v)| {
        let kn = k.norm();
        let ts = branch_time(kf, kn);
        let shape = if t <= ts {
            4.0 * kf * kn * t * t / (PI * PI)
        } else {
            (0.5 + (t / ts).ln()) / (2.0 * kf * kn)
        };
        v * v * shape
    }))
}

/// `f(t) = e^{-t} + t - 1`.
pub fn f_of(t: f64) -> f64 {
    (-t).exp_m1() + t
}

fn breakpoints(params: &FloorParams, t: f64) -> Vec<f64> {
    let mut b: Vec<f64> = params
        .potential
        .iter()
        .map(|(k, _)| branch_time(params.kf, k.norm()))
        .filter(|&s| s > 0.0 && s < t)
        .collect();
    b.push(0.0);
    b.push(t);
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// `h_t = e^{-theta t} int_0^t b_dot(s) e^{theta s} ds - d`.
pub fn h_of(params: &FloorParams, t: f64) -> f64 {
    if t <= 0.0 {
        return -params.d;
    }
    let th = params.theta;
    let integral = integrate_pieces(|s| b_dot(params, s) * (th * (s - t)).exp(), &breakpoints(params, t), 1e-15, 1e-14);
    integral - params.d
}

/// Residuals of the two candidate equations for `h_t`, from a five-point
/// central difference, relative to `|b'| + theta |h + d|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeResiduals {
    /// `h' - (b' - theta (h + d))`, the equation the stated solution solves.
    pub with_forcing: f64,
    /// `h' - (b' - theta h)`, from differentiating the integral equation.
    pub without_forcing: f64,
}

/// Needs `t > 0`; the stencil step is `min(t/4, 1e-2/theta)`.
pub fn h_residuals(params: &FloorParams, t: f64) -> OdeResiduals {
    let step = (t / 4.0).min(1e-2 / params.theta.max(1e-300));
    let h = |x: f64| h_of(params, x);
    let dh = (h(t - 2.0 * step) - 8.0 * h(t - step) + 8.0 * h(t + step) - h(t + 2.0 * step)) / (12.0 * step);
    let ht = h(t);
    let bd = b_dot(params, t);
    let scale = (bd.abs() + params.theta * (ht + params.d).abs()).max(1e-300);
    OdeResiduals {
        with_forcing: (dh - (bd - params.theta * (ht + params.d))) / scale,
        without_forcing: (dh - (bd - params.theta * ht)) / scale,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Floor {
    pub value: f64,
    /// `theta t`, O(1) at `t ~ 1/(lambda kF)`.
    pub theta_t: f64,
}

/// `(lambda^2 kF^2/(theta^2 pi)) sum V^2 |k| min(f(theta t), f(pi theta/(4 kF |k|))) - d`.
pub fn corollary_floor(params: &FloorParams, t: f64) -> Floor {
    let th = params.theta;
    let theta_t = th * t;
    if th == 0.0 {
        return Floor { value: -params.d, theta_t };
    }
    let kf = params.kf;
    let sum = compensated_sum(params.potential.iter().map(|(k, v)| {
        let cap = f_of(PI * th / (4.0 * kf * k.norm()));
        v * v * k.norm() * f_of(theta_t).min(cap)
    }));
    Floor { value: params.lambda.powi(2) * kf * kf / (th * th * PI) * sum - params.d, theta_t }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_values() {
        assert_eq!(f_of(0.0), 0.0);
        assert!((f_of(1.0) - (-1f64).exp()).abs() < 1e-15);
    }
}
