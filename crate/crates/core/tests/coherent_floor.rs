use std::f64::consts::PI;

use num_complex::Complex64;
use polaron_core::coherent::{
    bound_eta, eta_at, im_integral, im_integral_quadrature, norm_sq_closed, norm_sq_exact, nu_at, phase_p,
    phase_p_quadrature, CoherentParams,
};
use polaron_core::lowerbound::{b_dot, b_of, corollary_floor, d_of, f_of, h_of, h_residuals, FloorParams, ThetaMode};
use polaron_core::patches::{default_patch_count, weight_table};
use polaron_core::special::cosine_integral;
use polaron_core::{build_fermi_ball, build_patch_set, gamma_set, Potential};

fn params(kf: f64, lambda: f64) -> CoherentParams {
    let ball = build_fermi_ball(kf).unwrap();
    let m = default_patch_count(ball.n());
    let ps = build_patch_set(m, kf, ball.n(), 2.0 / 15.0, 0.0).unwrap();
    let v = Potential::unit_shell(1.0).unwrap();
    let table = weight_table(&ball, &ps, &gamma_set(&v).unwrap(), None);
    CoherentParams::new(lambda, kf, v, table, ball.energy_pw() as f64).unwrap()
}

#[test]
fn cosine_integral_reference_values() {
    for (x, ci) in [(0.5, -0.177_784_078_806_612_6), (1.0, 0.337_403_922_900_968_1), (5.0, -0.190_029_749_656_643_9), (10.0, -0.045_456_433_004_455_4)] {
        assert!((cosine_integral(x).unwrap() - ci).abs() < 1e-12, "x={x}");
    }
}

#[test]
fn eta_matches_direct_exponential() {
    let p = params(10.0, 0.8);
    for s in [0.01, 0.1, 0.7] {
        let eta = eta_at(&p, s);
        for (e, c) in eta.entries.iter().zip(p.couplings()) {
            let direct = if c.epsilon == 0.0 {
                Complex64::new(0.0, -s) * c.h
            } else {
                (Complex64::new(0.0, -s * c.epsilon).exp() - 1.0) / c.epsilon * c.h
            };
            assert!((e.amplitude - direct).norm() < 1e-12 * (1.0 + direct.norm()));
        }
        assert!((eta.norm_sq() - norm_sq_exact(&p, s)).abs() < 1e-10 * eta.norm_sq());
    }
}

#[test]
fn eta_solves_its_equation() {
    // i d/ds eta = eps eta + h, eta_0 = 0
    let p = params(8.0, 1.0);
    let (s, ds) = (0.3, 1e-5);
    let plus = eta_at(&p, s + ds);
    let minus = eta_at(&p, s - ds);
    let here = eta_at(&p, s);
    for (i, c) in p.couplings().iter().enumerate() {
        let d = (plus.entries[i].amplitude - minus.entries[i].amplitude) / (2.0 * ds);
        let lhs = Complex64::i() * d;
        let rhs = here.entries[i].amplitude * c.epsilon + c.h;
        assert!((lhs - rhs).norm() < 1e-6 * (1.0 + c.h.abs()));
    }
    assert_eq!(eta_at(&p, 0.0).norm_sq(), 0.0);
}

#[test]
fn nu_derivative_is_overlap_with_h() {
    // d nu / ds = -i <h, eta_s>
    let p = params(6.0, 1.0);
    let (s, ds) = (0.4, 1e-5);
    let d = (nu_at(&p, s + ds) - nu_at(&p, s - ds)) / (2.0 * ds);
    let eta = eta_at(&p, s);
    let overlap: Complex64 = eta.entries.iter().zip(p.couplings()).map(|(e, c)| e.amplitude * c.h).sum();
    let expect = -Complex64::i() * overlap;
    assert!((d - expect).norm() < 1e-6 * expect.norm());
}

#[test]
fn phase_integral_agrees_with_quadrature() {
    let p = params(10.0, 0.9);
    for t in [0.01, 0.2, 1.5] {
        let a = im_integral(&p, t);
        let b = im_integral_quadrature(&p, t);
        assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "t={t} {a} {b}");
        assert!((phase_p(&p, t) - phase_p_quadrature(&p, t)).abs() < 1e-8 * (1.0 + phase_p(&p, t).abs()));
    }
}

#[test]
fn closed_norm_has_quadratic_onset() {
    // log x - Ci x + gamma ~ x^2/4, so the closed form starts as pi lambda^2 kF^2 s^2 sum V^2 |k|
    let p = params(40.0, 1.0);
    let s = 1e-4 / 40.0;
    let law = PI * 1600.0 * s * s * 6.0;
    assert!((norm_sq_closed(&p, s) / law - 1.0).abs() < 1e-6);
}

#[test]
fn exact_norm_stays_below_bound() {
    let p = params(20.0, 1.0);
    for i in 1..=40 {
        let s = i as f64 * 0.5 / 20.0;
        assert!(norm_sq_exact(&p, s).sqrt() <= bound_eta(&p, s) * (1.0 + 1e-12), "s={s}");
    }
}

fn floor_params(kf: f64, mode: ThetaMode<'_>) -> FloorParams {
    let n = build_fermi_ball(kf).unwrap().n() as f64;
    let m = n.powf(16.0 / 45.0);
    FloorParams::new(1.0, kf, 0.0, m, n, 2.0 / 15.0, Potential::unit_shell(1.0).unwrap(), mode).unwrap()
}

#[test]
fn d_scales_with_expected_power() {
    let n: f64 = 1e6;
    let d = d_of(n.powf(16.0 / 45.0), n, 2.0 / 15.0, 0.0, 100.0, 1.0);
    assert!((d / n.powf(-8.0 / 45.0) - 1.0).abs() < 1e-12);
    assert_eq!(d_of(1.0, 1e6, 2.0 / 15.0, 5.0, 10.0, 0.5), 1.0);
}

#[test]
fn b_is_antiderivative_of_b_dot() {
    let fp = floor_params(20.0, ThetaMode::Closed);
    // Simpson on a fine grid, independent of the library quadrature
    let t = 0.2;
    let n = 20_000;
    let hstep = t / n as f64;
    let mut acc = b_dot(&fp, 0.0) + b_dot(&fp, t);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * b_dot(&fp, i as f64 * hstep);
    }
    let simpson = acc * hstep / 3.0;
    assert!((simpson - b_of(&fp, t)).abs() < 1e-6 * b_of(&fp, t));
}

#[test]
fn f_is_convex_and_vanishes_at_origin() {
    assert_eq!(f_of(0.0), 0.0);
    for i in 1..50 {
        let t = i as f64 * 0.2;
        assert!(((-t).exp() + t - 1.0 - f_of(t)).abs() < 1e-14);
        assert!(f_of(t + 0.1) - 2.0 * f_of(t) + f_of(t - 0.1) > 0.0);
    }
}

#[test]
fn h_starts_at_minus_d_and_solves_forced_equation() {
    let fp = floor_params(20.0, ThetaMode::Closed);
    assert_eq!(h_of(&fp, 0.0), -fp.d);
    for t in [0.005, 0.02, 0.1] {
        assert!(h_residuals(&fp, t).with_forcing.abs() < 1e-7, "t={t}");
    }
}

#[test]
fn floor_is_minus_d_at_zero_and_grows() {
    let fp = floor_params(20.0, ThetaMode::Closed);
    assert!((corollary_floor(&fp, 0.0).value + fp.d).abs() < 1e-15);
    let a = corollary_floor(&fp, 0.01).value;
    let b = corollary_floor(&fp, 0.05).value;
    assert!(b > a);
}
