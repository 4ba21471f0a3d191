use polaron_core::coherent::ImpurityCoupling;
use polaron_core::evolve::{DeskPreset, Propagator};
use polaron_core::hamiltonians::DeskSystem;
use polaron_core::krylov::{dense_expm, HermitianEigen, KrylovOptions};
use polaron_core::sparse::{inner, norm, C64};
use polaron_core::verify::{run_suite, VerifyConfig};
use polaron_core::{Momentum, Potential};

fn reduced() -> DeskSystem {
    DeskSystem::new(&DeskPreset::Reduced.config(1.0, Potential::unit_shell(1.0).unwrap())).unwrap()
}

fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn spread_state(dim: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..dim).map(|i| C64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos())).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

#[test]
fn effective_hamiltonian_is_hermitian() {
    let sys = reduced();
    let heff = sys.collective(ImpurityCoupling::Static).build_heff().unwrap();
    assert!(heff.hermiticity_defect() < 1e-12);
    assert!(sys.reconstruct_conjugated().hermiticity_defect() < 1e-12);
}

#[test]
fn propagation_is_unitary_and_composes() {
    let sys = reduced();
    let h = sys.reconstruct_conjugated();
    let psi = sys.product_vacuum(Momentum::ZERO).unwrap();
    let prop = Propagator::new(&h, KrylovOptions::default());
    let a = prop.apply(&prop.apply(&psi, 0.3).unwrap(), 0.4).unwrap();
    let b = prop.apply(&psi, 0.7).unwrap();
    assert!(distance(&a, &b) < 1e-10);
    assert!((norm(&b) - 1.0).abs() < 1e-12);
    let back = prop.apply(&b, -0.7).unwrap();
    assert!(distance(&back, &psi) < 1e-10);
}

#[test]
fn dense_and_krylov_propagation_agree() {
    let sys = reduced();
    let h = sys.reconstruct_conjugated();
    let psi = spread_state(h.nrows());
    let dense = Propagator::new(&h, KrylovOptions::default()).apply(&psi, 1.1).unwrap();
    let krylov = Propagator::krylov_only(&h, KrylovOptions::default()).apply(&psi, 1.1).unwrap();
    assert!(distance(&dense, &krylov) < 1e-8);
}

#[test]
fn eigen_route_matches_taylor_exponential() {
    let h = reduced().collective(ImpurityCoupling::Static).build_heff().unwrap().to_dense();
    let eig = HermitianEigen::new(&h);
    let taylor = dense_expm(&h.map(|v| v * C64::new(0.0, -0.9)));
    assert!((eig.propagator(0.9) - taylor).norm() < 1e-9);
    let recon = &eig.vectors * nalgebra::DMatrix::from_diagonal(&eig.values.map(|x| C64::new(x, 0.0))) * eig.vectors.adjoint();
    assert!((recon - &h).norm() < 1e-10 * h.norm().max(1.0));
}

#[test]
fn energy_is_conserved() {
    let sys = reduced();
    let h = sys.reconstruct_conjugated();
    let psi = sys.product_vacuum(Momentum::ZERO).unwrap();
    let e0 = h.expectation(&psi).re;
    let later = Propagator::new(&h, KrylovOptions::default()).apply(&psi, 2.0).unwrap();
    assert!((h.expectation(&later).re - e0).abs() < 1e-9 * (1.0 + e0.abs()));
    assert!((inner(&later, &later).re - 1.0).abs() < 1e-12);
}

#[test]
fn verify_reports_are_reproducible() {
    let cfg = VerifyConfig::default();
    let a = run_suite("eta_bounds", 5, 11, &cfg).unwrap();
    let b = run_suite("eta_bounds", 5, 11, &cfg).unwrap();
    assert_eq!(a.line(), b.line());
    assert!(a.passed());
}
