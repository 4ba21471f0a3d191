use criterion::{black_box, criterion_group, criterion_main, Criterion};
use polaron_core::coherent::{curve_rows, CoherentParams, ImpurityCoupling};
use polaron_core::evolve::DeskPreset;
use polaron_core::hamiltonians::DeskSystem;
use polaron_core::krylov::{expm_hermitian, KrylovOptions};
use polaron_core::patches::{default_patch_count, weight_table};
use polaron_core::sparse::C64;
use polaron_core::{build_fermi_ball, build_patch_set, gamma_set, Potential};

fn weight_tables(c: &mut Criterion) {
    let v = Potential::unit_shell(1.0).unwrap();
    let gamma = gamma_set(&v).unwrap();
    let mut g = c.benchmark_group("weight_table");
    for kf in [10.0, 20.0, 40.0] {
        let ball = build_fermi_ball(kf).unwrap();
        let ps = build_patch_set(default_patch_count(ball.n()), kf, ball.n(), 2.0 / 15.0, 0.0).unwrap();
        g.bench_function(format!("kf{kf}"), |b| b.iter(|| weight_table(black_box(&ball), &ps, &gamma, None)));
    }
    g.finish();
}

fn eta_curve(c: &mut Criterion) {
    let kf = 40.0;
    let v = Potential::unit_shell(1.0).unwrap();
    let ball = build_fermi_ball(kf).unwrap();
    let ps = build_patch_set(default_patch_count(ball.n()), kf, ball.n(), 2.0 / 15.0, 0.0).unwrap();
    let table = weight_table(&ball, &ps, &gamma_set(&v).unwrap(), None);
    let params = CoherentParams::new(1.0, kf, v, table, ball.energy_pw() as f64).unwrap();
    let grid: Vec<f64> = (0..200).map(|i| i as f64 * 0.2 / 199.0).collect();
    c.bench_function("eta_curve_kf40_200pts", |b| b.iter(|| curve_rows(black_box(&params), &grid).unwrap()));
}

fn desk_kernels(c: &mut Criterion) {
    let cfg = DeskPreset::KfOne.config(1.0, Potential::unit_shell(1.0).unwrap());
    let sys = DeskSystem::new(&cfg).unwrap();
    let h = sys.reconstruct_conjugated();
    let heff = sys.collective(ImpurityCoupling::Static).build_heff().unwrap();
    let psi: Vec<C64> = (0..h.nrows()).map(|i| C64::new(((i % 13) as f64).sin(), ((i % 7) as f64).cos())).collect();
    let n = psi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let psi: Vec<C64> = psi.iter().map(|x| x / n).collect();
    c.bench_function("matvec_kf1_full", |b| b.iter(|| h.apply(black_box(&psi))));
    let mut g = c.benchmark_group("krylov");
    g.sample_size(10);
    g.bench_function("kf1_full_t0.5", |b| b.iter(|| expm_hermitian(&h, black_box(&psi), 0.5, KrylovOptions::default()).unwrap()));
    g.bench_function("kf1_heff_t0.5", |b| b.iter(|| expm_hermitian(&heff, black_box(&psi), 0.5, KrylovOptions::default()).unwrap()));
    g.finish();
}

criterion_group!(benches, weight_tables, eta_curve, desk_kernels);
criterion_main!(benches);
