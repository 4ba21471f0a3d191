//! End-to-end acceptance run: one pass/fail line per criterion.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use polaron_core::coherent::{norm_sq_closed, norm_sq_exact, CoherentParams};
use polaron_core::evolve::{
    cor_gap, moment_growth, thm1_residual, thm2_residual, uniform_grid, CoherentModel, DeskPreset, MomentFlow,
    OracleSetup, SimParams,
};
use polaron_core::lowerbound::{
    b_dot, b_of, branch_time, corollary_floor, d_of, f_of, h_of, h_residuals, FloorParams, ThetaMode,
};
use polaron_core::patches::{default_patch_count, patch_stats, signed_sums, weight_table, DEFAULT_DELTA};
use polaron_core::quadrature::gauss_legendre_unit;
use polaron_core::verify::{run_suite, SuiteReport, VerifyConfig};
use polaron_core::{build_fermi_ball, build_patch_set, gamma_set, FermiBall, PatchSet, Potential, WeightTable};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn unit() -> Potential {
    Potential::unit_shell(1.0).unwrap()
}

fn suite(name: &str, trials: usize, seed: u64) -> SuiteReport {
    run_suite(name, trials, seed, &VerifyConfig::default()).unwrap()
}

struct Setup {
    ball: FermiBall,
    patches: PatchSet,
    table: WeightTable,
}

fn setup(kf: f64) -> Setup {
    let ball = build_fermi_ball(kf).unwrap();
    let patches = build_patch_set(default_patch_count(ball.n()), kf, ball.n(), DEFAULT_DELTA, 0.0).unwrap();
    let table = weight_table(&ball, &patches, &gamma_set(&unit()).unwrap(), None);
    Setup { ball, patches, table }
}

fn coherent(kf: f64, lambda: f64) -> CoherentParams {
    let s = setup(kf);
    CoherentParams::new(lambda, kf, unit(), s.table, s.ball.energy_pw() as f64).unwrap()
}

fn c1_identities() -> Outcome {
    let start = Instant::now();
    let r = suite("identities", 1, 42);
    let worst = r.measured.iter().filter(|(n, _)| n.ends_with("defect")).map(|(_, v)| *v).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    Outcome::new(
        r.violations == 0 && worst <= 1e-10 && elapsed <= Duration::from_secs(300),
        format!("{} checks, {} violations, worst defect {worst:.1e}", r.checks, r.violations),
    )
}

fn c2_bounds() -> Outcome {
    let reports: Vec<SuiteReport> =
        ["pair_bounds", "ccr_error", "eta_bounds"].iter().map(|n| suite(n, 100, 42)).collect();
    let violations: usize = reports.iter().map(|r| r.violations).sum();
    let checks: usize = reports.iter().map(|r| r.checks).sum();
    let e_kk = reports[1].measured_value("max_eig_e_kk").unwrap_or(f64::INFINITY);
    let cc = reports[0].measured_value("max_eig_sum_cc_minus_n").unwrap_or(f64::INFINITY);
    Outcome::new(
        violations == 0 && e_kk <= 1e-12,
        format!("{checks} checks, {violations} violations, max eig E(k,k) {e_kk:.1e}, max eig (sum c*c - N) {cc:.1e}"),
    )
}

fn c3_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for (kf, lambda) in [(3.0, 1.0), (3.0, 0.7), (5.0, 1.0), (5.0, 0.7)] {
        let s = setup(kf);
        let model = CoherentModel::BosonicOracle(OracleSetup {
            kf,
            lambda,
            potential: unit(),
            weights: s.table,
            e_pw: s.ball.energy_pw() as f64,
            max_modes: 3,
            n_max: None,
        });
        let report = thm2_residual(&model, &uniform_grid(1.0 / (lambda * kf), 20)).unwrap();
        worst = report.column("residual").unwrap().iter().copied().fold(worst, f64::max);
        tail = tail.max(report.metadata_value("max_tail_mass").unwrap().parse().unwrap());
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst <= 1e-6 && tail < 1e-10 && elapsed <= Duration::from_secs(120),
        format!("max residual {worst:.1e} over kF in {{3,5}}, lambda in {{0.7,1}}, max tail mass {tail:.1e}, {:.0}s", elapsed.as_secs_f64()),
    )
}

fn c4_number() -> Outcome {
    let r = suite("number_expectation", 20, 7);
    Outcome::new(
        r.violations == 0,
        format!(
            "{} violations, fermionic defect {:.1e}, oracle defect {:.1e}",
            r.violations,
            r.measured_value("fermionic_max_defect").unwrap_or(f64::NAN),
            r.measured_value("oracle_max_defect").unwrap_or(f64::NAN)
        ),
    )
}

/// `log x - Ci(x) + gamma = sum_{n>=1} (-1)^{n+1} x^{2n} / (2n (2n)!)`.
fn series_log_ci(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut pow_fact = 1.0;
    for n in 1..40 {
        let m = 2 * n;
        pow_fact *= x * x / ((m - 1) as f64 * m as f64);
        let term = pow_fact / m as f64;
        sum += if n % 2 == 1 { term } else { -term };
        if term < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

fn c5_eta_curve() -> Outcome {
    let kf = 40.0;
    let start = Instant::now();
    let params = coherent(kf, 1.0);
    let enumeration = start.elapsed();
    let worst = (1..=400)
        .map(|i| 2.0 / kf * i as f64 / 400.0)
        .map(|s| (norm_sq_exact(&params, s) / norm_sq_closed(&params, s) - 1.0).abs())
        .fold(0.0, f64::max);
    let law = PI * kf * kf * unit().iter().map(|(k, v)| v * v * k.norm()).sum::<f64>();
    let s = 1e-4 / kf;
    let closed_ratio = norm_sq_closed(&params, s) / (s * s) / law;
    let exact_ratio = norm_sq_exact(&params, s) / (s * s) / law;
    let series = PI * unit().iter().map(|(k, v)| v * v / k.norm() * series_log_ci(2.0 * kf * k.norm() * s)).sum::<f64>();
    let series_defect = (norm_sq_closed(&params, s) / series - 1.0).abs();
    Outcome::new(
        worst <= 0.10 && (closed_ratio - 1.0).abs() <= 0.02 && series_defect <= 1e-8 && enumeration <= Duration::from_secs(60),
        format!(
            "max |exact/closed - 1| on (0, 2/kF] = {worst:.3} (target 0.10); small-s closed/law {closed_ratio:.6}, exact/law {exact_ratio:.4}, closed vs series {series_defect:.1e}; enumeration {:.1}s",
            enumeration.as_secs_f64()
        ),
    )
}

fn c6_patches() -> Outcome {
    let mut per_patch = Vec::new();
    let mut sums = Vec::new();
    for kf in [15.0, 25.0, 40.0] {
        let s = setup(kf);
        per_patch.push(patch_stats(&s.patches, &s.table).iter().map(|r| (r.ratio - 1.0).abs()).fold(0.0, f64::max));
        sums.push(
            gamma_set(&unit()).unwrap().iter().map(|&k| signed_sums(&s.table, kf, k).worst_error()).fold(0.0, f64::max),
        );
    }
    let monotone = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        monotone(&per_patch) && monotone(&sums) && per_patch[2] <= 0.25 && sums[2] <= 0.25,
        format!("worst patch-ratio error {per_patch:.3?}, worst signed-sum error {sums:.3?} over kF 15, 25, 40"),
    )
}

fn c7_moments() -> Outcome {
    let v1 = unit().norm_l1();
    let mut fits = Vec::new();
    for preset in [DeskPreset::KfOne, DeskPreset::KfSqrtTwo] {
        let params = SimParams::new(preset.config(1.0, unit()));
        for n in [1, 2] {
            let (_, fit) = moment_growth(&params, n, &uniform_grid(2.0, 21), &MomentFlow::Heff).unwrap();
            fits.push((preset.name(), n, fit.c_min));
        }
    }
    let cs: Vec<f64> = fits.iter().map(|f| f.2).collect();
    let finite = cs.iter().all(|c| c.is_finite());
    let spread = cs.iter().copied().fold(0.0, f64::max) / cs.iter().copied().fold(f64::INFINITY, f64::min);
    let listing: Vec<String> = fits.iter().map(|(p, n, c)| format!("{p}/n={n}: C/|V|_1={:.3}", c / v1)).collect();
    Outcome::new(finite, format!("{}; spread {spread:.2}x (2x stability {})", listing.join(", "), if spread <= 2.0 { "met" } else { "not met" }))
}

fn floor_params(kf: f64, mode_exact: bool, s: &Setup) -> FloorParams {
    let mode = if mode_exact { ThetaMode::Exact(&s.table) } else { ThetaMode::Closed };
    FloorParams::new(1.0, kf, 0.0, s.patches.m() as f64, s.ball.n() as f64, DEFAULT_DELTA, unit(), mode).unwrap()
}

fn c8_floor() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    ok &= (f_of(1.0) - (-1f64).exp()).abs() <= 1e-15 && f_of(0.0) == 0.0;

    let s20 = setup(20.0);
    let s40 = setup(40.0);
    let fp = floor_params(40.0, true, &s40);
    let ts = branch_time(40.0, 1.0);
    let eps = 1e-14;
    let jump_b = (b_of(&fp, ts * (1.0 - eps)) - b_of(&fp, ts * (1.0 + eps))).abs() / b_of(&fp, ts);
    let jump_bd = (b_dot(&fp, ts * (1.0 - eps)) - b_dot(&fp, ts * (1.0 + eps))).abs() / b_dot(&fp, ts);
    ok &= jump_b <= 1e-12 && jump_bd <= 1e-12;
    notes.push(format!("branch jumps b {jump_b:.1e}, b' {jump_bd:.1e}"));

    // b as the integral of b' by Gauss-Legendre on each branch
    let t = 3.0 * ts;
    let nodes = gauss_legendre_unit(40);
    let integral: f64 = [(0.0, ts), (ts, t)]
        .iter()
        .map(|&(a, b)| nodes.iter().map(|&(x, w)| w * (b - a) * b_dot(&fp, a + (b - a) * x)).sum::<f64>())
        .sum();
    let anti = (integral / b_of(&fp, t) - 1.0).abs();
    ok &= anti <= 1e-10;
    notes.push(format!("b vs integral of b' {anti:.1e}"));

    let h2 = s40.table.entries.iter().map(|w| w.count_sq as f64).sum::<f64>();
    let theta = h2.sqrt() + 2.0 / 40.0 * h2;
    let d = s40.patches.m() as f64 * (s40.ball.n() as f64).powf(-2.0 / 3.0 + DEFAULT_DELTA);
    ok &= (fp.theta / theta - 1.0).abs() <= 1e-12 && (fp.d / d - 1.0).abs() <= 1e-12;
    ok &= d_of(4.0, 8.0, 0.0, 2.0, 1.0, 1.0) == 2.0;

    let ode = (1..=20)
        .map(|i| h_residuals(&fp, 3.0 / 40.0 * i as f64 / 20.0).with_forcing.abs())
        .fold(0.0, f64::max);
    ok &= ode <= 1e-8 && h_of(&fp, 0.0) == -fp.d;
    notes.push(format!("ODE residual {ode:.1e}"));

    let level = |kf: f64, s: &Setup, exact: bool| {
        let p = floor_params(kf, exact, s);
        corollary_floor(&p, 1.0 / kf).value + p.d
    };
    let closed = (level(20.0, &s20, false), level(40.0, &s40, false));
    let exact = (level(20.0, &s20, true), level(40.0, &s40, true));
    let closed_ratio = closed.1 / closed.0;
    ok &= (closed_ratio - 1.0).abs() <= 0.10;
    notes.push(format!(
        "floor+d at t=1/kF: closed theta {:.4}/{:.4} (ratio {closed_ratio:.3}), exact theta {:.4}/{:.4} (ratio {:.3}, reported)",
        closed.0,
        closed.1,
        exact.0,
        exact.1,
        exact.1 / exact.0
    ));

    let report = cor_gap(&SimParams::new(DeskPreset::Reduced.config(1.0, unit())), &uniform_grid(2.0, 21)).unwrap();
    let floor = report.column("floor").unwrap();
    let gap = report.column("gap").unwrap();
    let positive = floor.iter().filter(|f| **f > 0.0).count();
    let held = floor.iter().zip(gap).filter(|(f, g)| **f > 0.0 && g >= f).count();
    notes.push(format!("desk gap >= floor at {held}/{positive} points with positive floor (reported)"));
    Outcome::new(ok, notes.join("; "))
}

fn c9_residuals() -> Outcome {
    let start = Instant::now();
    let params = SimParams::new(DeskPreset::KfOne.config(1.0, unit()));
    let grid = uniform_grid(2.0, 21);
    let reports = [
        ("thm1", thm1_residual(&params, &grid).unwrap()),
        ("thm2", thm2_residual(&CoherentModel::Fermionic(params.clone()), &grid).unwrap()),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, r) in &reports {
        let res = r.column("residual").unwrap();
        let duh = r.column("duhamel").unwrap();
        let cont = r.column("continuity").unwrap();
        let max = res.iter().copied().fold(0.0, f64::max);
        let dominated = res.iter().zip(duh).all(|(a, b)| *a <= b * (1.0 + 1e-9) + 1e-12);
        let jump = cont.iter().copied().fold(0.0, f64::max);
        ok &= res[0] == 0.0 && max <= 2.0 && dominated && jump <= 1.0;
        notes.push(format!("{name}: max {max:.3}, duhamel-dominated {dominated}, max jump/Lipschitz {jump:.2}"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed <= Duration::from_secs(600);
    notes.push(format!("{:.0}s", elapsed.as_secs_f64()));
    Outcome::new(ok, notes.join("; "))
}

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_polaron"))
        .args(args)
        .current_dir(dir)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn c10_determinism() -> Outcome {
    let runs: &[&[&str]] = &[
        &["eta", "--kF", "20", "--out", "eta.csv"],
        &["patches", "--kF", "15", "--out", "patches.csv"],
        &["floor", "--kF", "20", "--out", "floor.csv"],
        &["simulate", "--mode", "thm1", "--preset", "reduced", "--grid", "1:6", "--out", "thm1.csv"],
        &["simulate", "--mode", "thm2", "--model", "oracle", "--kF", "3", "--grid", "6", "--out", "oracle.csv"],
        &["simulate", "--mode", "moments", "--n", "2", "--preset", "reduced", "--grid", "1:6", "--out", "moments.csv"],
        &["verify", "--suite", "pair_bounds", "--trials", "5", "--seed", "3", "--out", "verify.txt"],
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut identical = 0;
    let mut files = 0;
    for args in runs {
        if !(run_cli(a.path(), args) && run_cli(b.path(), args)) {
            return Outcome::new(false, format!("`polaron {}` failed", args.join(" ")));
        }
        let out = args[args.len() - 1];
        for name in [out.to_string(), format!("{out}.meta")] {
            files += 1;
            let x = std::fs::read(a.path().join(&name)).unwrap_or_default();
            let y = std::fs::read(b.path().join(&name)).unwrap_or_else(|_| vec![0]);
            if !x.is_empty() && x == y {
                identical += 1;
            }
        }
    }
    Outcome::new(identical == files, format!("{identical}/{files} output files byte-identical across two runs"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("exact operator identities", c1_identities),
        ("explicit-constant bounds", c2_bounds),
        ("bosonic-oracle exactness", c3_oracle),
        ("number expectation", c4_number),
        ("closed-form eta curve", c5_eta_curve),
        ("patch asymptotics", c6_patches),
        ("Gronwall moments", c7_moments),
        ("corollary machinery", c8_floor),
        ("residual reports", c9_residuals),
        ("determinism", c10_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|_| Outcome::new(false, "panicked"));
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status} {name}: {} [{:.1}s]", i + 1, outcome.detail, start.elapsed().as_secs_f64());
        if !outcome.pass {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
