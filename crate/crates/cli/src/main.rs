//! `polaron`: patches, coherent curves, lower-bound floors, Fock simulations
//! and the property suites.

mod config;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polaron_core::coherent::{curve_rows, CoherentParams};
use polaron_core::evolve::{
    cor_gap, laplacian_diagnostic, moment_growth, thm1_residual, thm2_residual, CoherentModel, DeskPreset,
    EvolutionReport, MomentFlow, OracleSetup, SimParams,
};
use polaron_core::hamiltonians::DeskConfig;
use polaron_core::lattice::lattice_points_within;
use polaron_core::lowerbound::{b_dot, b_of, corollary_floor, h_of, FloorParams, ThetaMode};
use polaron_core::patches::{patch_stats, weight_table};
use polaron_core::verify::{default_trials, exit_code, run_all, run_suite, VerifyConfig, SUITES};
use polaron_core::{build_fermi_ball, build_patch_set, gamma_set, Potential};

use config::{Config, ConfigError, ImpurityKind, RawConfig};
use output::{emit, Table};

/// Caps the worker threads.
const THREADS_ENV: &str = "POLARON_THREADS";

#[derive(Parser, Debug)]
#[command(name = "polaron", version, about = "Bosonized Fermi polaron laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// `key = value` configuration file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    #[arg(long = "kF", alias = "kf", global = true)]
    kf: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<String>,
    #[arg(long, global = true)]
    beta: Option<String>,
    /// Patch count, or `auto` for round(N^{16/45}) made even.
    #[arg(long, global = true)]
    m: Option<String>,
    #[arg(long, global = true)]
    delta: Option<String>,
    /// Potential file with `kx ky kz value` lines.
    #[arg(long, global = true)]
    potential: Option<String>,
    #[arg(long, global = true)]
    impurity: Option<String>,
    #[arg(long = "q-cut", global = true)]
    q_cut: Option<String>,
    #[arg(long = "p-cut", global = true)]
    p_cut: Option<String>,
    #[arg(long, global = true)]
    sector: Option<String>,
    #[arg(long = "n-max", global = true)]
    n_max: Option<String>,
    /// `max:points` or `points`.
    #[arg(long, global = true)]
    grid: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    out: Option<String>,
    /// Desk space: kf1, kf_sqrt2, reduced or wide.
    #[arg(long, global = true)]
    preset: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<Config, ConfigError> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::read(path)?,
            None => RawConfig::default(),
        };
        let flags = [
            ("kf", &self.kf),
            ("lambda", &self.lambda),
            ("beta", &self.beta),
            ("m", &self.m),
            ("delta", &self.delta),
            ("potential", &self.potential),
            ("impurity", &self.impurity),
            ("q_cut", &self.q_cut),
            ("p_cut", &self.p_cut),
            ("sector", &self.sector),
            ("n_max", &self.n_max),
            ("grid", &self.grid),
            ("seed", &self.seed),
            ("out", &self.out),
            ("preset", &self.preset),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                raw.set_flag(key, v);
            }
        }
        Config::from_raw(&raw)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Patch decomposition and pair-count statistics.
    Patches(Common),
    /// Coherent amplitude curve `||eta_s||^2` with its closed form and bound.
    Eta(Common),
    /// Lower-bound ingredients and the corollary floor over time.
    Floor(Common),
    /// Fock-space simulations on a desk space.
    Simulate(SimulateArgs),
    /// Seeded property suites.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Thm1,
    Thm2,
    Cor,
    Moments,
    Laplacian,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Model {
    Fermionic,
    Oracle,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Comparison model for thm2.
    #[arg(long, value_enum, default_value = "fermionic")]
    model: Model,
    /// Moment order for `moments`.
    #[arg(long, default_value_t = 1)]
    n: u32,
    /// Oracle modes kept for `--model oracle`.
    #[arg(long = "oracle-modes", default_value_t = 3)]
    oracle_modes: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Run every registered suite.
    #[arg(long)]
    all: bool,
    /// Run one suite.
    #[arg(long)]
    suite: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] polaron_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("polaron: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_potential(cfg: &Config) -> Result<(Potential, Vec<u8>), CliError> {
    match &cfg.potential {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|source| polaron_core::Error::Io { path: path.display().to_string(), source })?;
            Ok((Potential::from_file(path)?, bytes))
        }
        None => Ok((Potential::unit_shell(1.0)?, b"unit_shell".to_vec())),
    }
}

fn finish(cfg: &Config, command: &str, body: &[u8], potential_bytes: &[u8]) -> Result<u8, CliError> {
    let params = cfg.canonical();
    let mut inputs = format!("command = {command}\n{params}").into_bytes();
    inputs.extend_from_slice(potential_bytes);
    emit(cfg.out.as_deref(), body, &inputs, &params, command)?;
    Ok(0)
}

fn dispatch(command: &Command) -> Result<u8, CliError> {
    match command {
        Command::Patches(c) => patches(&c.resolve()?),
        Command::Eta(c) => eta(&c.resolve()?),
        Command::Floor(c) => floor(&c.resolve()?),
        Command::Simulate(a) => simulate(a, &a.common.resolve()?),
        Command::Verify(a) => verify(a, &a.common.resolve()?),
    }
}

fn patches(cfg: &Config) -> Result<u8, CliError> {
    let kf = cfg.require_kf()?;
    let (potential, pbytes) = load_potential(cfg)?;
    let ball = build_fermi_ball(kf)?;
    let ps = build_patch_set(cfg.patch_count(ball.n()), kf, ball.n(), cfg.delta, 0.0)?;
    let table = weight_table(&ball, &ps, &gamma_set(&potential)?, None);
    let mut t = Table::new(&["kx", "ky", "kz", "alpha", "hemisphere", "count_sq", "asymptotic_sq", "ratio"]);
    t.meta("kf", kf);
    t.meta("n", ball.n());
    t.meta("m", ps.m());
    t.meta("delta", ps.delta());
    t.meta("threshold", ps.threshold());
    for w in ps.warnings() {
        t.meta("warning", w);
    }
    for r in patch_stats(&ps, &table) {
        let [x, y, z] = r.k.to_array();
        t.row(vec![
            x.to_string(),
            y.to_string(),
            z.to_string(),
            r.alpha.to_string(),
            r.hemisphere.label().to_string(),
            r.m_sq.to_string(),
            r.n_asym_sq.to_string(),
            r.ratio.to_string(),
        ]);
    }
    finish(cfg, "patches", &t.render(), &pbytes)
}

fn coherent_params(cfg: &Config, kf: f64, potential: &Potential) -> Result<CoherentParams, CliError> {
    let ball = build_fermi_ball(kf)?;
    let ps = build_patch_set(cfg.patch_count(ball.n()), kf, ball.n(), cfg.delta, 0.0)?;
    let table = weight_table(&ball, &ps, &gamma_set(potential)?, None);
    Ok(CoherentParams::new(cfg.lambda, kf, potential.clone(), table, ball.energy_pw() as f64)?)
}

fn eta(cfg: &Config) -> Result<u8, CliError> {
    let kf = cfg.require_kf()?;
    let (potential, pbytes) = load_potential(cfg)?;
    let params = coherent_params(cfg, kf, &potential)?;
    let grid = cfg.grid.uniform(8.0 / kf);
    let mut t = Table::new(&["s", "norm_sq_exact", "norm_sq_closed", "bound_eta", "expected_excitations"]);
    t.meta("kf", kf);
    t.meta("lambda", cfg.lambda);
    t.meta("pairs", params.couplings().len());
    for w in params.warnings() {
        t.meta("warning", w);
    }
    for r in curve_rows(&params, &grid)? {
        t.row(
            [r.s, r.norm_sq_exact, r.norm_sq_closed, r.bound_eta, r.expected_excitations]
                .iter()
                .map(f64::to_string)
                .collect(),
        );
    }
    finish(cfg, "eta", &t.render(), &pbytes)
}

fn floor(cfg: &Config) -> Result<u8, CliError> {
    let kf = cfg.require_kf()?;
    let (potential, pbytes) = load_potential(cfg)?;
    let ball = build_fermi_ball(kf)?;
    let m = cfg.patch_count(ball.n());
    let ps = build_patch_set(m, kf, ball.n(), cfg.delta, 0.0)?;
    let table = weight_table(&ball, &ps, &gamma_set(&potential)?, None);
    let fp = FloorParams::new(
        cfg.lambda,
        kf,
        cfg.beta,
        m as f64,
        ball.n() as f64,
        cfg.delta,
        potential,
        ThetaMode::Exact(&table),
    )?;
    let grid = cfg.grid.uniform(3.0 / (cfg.lambda * kf));
    let mut t = Table::new(&["t", "b_dot", "b", "h", "floor", "theta_t"]);
    t.meta("kf", kf);
    t.meta("m", m);
    t.meta("n", ball.n());
    t.meta("theta", fp.theta);
    t.meta("d", fp.d);
    for &x in &grid {
        let f = corollary_floor(&fp, x);
        t.row([x, b_dot(&fp, x), b_of(&fp, x), h_of(&fp, x), f.value, f.theta_t].iter().map(f64::to_string).collect());
    }
    finish(cfg, "floor", &t.render(), &pbytes)
}

fn desk_config(cfg: &Config, potential: Potential) -> Result<DeskConfig, CliError> {
    let preset = match (&cfg.preset, cfg.kf) {
        (Some(name), _) => DeskPreset::parse(name),
        (None, Some(kf)) if cfg.p_cut.is_none() && (kf - 1.0).abs() < 1e-12 => Some(DeskPreset::KfOne),
        (None, Some(kf)) if cfg.p_cut.is_none() && (kf - 2f64.sqrt()).abs() < 1e-12 => Some(DeskPreset::KfSqrtTwo),
        _ => None,
    };
    let mut desk = match preset {
        Some(p) => p.config(cfg.lambda, potential),
        None => {
            let kf = cfg.require_kf()?;
            let p_cut = cfg
                .p_cut
                .ok_or_else(|| CliError::Usage("simulate needs a preset, kF in {1, sqrt2}, or p_cut".into()))?;
            let sector = cfg.sector.unwrap_or(polaron_core::fock::Sector::ParticleHole { max_pairs: None });
            DeskConfig::new(kf, cfg.lambda, potential, lattice_points_within((p_cut * p_cut).floor() as i64), sector)
        }
    };
    if let Some(s) = cfg.sector {
        desk.sector = s;
    }
    desk.m = cfg.m.or(desk.m);
    desk.delta = cfg.delta;
    Ok(desk)
}

fn sim_params(cfg: &Config, potential: Potential) -> Result<SimParams, CliError> {
    let mut params = SimParams::new(desk_config(cfg, potential)?);
    if cfg.impurity == ImpurityKind::Truncated {
        params = params.with_impurity(cfg.q_cut, cfg.beta);
    }
    params.beta = cfg.beta;
    Ok(params)
}

fn report_body(report: &EvolutionReport) -> Vec<u8> {
    let mut out = Vec::new();
    let _ = report.write_csv(&mut out);
    out
}

fn simulate(args: &SimulateArgs, cfg: &Config) -> Result<u8, CliError> {
    let (potential, pbytes) = load_potential(cfg)?;
    let report = match (args.mode, args.model) {
        (Mode::Thm2, Model::Oracle) => {
            let kf = cfg.require_kf()?;
            let base = coherent_params(cfg, kf, &potential)?;
            let setup = OracleSetup {
                kf,
                lambda: cfg.lambda,
                potential: potential.clone(),
                weights: base.weights.clone(),
                e_pw: base.e_pw,
                max_modes: args.oracle_modes,
                n_max: cfg.n_max,
            };
            thm2_residual(&CoherentModel::BosonicOracle(setup), &cfg.grid.uniform(1.0 / (cfg.lambda * kf)))?
        }
        (mode, _) => {
            let params = sim_params(cfg, potential)?;
            let rate = cfg.lambda * params.desk.kf;
            let grid = cfg.grid.uniform(2.0 / rate);
            match mode {
                Mode::Thm1 => thm1_residual(&params, &grid)?,
                Mode::Thm2 => thm2_residual(&CoherentModel::Fermionic(params), &grid)?,
                Mode::Cor => cor_gap(&params, &grid)?,
                Mode::Moments => {
                    let (mut report, fit) = moment_growth(&params, args.n, &grid, &MomentFlow::Heff)?;
                    report.meta("c_min", fit.c_min);
                    report.meta("c_growth", fit.c_growth);
                    report.meta("growth_residual", fit.growth_residual);
                    report
                }
                Mode::Laplacian => laplacian_diagnostic(&params, &grid)?,
            }
        }
    };
    let name = format!("simulate:{:?}", args.mode).to_ascii_lowercase();
    finish(cfg, &name, &report_body(&report), &pbytes)
}

fn verify(args: &VerifyArgs, cfg: &Config) -> Result<u8, CliError> {
    let (potential, pbytes) = load_potential(cfg)?;
    let vcfg = VerifyConfig { lambda: cfg.lambda, potential, ..VerifyConfig::default() };
    let reports = match (&args.suite, args.all) {
        (Some(name), false) => vec![run_suite(name, args.trials.unwrap_or_else(|| default_trials(name)), cfg.seed, &vcfg)?],
        (None, true) => run_all(cfg.seed, &vcfg)?,
        _ => {
            let names: Vec<&str> = SUITES.iter().map(|(n, _)| *n).collect();
            return Err(CliError::Usage(format!("verify needs --all or --suite NAME (one of {})", names.join(", "))));
        }
    };
    let mut body = String::new();
    for r in &reports {
        body.push_str(&r.line());
        body.push('\n');
        eprintln!("{}: {:.1} s", r.name, r.wall_time.as_secs_f64());
    }
    if cfg.out.is_some() {
        finish(cfg, "verify", body.as_bytes(), &pbytes)?;
    }
    print!("{body}");
    Ok(exit_code(&reports) as u8)
}
