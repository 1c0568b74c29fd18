//! Experiment harness for the illiquid-asset investment/consumption solver.
//!
//! Subcommands: `baseline` (derived constants and closed-form values),
//! `solve` (one fixed-point solve, surface persisted), `tables` (value,
//! cost-of-illiquidity and allocation sweeps), `figures` (CSV + gnuplot
//! scripts), `simulate` (closed-loop Monte Carlo on a persisted surface).
//!
//! Exit status: 0 on success, 1 on validation errors, 2 on numerical
//! failures.

mod config;
mod figures;
mod runner;
mod tables;

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::time::Instant;

use illiq_core::model::{
    compute_kp, merton_illiquid_fraction, merton_liquid_fraction, merton_value,
    merton_value_single, participates, solve_k0, DerivedConstants,
};
use illiq_core::policy::{cost_of_illiquidity, optimal_allocation, PolicyField};
use illiq_core::sim::simulate;

use config::{ExperimentSpec, Profile};
use runner::{build_grid, load_surface, persist_surface, solve_cell};

#[derive(Parser)]
#[command(name = "illiq", about = "Investment/consumption solver for a market with a Poisson-traded illiquid asset")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; defaults to the built-in baseline parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSVs, scripts and caches.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the config's scheme profile.
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    /// Override the config's random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print all derived constants and closed-form baseline values.
    Baseline,
    /// Run the fixed point for the base parameters and persist the surface.
    Solve,
    /// Emit the value, cost-of-illiquidity and allocation tables.
    Tables,
    /// Emit figure CSVs and gnuplot scripts.
    Figures,
    /// Run the closed-loop Monte Carlo on the persisted surface.
    Simulate,
}

fn default_spec() -> ExperimentSpec {
    serde_json::from_value(serde_json::json!({
        "params": {
            "b_L": 0.15, "sigma_L": 1.0, "b_I": 0.2, "sigma_I": 1.0,
            "rho": 0.0, "beta": 0.2, "p": 0.5, "lambda": 5.0, "gamma": 0.0
        }
    }))
    .expect("default spec")
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(core_err) = cause.downcast_ref::<illiq_core::Error>() {
            return match core_err {
                illiq_core::Error::Numerical { .. }
                | illiq_core::Error::NoConvergence { .. }
                | illiq_core::Error::QuantizerNoConvergence { .. }
                | illiq_core::Error::Bracket(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code_for(&err));
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut spec = match &cli.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => default_spec(),
    };
    if let Some(profile) = cli.profile {
        spec.profile = profile;
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    spec.validate_all()?;
    std::fs::create_dir_all(&cli.out)?;

    match cli.command {
        Command::Baseline => baseline(&spec),
        Command::Solve => solve(&spec, &cli.out),
        Command::Tables => {
            let grid = build_grid(&spec)?;
            tables::run_value_tables(&spec, &grid, &cli.out)?;
            tables::run_cost_tables(&spec, &grid, &cli.out)?;
            tables::run_allocation_table(&spec, &grid, &cli.out)?;
            println!("tables written to {}", cli.out.display());
            Ok(())
        }
        Command::Figures => {
            let grid = build_grid(&spec)?;
            figures::run_figures(&spec, &grid, &cli.out)?;
            println!("figures written to {}", cli.out.display());
            Ok(())
        }
        Command::Simulate => simulate_cmd(&spec, &cli.out),
    }
}

fn baseline(spec: &ExperimentSpec) -> Result<()> {
    let params = &spec.params;
    let c = DerivedConstants::from_params(params);
    println!("k_p={}", compute_kp(params));
    println!("b_Y={}", c.b_y);
    println!("b_J={}", c.b_j);
    println!("sigma_J={}", c.sigma_j);
    println!("k_LYp={}", c.k_lyp);
    println!("k_Jp={}", c.k_jp);
    println!("K_lambda={}", c.k_lambda);
    println!("K1={}", c.k1);
    println!("K2={}", c.k2);
    println!("K3={}", c.k3);
    println!("K4={}", c.k4);
    println!("Khat1={}", c.khat1);
    println!("Khat3={}", c.khat3);
    println!("merton_constrained={}", merton_value(params, true)?);
    println!("merton_unconstrained={}", merton_value(params, false)?);
    println!(
        "merton_single_asset={}",
        merton_value_single(params.b_i, params.sigma_i, params.beta, params.p)?
    );
    println!("merton_illiquid_fraction={}", merton_illiquid_fraction(params, true));
    println!("merton_liquid_fraction={}", merton_liquid_fraction(params, true));
    println!("K0_phi0_zero={}", solve_k0(params, 0.0)?);
    println!("participates={}", participates(params));
    Ok(())
}

fn solve(spec: &ExperimentSpec, out: &std::path::Path) -> Result<()> {
    let grid = build_grid(spec)?;
    let start = Instant::now();
    let cell = solve_cell(spec, spec.params, &grid)?;
    let wall_ms = start.elapsed().as_millis();
    persist_surface(out, &cell, spec.profile.name())?;

    // Policy grids next to the surface.
    let field = PolicyField::build(&cell.result.surface, &cell.consts);
    let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("policy.csv"))?);
    use std::io::Write as _;
    writeln!(w, "# params_hash={:016x} profile={}", cell.hash, spec.profile.name())?;
    writeln!(w, "t,zhat,C_hat,Pi_hat")?;
    let n = field.zhat_liquid_grid.len();
    let stride = (field.t_grid.len() / 200).max(1);
    for (i, t) in field.t_grid.iter().enumerate().step_by(stride) {
        for j in (0..n).rev() {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6}",
                t,
                1.0 - field.zhat_liquid_grid[j],
                field.c_hat[i * n + j],
                field.pi_hat[i * n + j],
            )?;
        }
    }
    drop(w);

    let (z_star, z_hat_star) = optimal_allocation(&cell.result.surface);
    println!("phi0={}", cell.result.phi0);
    println!("phi0_pde={}", cell.result.phi0_pde);
    println!("iterations={}", cell.result.iterations);
    println!("converged={}", cell.result.converged);
    println!("z_star={z_star}");
    println!("z_hat_star={z_hat_star}");
    println!("e1={}", cost_of_illiquidity(cell.result.phi0, &spec.params)?);
    println!("params_hash={:016x}", cell.hash);
    println!("wall_ms={wall_ms}");
    Ok(())
}

fn simulate_cmd(spec: &ExperimentSpec, out: &std::path::Path) -> Result<()> {
    let cfg = spec.scheme_for(spec.params.lambda);
    let consts = DerivedConstants::from_params(&spec.params);
    let hash = runner::cell_hash(&spec.params, &cfg);
    let surface = match load_surface(out, &spec.params, &cfg) {
        Ok((surface, meta)) => {
            println!("surface=loaded params_hash={}", meta.hash_hex);
            surface
        }
        Err(_) => {
            let grid = build_grid(spec)?;
            let cell = solve_cell(spec, spec.params, &grid)?;
            persist_surface(out, &cell, spec.profile.name())?;
            println!("surface=solved params_hash={:016x}", cell.hash);
            cell.result.surface
        }
    };
    let field = PolicyField::build(&surface, &consts);
    let sim_cfg = spec.sim_config();
    let start = Instant::now();
    let result = simulate(&spec.params, &field, &sim_cfg)?;
    let wall_ms = start.elapsed().as_millis();
    result.write_paths_csv(
        &out.join("paths_sample.csv"),
        &format!(
            "params_hash={hash:016x} profile={} seed={} n_paths={}",
            spec.profile.name(),
            sim_cfg.seed,
            sim_cfg.n_paths
        ),
    )?;
    println!("mean_utility={}", result.mean_utility);
    println!("utility_std_error={}", result.utility_std_error);
    println!("total_trades={}", result.total_trades);
    println!("rebalance_violations={}", result.rebalance_violations);
    println!("absorbed_paths={}", result.absorbed_paths);
    println!("z_hat_star={}", field.z_hat_star);
    println!("n_paths={}", sim_cfg.n_paths);
    println!("seed={}", sim_cfg.seed);
    println!("wall_ms={wall_ms}");
    Ok(())
}
