//! End-to-end checks of the `illiq` binary: exit codes, determinism of the
//! emitted artifacts, and the documented key=value summaries.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_illiq"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn fast_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        r#"{
            "params": {"b_L": 0.15, "sigma_L": 1.0, "b_I": 0.2, "sigma_I": 1.0,
                       "rho": 0.0, "beta": 0.2, "p": 0.5, "lambda": 5.0, "gamma": 0.0},
            "lambdas": [1.0, 5.0],
            "gammas": [0.0],
            "rhos": [0.0],
            "profile": "fast",
            "sim": {"horizon": 2.0, "dt_euler": 0.01, "n_paths": 500,
                    "seed": 0, "initial_wealth": 1.0, "sample_paths": 2}
        }"#,
    )
}

fn value_of(output: &Output, key: &str) -> String {
    let stdout = String::from_utf8_lossy(&output.stdout);
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_owned))
        .unwrap_or_else(|| panic!("missing {key}= in output:\n{stdout}"))
}

#[test]
fn baseline_prints_constants() {
    let out = bin().arg("baseline").output().unwrap();
    assert!(out.status.success());
    assert_eq!(value_of(&out, "k_p"), "0.03125");
    assert!(value_of(&out, "merton_constrained").starts_with("1.72132"));
    assert_eq!(value_of(&out, "participates"), "true");
}

#[test]
fn invalid_params_exit_code_one() {
    let dir = tempdir("invalid");
    let config = write_config(
        &dir,
        r#"{"params": {"b_L": 0.15, "sigma_L": 1.0, "b_I": 0.2, "sigma_I": 1.0,
                       "rho": 0.0, "beta": 0.01, "p": 0.5, "lambda": 5.0, "gamma": 0.0}}"#,
    );
    let out = bin().arg("baseline").arg("--config").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Unknown fields in the params object are rejected.
    let config = write_config(
        &dir,
        r#"{"params": {"b_L": 0.15, "sigma_L": 1.0, "b_I": 0.2, "sigma_I": 1.0,
                       "rho": 0.0, "beta": 0.2, "p": 0.5, "lambda": 5.0, "gamma": 0.0,
                       "bogus": 1.0}}"#,
    );
    let out = bin().arg("baseline").arg("--config").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_is_deterministic_and_persists_surface() {
    let dir = tempdir("solve");
    let config = fast_config(&dir);
    let run = || {
        bin()
            .arg("solve")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&dir)
            .output()
            .unwrap()
    };
    let first = run().clone();
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let surface_a = std::fs::read(dir.join("surface.csv")).unwrap();
    let second = run();
    let surface_b = std::fs::read(dir.join("surface.csv")).unwrap();
    assert_eq!(surface_a, surface_b, "surface.csv not byte-identical");
    assert_eq!(value_of(&first, "phi0"), value_of(&second, "phi0"));
    assert_eq!(value_of(&first, "converged"), "true");
    assert!(dir.join("surface.bin").exists());
    assert!(dir.join("policy.csv").exists());

    // phi0 lands near the published lambda = 5 value even on the fast grid.
    let phi0: f64 = value_of(&first, "phi0").parse().unwrap();
    assert!((phi0 - 1.70493).abs() < 0.03, "phi0 = {phi0}");
}

#[test]
fn tables_and_figures_are_deterministic() {
    let dir = tempdir("tables");
    let config = fast_config(&dir);
    let run_tables = || {
        bin()
            .arg("tables")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&dir)
            .output()
            .unwrap()
    };
    assert!(run_tables().status.success());
    let a = std::fs::read(dir.join("value_table.csv")).unwrap();
    let header = String::from_utf8_lossy(&a);
    assert!(header.starts_with("# params_hash="), "hash header missing");
    assert!(run_tables().status.success());
    let b = std::fs::read(dir.join("value_table.csv")).unwrap();
    assert_eq!(a, b);
    assert!(dir.join("cost_table_rho_+0p00.csv").exists());
    assert!(dir.join("allocation_table.csv").exists());

    let out = bin()
        .arg("figures")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "fig_value_vs_rho.csv",
        "fig_alloc_vs_rho.csv",
        "fig_consumption.csv",
        "fig_liquid.csv",
        "fig_obs_consumption.csv",
        "fig_obs_liquid.csv",
    ] {
        assert!(dir.join(name).exists(), "{name} missing");
        assert!(dir.join(name.replace(".csv", ".gp")).exists());
    }
}

#[test]
fn simulate_reuses_surface_and_reproduces_with_seed() {
    let dir = tempdir("simulate");
    let config = fast_config(&dir);
    let solve = bin()
        .arg("solve")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(solve.status.success());
    let run_sim = |seed: &str| {
        bin()
            .arg("simulate")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&dir)
            .arg("--seed")
            .arg(seed)
            .output()
            .unwrap()
    };
    let a = run_sim("9");
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(String::from_utf8_lossy(&a.stdout).contains("surface=loaded"));
    let b = run_sim("9");
    assert_eq!(value_of(&a, "mean_utility"), value_of(&b, "mean_utility"));
    assert_eq!(value_of(&a, "rebalance_violations"), "0");
    let c = run_sim("10");
    assert_ne!(value_of(&a, "mean_utility"), value_of(&c, "mean_utility"));
    assert!(dir.join("paths_sample.csv").exists());
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("illiq_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
