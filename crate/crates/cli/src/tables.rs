//! Table emission: per-unit-wealth values, cost of illiquidity and optimal
//! allocation over the configured sweep axes.

use anyhow::Result;
use illiq_core::gauss::GaussGrid;
use illiq_core::model::{merton_illiquid_fraction, merton_value, merton_value_single, ModelParams};
use illiq_core::policy::{cost_of_illiquidity, optimal_allocation};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::config::ExperimentSpec;
use crate::runner::{cell_hash, solve_cell};

fn write_table(path: &Path, hash_line: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# {hash_line}")?;
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// One (gamma, lambda) grid of solved cells at fixed rho; failures are kept
/// as row markers so a partial sweep still emits a table.
fn sweep_phi0(
    spec: &ExperimentSpec,
    grid: &GaussGrid,
    rho: f64,
    no_liquid: bool,
    gammas: &[f64],
) -> Vec<Vec<Result<f64, String>>> {
    let cells: Vec<(usize, usize, ModelParams)> = gammas
        .iter()
        .enumerate()
        .flat_map(|(gi, &gamma)| {
            spec.lambdas.iter().enumerate().map(move |(li, &lambda)| {
                (
                    gi,
                    li,
                    ModelParams {
                        lambda,
                        gamma,
                        rho,
                        no_liquid_asset: no_liquid,
                        b_l: if no_liquid { 0.0 } else { spec.params.b_l },
                        ..spec.params
                    },
                )
            })
        })
        .collect();
    let solved: Vec<(usize, usize, Result<f64, String>)> = cells
        .into_par_iter()
        .map(|(gi, li, params)| {
            let r = solve_cell(spec, params, grid)
                .map(|cell| cell.result.phi0)
                .map_err(|e| e.to_string());
            (gi, li, r)
        })
        .collect();
    let mut out = vec![vec![Err(String::from("missing")); spec.lambdas.len()]; gammas.len()];
    for (gi, li, r) in solved {
        out[gi][li] = r;
    }
    out
}

fn fmt_cell(v: &Result<f64, String>) -> String {
    match v {
        Ok(x) => format!("{x:.5}"),
        Err(_) => "NA".into(),
    }
}

/// `value_table.csv` (V(1) by gamma x lambda at the base rho, with the
/// constrained Merton reference) and `value_table_no_liquid.csv` (the
/// cash-plus-illiquid comparison model, gamma = 0).
pub fn run_value_tables(spec: &ExperimentSpec, grid: &GaussGrid, out: &Path) -> Result<()> {
    let rho = spec.params.rho;
    let hash = cell_hash(&spec.params, &spec.scheme_for(spec.params.lambda));
    let hash_line = format!(
        "params_hash={hash:016x} profile={} rho={rho}",
        spec.profile.name()
    );

    let mut header = String::from("gamma");
    for l in &spec.lambdas {
        write!(header, ",lambda_{l}")?;
    }
    header.push_str(",merton");

    let values = sweep_phi0(spec, grid, rho, false, &spec.gammas);
    let merton = merton_value(&spec.params, true)?;
    let mut rows = Vec::new();
    for (gi, gamma) in spec.gammas.iter().enumerate() {
        let mut row = format!("{gamma}");
        for v in &values[gi] {
            write!(row, ",{}", fmt_cell(v))?;
        }
        write!(row, ",{merton:.5}")?;
        rows.push(row);
    }
    write_table(&out.join("value_table.csv"), &hash_line, &header, &rows)?;

    // Comparison model without the liquid asset (gamma = 0, rho = 0).
    if rho == 0.0 {
        let values = sweep_phi0(spec, grid, 0.0, true, &[0.0]);
        let merton_single =
            merton_value_single(spec.params.b_i, spec.params.sigma_i, spec.params.beta, spec.params.p)?;
        let mut row = String::from("0");
        for v in &values[0] {
            write!(row, ",{}", fmt_cell(v))?;
        }
        write!(row, ",{merton_single:.5}")?;
        write_table(
            &out.join("value_table_no_liquid.csv"),
            &hash_line,
            &header,
            &[row],
        )?;
    }
    Ok(())
}

/// One `cost_table_rho_*.csv` per configured rho: e(1) by gamma x lambda.
pub fn run_cost_tables(spec: &ExperimentSpec, grid: &GaussGrid, out: &Path) -> Result<()> {
    let mut header = String::from("gamma");
    for l in &spec.lambdas {
        write!(header, ",lambda_{l}")?;
    }
    for &rho in &spec.rhos {
        let params = ModelParams { rho, ..spec.params };
        let hash = cell_hash(&params, &spec.scheme_for(params.lambda));
        let hash_line = format!(
            "params_hash={hash:016x} profile={} rho={rho}",
            spec.profile.name()
        );
        let values = sweep_phi0(spec, grid, rho, false, &spec.gammas);
        let mut rows = Vec::new();
        for (gi, gamma) in spec.gammas.iter().enumerate() {
            let mut row = format!("{gamma}");
            for v in &values[gi] {
                let cell = match v {
                    Ok(phi0) => cost_of_illiquidity(*phi0, &params)
                        .map(|e| format!("{e:.5}"))
                        .unwrap_or_else(|_| "NA".into()),
                    Err(_) => "NA".into(),
                };
                write!(row, ",{cell}")?;
            }
            rows.push(row);
        }
        let tag = format!("{rho:+.2}").replace('.', "p");
        write_table(
            &out.join(format!("cost_table_rho_{tag}.csv")),
            &hash_line,
            &header,
            &rows,
        )?;
    }
    Ok(())
}

/// `allocation_table.csv`: optimal illiquid proportion by gamma x lambda at
/// the base rho, plus the constrained Merton reference.
pub fn run_allocation_table(spec: &ExperimentSpec, grid: &GaussGrid, out: &Path) -> Result<()> {
    let rho = spec.params.rho;
    let hash = cell_hash(&spec.params, &spec.scheme_for(spec.params.lambda));
    let hash_line = format!(
        "params_hash={hash:016x} profile={} rho={rho}",
        spec.profile.name()
    );
    let mut header = String::from("gamma");
    for l in &spec.lambdas {
        write!(header, ",lambda_{l}")?;
    }
    header.push_str(",merton");

    let cells: Vec<(usize, usize, ModelParams)> = spec
        .gammas
        .iter()
        .enumerate()
        .flat_map(|(gi, &gamma)| {
            spec.lambdas.iter().enumerate().map(move |(li, &lambda)| {
                (gi, li, ModelParams { lambda, gamma, rho, ..spec.params })
            })
        })
        .collect();
    let solved: Vec<(usize, usize, Result<f64, String>)> = cells
        .into_par_iter()
        .map(|(gi, li, params)| {
            let r = solve_cell(spec, params, grid)
                .map(|cell| optimal_allocation(&cell.result.surface).1)
                .map_err(|e| e.to_string());
            (gi, li, r)
        })
        .collect();
    let mut table = vec![vec![Err(String::from("missing")); spec.lambdas.len()]; spec.gammas.len()];
    for (gi, li, r) in solved {
        table[gi][li] = r;
    }
    let merton = merton_illiquid_fraction(&spec.params, true);
    let mut rows = Vec::new();
    for (gi, gamma) in spec.gammas.iter().enumerate() {
        let mut row = format!("{gamma}");
        for v in &table[gi] {
            match v {
                Ok(z) => write!(row, ",{z:.2}")?,
                Err(_) => row.push_str(",NA"),
            }
        }
        write!(row, ",{merton:.2}")?;
        rows.push(row);
    }
    write_table(&out.join("allocation_table.csv"), &hash_line, &header, &rows)
}
