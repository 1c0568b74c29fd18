//! Figure data emission: one CSV per figure with a matching gnuplot script.

use anyhow::Result;
use illiq_core::gauss::GaussGrid;
use illiq_core::model::{
    compute_kp, merton_illiquid_fraction, merton_liquid_fraction, merton_value, ModelParams,
};
use illiq_core::policy::{observation_response, optimal_allocation, PolicyField};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::config::ExperimentSpec;
use crate::runner::{cell_hash, solve_cell, SolvedCell};

fn write_csv(path: &Path, hash_line: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# {hash_line}")?;
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    Ok(())
}

fn write_gnuplot(path: &Path, csv: &str, title: &str, xlabel: &str, ylabel: &str, n_series: usize) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "set datafile separator ','")?;
    writeln!(w, "set key autotitle columnhead")?;
    writeln!(w, "set title '{title}'")?;
    writeln!(w, "set xlabel '{xlabel}'")?;
    writeln!(w, "set ylabel '{ylabel}'")?;
    writeln!(w, "set grid")?;
    write!(w, "plot ")?;
    for i in 0..n_series {
        if i > 0 {
            write!(w, ", ")?;
        }
        write!(w, "'{csv}' using 1:{} with lines", i + 2)?;
    }
    writeln!(w)?;
    Ok(())
}

/// Key for the solved-cell pool.
type CellKey = (u64, u64, u64);

fn key(lambda: f64, gamma: f64, rho: f64) -> CellKey {
    (lambda.to_bits(), gamma.to_bits(), rho.to_bits())
}

/// Solve every distinct cell needed by the figures once, in parallel, and
/// collect them into a deterministic map.
fn solve_pool(
    spec: &ExperimentSpec,
    grid: &GaussGrid,
    wanted: &[(f64, f64, f64)],
) -> Result<BTreeMap<CellKey, SolvedCell>> {
    let mut unique: Vec<(f64, f64, f64)> = Vec::new();
    for &cell in wanted {
        if !unique.iter().any(|c| key(c.0, c.1, c.2) == key(cell.0, cell.1, cell.2)) {
            unique.push(cell);
        }
    }
    let solved: Vec<(CellKey, Result<SolvedCell, String>)> = unique
        .into_par_iter()
        .map(|(lambda, gamma, rho)| {
            let params = ModelParams { lambda, gamma, rho, ..spec.params };
            (
                key(lambda, gamma, rho),
                solve_cell(spec, params, grid).map_err(|e| e.to_string()),
            )
        })
        .collect();
    let mut pool = BTreeMap::new();
    for (k, cell) in solved {
        match cell {
            Ok(c) => {
                pool.insert(k, c);
            }
            Err(e) => eprintln!("figure cell skipped: {e}"),
        }
    }
    Ok(pool)
}

pub fn run_figures(spec: &ExperimentSpec, grid: &GaussGrid, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let hash = cell_hash(&spec.params, &spec.scheme_for(spec.params.lambda));
    let hash_line = format!("params_hash={hash:016x} profile={}", spec.profile.name());
    let base = spec.params;

    let mut rhos = spec.rhos.clone();
    rhos.sort_by(f64::total_cmp);

    // Curves over rho use the base gamma; feedback curves use the base rho.
    let mut wanted: Vec<(f64, f64, f64)> = Vec::new();
    for &rho in &rhos {
        for &lambda in &spec.lambdas {
            wanted.push((lambda, base.gamma, rho));
        }
    }
    for &lambda in &spec.lambdas {
        wanted.push((lambda, base.gamma, base.rho));
    }
    for &gamma in &spec.gammas {
        wanted.push((base.lambda, gamma, base.rho));
    }
    let pool = solve_pool(spec, grid, &wanted)?;
    let get = |lambda: f64, gamma: f64, rho: f64| pool.get(&key(lambda, gamma, rho));

    // 1. Value V(1) as a function of rho, one curve per lambda, with the
    //    constrained and unconstrained Merton references.
    {
        let mut header = String::from("rho");
        for l in &spec.lambdas {
            write!(header, ",lambda_{l}")?;
        }
        header.push_str(",merton_constrained,merton_unconstrained");
        let mut rows = Vec::new();
        for &rho in &rhos {
            let params = ModelParams { rho, ..base };
            let mut row = format!("{rho}");
            for &lambda in &spec.lambdas {
                match get(lambda, base.gamma, rho) {
                    Some(c) => write!(row, ",{:.5}", c.result.phi0)?,
                    None => row.push_str(",NA"),
                }
            }
            write!(row, ",{:.5}", merton_value(&params, true)?)?;
            write!(row, ",{:.5}", merton_value(&params, false)?)?;
            rows.push(row);
        }
        write_csv(&out.join("fig_value_vs_rho.csv"), &hash_line, &header, &rows)?;
        write_gnuplot(
            &out.join("fig_value_vs_rho.gp"),
            "fig_value_vs_rho.csv",
            "Value V(1) vs correlation",
            "rho",
            "V(1)",
            spec.lambdas.len() + 2,
        )?;
    }

    // 2. Optimal illiquid proportion as a function of rho.
    {
        let mut header = String::from("rho");
        for l in &spec.lambdas {
            write!(header, ",lambda_{l}")?;
        }
        header.push_str(",merton");
        let mut rows = Vec::new();
        for &rho in &rhos {
            let params = ModelParams { rho, ..base };
            let mut row = format!("{rho}");
            for &lambda in &spec.lambdas {
                match get(lambda, base.gamma, rho) {
                    Some(c) => write!(row, ",{:.4}", optimal_allocation(&c.result.surface).1)?,
                    None => row.push_str(",NA"),
                }
            }
            write!(row, ",{:.4}", merton_illiquid_fraction(&params, true))?;
            rows.push(row);
        }
        write_csv(&out.join("fig_alloc_vs_rho.csv"), &hash_line, &header, &rows)?;
        write_gnuplot(
            &out.join("fig_alloc_vs_rho.gp"),
            "fig_alloc_vs_rho.csv",
            "Optimal illiquid proportion vs correlation",
            "rho",
            "zhat*",
            spec.lambdas.len() + 1,
        )?;
    }

    // 3/4. Feedback maps at t = 0 against the illiquid proportion.
    {
        let mut c_header = String::from("zhat");
        let mut p_header = String::from("zhat");
        for l in &spec.lambdas {
            write!(c_header, ",lambda_{l}")?;
            write!(p_header, ",lambda_{l}")?;
        }
        c_header.push_str(",merton");
        p_header.push_str(",merton");
        let fields: Vec<Option<PolicyField>> = spec
            .lambdas
            .iter()
            .map(|&lambda| {
                get(lambda, base.gamma, base.rho)
                    .map(|c| PolicyField::build(&c.result.surface, &c.consts))
            })
            .collect();
        let merton_c = (base.beta - compute_kp(&base)) / (1.0 - base.p);
        let merton_ul = merton_liquid_fraction(&base, true);
        let n_pts = 50usize;
        let mut c_rows = Vec::new();
        let mut p_rows = Vec::new();
        for i in 0..=n_pts {
            let zhat = i as f64 / n_pts as f64;
            let mut c_row = format!("{zhat}");
            let mut p_row = format!("{zhat}");
            for field in &fields {
                match field {
                    Some(f) => {
                        write!(c_row, ",{:.5}", f.consumption_at(0.0, zhat))?;
                        write!(p_row, ",{:.5}", f.liquid_at(0.0, zhat))?;
                    }
                    None => {
                        c_row.push_str(",NA");
                        p_row.push_str(",NA");
                    }
                }
            }
            write!(c_row, ",{merton_c:.5}")?;
            write!(p_row, ",{:.5}", merton_ul * (1.0 - zhat))?;
            c_rows.push(c_row);
            p_rows.push(p_row);
        }
        write_csv(&out.join("fig_consumption.csv"), &hash_line, &c_header, &c_rows)?;
        write_gnuplot(
            &out.join("fig_consumption.gp"),
            "fig_consumption.csv",
            "Optimal consumption rate at t = 0",
            "illiquid proportion zhat",
            "C*",
            spec.lambdas.len() + 1,
        )?;
        write_csv(&out.join("fig_liquid.csv"), &hash_line, &p_header, &p_rows)?;
        write_gnuplot(
            &out.join("fig_liquid.gp"),
            "fig_liquid.csv",
            "Optimal liquid investment at t = 0",
            "illiquid proportion zhat",
            "Pi*",
            spec.lambdas.len() + 1,
        )?;
    }

    // 5/6. Response to the observed Brownian level B1 at t = 1 for each gamma
    //      (liquid wealth 0.5, illiquid position opened at 0.5).
    {
        let mut header = String::from("b1");
        for g in &spec.gammas {
            write!(header, ",gamma_{g}")?;
        }
        let cells: Vec<Option<&SolvedCell>> = spec
            .gammas
            .iter()
            .map(|&gamma| get(base.lambda, gamma, base.rho))
            .collect();
        let mut c_rows = Vec::new();
        let mut p_rows = Vec::new();
        let n_pts = 40usize;
        for i in 0..=n_pts {
            let b1 = -2.0 + 4.0 * i as f64 / n_pts as f64;
            let mut c_row = format!("{b1}");
            let mut p_row = format!("{b1}");
            for (gi, &gamma) in spec.gammas.iter().enumerate() {
                match cells[gi] {
                    Some(cell) => {
                        let params = ModelParams { gamma, ..base };
                        let (c, pi) = observation_response(
                            b1,
                            1.0,
                            &params,
                            &cell.result.surface,
                            &cell.consts,
                            0.5,
                            0.5,
                        );
                        write!(c_row, ",{c:.5}")?;
                        // Proportion of liquid wealth invested in the liquid asset.
                        write!(p_row, ",{:.5}", pi / 0.5)?;
                    }
                    None => {
                        c_row.push_str(",NA");
                        p_row.push_str(",NA");
                    }
                }
            }
            c_rows.push(c_row);
            p_rows.push(p_row);
        }
        write_csv(&out.join("fig_obs_consumption.csv"), &hash_line, &header, &c_rows)?;
        write_gnuplot(
            &out.join("fig_obs_consumption.gp"),
            "fig_obs_consumption.csv",
            "Consumption response to the observed noise level",
            "B1",
            "C*",
            spec.gammas.len(),
        )?;
        write_csv(&out.join("fig_obs_liquid.csv"), &hash_line, &header, &p_rows)?;
        write_gnuplot(
            &out.join("fig_obs_liquid.gp"),
            "fig_obs_liquid.csv",
            "Liquid investment response to the observed noise level",
            "B1",
            "Pi*/X",
            spec.gammas.len(),
        )?;
    }
    Ok(())
}
