//! Shared solve machinery: one solved cell per (params, scheme) pair, with
//! content hashing and surface persistence.

use anyhow::{bail, Context, Result};
use illiq_core::cache::{content_hash, Table};
use illiq_core::gauss::{GaussGrid, KernelTable};
use illiq_core::hjb::{fixed_point, SchemeConfig, SolveResult, ValueSurface};
use illiq_core::model::{DerivedConstants, ModelParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::ExperimentSpec;

/// Hash of everything that determines a solve, for cache keys and CSV headers.
pub fn cell_hash(params: &ModelParams, cfg: &SchemeConfig) -> u64 {
    let blob = serde_json::to_vec(&(params, cfg)).expect("serializable");
    content_hash(&blob)
}

pub struct SolvedCell {
    pub params: ModelParams,
    pub consts: DerivedConstants,
    pub cfg: SchemeConfig,
    pub result: SolveResult,
    pub hash: u64,
}

/// Build (or reload) the kernel and run the fixed point for one cell.
pub fn solve_cell(
    spec: &ExperimentSpec,
    params: ModelParams,
    grid: &GaussGrid,
) -> Result<SolvedCell> {
    params.validate()?;
    let consts = DerivedConstants::from_params(&params);
    let cfg = spec.scheme_for(params.lambda);
    let kernel = load_or_build_kernel(spec, &params, &cfg, &consts, grid)?;
    let result = fixed_point(&cfg, &consts, &kernel)?;
    if !result.converged {
        bail!(illiq_core::Error::NoConvergence {
            iterations: result.iterations,
            last_delta: result
                .outer_history
                .windows(2)
                .last()
                .map(|w| (w[1] - w[0]).abs())
                .unwrap_or(f64::NAN),
        });
    }
    let hash = cell_hash(&params, &cfg);
    Ok(SolvedCell {
        params,
        consts,
        cfg,
        result,
        hash,
    })
}

pub fn build_grid(spec: &ExperimentSpec) -> Result<GaussGrid> {
    Ok(GaussGrid::build(spec.quadrature_points, spec.quadrature)?)
}

/// Kernel table, optionally round-tripped through a content-hashed binary
/// cache keyed by (params, scheme, quadrature).
fn load_or_build_kernel(
    spec: &ExperimentSpec,
    params: &ModelParams,
    cfg: &illiq_core::hjb::SchemeConfig,
    consts: &DerivedConstants,
    grid: &GaussGrid,
) -> Result<KernelTable> {
    let dir = match &spec.kernel_cache_dir {
        Some(dir) => dir,
        None => return Ok(KernelTable::build(consts, cfg.t_grid(), cfg.zhat_grid(), grid)),
    };
    let hash = content_hash(
        &serde_json::to_vec(&(params, cfg, spec.quadrature, spec.quadrature_points)).expect("serializable"),
    );
    let path = dir.join(format!("kernel_{hash:016x}.bin"));
    if let Ok(table) = Table::read_binary(&path) {
        if table.params_hash == hash {
            return Ok(KernelTable {
                t_grid: table.t_grid,
                zhat_grid: table.z_grid,
                values: table.values,
            });
        }
    }
    let kernel = KernelTable::build(consts, cfg.t_grid(), cfg.zhat_grid(), grid);
    std::fs::create_dir_all(dir)?;
    Table {
        params_hash: hash,
        t_grid: kernel.t_grid.clone(),
        z_grid: kernel.zhat_grid.clone(),
        values: kernel.values.clone(),
    }
    .write_binary(&path)?;
    Ok(kernel)
}

/// Sidecar metadata stored next to a persisted surface.
#[derive(Debug, Serialize, Deserialize)]
pub struct SurfaceMeta {
    pub params: ModelParams,
    pub cfg: SchemeConfig,
    pub phi0: f64,
    pub phi0_pde: f64,
    pub phi0_source: f64,
    pub hash_hex: String,
}

pub fn persist_surface(dir: &Path, cell: &SolvedCell, profile: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let surface = &cell.result.surface;
    let table = Table {
        params_hash: cell.hash,
        t_grid: surface.t_grid.clone(),
        z_grid: surface.zhat_grid.clone(),
        values: surface.phi_tilde.clone(),
    };
    table.write_binary(&dir.join("surface.bin"))?;
    table.write_csv(&dir.join("surface.csv"), "phi_tilde", profile)?;
    let meta = SurfaceMeta {
        params: cell.params,
        cfg: cell.cfg,
        phi0: cell.result.phi0,
        phi0_pde: cell.result.phi0_pde,
        phi0_source: surface.phi0_source,
        hash_hex: format!("{:016x}", cell.hash),
    };
    std::fs::write(
        dir.join("surface_meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

/// Reload a persisted surface, verifying that it matches the requested cell.
pub fn load_surface(dir: &Path, params: &ModelParams, cfg: &SchemeConfig) -> Result<(ValueSurface, SurfaceMeta)> {
    let meta: SurfaceMeta = serde_json::from_str(
        &std::fs::read_to_string(dir.join("surface_meta.json"))
            .context("reading surface_meta.json")?,
    )?;
    let expected = cell_hash(params, cfg);
    if meta.hash_hex != format!("{expected:016x}") {
        bail!(
            "persisted surface was produced by a different configuration \
             (hash {} != {:016x}); re-run `solve` first",
            meta.hash_hex,
            expected
        );
    }
    let table = Table::read_binary(&dir.join("surface.bin"))?;
    if table.params_hash != expected {
        bail!("surface.bin hash mismatch");
    }
    let surface = ValueSurface {
        cfg: meta.cfg,
        t_grid: table.t_grid,
        zhat_grid: table.z_grid,
        phi_tilde: table.values,
        phi0_source: meta.phi0_source,
    };
    Ok((surface, meta))
}
