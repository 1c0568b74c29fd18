//! Gaussian node/weight grids and the nonlocal kernel `f(t, z) = E[(z + J_t)^p]`.
//!
//! Two interchangeable ways to build the grid, selected by name at runtime:
//! classical Gauss-Hermite nodes (default, spectrally accurate for the smooth
//! integrand) and an L2-optimal quantizer of the standard normal obtained by
//! Lloyd iteration (the grid style used for the published runs, N = 5000).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::model::DerivedConstants;
use crate::{Error, Result};

/// How to discretize the standard normal law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureMethod {
    GaussHermite,
    Quantizer,
}

impl std::str::FromStr for QuadratureMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss-hermite" => Ok(QuadratureMethod::GaussHermite),
            "quantizer" => Ok(QuadratureMethod::Quantizer),
            other => Err(Error::InvalidParams(format!(
                "unknown quadrature method {other:?} (expected \"gauss-hermite\" or \"quantizer\")"
            ))),
        }
    }
}

/// Nodes and positive weights approximating the standard normal:
/// `E[f(X)] ~ sum_i w_i f(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussGrid {
    pub fn build(n: usize, method: QuadratureMethod) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams("grid needs at least 2 nodes".into()));
        }
        let grid = match method {
            QuadratureMethod::GaussHermite => hermite_grid(n),
            QuadratureMethod::Quantizer => quantizer_grid(n)?,
        };
        grid.check_basic_moments()?;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check_basic_moments(&self) -> Result<()> {
        let sum_w: f64 = self.weights.iter().sum();
        if (sum_w - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "grid weights sum to {sum_w}, expected 1"
            )));
        }
        let mean: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * x)
            .sum();
        if mean.abs() > 1e-8 {
            return Err(Error::InvalidParams(format!(
                "grid first moment {mean:e} too far from 0"
            )));
        }
        Ok(())
    }
}

/// Gauss-Hermite rule rescaled to the standard normal (nodes `sqrt(2) t_i`,
/// weights `w_i / sqrt(pi)`). Nodes found by Newton iteration on the
/// orthonormal Hermite recurrence, which stays bounded for large `n`.
fn hermite_grid(n: usize) -> GaussGrid {
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let n_f = n as f64;
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        // Initial guesses for the roots in decreasing order (largest first).
        z = match i {
            0 => (2.0 * n_f + 1.0).sqrt() - 1.85575 * (2.0 * n_f + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * n_f.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            // Orthonormal Hermite recurrence (weight e^{-t^2}).
            let mut p1 = core::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0f64;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let j_f = j as f64;
                p1 = z * (2.0 / (j_f + 1.0)).sqrt() * p2 - (j_f / (j_f + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n_f).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    // Rescale from weight e^{-t^2} to the standard normal density:
    // nodes sqrt(2) t_i, weights w_i / sqrt(pi).
    let inv_sqrt_pi = 1.0 / core::f64::consts::PI.sqrt();
    let mut grid = GaussGrid {
        nodes: nodes.iter().map(|t| core::f64::consts::SQRT_2 * t).collect(),
        weights: weights.iter().map(|w| w * inv_sqrt_pi).collect(),
    };
    // Nodes were produced in decreasing order; keep them increasing.
    grid.nodes.reverse();
    grid.weights.reverse();
    grid
}

/// L2-optimal N-point quantizer of N(0,1) on [-6, 6]: Lloyd fixed point
/// (cell boundaries at node midpoints, each node at its cell's conditional
/// mean, closed form through the normal pdf/cdf), seeded by inverse-CDF
/// stratification. Plain Lloyd sweeps relax too slowly for large N, so after
/// a few smoothing sweeps the stationarity system is solved by Newton with
/// its tridiagonal Jacobian.
fn quantizer_grid(n: usize) -> Result<GaussGrid> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * core::f64::consts::PI).sqrt();
    let mut nodes: Vec<f64> = (0..n)
        .map(|i| {
            normal
                .inverse_cdf((i as f64 + 0.5) / n as f64)
                .clamp(-6.0, 6.0)
        })
        .collect();

    for _ in 0..10 {
        let mut prev_cdf = 0.0;
        let mut prev_pdf = 0.0;
        for i in 0..n {
            let (hi_cdf, hi_pdf) = if i + 1 < n {
                let b = 0.5 * (nodes[i] + nodes[i + 1]);
                (normal.cdf(b), pdf(b))
            } else {
                (1.0, 0.0)
            };
            let mass = hi_cdf - prev_cdf;
            if mass > 0.0 {
                nodes[i] = (prev_pdf - hi_pdf) / mass;
            }
            prev_cdf = hi_cdf;
            prev_pdf = hi_pdf;
        }
    }

    // Newton on G_i = x_i mass_i - (pdf(b_{i-1}) - pdf(b_i)) = 0. The
    // iteration hits a cancellation-noise floor that grows with n, so the
    // stopping tolerance is scale aware; node error at the floor is far below
    // the quantization distortion itself.
    let move_tol = (1e-10 * n as f64).max(1e-9);
    let max_iters = 200;
    let mut last_move = f64::INFINITY;
    let mut lower = vec![0.0f64; n];
    let mut diag = vec![0.0f64; n];
    let mut upper = vec![0.0f64; n];
    let mut resid = vec![0.0f64; n];
    for _ in 0..max_iters {
        let mut prev_cdf = 0.0;
        let mut prev_pdf = 0.0;
        for i in 0..n {
            let (hi_cdf, hi_pdf) = if i + 1 < n {
                let b = 0.5 * (nodes[i] + nodes[i + 1]);
                (normal.cdf(b), pdf(b))
            } else {
                (1.0, 0.0)
            };
            let mass = hi_cdf - prev_cdf;
            resid[i] = nodes[i] * mass - (prev_pdf - hi_pdf);
            let lo_term = if i > 0 {
                0.25 * prev_pdf * (nodes[i] - nodes[i - 1])
            } else {
                0.0
            };
            let hi_term = if i + 1 < n {
                0.25 * hi_pdf * (nodes[i + 1] - nodes[i])
            } else {
                0.0
            };
            lower[i] = -lo_term;
            upper[i] = -hi_term;
            diag[i] = mass - lo_term - hi_term;
            prev_cdf = hi_cdf;
            prev_pdf = hi_pdf;
        }
        // Thomas solve of J delta = -G.
        let mut c_star = vec![0.0f64; n];
        let mut d_star = vec![0.0f64; n];
        c_star[0] = upper[0] / diag[0];
        d_star[0] = -resid[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - lower[i] * c_star[i - 1];
            c_star[i] = upper[i] / m;
            d_star[i] = (-resid[i] - lower[i] * d_star[i - 1]) / m;
        }
        let mut delta = vec![0.0f64; n];
        delta[n - 1] = d_star[n - 1];
        for i in (0..n - 1).rev() {
            delta[i] = d_star[i] - c_star[i] * delta[i + 1];
        }
        last_move = delta.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        for (x, d) in nodes.iter_mut().zip(&delta) {
            *x += d;
        }
        if last_move < move_tol {
            let mut weights = vec![0.0f64; n];
            let mut prev_cdf = 0.0;
            for i in 0..n {
                let hi_cdf = if i + 1 < n {
                    normal.cdf(0.5 * (nodes[i] + nodes[i + 1]))
                } else {
                    1.0
                };
                weights[i] = hi_cdf - prev_cdf;
                prev_cdf = hi_cdf;
            }
            return Ok(GaussGrid { nodes, weights });
        }
    }
    Err(Error::QuantizerNoConvergence {
        iterations: max_iters,
        last_move,
    })
}

/// Exact `E[J_t^p] = exp(t (p b_J - p (1-p) sigma_J^2 / 2))` for the
/// geometric factor with drift `b_J` and volatility `sigma_J`.
pub fn lognormal_moment(b_j: f64, sigma_j: f64, t: f64, p: f64) -> f64 {
    (t * (p * b_j - 0.5 * p * (1.0 - p) * sigma_j * sigma_j)).exp()
}

/// Kernel `f(t, z) = E[(z + J_t)^p]` by quadrature:
/// `sum_i w_i (z + exp((b_J - sigma_J^2/2) t + sigma_J sqrt(t) x_i))^p`.
pub fn f_gamma(t: f64, z: f64, consts: &DerivedConstants, grid: &GaussGrid) -> f64 {
    let drift = (consts.b_j - 0.5 * consts.sigma_j * consts.sigma_j) * t;
    let scale = consts.sigma_j * t.max(0.0).sqrt();
    let p = consts.p;
    grid.nodes
        .iter()
        .zip(&grid.weights)
        .map(|(x, w)| w * pow_p(z + (drift + scale * x).exp(), p))
        .sum()
}

/// Generic operator `psi -> sum_i w_i psi(x + y J_t(x_i))`.
pub fn g_operator<F: Fn(f64) -> f64>(
    psi: F,
    t: f64,
    x: f64,
    y: f64,
    consts: &DerivedConstants,
    grid: &GaussGrid,
) -> f64 {
    let drift = (consts.b_j - 0.5 * consts.sigma_j * consts.sigma_j) * t;
    let scale = consts.sigma_j * t.max(0.0).sqrt();
    grid.nodes
        .iter()
        .zip(&grid.weights)
        .map(|(xi, w)| w * psi(x + y * (drift + scale * xi).exp()))
        .sum()
}

/// `x^p` guarded at zero: the quadrature argument is strictly positive, but
/// boundary evaluations can hit exactly zero.
#[inline]
pub(crate) fn pow_p(x: f64, p: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.powf(p)
    }
}

/// Precomputed kernel values on the PDE grid, in compactified coordinates:
/// `value(i, j) = (1 - zhat_j)^p f(t_i, zhat_j / (1 - zhat_j))
///             = E[(zhat_j + (1 - zhat_j) J_{t_i})^p]`.
///
/// The kernel is control independent, so it is built once per
/// (parameters, grid) pair and shared by every outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub t_grid: Vec<f64>,
    pub zhat_grid: Vec<f64>,
    /// Row-major `[t][zhat]`.
    pub values: Vec<f64>,
}

impl KernelTable {
    pub fn build(consts: &DerivedConstants, t_grid: Vec<f64>, zhat_grid: Vec<f64>, grid: &GaussGrid) -> Self {
        let p = consts.p;
        let n_z = zhat_grid.len();
        let values: Vec<f64> = t_grid
            .par_iter()
            .flat_map_iter(|&t| {
                let drift = (consts.b_j - 0.5 * consts.sigma_j * consts.sigma_j) * t;
                let scale = consts.sigma_j * t.max(0.0).sqrt();
                let factors: Vec<f64> =
                    grid.nodes.iter().map(|x| (drift + scale * x).exp()).collect();
                let weights = grid.weights.clone();
                zhat_grid
                    .iter()
                    .map(move |&zh| {
                        let u = 1.0 - zh;
                        factors
                            .iter()
                            .zip(&weights)
                            .map(|(j, w)| w * pow_p(zh + u * j, p))
                            .sum::<f64>()
                    })
                    .collect::<Vec<f64>>()
            })
            .collect();
        debug_assert_eq!(values.len(), t_grid.len() * n_z);
        KernelTable {
            t_grid,
            zhat_grid,
            values,
        }
    }

    #[inline]
    pub fn value(&self, t_index: usize, z_index: usize) -> f64 {
        self.values[t_index * self.zhat_grid.len() + z_index]
    }

    pub fn row(&self, t_index: usize) -> &[f64] {
        let n = self.zhat_grid.len();
        &self.values[t_index * n..(t_index + 1) * n]
    }
}
