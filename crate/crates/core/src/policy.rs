//! Optimal feedback maps, optimal illiquid allocation and cost of
//! illiquidity, extracted from a solved [`ValueSurface`].
//!
//! Conventions: the surface's own space axis is the liquid share
//! `s = x/(x+y)`; feedback maps are exposed against the illiquid proportion
//! `zhat = y/(x+y) = 1 - s`, the variable the published curves use. With
//! `u = 1 - s` and `P, Q` the transformed derivative combinations of the
//! solver, `Phi_z = u^{1-p} P` and the per-unit-total-wealth feedbacks
//! collapse to
//!
//! `C_hat(t, zhat) = P^{-1/(1-p)}`,
//! `Pi_hat(t, zhat) = -K1 P / (K2^2 Q) + (rho sigma_I / sigma_L) s`,
//!
//! evaluated with the same clamps and caps the solver used.

use crate::hjb::{from_compact, h0_argmax, ValueSurface};
use crate::model::{merton_value, DerivedConstants, ModelParams};
use crate::Result;

/// First and second z-derivative grids recovered from a surface through the
/// compactification chain rule, same row-major layout as the surface.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub phi_z: Vec<f64>,
    pub phi_zz: Vec<f64>,
}

/// `(P, Q)` at a node: central differences in the interior, one-sided at the
/// edges of the `s` grid.
fn scaled_derivatives(surface: &ValueSurface, consts: &DerivedConstants, i: usize, j: usize) -> (f64, f64) {
    let p = consts.p;
    let n = surface.n_space();
    let dz = surface.cfg.dz;
    let row = surface.row(i);
    let s = surface.zhat_grid[j];
    let u = 1.0 - s;
    let (d1, d2) = if j == 0 {
        (
            (row[1] - row[0]) / dz,
            (row[2] - 2.0 * row[1] + row[0]) / (dz * dz),
        )
    } else if j == n {
        (
            (row[n] - row[n - 1]) / dz,
            (row[n] - 2.0 * row[n - 1] + row[n - 2]) / (dz * dz),
        )
    } else {
        (
            (row[j + 1] - row[j - 1]) / (2.0 * dz),
            (row[j + 1] - 2.0 * row[j] + row[j - 1]) / (dz * dz),
        )
    };
    let big_p = p * row[j] + u * d1;
    let big_q = -p * (1.0 - p) * row[j] - 2.0 * (1.0 - p) * u * d1 + u * u * d2;
    (big_p, big_q)
}

/// Recover `Phi_z` and `Phi_zz` on the whole grid.
pub fn derivatives(surface: &ValueSurface, consts: &DerivedConstants) -> Derivatives {
    let p = consts.p;
    let n_nodes = surface.zhat_grid.len();
    let mut phi_z = vec![0.0; surface.t_grid.len() * n_nodes];
    let mut phi_zz = vec![0.0; surface.t_grid.len() * n_nodes];
    for i in 0..surface.t_grid.len() {
        for j in 0..n_nodes {
            let u = 1.0 - surface.zhat_grid[j];
            let (big_p, big_q) = scaled_derivatives(surface, consts, i, j);
            phi_z[i * n_nodes + j] = u.powf(1.0 - p) * big_p.max(0.0);
            phi_zz[i * n_nodes + j] = u.powf(2.0 - p) * big_q;
        }
    }
    Derivatives { phi_z, phi_zz }
}

/// Feedback pair `(C_hat, Pi_hat)` at grid node `(i, j)`; `j` indexes the
/// liquid share axis. Both vanish on the no-liquid-wealth edge (`s = 0`).
fn node_feedback(
    surface: &ValueSurface,
    consts: &DerivedConstants,
    i: usize,
    j: usize,
) -> (f64, f64) {
    let s = surface.zhat_grid[j];
    if j == 0 {
        return (0.0, 0.0);
    }
    let clamps = &surface.cfg.clamps;
    let (big_p, big_q) = scaled_derivatives(surface, consts, i, j);
    let g = big_p.max(clamps.grad_floor);
    let h = big_q.min(-clamps.curv_floor);
    let c_hat = g.powf(-1.0 / (1.0 - consts.p)).min(clamps.c_max);
    let pi_hat = if consts.no_liquid_asset {
        0.0
    } else {
        let theta = (-consts.k1 * g / (consts.k2 * consts.k2 * h))
            .clamp(-clamps.theta_max, clamps.theta_max);
        theta + consts.rho_hedge * s
    };
    (c_hat, pi_hat)
}

/// Optimal consumption per unit of total wealth at `(t, zhat)` with `zhat`
/// the illiquid proportion; linear interpolation between grid nodes.
pub fn consumption_feedback(
    t: f64,
    zhat_illiquid: f64,
    surface: &ValueSurface,
    consts: &DerivedConstants,
) -> f64 {
    query(surface, consts, t, zhat_illiquid).0
}

/// Optimal liquid investment per unit of total wealth at `(t, zhat)`.
pub fn liquid_feedback(
    t: f64,
    zhat_illiquid: f64,
    surface: &ValueSurface,
    consts: &DerivedConstants,
) -> f64 {
    query(surface, consts, t, zhat_illiquid).1
}

fn query(
    surface: &ValueSurface,
    consts: &DerivedConstants,
    t: f64,
    zhat_illiquid: f64,
) -> (f64, f64) {
    let s = (1.0 - zhat_illiquid).clamp(0.0, 1.0);
    let n = surface.n_space();
    let dz = surface.cfg.dz;
    let jf = (s / dz).min(n as f64);
    let j0 = (jf.floor() as usize).min(n - 1);
    let wz = jf - j0 as f64;

    let t_cap = t.clamp(0.0, feedback_horizon(surface.cfg.t_horizon, consts));
    let n_t = surface.n_time();
    let tf = (t_cap / surface.cfg.dt).min(n_t as f64);
    let i0 = (tf.floor() as usize).min(n_t - 1);
    let wt = tf - i0 as f64;

    let mut c = 0.0;
    let mut pi = 0.0;
    for (i, wi) in [(i0, 1.0 - wt), (i0 + 1, wt)] {
        if wi == 0.0 {
            continue;
        }
        let (c0, p0) = node_feedback(surface, consts, i, j0);
        let (c1, p1) = node_feedback(surface, consts, i, j0 + 1);
        c += wi * ((1.0 - wz) * c0 + wz * c1);
        pi += wi * ((1.0 - wz) * p0 + wz * p1);
    }
    (c, pi)
}

/// Feedback grids over the whole surface plus the optimal rebalancing point.
#[derive(Debug, Clone)]
pub struct PolicyField {
    pub t_grid: Vec<f64>,
    /// Feedback queries clamp their time argument here. The surface solves a
    /// horizon-truncated problem whose late slices feel the zero terminal
    /// data; slices older than a few mean renewal times from the horizon are
    /// unusable as infinite-horizon feedback, so the clock stops early.
    pub feedback_horizon: f64,
    /// Liquid-share axis of the stored grids (same as the surface's).
    pub zhat_liquid_grid: Vec<f64>,
    /// Row-major `[t][s]`: consumption per unit total wealth at illiquid
    /// proportion `1 - s`.
    pub c_hat: Vec<f64>,
    /// Row-major `[t][s]`: liquid investment per unit total wealth.
    pub pi_hat: Vec<f64>,
    /// Optimal post-trade liquid-to-illiquid ratio `x/y` (infinite when the
    /// illiquid asset is not held).
    pub z_star: f64,
    /// Optimal illiquid proportion `y/(x+y)` at trading dates.
    pub z_hat_star: f64,
    /// Whether the argmax of the `t = 0` row was a flat-top tie (broken
    /// toward the smaller illiquid proportion).
    pub tie_broken: bool,
}

impl PolicyField {
    pub fn build(surface: &ValueSurface, consts: &DerivedConstants) -> Self {
        let n_nodes = surface.zhat_grid.len();
        let mut c_hat = vec![0.0; surface.t_grid.len() * n_nodes];
        let mut pi_hat = vec![0.0; surface.t_grid.len() * n_nodes];
        for i in 0..surface.t_grid.len() {
            for j in 0..n_nodes {
                let (c, pi) = node_feedback(surface, consts, i, j);
                c_hat[i * n_nodes + j] = c;
                pi_hat[i * n_nodes + j] = pi;
            }
        }
        let (z_star, z_hat_star, tie_broken) = allocation_with_tie(surface);
        PolicyField {
            t_grid: surface.t_grid.clone(),
            feedback_horizon: feedback_horizon(surface.cfg.t_horizon, consts),
            zhat_liquid_grid: surface.zhat_grid.clone(),
            c_hat,
            pi_hat,
            z_star,
            z_hat_star,
            tie_broken,
        }
    }

    fn interp(&self, grid: &[f64], t: f64, zhat_illiquid: f64) -> f64 {
        let n = self.zhat_liquid_grid.len() - 1;
        let dz = self.zhat_liquid_grid[1] - self.zhat_liquid_grid[0];
        let s = (1.0 - zhat_illiquid).clamp(0.0, 1.0);
        let jf = (s / dz).min(n as f64);
        let j0 = (jf.floor() as usize).min(n - 1);
        let wz = jf - j0 as f64;

        let n_t = self.t_grid.len() - 1;
        let dt = self.t_grid[1] - self.t_grid[0];
        let tf = (t.clamp(0.0, self.feedback_horizon) / dt).min(n_t as f64);
        let i0 = (tf.floor() as usize).min(n_t - 1);
        let wt = tf - i0 as f64;

        let n_nodes = n + 1;
        let at = |i: usize, j: usize| grid[i * n_nodes + j];
        (1.0 - wt) * ((1.0 - wz) * at(i0, j0) + wz * at(i0, j0 + 1))
            + wt * ((1.0 - wz) * at(i0 + 1, j0) + wz * at(i0 + 1, j0 + 1))
    }

    /// Consumption per unit total wealth at `(t, zhat_illiquid)`.
    pub fn consumption_at(&self, t: f64, zhat_illiquid: f64) -> f64 {
        self.interp(&self.c_hat, t, zhat_illiquid)
    }

    /// Liquid investment per unit total wealth at `(t, zhat_illiquid)`.
    pub fn liquid_at(&self, t: f64, zhat_illiquid: f64) -> f64 {
        self.interp(&self.pi_hat, t, zhat_illiquid)
    }
}

/// Last usable feedback slice of a horizon-`T` surface: the truncation error
/// decays like `exp(-(beta+lambda)(T-t))`, so stop five mean renewal times
/// short of the horizon (never past `T/2`).
fn feedback_horizon(t_horizon: f64, consts: &DerivedConstants) -> f64 {
    t_horizon - (5.0 / (consts.beta + consts.lambda)).min(0.5 * t_horizon)
}

fn allocation_with_tie(surface: &ValueSurface) -> (f64, f64, bool) {
    let row = surface.row(0);
    let j_star = h0_argmax(surface);
    let best = row[j_star];
    let tie = row
        .iter()
        .enumerate()
        .any(|(j, v)| j != j_star && (v - best).abs() <= 1e-12 * best.abs().max(1.0));
    let s_star = surface.zhat_grid[j_star];
    (from_compact(s_star), 1.0 - s_star, tie)
}

/// Optimal post-trade allocation read from the `t = 0` row:
/// `z* = argmax_z Phi(0, z)/(1+z)^p` (infinite when the max sits on the
/// all-liquid edge) and the illiquid proportion `zhat* = 1/(1+z*)`.
pub fn optimal_allocation(surface: &ValueSurface) -> (f64, f64) {
    let (z_star, z_hat_star, _) = allocation_with_tie(surface);
    (z_star, z_hat_star)
}

/// Cost of illiquidity per unit of initial wealth: the extra wealth `e(1)`
/// an investor in this market needs to match the unconstrained fully liquid
/// value, `e(1) = (V_M(1)/phi0)^{1/p} - 1`. `phi0` must be in the published
/// per-unit-wealth convention (as returned by the fixed point).
pub fn cost_of_illiquidity(phi0: f64, params: &ModelParams) -> Result<f64> {
    let v_m = merton_value(params, false)?;
    Ok((v_m / phi0).powf(1.0 / params.p) - 1.0)
}

/// Consumption and liquid investment at time `t` as functions of the observed
/// Brownian level `B1`, for an agent with liquid wealth `x_t` and an illiquid
/// position opened at `y0`:
///
/// `Y_t = y0 exp((b_Y - sigma_I^2 (rho^2 + (1-rho^2) gamma^2)/2) t
///        + sigma_I sqrt(1-rho^2) gamma B1)`
///
/// (the `W`-channel is dropped, so the display is exact for `rho = 0`),
/// then the feedbacks are evaluated by homogeneity at `(t, Y_t/(x_t + Y_t))`.
#[allow(clippy::too_many_arguments)]
pub fn observation_response(
    b1: f64,
    t: f64,
    params: &ModelParams,
    surface: &ValueSurface,
    consts: &DerivedConstants,
    y0: f64,
    x_t: f64,
) -> (f64, f64) {
    let si2 = params.sigma_i * params.sigma_i;
    let r2 = params.rho * params.rho;
    let g2 = params.gamma * params.gamma;
    let var = si2 * (r2 + (1.0 - r2) * g2);
    let y_t = y0
        * ((consts.b_y - 0.5 * var) * t + params.sigma_i * (1.0 - r2).sqrt() * params.gamma * b1)
            .exp();
    let total = x_t + y_t;
    if total <= 0.0 {
        return (0.0, 0.0);
    }
    let zhat = y_t / total;
    let (c, pi) = query(surface, consts, t, zhat);
    (total * c, total * pi)
}
