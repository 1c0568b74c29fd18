//! Explicit monotone finite-difference solve of the reduced one-dimensional
//! parabolic equation on the compactified domain, plus the outer scalar
//! fixed-point iteration that supplies the nonlocal source.
//!
//! Working unknown: `phi_tilde(t, zhat) = (1 - zhat)^p Phi(t, zhat/(1-zhat))`,
//! i.e. the auxiliary value per unit of total wealth, on `zhat = x/(x+y)` in
//! `[0, 1]`. This keeps the domain compact, the unknown bounded, and turns the
//! coupling functional into a plain max over the `t = 0` row.
//!
//! The interior operator is assembled from the `z`-form equation
//!
//! `-Phi_t + K_lambda Phi - K3 z Phi_z - (K4^2/2) z^2 Phi_zz
//!     - lambda Phi0 f(t,z) - H(Phi_z, Phi_zz) = 0`
//!
//! by the chain rule of `z -> zhat` and the `(1-zhat)^p` normalization. With
//! `u = 1 - zhat`, the derivative combinations
//!
//! `P = p phi + u phi_zhat`            (so `Phi_z  = u^{1-p} P`)
//! `Q = -p(1-p) phi - 2(1-p) u phi_zhat + u^2 phi_zhatzhat`
//!                                      (so `Phi_zz = u^{2-p} Q`)
//!
//! satisfy `u^p H(Phi_z, Phi_zz) = H(P, Q)` exactly for the power Hamiltonian,
//! so the Hamiltonian is evaluated pointwise in the transformed variables and
//! only the explicit drift/diffusion/reaction coefficients are stenciled
//! (upwinded drift, central diffusion). The hand-derived coefficients are
//! validated against a manufactured smooth solution in the tests below.

use serde::{Deserialize, Serialize};

use crate::gauss::KernelTable;
use crate::model::DerivedConstants;
use crate::{Error, Result};

/// Map `z = x/y` in `[0, inf)` to `zhat = z/(1+z) = x/(x+y)` in `[0, 1)`.
pub fn to_compact(z: f64) -> f64 {
    if z.is_infinite() {
        1.0
    } else {
        z / (1.0 + z)
    }
}

/// Inverse of [`to_compact`]; `zhat = 1` maps to the boundary-at-infinity
/// sentinel `f64::INFINITY`.
pub fn from_compact(zhat: f64) -> f64 {
    if zhat >= 1.0 {
        f64::INFINITY
    } else {
        zhat / (1.0 - zhat)
    }
}

/// Clamps and control caps applied inside the pointwise Hamiltonian.
///
/// `grad_floor`/`curv_floor` are the floors on the first-derivative analog
/// and on minus the second-derivative analog (`m` and `d`). The true solution
/// has both bounded away from zero on compacta, but early iterates start from
/// identically-zero terminal data; the control caps keep the first backward
/// steps finite there, mirroring the compact control sets the equation is
/// localized to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamps {
    pub grad_floor: f64,
    pub curv_floor: f64,
    pub c_max: f64,
    pub theta_max: f64,
}

impl Default for Clamps {
    fn default() -> Self {
        Clamps {
            grad_floor: 1e-8,
            curv_floor: 1e-8,
            c_max: 20.0,
            theta_max: 20.0,
        }
    }
}

/// Grid and iteration controls for one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Horizon of the truncated backward problem.
    pub t_horizon: f64,
    pub dt: f64,
    /// Space step on `zhat` in `[0, 1]`.
    pub dz: f64,
    pub fixed_point_tol: f64,
    pub max_outer_iters: usize,
    pub clamps: Clamps,
}

impl SchemeConfig {
    /// Horizon rule: the truncation error decays like `exp(-(beta+lambda) T)`,
    /// so less liquid markets need a longer horizon. Stays inside [1, 5];
    /// calibrated against the published desk-scale runs.
    pub fn horizon_for(lambda: f64) -> f64 {
        if lambda < 2.0 {
            5.0
        } else if lambda < 4.0 {
            3.0
        } else if lambda < 20.0 {
            2.0
        } else {
            1.0
        }
    }

    /// Desk-scale profile: dz = 0.02 (51 nodes), dt = 5e-4.
    pub fn paper(lambda: f64) -> Self {
        SchemeConfig {
            t_horizon: Self::horizon_for(lambda),
            dt: 5e-4,
            dz: 0.02,
            fixed_point_tol: 1e-5,
            max_outer_iters: 20_000,
            clamps: Clamps::default(),
        }
    }

    /// Coarse CI profile: dz = 0.04, dt = 2e-3.
    pub fn fast(lambda: f64) -> Self {
        SchemeConfig {
            t_horizon: Self::horizon_for(lambda),
            dt: 2e-3,
            dz: 0.04,
            fixed_point_tol: 1e-5,
            max_outer_iters: 20_000,
            clamps: Clamps::default(),
        }
    }

    pub fn with_horizon(mut self, t: f64) -> Self {
        self.t_horizon = t;
        self
    }

    /// Number of time steps (grid has one more node).
    pub fn n_time(&self) -> usize {
        (self.t_horizon / self.dt).round() as usize
    }

    /// Number of space intervals (grid has one more node).
    pub fn n_space(&self) -> usize {
        (1.0 / self.dz).round() as usize
    }

    pub fn t_grid(&self) -> Vec<f64> {
        (0..=self.n_time()).map(|i| i as f64 * self.dt).collect()
    }

    pub fn zhat_grid(&self) -> Vec<f64> {
        let n = self.n_space();
        (0..=n).map(|j| (j as f64 * self.dz).min(1.0)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_horizon > 0.0 && self.dt > 0.0 && self.dz > 0.0) {
            return Err(Error::InvalidConfig(
                "t_horizon, dt and dz must be positive".into(),
            ));
        }
        if self.n_time() < 2 || self.n_space() < 4 {
            return Err(Error::InvalidConfig("grid too coarse".into()));
        }
        if (self.n_space() as f64 * self.dz - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("dz must divide [0, 1] evenly".into()));
        }
        if self.fixed_point_tol <= 0.0 || self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig(
                "fixed_point_tol and max_outer_iters must be positive".into(),
            ));
        }
        let c = &self.clamps;
        if !(c.grad_floor > 0.0 && c.curv_floor > 0.0 && c.c_max > 0.0 && c.theta_max > 0.0) {
            return Err(Error::InvalidConfig("clamps must be positive".into()));
        }
        Ok(())
    }
}

/// Stenciled coefficients of the transformed equation at one `zhat` node.
#[derive(Debug, Clone, Copy)]
struct NodeCoeffs {
    /// Zeroth-order (discount-like) coefficient.
    react: f64,
    /// First-order coefficient; upwinded by sign.
    drift: f64,
    /// Second-order coefficient (nonnegative).
    diff: f64,
}

fn node_coeffs(zhat: f64, consts: &DerivedConstants) -> NodeCoeffs {
    let p = consts.p;
    let u = 1.0 - zhat;
    let k42 = consts.k4 * consts.k4;
    NodeCoeffs {
        react: consts.k_lambda - p * consts.k3 * zhat + 0.5 * p * (1.0 - p) * k42 * zhat * zhat,
        drift: zhat * u * (consts.k3 - (1.0 - p) * k42 * zhat),
        diff: 0.5 * k42 * zhat * zhat * u * u,
    }
}

/// Closed-form maximization of the reduced Hamiltonian
/// `U(c) - c g + theta K1 g + theta^2 K2^2 h / 2` over `c >= 0` and `theta`,
/// with `U(c) = c^p / p`, after clamping `g` below by `m` and `h` above by
/// `-d` and projecting the maximizers onto the control caps.
///
/// Returns `(value, c_star, theta_star)`. With the liquid asset disabled the
/// `theta` control is absent.
pub fn hamiltonian_max(
    phi_z: f64,
    phi_zz: f64,
    consts: &DerivedConstants,
    clamps: &Clamps,
) -> (f64, f64, f64) {
    let p = consts.p;
    let g = phi_z.max(clamps.grad_floor);
    let h = phi_zz.min(-clamps.curv_floor);

    let c = g.powf(-1.0 / (1.0 - p)).min(clamps.c_max);
    let value_c = c.powf(p) / p - c * g;

    if consts.no_liquid_asset || consts.k1 == 0.0 {
        return (value_c, c, 0.0);
    }
    let k22 = consts.k2 * consts.k2;
    let theta = (-consts.k1 * g / (k22 * h)).clamp(-clamps.theta_max, clamps.theta_max);
    let value_t = theta * consts.k1 * g + 0.5 * theta * theta * k22 * h;
    (value_c + value_t, c, theta)
}

/// Dirichlet row at `zhat = 0` (no liquid wealth): closed-form evaluation of
/// `phi0 * lambda * int_t^T exp(-K_lambda (s-t)) exp(m s) ds` with
/// `m = p b_J - p(1-p) sigma_J^2 / 2`.
pub fn boundary_z0(t: f64, phi0: f64, t_horizon: f64, consts: &DerivedConstants) -> f64 {
    if t >= t_horizon {
        return 0.0;
    }
    let m = consts.kernel_moment_exponent();
    let d = m - consts.k_lambda;
    let span = t_horizon - t;
    let integral = if d.abs() < 1e-13 {
        span
    } else {
        ((d * span).exp() - 1.0) / d
    };
    phi0 * consts.lambda * (m * t).exp() * integral
}

/// Dirichlet row at `zhat = 1` (no illiquid wealth): value of the scalar
/// all-liquid sub-problem, whose stationary point is the `K0` equation.
/// Integrated backward from `g(T) = 0` in the variable `w = g^{1/(1-p)}`,
/// which removes the singularity of the consumption term at `g = 0`:
///
/// `dw/dtau = (b + lambda phi0 w^p - a w) / (1 - p)`,
///
/// with `a = beta + lambda - p b_L^2/(2(1-p) sigma_L^2)` and
/// `b = (1-p) p^{-1/(1-p)}`. Returns `g(t_i)` on the config's time grid.
pub fn boundary_z1(phi0: f64, cfg: &SchemeConfig, consts: &DerivedConstants) -> Vec<f64> {
    let p = consts.p;
    let a = consts.beta + consts.lambda - consts.kappa_liquid;
    let b = (1.0 - p) * p.powf(-1.0 / (1.0 - p));
    let source = consts.lambda * phi0;
    let n_t = cfg.n_time();
    let dt = cfg.dt;

    let rhs = |w: f64| (b + source * w.max(0.0).powf(p) - a * w) / (1.0 - p);
    let mut row = vec![0.0f64; n_t + 1];
    let mut w = 0.0f64;
    // tau = T - t; row index n_t - k corresponds to tau = k dt.
    for k in 1..=n_t {
        let k1 = rhs(w);
        let k2 = rhs((w + 0.5 * dt * k1).max(0.0));
        w = (w + dt * k2).max(0.0);
        row[n_t - k] = w.powf(1.0 - p);
    }
    row
}

/// Solved surface `phi_tilde(t_i, zhat_j)` with its grid and the scalar
/// source it was produced under. Values are in the solver normalization
/// (utility `c^p / p`); the published per-unit-wealth convention is `p` times
/// these values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub cfg: SchemeConfig,
    pub t_grid: Vec<f64>,
    pub zhat_grid: Vec<f64>,
    /// Row-major `[t][zhat]`.
    pub phi_tilde: Vec<f64>,
    /// Source value the sweep was run with (solver normalization).
    pub phi0_source: f64,
}

impl ValueSurface {
    #[inline]
    pub fn value(&self, t_index: usize, z_index: usize) -> f64 {
        self.phi_tilde[t_index * self.zhat_grid.len() + z_index]
    }

    pub fn row(&self, t_index: usize) -> &[f64] {
        let n = self.zhat_grid.len();
        &self.phi_tilde[t_index * n..(t_index + 1) * n]
    }

    pub fn n_time(&self) -> usize {
        self.t_grid.len() - 1
    }

    pub fn n_space(&self) -> usize {
        self.zhat_grid.len() - 1
    }

    /// Reduced value `Phi(t, z)` recovered through the normalization,
    /// `Phi = phi_tilde / (1 - zhat)^p`.
    pub fn phi(&self, t_index: usize, z_index: usize, p: f64) -> f64 {
        let u = 1.0 - self.zhat_grid[z_index];
        if u <= 0.0 {
            f64::INFINITY
        } else {
            self.value(t_index, z_index) / u.powf(p)
        }
    }
}

/// Explicit-scheme stability check: diffusion number `dt max(D)/dz^2 <= 1/2`,
/// upwinded advection number `dt max|V|/dz <= 1`, and `dt max(react) < 1`.
pub fn check_cfl(cfg: &SchemeConfig, consts: &DerivedConstants) -> Result<()> {
    let mut max_diff = 0.0f64;
    let mut max_drift = 0.0f64;
    let mut max_react = 0.0f64;
    for &zh in &cfg.zhat_grid() {
        let c = node_coeffs(zh, consts);
        max_diff = max_diff.max(c.diff);
        max_drift = max_drift.max(c.drift.abs());
        max_react = max_react.max(c.react.abs());
    }
    let diff_number = cfg.dt * max_diff / (cfg.dz * cfg.dz);
    if diff_number > 0.5 {
        return Err(Error::Cfl(format!(
            "diffusion number {diff_number:.4} > 0.5 (dt={}, dz={})",
            cfg.dt, cfg.dz
        )));
    }
    let adv_number = cfg.dt * max_drift / cfg.dz;
    if adv_number > 1.0 {
        return Err(Error::Cfl(format!(
            "advection number {adv_number:.4} > 1 (dt={}, dz={})",
            cfg.dt, cfg.dz
        )));
    }
    if cfg.dt * max_react >= 1.0 {
        return Err(Error::Cfl(format!(
            "reaction number {:.4} >= 1 (dt too large for the discount rate)",
            cfg.dt * max_react
        )));
    }
    Ok(())
}

/// Full explicit right-hand side at one interior node: reaction, upwinded
/// drift, central diffusion, nonlocal source and the pointwise Hamiltonian.
#[inline]
#[allow(clippy::too_many_arguments)]
fn interior_rhs(
    phi_m: f64,
    phi_c: f64,
    phi_p: f64,
    zhat: f64,
    dz: f64,
    source: f64,
    consts: &DerivedConstants,
    clamps: &Clamps,
) -> f64 {
    let p = consts.p;
    let u = 1.0 - zhat;
    let d1c = (phi_p - phi_m) / (2.0 * dz);
    let d2 = (phi_p - 2.0 * phi_c + phi_m) / (dz * dz);
    let big_p = p * phi_c + u * d1c;
    let big_q = -p * (1.0 - p) * phi_c - 2.0 * (1.0 - p) * u * d1c + u * u * d2;
    let (h_val, _, _) = hamiltonian_max(big_p, big_q, consts, clamps);

    let c = node_coeffs(zhat, consts);
    let d1up = if c.drift >= 0.0 {
        (phi_p - phi_c) / dz
    } else {
        (phi_c - phi_m) / dz
    };
    -c.react * phi_c + c.drift * d1up + c.diff * d2 + source + h_val
}

/// Backward sweep with explicit terminal data (zero for the production path;
/// perturbed in the monotonicity tests).
fn sweep(
    phi0: f64,
    cfg: &SchemeConfig,
    consts: &DerivedConstants,
    kernel: &KernelTable,
    terminal: &[f64],
) -> Result<ValueSurface> {
    cfg.validate()?;
    check_cfl(cfg, consts)?;
    let n_t = cfg.n_time();
    let n_z = cfg.n_space();
    let t_grid = cfg.t_grid();
    let zhat_grid = cfg.zhat_grid();
    if kernel.t_grid.len() != n_t + 1 || kernel.zhat_grid.len() != n_z + 1 {
        return Err(Error::InvalidConfig(
            "kernel table grid does not match scheme grid".into(),
        ));
    }
    if terminal.len() != n_z + 1 {
        return Err(Error::InvalidConfig("terminal row length mismatch".into()));
    }

    let z1_row = boundary_z1(phi0, cfg, consts);
    let mut phi = vec![0.0f64; (n_t + 1) * (n_z + 1)];
    phi[n_t * (n_z + 1)..].copy_from_slice(terminal);

    let lam = consts.lambda;
    for i in (0..n_t).rev() {
        let (head, tail) = phi.split_at_mut((i + 1) * (n_z + 1));
        let new_row = &mut head[i * (n_z + 1)..];
        let old_row = &tail[..n_z + 1];
        let f_row = kernel.row(i + 1);
        for j in 1..n_z {
            let rhs = interior_rhs(
                old_row[j - 1],
                old_row[j],
                old_row[j + 1],
                zhat_grid[j],
                cfg.dz,
                lam * phi0 * f_row[j],
                consts,
                &cfg.clamps,
            );
            new_row[j] = old_row[j] + cfg.dt * rhs;
        }
        new_row[0] = boundary_z0(t_grid[i], phi0, cfg.t_horizon, consts);
        new_row[n_z] = z1_row[i];
        for (j, v) in new_row[..n_z + 1].iter().enumerate() {
            if !v.is_finite() || v.abs() > 1e14 {
                return Err(Error::Numerical {
                    what: format!("phi_tilde = {v}"),
                    time_index: i,
                    space_index: j,
                });
            }
        }
    }

    Ok(ValueSurface {
        cfg: *cfg,
        t_grid,
        zhat_grid,
        phi_tilde: phi,
        phi0_source: phi0,
    })
}

/// One inner PDE solve under a frozen scalar source, from zero terminal data.
pub fn solve_inner(
    phi0: f64,
    cfg: &SchemeConfig,
    consts: &DerivedConstants,
    kernel: &KernelTable,
) -> Result<ValueSurface> {
    let zeros = vec![0.0f64; cfg.n_space() + 1];
    sweep(phi0, cfg, consts, kernel, &zeros)
}

/// Coupling functional: because `phi_tilde(0, zhat) = Phi(0, z)/(1+z)^p`,
/// the sup over `z >= 0` is a plain max over the `t = 0` row.
pub fn h0(surface: &ValueSurface) -> f64 {
    surface.row(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Index of the maximizer of the `t = 0` row; ties are broken toward larger
/// `zhat` (smaller illiquid proportion).
pub fn h0_argmax(surface: &ValueSurface) -> usize {
    let row = surface.row(0);
    let mut best = 0usize;
    for (j, v) in row.iter().enumerate() {
        if *v >= row[best] {
            best = j;
        }
    }
    best
}

/// Result of the outer fixed-point iteration.
///
/// `phi0` is the per-unit-wealth value in the convention of the published
/// baselines (utility `c^p`); `phi0_pde` is the same fixed point in the
/// solver normalization (utility `c^p/p`, `phi0 = p * phi0_pde`), which is
/// the scale of the stored surface.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub phi0: f64,
    pub phi0_pde: f64,
    pub surface: ValueSurface,
    /// Successive internal fixed-point iterates (solver normalization).
    pub outer_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Outer iteration: start from a zero source, alternate inner solves with the
/// coupling max until successive scalars differ by less than the tolerance.
/// Non-convergence is reported through the `converged` flag with the full
/// history; hard numerical failures are errors.
pub fn fixed_point(
    cfg: &SchemeConfig,
    consts: &DerivedConstants,
    kernel: &KernelTable,
) -> Result<SolveResult> {
    let mut phi0 = 0.0f64;
    let mut history = Vec::new();
    let mut surface = None;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_outer_iters {
        let s = solve_inner(phi0, cfg, consts, kernel)?;
        let next = h0(&s);
        history.push(next);
        surface = Some(s);
        iterations += 1;
        let delta = (next - phi0).abs();
        phi0 = next;
        if delta < cfg.fixed_point_tol {
            converged = true;
            break;
        }
    }
    Ok(SolveResult {
        phi0: consts.p * phi0,
        phi0_pde: phi0,
        surface: surface.expect("max_outer_iters >= 1"),
        outer_history: history,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::{f_gamma, GaussGrid, KernelTable, QuadratureMethod};
    use crate::model::{benchmark_params, solve_k0, DerivedConstants, ModelParams};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn consts_for(lambda: f64, gamma: f64, rho: f64) -> DerivedConstants {
        DerivedConstants::from_params(&benchmark_params(lambda, gamma, rho))
    }

    fn kernel_for(cfg: &SchemeConfig, consts: &DerivedConstants, n: usize) -> KernelTable {
        let grid = GaussGrid::build(n, QuadratureMethod::GaussHermite).unwrap();
        KernelTable::build(consts, cfg.t_grid(), cfg.zhat_grid(), &grid)
    }

    #[test]
    fn compactification_fixed_points() {
        assert_eq!(to_compact(0.0), 0.0);
        assert_eq!(to_compact(1.0), 0.5);
        assert_eq!(from_compact(0.0), 0.0);
        assert!(from_compact(1.0).is_infinite());
    }

    proptest! {
        #[test]
        fn compactification_roundtrip(z in 0.0f64..10.0) {
            let back = from_compact(to_compact(z));
            // The (1+z)^2 factor is the conditioning of the map near zhat = 1.
            prop_assert!((back - z).abs() <= 1e-14 * (1.0 + z) * (1.0 + z));
        }
    }

    #[test]
    fn hamiltonian_consumption_only_examples() {
        // (U')^{-1}(1) = 1 and U(1) - 1 = 1 for U(c) = 2 sqrt(c).
        let mut consts = consts_for(1.0, 0.0, 0.0);
        consts.k1 = 0.0;
        let clamps = Clamps::default();
        let (value, c_star, theta_star) = hamiltonian_max(1.0, -1.0, &consts, &clamps);
        assert_abs_diff_eq!(c_star, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(value, 1.0, epsilon = 1e-14);
        assert_eq!(theta_star, 0.0);
    }

    #[test]
    fn hamiltonian_matches_grid_oracle() {
        let consts = consts_for(5.0, 0.5, 0.3);
        let clamps = Clamps::default();
        for (g, h) in [(0.5, -0.3), (1.0, -1.0), (2.0, -0.25), (0.3, -2.0), (1.7, -0.8)] {
            let (value, c_star, theta_star) = hamiltonian_max(g, h, &consts, &clamps);
            // Brute force over each control on a fine grid around the
            // analytic optimum, with the other held at its maximizer (the
            // Hamiltonian is separable in c and theta).
            let p = consts.p;
            let k22 = consts.k2 * consts.k2;
            let theta_part =
                theta_star * consts.k1 * g + 0.5 * theta_star * theta_star * k22 * h;
            let c_part = c_star.powf(p) / p - c_star * g;
            let c_hi = 2.0 * c_star + 1.0;
            let th_span = 2.0 * theta_star.abs() + 1.0;
            let n = 40_000;
            let mut grid_best = f64::NEG_INFINITY;
            for i in 0..=n {
                let c = c_hi * i as f64 / n as f64;
                grid_best = grid_best.max(c.powf(p) / p - c * g + theta_part);
                let th = -th_span + 2.0 * th_span * i as f64 / n as f64;
                grid_best = grid_best.max(th * consts.k1 * g + 0.5 * th * th * k22 * h + c_part);
            }
            assert!(
                (value - grid_best).abs() < 1e-6,
                "g={g} h={h}: closed form {value} vs grid {grid_best}"
            );
            assert!(value >= grid_best - 1e-12);
        }
    }

    #[test]
    fn hamiltonian_no_liquid_drops_theta() {
        let mut params = benchmark_params(1.0, 0.0, 0.0);
        params.no_liquid_asset = true;
        let consts = DerivedConstants::from_params(&params);
        let (value, _, theta) = hamiltonian_max(0.8, -0.5, &consts, &Clamps::default());
        assert_eq!(theta, 0.0);
        let c = 0.8f64.powf(-2.0);
        assert_abs_diff_eq!(value, 2.0 * c.sqrt() - c * 0.8, epsilon = 1e-14);
    }

    #[test]
    fn boundary_z0_examples() {
        let consts = consts_for(1.0, 0.0, 0.0);
        assert_eq!(boundary_z0(0.3, 0.0, 5.0, &consts), 0.0);
        assert_eq!(boundary_z0(5.0, 1.7, 5.0, &consts), 0.0);

        // Hypothetical constants with K_lambda = 1.2 and a static kernel.
        let mut c = consts;
        c.k_lambda = 1.2;
        c.b_j = 0.0;
        c.sigma_j = 0.0;
        c.lambda = 1.0;
        let v = boundary_z0(0.0, 1.0, 5.0, &c);
        assert_abs_diff_eq!(v, (1.0 - (-6.0f64).exp()) / 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.83127, epsilon = 1e-5);
    }

    #[test]
    fn boundary_z1_terminal_and_stationarity() {
        let params = benchmark_params(5.0, 0.0, 0.0);
        let consts = DerivedConstants::from_params(&params);
        let cfg = SchemeConfig::paper(5.0).with_horizon(5.0);
        let row = boundary_z1(1.70, &cfg, &consts);
        assert_eq!(row[cfg.n_time()], 0.0);
        let k0 = solve_k0(&params, 1.70).unwrap();
        assert_abs_diff_eq!(row[0], k0, epsilon = 1e-3);

        // phi0 = 0 with a long horizon reaches the consumption-only constant.
        let params0 = benchmark_params(0.0, 0.0, 0.0);
        let consts0 = DerivedConstants::from_params(&params0);
        let cfg0 = SchemeConfig::paper(0.0).with_horizon(60.0);
        let row0 = boundary_z1(0.0, &cfg0, &consts0);
        let k00 = solve_k0(&params0, 0.0).unwrap();
        assert_abs_diff_eq!(row0[0], k00, epsilon = 1e-4);
    }

    /// Manufactured smooth solution: evaluates the z-form residual with exact
    /// analytic derivatives and the transformed-form residual through the
    /// production finite-difference assembly; the two must agree to O(dz).
    /// This validates the hand-derived chain-rule coefficients.
    #[test]
    fn transformed_coefficients_match_z_form() {
        let consts = consts_for(5.0, 0.6, 0.3);
        let clamps = Clamps::default();
        let phi0 = 1.7;
        let lam = consts.lambda;
        let p = consts.p;
        let grid = GaussGrid::build(64, QuadratureMethod::GaussHermite).unwrap();
        let t = 0.4;

        // Phi(t, z) = e^{-t} (1+z)^p (2 + 0.05 sin z): increasing and strictly
        // concave in z on the test window, so no clamp is active.
        let phi_fn = |t: f64, z: f64| (-t).exp() * (1.0 + z).powf(p) * (2.0 + 0.05 * z.sin());
        let phi_t = |t: f64, z: f64| -phi_fn(t, z);
        let phi_z = |t: f64, z: f64| {
            (-t).exp()
                * ((1.0 + z).powf(p - 1.0) * p * (2.0 + 0.05 * z.sin())
                    + (1.0 + z).powf(p) * 0.05 * z.cos())
        };
        let phi_zz = |t: f64, z: f64| {
            (-t).exp()
                * ((1.0 + z).powf(p - 2.0) * p * (p - 1.0) * (2.0 + 0.05 * z.sin())
                    + 2.0 * (1.0 + z).powf(p - 1.0) * p * 0.05 * z.cos()
                    - (1.0 + z).powf(p) * 0.05 * z.sin())
        };

        let mut errs = Vec::new();
        for dz in [0.01f64, 0.005] {
            let mut max_err = 0.0f64;
            let mut j = (0.25 / dz).round() as usize; // zhat from 0.25
            while (j as f64) * dz <= 0.70 {
                let zh = j as f64 * dz;
                let u: f64 = 1.0 - zh;
                let z = zh / u;
                assert!(phi_z(t, z) > 0.1 && phi_zz(t, z) < -0.05);

                // Exact residual of the z-form equation, times u^p.
                let (h_val, _, _) = hamiltonian_max(phi_z(t, z), phi_zz(t, z), &consts, &clamps);
                let r_z = -phi_t(t, z) + consts.k_lambda * phi_fn(t, z)
                    - consts.k3 * z * phi_z(t, z)
                    - 0.5 * consts.k4 * consts.k4 * z * z * phi_zz(t, z)
                    - lam * phi0 * f_gamma(t, z, &consts, &grid)
                    - h_val;

                // Residual through the production assembly on the zhat grid,
                // with the analytic time derivative.
                let tilde = |zh: f64| {
                    let u = 1.0 - zh;
                    u.powf(p) * phi_fn(t, zh / u)
                };
                let f_tilde = u.powf(p) * f_gamma(t, z, &consts, &grid);
                let rhs = interior_rhs(
                    tilde(zh - dz),
                    tilde(zh),
                    tilde(zh + dz),
                    zh,
                    dz,
                    lam * phi0 * f_tilde,
                    &consts,
                    &clamps,
                );
                let r_fd = -u.powf(p) * phi_t(t, z) - rhs;
                max_err = max_err.max((u.powf(p) * r_z - r_fd).abs());
                j += 1;
            }
            errs.push(max_err);
        }
        // First-order agreement: halving dz at least roughly halves the gap.
        assert!(errs[0] < 0.05, "coarse error {}", errs[0]);
        assert!(errs[1] < 0.75 * errs[0], "errors {:?}", errs);
    }

    /// With lambda = 0 the exact solution is g(t) zhat^p (the illiquid holding
    /// is dead capital), which exercises every transformed coefficient.
    #[test]
    fn lambda_zero_surface_matches_scalar_solution() {
        let params = ModelParams {
            lambda: 0.0,
            gamma: 0.5,
            rho: 0.3,
            ..benchmark_params(0.0, 0.5, 0.3)
        };
        let consts = DerivedConstants::from_params(&params);
        let cfg = SchemeConfig::paper(0.0).with_horizon(3.0);
        let kernel = kernel_for(&cfg, &consts, 48);
        let surface = solve_inner(0.0, &cfg, &consts, &kernel).unwrap();
        let g_row = boundary_z1(0.0, &cfg, &consts);
        let p = consts.p;
        // The exact solution has a zhat^p corner at the left edge, so the
        // first-order scheme is checked away from it.
        for j in (15..=cfg.n_space()).step_by(5) {
            let zh = surface.zhat_grid[j];
            let expected = g_row[0] * zh.powf(p);
            let got = surface.value(0, j);
            assert!(
                (got - expected).abs() < 1e-2 * g_row[0],
                "zhat={zh}: got {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn monotone_in_source_and_terminal_data() {
        let consts = consts_for(5.0, 0.5, 0.0);
        let cfg = SchemeConfig::fast(5.0).with_horizon(1.0);
        let kernel = kernel_for(&cfg, &consts, 48);

        let lo = solve_inner(1.0, &cfg, &consts, &kernel).unwrap();
        let hi = solve_inner(1.2, &cfg, &consts, &kernel).unwrap();
        for (a, b) in lo.phi_tilde.iter().zip(&hi.phi_tilde) {
            assert!(b + 1e-12 >= *a);
        }

        let zeros = vec![0.0; cfg.n_space() + 1];
        let bumped: Vec<f64> = cfg
            .zhat_grid()
            .iter()
            .map(|zh| 0.05 * (1.0 + zh))
            .collect();
        let base = sweep(1.0, &cfg, &consts, &kernel, &zeros).unwrap();
        let pert = sweep(1.0, &cfg, &consts, &kernel, &bumped).unwrap();
        // The stenciled operator is monotone; the pointwise Hamiltonian's
        // central gradient can break the ordering by O(dt dz c_max) while the
        // consumption cap is active in the terminal layer, hence the slack.
        for (i, (a, b)) in base.phi_tilde.iter().zip(&pert.phi_tilde).enumerate() {
            let j = i % (cfg.n_space() + 1);
            // Dirichlet boundary rows are pinned, interior must order.
            if j != 0 && j != cfg.n_space() {
                assert!(b + 1e-4 >= *a, "node {i}: {b} < {a}");
            }
        }
    }

    #[test]
    fn fixed_point_lambda_zero_converges_immediately() {
        let params = benchmark_params(0.0, 0.0, 0.0);
        let consts = DerivedConstants::from_params(&params);
        let cfg = SchemeConfig::fast(0.0).with_horizon(2.0);
        let kernel = kernel_for(&cfg, &consts, 32);
        let result = fixed_point(&cfg, &consts, &kernel).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 2);
        assert!((result.outer_history[1] - result.outer_history[0]).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_history_nondecreasing() {
        let consts = consts_for(1.0, 0.0, 0.0);
        let cfg = SchemeConfig::fast(1.0).with_horizon(2.0);
        let kernel = kernel_for(&cfg, &consts, 48);
        let result = fixed_point(&cfg, &consts, &kernel).unwrap();
        assert!(result.converged);
        for w in result.outer_history.windows(2) {
            assert!(w[1] + 1e-12 >= w[0]);
        }
        assert_abs_diff_eq!(result.phi0, consts.p * result.phi0_pde, epsilon = 1e-15);
    }

    #[test]
    fn surface_respects_growth_bound() {
        // phi_tilde(t, zhat) <= C e^{k_Jp t} with C fitted at t = 0.
        let consts = consts_for(5.0, 0.5, 0.3);
        let cfg = SchemeConfig::fast(5.0).with_horizon(2.0);
        let kernel = kernel_for(&cfg, &consts, 48);
        let result = fixed_point(&cfg, &consts, &kernel).unwrap();
        let surface = &result.surface;
        let c_fit = surface.row(0).iter().cloned().fold(0.0f64, f64::max);
        for (i, t) in surface.t_grid.iter().enumerate() {
            let bound = c_fit * (consts.k_jp * t).exp() * (1.0 + 1e-9);
            for j in 0..=surface.n_space() {
                let v = surface.value(i, j);
                assert!(v >= -1e-12, "negative phi_tilde at ({i}, {j})");
                assert!(v <= bound, "growth bound violated at ({i}, {j}): {v} > {bound}");
            }
        }
    }

    #[test]
    fn cfl_rejects_oversized_steps() {
        let consts = consts_for(5.0, 1.0, 0.0);
        let mut cfg = SchemeConfig::paper(5.0);
        cfg.dt = 0.5;
        assert!(matches!(check_cfl(&cfg, &consts), Err(Error::Cfl(_))));
    }

    #[test]
    fn degenerate_observation_kills_stencil_terms() {
        let consts = consts_for(1.0, 0.0, 0.0);
        for zh in [0.1, 0.5, 0.9] {
            let c = node_coeffs(zh, &consts);
            assert_eq!(c.drift, 0.0);
            assert_eq!(c.diff, 0.0);
            assert_abs_diff_eq!(c.react, consts.k_lambda, epsilon = 1e-15);
        }
    }
// temporary probe appended to hjb tests
}
