//! Closed-loop Monte Carlo across Poisson trading dates.
//!
//! Between trades the state follows the observed pair `(X, Y)` under the
//! feedback controls, the unobserved factor `J` runs on its own driver, and
//! the true illiquid value is `A = Y J`. At every trading date total wealth
//! `R = X + A` is rebalanced to the constant optimal split given by `z*`.
//!
//! Realized utility accumulates `e^{-beta s} c^p ds`, i.e. the same
//! per-unit-wealth convention as the published values and the fixed point's
//! `phi0`, so the two are directly comparable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use std::io::Write;

use crate::model::{DerivedConstants, ModelParams};
use crate::policy::PolicyField;
use crate::{Error, Result};

/// Monte Carlo controls.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt_euler: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub initial_wealth: f64,
    /// Number of leading paths for which full step records are kept.
    #[serde(default = "default_sample_paths")]
    pub sample_paths: usize,
}

fn default_sample_paths() -> usize {
    8
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 40.0,
            dt_euler: 5e-3,
            n_paths: 100_000,
            seed: 42,
            initial_wealth: 1.0,
            sample_paths: default_sample_paths(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon <= 0.0 || self.n_paths == 0 {
            return Err(Error::InvalidConfig(
                "horizon and n_paths must be positive".into(),
            ));
        }
        if !(self.dt_euler > 0.0 && self.dt_euler <= 1e-2) {
            return Err(Error::InvalidConfig(
                "dt_euler must lie in (0, 1e-2] for Euler accuracy".into(),
            ));
        }
        if self.initial_wealth <= 0.0 {
            return Err(Error::InvalidConfig("initial_wealth must be > 0".into()));
        }
        Ok(())
    }
}

/// One rebalancing event on a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeRecord {
    pub time: f64,
    /// Liquid wealth and true illiquid value just before rebalancing.
    pub pre_x: f64,
    pub pre_a: f64,
    /// Observed state just after rebalancing.
    pub post_x: f64,
    pub post_y: f64,
}

/// One recorded step of a sampled path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub time: f64,
    pub x: f64,
    pub y: f64,
    /// True illiquid value `y J`.
    pub a: f64,
    pub consumption: f64,
    pub liquid_investment: f64,
    pub is_trade: bool,
}

#[derive(Debug, Clone, Default)]
pub struct PathRecord {
    pub path_id: usize,
    pub trades: Vec<TradeRecord>,
    pub discounted_utility: f64,
    pub consumption_integral: f64,
    pub absorbed: bool,
    pub samples: Vec<SamplePoint>,
}

/// Aggregates plus per-path utilities; detailed records for the sampled
/// leading paths only.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub mean_utility: f64,
    pub utility_std_error: f64,
    pub utilities: Vec<f64>,
    pub total_trades: u64,
    /// Trading events (with positive wealth) whose post-rebalance illiquid
    /// proportion deviated from `z_hat_star` by more than 1e-8.
    pub rebalance_violations: u64,
    pub absorbed_paths: u64,
    pub detailed: Vec<PathRecord>,
}

impl SimulationResult {
    /// Sampled-path export: `path_id, s, X, Y, A, c, pi, is_trade`.
    pub fn write_paths_csv(&self, path: &std::path::Path, header_comment: &str) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# {header_comment}")?;
        writeln!(w, "path_id,s,X,Y,A,c,pi,is_trade")?;
        for rec in &self.detailed {
            for pt in &rec.samples {
                writeln!(
                    w,
                    "{},{:.6},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{}",
                    rec.path_id,
                    pt.time,
                    pt.x,
                    pt.y,
                    pt.a,
                    pt.consumption,
                    pt.liquid_investment,
                    u8::from(pt.is_trade)
                )?;
            }
        }
        Ok(())
    }
}

struct PathOutcome {
    utility: f64,
    trades: u64,
    violations: u64,
    absorbed: bool,
    record: Option<PathRecord>,
}

/// Rebalance total wealth `r` to the optimal split. With `z*` infinite the
/// whole wealth stays liquid.
fn rebalance(r: f64, z_star: f64) -> (f64, f64) {
    if z_star.is_infinite() {
        (r, 0.0)
    } else {
        (r * z_star / (1.0 + z_star), r / (1.0 + z_star))
    }
}

fn run_path(
    path_id: usize,
    params: &ModelParams,
    consts: &DerivedConstants,
    policy: &PolicyField,
    cfg: &SimConfig,
    keep_record: bool,
) -> PathOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path_id as u64 + 1);

    let beta = params.beta;
    let p = params.p;
    let sqrt_1mr2 = (1.0 - params.rho * params.rho).sqrt();
    let ratio_tol = 1e-8;

    let mut record = keep_record.then(|| PathRecord {
        path_id,
        ..PathRecord::default()
    });

    let mut utility = 0.0f64;
    let mut consumption_integral = 0.0f64;
    let mut trades = 0u64;
    let mut violations = 0u64;
    let mut absorbed_ever = false;

    let mut s = 0.0f64;
    let mut tau = 0.0f64; // last trading date
    let mut x;
    let mut y;
    let mut jfac = 1.0f64;

    let do_trade = |s: f64,
                        pre_x: f64,
                        pre_a: f64,
                        trades: &mut u64,
                        violations: &mut u64,
                        record: &mut Option<PathRecord>|
     -> (f64, f64) {
        let r = pre_x + pre_a;
        let (nx, ny) = rebalance(r, policy.z_star);
        *trades += 1;
        if r > 0.0 {
            let prop = ny / (nx + ny).max(f64::MIN_POSITIVE);
            if (prop - policy.z_hat_star).abs() > ratio_tol {
                *violations += 1;
            }
        }
        if let Some(rec) = record {
            rec.trades.push(TradeRecord {
                time: s,
                pre_x,
                pre_a,
                post_x: nx,
                post_y: ny,
            });
        }
        (nx, ny)
    };

    // Time zero is a trading date.
    (x, y) = do_trade(
        0.0,
        cfg.initial_wealth,
        0.0,
        &mut trades,
        &mut violations,
        &mut record,
    );

    let mut next_trade = if params.lambda > 0.0 {
        -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / params.lambda
    } else {
        f64::INFINITY
    };
    let mut absorbed_interval = false;

    while s < cfg.horizon - 1e-12 {
        let segment_end = next_trade.min(cfg.horizon);
        // Euler steps inside [s, segment_end].
        while s < segment_end - 1e-12 {
            let h = cfg.dt_euler.min(segment_end - s);
            let total = x + y;
            let (c, pi) = if !absorbed_interval && x > 0.0 && total > 0.0 {
                let zh = y / total;
                let elapsed = s - tau;
                (
                    total * policy.consumption_at(elapsed, zh),
                    total * policy.liquid_at(elapsed, zh),
                )
            } else {
                (0.0, 0.0)
            };
            if let Some(rec) = record.as_mut() {
                rec.samples.push(SamplePoint {
                    time: s,
                    x,
                    y,
                    a: y * jfac,
                    consumption: c,
                    liquid_investment: pi,
                    is_trade: false,
                });
            }
            utility += (-beta * s).exp() * c.powf(p) * h;
            consumption_integral += c * h;

            let dw: f64 = rng.sample::<f64, _>(StandardNormal) * h.sqrt();
            let db1: f64 = rng.sample::<f64, _>(StandardNormal) * h.sqrt();
            let db2: f64 = rng.sample::<f64, _>(StandardNormal) * h.sqrt();

            // Euler step on the controlled liquid wealth; the uncontrolled
            // geometric factors advance by their exact log-normal increments
            // (plain Euler biases their p-th moments by O(h) per unit time,
            // which shows up directly in the realized utility).
            x += -c * h + pi * (params.b_l * h + params.sigma_l * dw);
            let sigma_y2 = params.sigma_i
                * params.sigma_i
                * (params.rho * params.rho + sqrt_1mr2 * sqrt_1mr2 * params.gamma * params.gamma);
            y *= ((consts.b_y - 0.5 * sigma_y2) * h
                + params.sigma_i * (params.rho * dw + sqrt_1mr2 * params.gamma * db1))
                .exp();
            jfac *= ((consts.b_j - 0.5 * consts.sigma_j * consts.sigma_j) * h
                + consts.sigma_j * db2)
                .exp();
            if x <= 0.0 {
                // Zero is absorbing for the liquid wealth between trades.
                x = 0.0;
                absorbed_interval = true;
                absorbed_ever = true;
            }
            s += h;
        }
        if next_trade <= cfg.horizon {
            let pre_x = x;
            let pre_a = y * jfac;
            (x, y) = do_trade(s, pre_x, pre_a, &mut trades, &mut violations, &mut record);
            jfac = 1.0;
            tau = s;
            absorbed_interval = false;
            if let Some(rec) = record.as_mut() {
                rec.samples.push(SamplePoint {
                    time: s,
                    x,
                    y,
                    a: y,
                    consumption: 0.0,
                    liquid_investment: 0.0,
                    is_trade: true,
                });
            }
            next_trade = s + -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / params.lambda;
        }
    }

    if let Some(rec) = record.as_mut() {
        rec.discounted_utility = utility;
        rec.consumption_integral = consumption_integral;
        rec.absorbed = absorbed_ever;
    }
    PathOutcome {
        utility,
        trades,
        violations,
        absorbed: absorbed_ever,
        record,
    }
}

/// Simulate the closed-loop optimal strategy. Paths are independent work
/// units; the reduction is in path-index order, so results are bit-identical
/// for a given seed regardless of thread count.
pub fn simulate(
    params: &ModelParams,
    policy: &PolicyField,
    cfg: &SimConfig,
) -> Result<SimulationResult> {
    params.validate()?;
    cfg.validate()?;
    let consts = DerivedConstants::from_params(params);
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|pid| run_path(pid, params, &consts, policy, cfg, pid < cfg.sample_paths))
        .collect();

    let n = cfg.n_paths as f64;
    let utilities: Vec<f64> = outcomes.iter().map(|o| o.utility).collect();
    let mean = utilities.iter().sum::<f64>() / n;
    let var = utilities.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let std_error = (var / n).sqrt();

    Ok(SimulationResult {
        mean_utility: mean,
        utility_std_error: std_error,
        utilities,
        total_trades: outcomes.iter().map(|o| o.trades).sum(),
        rebalance_violations: outcomes.iter().map(|o| o.violations).sum(),
        absorbed_paths: outcomes.iter().filter(|o| o.absorbed).count() as u64,
        detailed: outcomes.into_iter().filter_map(|o| o.record).collect(),
    })
}

/// Euler paths of the wealth ratio `Z = X/Y` under injectable feedback rates:
/// `dZ = -c~ dt + theta~ (Khat1 dt + K2 dW) + Z (Khat3 dt + K4 dB1)`,
/// with absorption at zero. Returns one path per requested seed stream,
/// sampled at every Euler step.
fn euler_ratio_paths(
    consts: &DerivedConstants,
    cfg: &SimConfig,
    z0: f64,
    n_paths: usize,
    c_tilde: impl Fn(f64, f64) -> f64 + Sync,
    theta_tilde: impl Fn(f64, f64) -> f64 + Sync,
) -> Vec<Vec<f64>> {
    (0..n_paths)
        .map(|pid| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(pid as u64 + 1);
            let n_steps = (cfg.horizon / cfg.dt_euler).round() as usize;
            let h = cfg.dt_euler;
            let mut z = z0;
            let mut out = Vec::with_capacity(n_steps + 1);
            out.push(z);
            for k in 0..n_steps {
                let s = k as f64 * h;
                if z > 0.0 {
                    let dw: f64 = rng.sample::<f64, _>(StandardNormal) * h.sqrt();
                    let db1: f64 = rng.sample::<f64, _>(StandardNormal) * h.sqrt();
                    // Keep the stream layout of the wealth simulation.
                    let _db2: f64 = rng.sample::<f64, _>(StandardNormal);
                    let c = c_tilde(s, z);
                    let th = theta_tilde(s, z);
                    z += -c * h
                        + th * (consts.khat1 * h + consts.k2 * dw)
                        + z * (consts.khat3 * h + consts.k4 * db1);
                    if z <= 0.0 {
                        z = 0.0;
                    }
                } else {
                    let _: f64 = rng.sample(StandardNormal);
                    let _: f64 = rng.sample(StandardNormal);
                    let _: f64 = rng.sample(StandardNormal);
                }
                out.push(z);
            }
            out
        })
        .collect()
}

/// Closed-loop ratio simulation with the feedbacks read from a policy field:
/// `c~(s, z) = (1+z) C_hat(s, 1/(1+z))` and
/// `theta~(s, z) = (1+z) Pi_hat(s, 1/(1+z)) - (rho sigma_I/sigma_L) z`.
pub fn simulate_ratio(
    params: &ModelParams,
    policy: &PolicyField,
    cfg: &SimConfig,
    z0: f64,
    n_paths: usize,
) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    cfg.validate()?;
    let consts = DerivedConstants::from_params(params);
    let rho_hedge = consts.rho_hedge;
    Ok(euler_ratio_paths(
        &consts,
        cfg,
        z0,
        n_paths,
        |s, z| (1.0 + z) * policy.consumption_at(s, 1.0 / (1.0 + z)),
        |s, z| (1.0 + z) * policy.liquid_at(s, 1.0 / (1.0 + z)) - rho_hedge * z,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::{Clamps, SchemeConfig, ValueSurface};
    use crate::model::{benchmark_params, solve_k0};
    use approx::assert_abs_diff_eq;

    /// Policy field from a manufactured surface phi_tilde(t, s) = f(s).
    fn manufactured_policy(
        params: &ModelParams,
        f: impl Fn(f64) -> f64,
    ) -> (PolicyField, DerivedConstants) {
        let consts = DerivedConstants::from_params(params);
        let cfg = SchemeConfig {
            t_horizon: 2.0,
            dt: 0.01,
            dz: 0.02,
            fixed_point_tol: 1e-5,
            max_outer_iters: 10,
            clamps: Clamps::default(),
        };
        let t_grid = cfg.t_grid();
        let zhat_grid = cfg.zhat_grid();
        let mut phi = Vec::new();
        for _ in &t_grid {
            for &s in &zhat_grid {
                phi.push(f(s));
            }
        }
        let surface = ValueSurface {
            cfg,
            t_grid,
            zhat_grid,
            phi_tilde: phi,
            phi0_source: 0.0,
        };
        (PolicyField::build(&surface, &consts), consts)
    }

    #[test]
    fn identical_seeds_reproduce_bit_identical_results() {
        let params = benchmark_params(5.0, 0.5, 0.0);
        let (policy, _) = manufactured_policy(&params, |s| 3.0 + 0.5 * s - 0.4 * s * s);
        let cfg = SimConfig {
            horizon: 2.0,
            dt_euler: 1e-2,
            n_paths: 64,
            seed: 9,
            initial_wealth: 1.0,
            sample_paths: 2,
        };
        let a = simulate(&params, &policy, &cfg).unwrap();
        let b = simulate(&params, &policy, &cfg).unwrap();
        assert_eq!(a.utilities, b.utilities);
        assert_eq!(a.mean_utility.to_bits(), b.mean_utility.to_bits());
        assert_eq!(a.total_trades, b.total_trades);
        let c = simulate(&params, &policy, &SimConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.utilities, c.utilities);
    }

    #[test]
    fn states_stay_nonnegative_and_ratio_holds_at_trades() {
        let params = benchmark_params(5.0, 0.5, 0.3);
        let (policy, _) = manufactured_policy(&params, |s| 3.0 + 0.8 * s - 0.6 * s * s);
        let cfg = SimConfig {
            horizon: 3.0,
            dt_euler: 5e-3,
            n_paths: 128,
            seed: 4,
            initial_wealth: 2.5,
            sample_paths: 128,
        };
        let result = simulate(&params, &policy, &cfg).unwrap();
        assert_eq!(result.rebalance_violations, 0);
        assert!(result.total_trades >= 128); // at least the t = 0 trade per path
        for rec in &result.detailed {
            for pt in &rec.samples {
                assert!(pt.x >= 0.0 && pt.y >= 0.0 && pt.a >= 0.0);
            }
            for tr in &rec.trades {
                if tr.post_x + tr.post_y > 0.0 {
                    let prop = tr.post_y / (tr.post_x + tr.post_y);
                    assert_abs_diff_eq!(prop, policy.z_hat_star, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn ratio_absorbed_at_zero() {
        let params = benchmark_params(5.0, 0.5, 0.0);
        let (policy, _) = manufactured_policy(&params, |s| 3.0 + 0.5 * s - 0.4 * s * s);
        let cfg = SimConfig {
            horizon: 1.0,
            dt_euler: 1e-2,
            n_paths: 4,
            seed: 3,
            initial_wealth: 1.0,
            sample_paths: 0,
        };
        let paths = simulate_ratio(&params, &policy, &cfg, 0.0, 4).unwrap();
        for path in paths {
            assert!(path.iter().all(|z| *z == 0.0));
        }
    }

    #[test]
    fn ratio_without_controls_is_geometric() {
        // c~ = theta~ = 0 leaves dZ = Z (Khat3 dt + K4 dB1): E[Z_t] = z0 e^{Khat3 t}.
        let params = benchmark_params(5.0, 0.8, 0.3);
        let consts = DerivedConstants::from_params(&params);
        let cfg = SimConfig {
            horizon: 1.0,
            dt_euler: 2e-3,
            n_paths: 0,
            seed: 11,
            initial_wealth: 1.0,
            sample_paths: 0,
        };
        let n_paths = 4000;
        let paths = euler_ratio_paths(&consts, &cfg, 1.0, n_paths, |_, _| 0.0, |_, _| 0.0);
        let mean_end: f64 = paths.iter().map(|p| *p.last().unwrap()).sum::<f64>() / n_paths as f64;
        let expected = (consts.khat3 * 1.0).exp();
        let tol = 4.0 * 0.35 / (n_paths as f64).sqrt() + 3.0 * cfg.dt_euler;
        assert!(
            (mean_end - expected).abs() < tol,
            "mean {mean_end} vs {expected} (tol {tol})"
        );
    }

    #[test]
    fn ratio_couples_with_wealth_pair() {
        // With shared noise, Z and X/Y agree pathwise to O(dt) before absorption.
        let params = benchmark_params(0.0, 0.6, 0.2);
        let consts = DerivedConstants::from_params(&params);
        let c_rate = 0.25f64;
        let th_rate = 0.3f64;
        let c_fn = move |_s: f64, z: f64| c_rate * z;
        let th_fn = move |_s: f64, z: f64| th_rate * z;

        let mut max_gap_by_dt = Vec::new();
        for dt in [4e-3, 1e-3] {
            let cfg = SimConfig {
                horizon: 1.0,
                dt_euler: dt,
                n_paths: 0,
                seed: 21,
                initial_wealth: 1.0,
                sample_paths: 0,
            };
            let z_paths = euler_ratio_paths(&consts, &cfg, 2.0, 3, c_fn, th_fn);

            // Re-run the same noise on the (X, Y) pair with the equivalent
            // per-unit-y controls: c = c~ Y, pi = (theta~ + rho_hedge Z) Y.
            let mut max_gap = 0.0f64;
            for (pid, z_path) in z_paths.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(pid as u64 + 1);
                let n_steps = (cfg.horizon / cfg.dt_euler).round() as usize;
                let h = cfg.dt_euler;
                let mut x = 2.0f64;
                let mut y = 1.0f64;
                for k in 0..n_steps {
                    let dw: f64 = rng.sample::<f64, _>(StandardNormal) * h.sqrt();
                    let db1: f64 = rng.sample::<f64, _>(StandardNormal) * h.sqrt();
                    let _db2: f64 = rng.sample::<f64, _>(StandardNormal);
                    let z = x / y;
                    let c = c_fn(k as f64 * h, z) * y;
                    let pi = (th_fn(k as f64 * h, z) + consts.rho_hedge * z) * y;
                    x += -c * h + pi * (params.b_l * h + params.sigma_l * dw);
                    y += y * (consts.b_y * h
                        + params.sigma_i
                            * (params.rho * dw
                                + (1.0 - params.rho * params.rho).sqrt() * params.gamma * db1));
                    let gap = (z_path[k + 1] - x / y).abs();
                    max_gap = max_gap.max(gap);
                }
            }
            max_gap_by_dt.push(max_gap);
        }
        assert!(max_gap_by_dt[0] < 0.4, "gap {:?}", max_gap_by_dt);
        assert!(
            max_gap_by_dt[1] < 0.6 * max_gap_by_dt[0],
            "gaps did not shrink with dt: {:?}",
            max_gap_by_dt
        );
    }

    #[test]
    fn merton_closed_loop_mean_utility_matches_scalar_value() {
        // lambda = 0, everything liquid: the manufactured exact policy is
        // c = k_c x, pi = (b_L/((1-p) sigma_L^2)) x with k_c = (p K0)^{-1/(1-p)}.
        let params = benchmark_params(0.0, 0.0, 0.0);
        let k0 = solve_k0(&params, 0.0).unwrap();
        let p = params.p;
        let expected = p * k0; // published convention (utility c^p)
        let (policy, _) = manufactured_policy(&params, move |s| k0 * s.max(0.0).powf(p));
        assert!(policy.z_star.is_infinite());
        let cfg = SimConfig {
            horizon: 45.0,
            dt_euler: 5e-3,
            n_paths: 4000,
            seed: 123,
            initial_wealth: 1.0,
            sample_paths: 0,
        };
        let result = simulate(&params, &policy, &cfg).unwrap();
        let tol = 2.0 * result.utility_std_error + 0.01 * expected;
        assert!(
            (result.mean_utility - expected).abs() < tol,
            "mean {} vs {} (se {}, tol {tol})",
            result.mean_utility,
            expected,
            result.utility_std_error
        );
    }

    #[test]
    fn uncontrolled_growth_respects_exponent_bound() {
        // c = 0, pi = theta X: E[(X+Y)^p] <= e^{k_LYp s} (x+y)^p.
        let params = benchmark_params(5.0, 0.5, 0.3);
        let consts = DerivedConstants::from_params(&params);
        let horizon = 1.5f64;
        let dt = 2e-3;
        let n_steps = (horizon / dt) as usize;
        let n_paths = 6000;
        for theta in [0.0, 0.3, 1.0] {
            let mut sum = 0.0f64;
            let mut sum_sq = 0.0f64;
            for pid in 0..n_paths {
                let mut rng = ChaCha8Rng::seed_from_u64(777);
                rng.set_stream(pid as u64 + 1);
                let mut x = 0.6f64;
                let mut y = 0.4f64;
                for _ in 0..n_steps {
                    let dw: f64 = rng.sample::<f64, _>(StandardNormal) * dt.sqrt();
                    let db1: f64 = rng.sample::<f64, _>(StandardNormal) * dt.sqrt();
                    let pi = theta * x;
                    x += pi * (params.b_l * dt + params.sigma_l * dw);
                    y += y * (consts.b_y * dt
                        + params.sigma_i
                            * (params.rho * dw
                                + (1.0 - params.rho * params.rho).sqrt() * params.gamma * db1));
                    x = x.max(0.0);
                }
                let v = (x + y).powf(params.p);
                sum += v;
                sum_sq += v * v;
            }
            let mean = sum / n_paths as f64;
            let se = ((sum_sq / n_paths as f64 - mean * mean) / n_paths as f64).sqrt();
            let bound = (consts.k_lyp * horizon).exp();
            assert!(
                mean <= bound + 3.0 * se + 0.01,
                "theta={theta}: mean {mean} vs bound {bound} (se {se})"
            );
        }
    }
}
