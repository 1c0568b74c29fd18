//! Market/preference parameters, derived constants and analytic baselines.
//!
//! Everything downstream is driven by a handful of constants computed here:
//! the growth exponent `k_p` of the fully liquid comparison problem, the
//! drift/volatility split of the illiquid asset into an observed proxy `Y`
//! and an unobserved factor `J`, and the coefficient block of the reduced
//! one-dimensional equation.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Market and preference parameters.
///
/// `gamma` measures how much of the illiquid asset's idiosyncratic noise is
/// observed between trading dates (`0` none, `1` all). `lambda` is the
/// intensity of the Poisson process whose jumps are the trading dates.
///
/// `no_liquid_asset` switches to the comparison model in which the liquid
/// risky asset cannot be traded: the liquid-investment control is removed
/// everywhere downstream while the cash account and the illiquid asset stay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "b_L")]
    pub b_l: f64,
    #[serde(rename = "sigma_L")]
    pub sigma_l: f64,
    #[serde(rename = "b_I")]
    pub b_i: f64,
    #[serde(rename = "sigma_I")]
    pub sigma_i: f64,
    pub rho: f64,
    pub beta: f64,
    pub p: f64,
    pub lambda: f64,
    pub gamma: f64,
    #[serde(default)]
    pub no_liquid_asset: bool,
}

impl ModelParams {
    /// Strict validation: rejects anything that would make the value function
    /// infinite or the formulas meaningless.
    pub fn validate(&self) -> Result<()> {
        let fin = |v: f64, name: &str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must be finite")))
            }
        };
        fin(self.b_l, "b_L")?;
        fin(self.sigma_l, "sigma_L")?;
        fin(self.b_i, "b_I")?;
        fin(self.sigma_i, "sigma_I")?;
        fin(self.rho, "rho")?;
        fin(self.beta, "beta")?;
        fin(self.p, "p")?;
        fin(self.lambda, "lambda")?;
        fin(self.gamma, "gamma")?;
        if self.sigma_l <= 0.0 {
            return Err(Error::InvalidParams("sigma_L must be > 0".into()));
        }
        if self.sigma_i <= 0.0 {
            return Err(Error::InvalidParams("sigma_I must be > 0".into()));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::InvalidParams("rho must lie in (-1, 1)".into()));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidParams("p must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams("gamma must lie in [0, 1]".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidParams("lambda must be >= 0".into()));
        }
        if self.beta <= 0.0 {
            return Err(Error::InvalidParams("beta must be > 0".into()));
        }
        if self.no_liquid_asset && self.rho != 0.0 {
            return Err(Error::InvalidParams(
                "no_liquid_asset requires rho = 0 (no liquid asset to correlate with)".into(),
            ));
        }
        let kp = compute_kp(self);
        if self.beta <= kp {
            return Err(Error::InvalidParams(format!(
                "beta = {} must exceed k_p = {kp} (value function infinite otherwise)",
                self.beta
            )));
        }
        Ok(())
    }

    /// Exponent of the liquid-only Merton problem,
    /// `p b_L^2 / (2 (1-p) sigma_L^2)`; zero when the liquid asset is disabled.
    pub fn kappa_liquid(&self) -> f64 {
        if self.no_liquid_asset {
            0.0
        } else {
            self.p * self.b_l * self.b_l / (2.0 * (1.0 - self.p) * self.sigma_l * self.sigma_l)
        }
    }

    /// Excess drift of the illiquid asset after hedging with the liquid one,
    /// `b_I - rho b_L sigma_I / sigma_L` (plain `b_I` without a liquid asset).
    fn hedged_drift(&self) -> f64 {
        if self.no_liquid_asset {
            self.b_i
        } else {
            self.b_i - self.rho * self.b_l * self.sigma_i / self.sigma_l
        }
    }

    /// Residual illiquid variance after hedging, `sigma_I^2 (1 - rho^2)`.
    fn hedged_var(&self) -> f64 {
        if self.no_liquid_asset {
            self.sigma_i * self.sigma_i
        } else {
            self.sigma_i * self.sigma_i * (1.0 - self.rho * self.rho)
        }
    }
}

/// Maximum of `p b u - p(1-p)/2 s2 u^2` over `u` in `[0, 1]`.
fn quad_max_unit(b: f64, s2: f64, p: f64) -> f64 {
    let q = 0.5 * p * (1.0 - p);
    if s2 > 0.0 {
        let u = (b / ((1.0 - p) * s2)).clamp(0.0, 1.0);
        p * b * u - q * s2 * u * u
    } else {
        // Linear objective on [0, 1].
        p * b.max(0.0)
    }
}

/// Maximum of the same objective over `u` in all of the reals.
fn quad_max_free(b: f64, s2: f64, p: f64) -> f64 {
    if s2 > 0.0 {
        p * b * b / (2.0 * (1.0 - p) * s2)
    } else if b == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Growth exponent of the constrained fully-liquid comparison problem:
/// the supremum over `u_L` in the reals and `u_I` in `[0, 1]` of
/// `p (u_L b_L + u_I b_I) - p(1-p)/2 (u_L^2 sigma_L^2 + u_I^2 sigma_I^2 + 2 rho u_L u_I sigma_L sigma_I)`.
///
/// Computed analytically: `u_L` is eliminated in closed form for fixed `u_I`,
/// leaving a concave quadratic in `u_I` maximized over `[0, 1]` by projection.
pub fn compute_kp(params: &ModelParams) -> f64 {
    params.kappa_liquid() + quad_max_unit(params.hedged_drift(), params.hedged_var(), params.p)
}

/// Same supremum with the illiquid proportion unconstrained (`u_I` in the reals).
pub fn compute_kp_unconstrained(params: &ModelParams) -> f64 {
    params.kappa_liquid() + quad_max_free(params.hedged_drift(), params.hedged_var(), params.p)
}

/// Drift/volatility split of the illiquid asset between the observed proxy
/// `Y` and the unobserved factor `J`, together with the growth exponents of
/// the two halves. Returns `(b_Y, b_J, sigma_J, k_LYp, k_Jp)`.
pub fn split_constants(params: &ModelParams) -> (f64, f64, f64, f64, f64) {
    let g2 = params.gamma * params.gamma;
    let hedge = if params.no_liquid_asset {
        0.0
    } else {
        params.rho * params.b_l * params.sigma_i / params.sigma_l
    };
    let b_y = g2 * params.b_i + (1.0 - g2) * hedge;
    let b_j = params.b_i - b_y;
    let one_m_rho2 = 1.0 - params.rho * params.rho;
    let sigma_j = params.sigma_i * one_m_rho2.sqrt() * (1.0 - g2).max(0.0).sqrt();

    let k_jp = quad_max_unit(b_j, sigma_j * sigma_j, params.p);
    let k_lyp = if params.no_liquid_asset {
        let s2_y = params.sigma_i * params.sigma_i * (params.rho * params.rho + g2 * one_m_rho2);
        quad_max_unit(b_y, s2_y, params.p)
    } else {
        // Eliminating u_L turns the (u_L, u_Y) supremum into a projected
        // quadratic in u_Y, exactly as in compute_kp.
        params.kappa_liquid()
            + quad_max_unit(
                b_y - hedge,
                params.sigma_i * params.sigma_i * g2 * one_m_rho2,
                params.p,
            )
    };
    (b_y, b_j, sigma_j, k_lyp, k_jp)
}

/// Every constant of the reduced problem, computed once from [`ModelParams`].
///
/// `k4` is stored signed (nonpositive by convention); only `k4^2` enters
/// the equation. `khat1`/`khat3` drive the closed-loop ratio dynamics,
/// not the PDE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub k_p: f64,
    pub b_y: f64,
    pub b_j: f64,
    pub sigma_j: f64,
    pub k_lyp: f64,
    pub k_jp: f64,
    pub k_lambda: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub khat1: f64,
    pub khat3: f64,
    // Copies used all over the inner loops.
    pub p: f64,
    pub beta: f64,
    pub lambda: f64,
    pub kappa_liquid: f64,
    /// `rho sigma_I / sigma_L`: the shift between the liquid investment and
    /// the hedged control (`theta = pi - rho sigma_I/sigma_L z`).
    pub rho_hedge: f64,
    pub no_liquid_asset: bool,
}

impl DerivedConstants {
    pub fn from_params(params: &ModelParams) -> Self {
        let (b_y, b_j, sigma_j, k_lyp, k_jp) = split_constants(params);
        let p = params.p;
        let g2 = params.gamma * params.gamma;
        let one_m_rho2 = 1.0 - params.rho * params.rho;
        let si = params.sigma_i;
        let sl = params.sigma_l;
        let hedge = params.rho * params.b_l * si / sl;

        // Effective discount after absorbing the Y^p change of measure:
        // K_lambda = beta + lambda - p b_Y + p(1-p) sigma_Y^2 / 2 with
        // sigma_Y^2 = sigma_I^2 (rho^2 + gamma^2 (1 - rho^2)). This is what
        // makes the all-liquid sub-problem the zhat -> 1 limit of the
        // reduced equation; see the lambda = 0 oracle test.
        let sigma_y2 = si * si * (params.rho * params.rho + g2 * one_m_rho2);
        let k_lambda = params.beta + params.lambda - p * b_y + 0.5 * p * (1.0 - p) * sigma_y2;
        let k1 = params.b_l - params.rho * si * sl * (1.0 - p);
        let k2 = sl;
        let k3 = g2 * (-params.b_i + hedge + one_m_rho2 * (1.0 - p) * si * si);
        let k4 = -si * params.gamma * one_m_rho2.sqrt();
        let khat1 = params.b_l - params.rho * si * sl;
        let khat3 = g2 * (-params.b_i + hedge + one_m_rho2 * si * si);

        DerivedConstants {
            k_p: compute_kp(params),
            b_y,
            b_j,
            sigma_j,
            k_lyp,
            k_jp,
            k_lambda,
            k1,
            k2,
            k3,
            k4,
            khat1,
            khat3,
            p,
            beta: params.beta,
            lambda: params.lambda,
            kappa_liquid: params.kappa_liquid(),
            rho_hedge: if params.no_liquid_asset {
                0.0
            } else {
                params.rho * si / sl
            },
            no_liquid_asset: params.no_liquid_asset,
        }
    }

    /// Exponent `m` with `E[J_t^p] = e^{m t}`:
    /// `m = p b_J - p (1 - p) sigma_J^2 / 2`.
    pub fn kernel_moment_exponent(&self) -> f64 {
        self.p * self.b_j - 0.5 * self.p * (1.0 - self.p) * self.sigma_j * self.sigma_j
    }
}

/// Per-unit-wealth value of the fully liquid comparison (Merton) problem,
/// `((1-p)/(beta - k))^{1-p}`, in the convention of the published baselines.
///
/// `constrained` keeps the illiquid proportion in `[0, 1]`; otherwise it is
/// free. With `no_liquid_asset` the comparison market holds only the formerly
/// illiquid asset and cash.
pub fn merton_value(params: &ModelParams, constrained: bool) -> Result<f64> {
    let k = if constrained {
        compute_kp(params)
    } else {
        compute_kp_unconstrained(params)
    };
    if params.beta <= k {
        return Err(Error::NonFiniteValue {
            beta: params.beta,
            k,
        });
    }
    Ok(((1.0 - params.p) / (params.beta - k)).powf(1.0 - params.p))
}

/// Single-asset Merton value `((1-p)/(beta - p b^2/(2(1-p) sigma^2)))^{1-p}`.
pub fn merton_value_single(b: f64, sigma: f64, beta: f64, p: f64) -> Result<f64> {
    let k = p * b * b / (2.0 * (1.0 - p) * sigma * sigma);
    if beta <= k {
        return Err(Error::NonFiniteValue { beta, k });
    }
    Ok(((1.0 - p) / (beta - k)).powf(1.0 - p))
}

/// Optimal illiquid wealth fraction of the fully liquid comparison problem,
/// `Proj_[0,1](hedged drift / ((1-p) hedged variance))` when constrained.
pub fn merton_illiquid_fraction(params: &ModelParams, constrained: bool) -> f64 {
    let u = params.hedged_drift() / ((1.0 - params.p) * params.hedged_var());
    if constrained {
        u.clamp(0.0, 1.0)
    } else {
        u
    }
}

/// Optimal liquid wealth fraction of the same comparison problem, after the
/// illiquid fraction has been fixed at its optimum.
pub fn merton_liquid_fraction(params: &ModelParams, constrained: bool) -> f64 {
    if params.no_liquid_asset {
        return 0.0;
    }
    let u_i = merton_illiquid_fraction(params, constrained);
    params.b_l / ((1.0 - params.p) * params.sigma_l * params.sigma_l)
        - params.rho * params.sigma_i * u_i / params.sigma_l
}

/// Coefficient `K_0` of the all-liquid (`y = 0`) sub-problem: the unique
/// positive root of
///
/// `(beta + lambda - p b_L^2/(2(1-p) sigma_L^2)) K0 - (1-p) p^{-1/(1-p)} K0^{-p/(1-p)} = lambda * phi0`,
///
/// found by bracketing and bisection to relative tolerance `1e-12`.
pub fn solve_k0(params: &ModelParams, phi0: f64) -> Result<f64> {
    if phi0 < 0.0 {
        return Err(Error::InvalidParams("phi0 must be >= 0".into()));
    }
    let p = params.p;
    let a = params.beta + params.lambda - params.kappa_liquid();
    if a <= 0.0 {
        return Err(Error::NonFiniteValue {
            beta: params.beta + params.lambda,
            k: params.kappa_liquid(),
        });
    }
    let b = (1.0 - p) * p.powf(-1.0 / (1.0 - p));
    let expo = -p / (1.0 - p);
    let rhs = params.lambda * phi0;
    let f = |k0: f64| a * k0 - b * k0.powf(expo) - rhs;

    // f is strictly increasing on (0, inf), from -inf to +inf.
    let mut lo = 1e-12;
    let mut iters = 0;
    while f(lo) > 0.0 {
        lo *= 0.5;
        iters += 1;
        if iters > 2000 {
            return Err(Error::Bracket("no lower bracket for K0".into()));
        }
    }
    let mut hi = ((rhs + b) / a).max(1.0);
    iters = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        iters += 1;
        if iters > 2000 {
            return Err(Error::Bracket("no upper bracket for K0".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo) <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Whether investing in the illiquid asset is ever optimal:
/// `b_I / sigma_I > rho b_L / sigma_L`.
pub fn participates(params: &ModelParams) -> bool {
    if params.no_liquid_asset {
        return params.b_i > 0.0;
    }
    params.b_i / params.sigma_i > params.rho * params.b_l / params.sigma_l
}

#[cfg(test)]
pub(crate) fn benchmark_params(lambda: f64, gamma: f64, rho: f64) -> ModelParams {
    ModelParams {
        b_l: 0.15,
        sigma_l: 1.0,
        b_i: 0.2,
        sigma_i: 1.0,
        rho,
        beta: 0.2,
        p: 0.5,
        lambda,
        gamma,
        no_liquid_asset: false,
    }
}
