//! Gaussian QMLE for GARCH(1,1), GJR-GARCH(1,1), and GARCH-X with
//! nonnegative exogenous variance terms. The optimizer works in a smooth
//! unconstrained parameterization of the stationarity region, so every
//! iterate corresponds to a valid positive variance process.

use serde::{Deserialize, Serialize};

use super::{ParametricError, Result};
use crate::numeric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GarchSpec {
    Plain,
    Gjr,
    /// plain GARCH plus exogenous variance regressors
    X,
}

/// σ²_t = ω + (a + γ·1{ε_{t−1}<0})·ε²_{t−1} + b·σ²_{t−1} + Σ c_j·x_{j,t}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GarchModel {
    pub spec: GarchSpec,
    pub omega: f64,
    /// ARCH coefficient a
    pub arch: f64,
    /// GARCH coefficient b
    pub garch: f64,
    /// GJR asymmetry, zero for the plain model
    pub gamma: f64,
    /// nonnegative exogenous coefficients (original covariate scale)
    pub exog_coefs: Vec<f64>,
    /// sample mean removed before estimation
    pub mean: f64,
    /// initializer for the variance recursion (sample variance)
    pub sigma2_init: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

const PERSISTENCE_MAX: f64 = 0.999999;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// (ω, a, c, b) from the unconstrained vector; `c` is the ARCH coefficient
/// after negative shocks (a + γ).
fn natural_params(theta: &[f64], gjr: bool) -> (f64, f64, f64, f64) {
    let omega = theta[0].exp();
    let persistence = sigmoid(theta[1]) * PERSISTENCE_MAX;
    let garch_share = sigmoid(theta[2]);
    let b = persistence * garch_share;
    let arch_budget = persistence * (1.0 - garch_share);
    if gjr {
        let balance = sigmoid(theta[3]);
        let a = 2.0 * arch_budget * balance;
        let c = 2.0 * arch_budget * (1.0 - balance);
        (omega, a, c, b)
    } else {
        (omega, arch_budget, arch_budget, b)
    }
}

fn mean_nll(
    theta: &[f64],
    eps: &[f64],
    exog: Option<&[Vec<f64>]>,
    sigma2_init: f64,
    gjr: bool,
) -> f64 {
    let (omega, a, c, b) = natural_params(theta, gjr);
    let exog_offset = if gjr { 4 } else { 3 };
    let n = eps.len();
    let mut sigma2 = sigma2_init;
    let mut nll = (sigma2.ln() + eps[0] * eps[0] / sigma2) * 0.5;
    for t in 1..n {
        let prev = eps[t - 1];
        let coef = if prev < 0.0 { c } else { a };
        sigma2 = omega + coef * prev * prev + b * sigma2;
        if let Some(cols) = exog {
            for (j, col) in cols.iter().enumerate() {
                let delta = theta[exog_offset + j];
                sigma2 += delta * delta * col[t];
            }
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return f64::INFINITY;
        }
        nll += (sigma2.ln() + eps[t] * eps[t] / sigma2) * 0.5;
    }
    nll / n as f64
}

/// Fit by Gaussian QMLE. Returns are demeaned internally (zero-mean model);
/// exogenous columns must be aligned so `externals[j][t]` is known one day
/// before the return at t. Exogenous values must be nonnegative.
pub fn fit_garch(
    returns: &[f64],
    spec: GarchSpec,
    externals: Option<&[Vec<f64>]>,
) -> Result<GarchModel> {
    if returns.len() < 100 {
        return Err(ParametricError::InsufficientData(format!(
            "GARCH estimation needs at least 100 observations, got {}",
            returns.len()
        )));
    }
    if spec == GarchSpec::X && externals.map_or(true, |e| e.is_empty()) {
        return Err(ParametricError::InvalidArgument(
            "GARCH-X requires exogenous columns".into(),
        ));
    }
    let exog_raw = if spec == GarchSpec::X { externals } else { None };
    if let Some(cols) = exog_raw {
        for col in cols {
            if col.len() != returns.len() {
                return Err(ParametricError::InvalidArgument(
                    "exogenous column length must match returns".into(),
                ));
            }
            if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(ParametricError::InvalidArgument(
                    "exogenous variance regressors must be finite and nonnegative".into(),
                ));
            }
        }
    }

    let mean = numeric::mean(returns);
    let eps: Vec<f64> = returns.iter().map(|r| r - mean).collect();
    let sigma2_init = numeric::sample_variance(&eps);
    if sigma2_init <= 0.0 || !sigma2_init.is_finite() {
        return Err(ParametricError::EstimationFailure(
            "degenerate likelihood: zero sample variance".into(),
        ));
    }

    // standardize exogenous columns so all coordinates move on a comparable
    // scale during optimization
    let exog_scales: Vec<f64> = exog_raw
        .map(|cols| {
            cols.iter()
                .map(|col| {
                    let s = numeric::mean(&col.iter().map(|v| v.abs()).collect::<Vec<_>>());
                    if s > 0.0 {
                        s / sigma2_init
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    let exog_scaled: Option<Vec<Vec<f64>>> = exog_raw.map(|cols| {
        cols.iter()
            .zip(exog_scales.iter())
            .map(|(col, &s)| col.iter().map(|v| v / s).collect())
            .collect()
    });

    let gjr = spec == GarchSpec::Gjr;
    // variance targeting start: a = 0.05, b = 0.90, γ = 0
    let persistence0 = 0.95;
    let mut theta0 = vec![
        (sigma2_init * (1.0 - persistence0)).ln(),
        logit(persistence0 / PERSISTENCE_MAX),
        logit(0.90 / persistence0),
    ];
    if gjr {
        theta0.push(0.0);
    }
    for _ in 0..exog_scales.len() {
        theta0.push(1e-3);
    }

    let objective = |theta: &[f64]| {
        mean_nll(theta, &eps, exog_scaled.as_deref(), sigma2_init, gjr)
    };
    let start_value = objective(&theta0);
    if !start_value.is_finite() {
        return Err(ParametricError::EstimationFailure(
            "variance-targeting initializer has non-finite likelihood".into(),
        ));
    }
    let result = numeric::bfgs_minimize(&objective, &theta0, 1e-6, 500);
    if !result.converged {
        return Err(ParametricError::EstimationFailure(format!(
            "QMLE did not converge after {} iterations (gradient norm {:.3e}, last mean NLL {:.6})",
            result.iterations, result.gradient_norm, result.value
        )));
    }

    let (omega, a, c, b) = natural_params(&result.x, gjr);
    let exog_offset = if gjr { 4 } else { 3 };
    let exog_coefs: Vec<f64> = exog_scales
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let delta = result.x[exog_offset + j];
            delta * delta / s
        })
        .collect();
    Ok(GarchModel {
        spec,
        omega,
        arch: a,
        garch: b,
        gamma: c - a,
        exog_coefs,
        mean,
        sigma2_init,
        log_likelihood: -result.value * eps.len() as f64,
        converged: true,
        iterations: result.iterations,
    })
}

impl GarchModel {
    /// a + b + γ/2; strictly below one by construction.
    pub fn persistence(&self) -> f64 {
        self.arch + self.garch + 0.5 * self.gamma
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.persistence())
    }

    /// Conditional variance path over a window, starting from the sample
    /// variance of the demeaned window.
    pub fn variance_path(&self, returns: &[f64], externals: Option<&[Vec<f64>]>) -> Vec<f64> {
        let eps: Vec<f64> = returns.iter().map(|r| r - self.mean).collect();
        let mut out = Vec::with_capacity(eps.len());
        let init = if eps.len() >= 2 {
            numeric::sample_variance(&eps).max(1e-18)
        } else {
            self.sigma2_init
        };
        out.push(init);
        for t in 1..eps.len() {
            out.push(self.next_variance(out[t - 1], eps[t - 1], externals.map(|c| {
                c.iter().map(|col| col[t]).collect::<Vec<f64>>()
            }).as_deref()));
        }
        out
    }

    /// One recursion step; `x_next` holds the exogenous values dated with
    /// the forecast day.
    pub fn next_variance(&self, prev_sigma2: f64, prev_return: f64, x_next: Option<&[f64]>) -> f64 {
        let prev_eps = prev_return - self.mean;
        let coef = if prev_eps < 0.0 { self.arch + self.gamma } else { self.arch };
        let mut sigma2 = self.omega + coef * prev_eps * prev_eps + self.garch * prev_sigma2;
        if let Some(xs) = x_next {
            for (c, x) in self.exog_coefs.iter().zip(xs.iter()) {
                sigma2 += c * x;
            }
        }
        sigma2
    }
}

/// Normal-innovation VaR implied by the QMLE fit: Φ⁻¹(α)·σ_{t+1}.
pub fn forecast_var_garch(sigma2_next: f64, alpha: f64) -> f64 {
    numeric::normal_quantile(alpha) * sigma2_next.max(0.0).sqrt()
}
