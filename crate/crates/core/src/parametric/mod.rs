//! Benchmark VaR forecasters: linear quantile regression, CAViaR-SAV,
//! GARCH-family models, historical simulation, and a normal fit, all sharing
//! the check loss and the type-1 empirical quantile convention.

mod caviar;
mod garch;
mod quantile_regression;

pub use caviar::{fit_caviar_sav, forecast_var_sav, sav_filter, SavModel, SavOptSettings};
pub use garch::{fit_garch, forecast_var_garch, GarchModel, GarchSpec};
pub use quantile_regression::{fit_quantile_regression, forecast_var_qr, QrModel};

use thiserror::Error;

use crate::numeric;

#[derive(Debug, Error)]
pub enum ParametricError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular design: dependent columns {0:?}")]
    SingularDesign(Vec<String>),
    #[error("estimation failure: {0}")]
    EstimationFailure(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, ParametricError>;

/// Check function ρ_α(u) = u·(α − 1{u ≤ 0}).
pub fn check_loss(u: f64, alpha: f64) -> f64 {
    u * (alpha - f64::from(u <= 0.0))
}

/// Historical simulation: the type-1 empirical α-quantile over the window.
pub fn hist_var(window: &[f64], alpha: f64) -> Result<f64> {
    if window.len() < 20 {
        return Err(ParametricError::InsufficientData(format!(
            "historical window needs at least 20 observations, got {}",
            window.len()
        )));
    }
    Ok(numeric::empirical_quantile_type1(window, alpha))
}

/// Fitted-normal VaR: μ̂ + σ̂·Φ⁻¹(α) with the sample mean and SD.
pub fn normfit_var(window: &[f64], alpha: f64) -> Result<f64> {
    if window.len() < 2 {
        return Err(ParametricError::InsufficientData(
            "normal fit needs at least 2 observations".into(),
        ));
    }
    let sd = numeric::sample_std(window);
    if sd <= 0.0 {
        return Err(ParametricError::EstimationFailure(
            "window has zero variance".into(),
        ));
    }
    Ok(numeric::mean(window) + sd * numeric::normal_quantile(alpha))
}
