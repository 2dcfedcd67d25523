//! Linear quantile regression by smoothed iteratively-reweighted least
//! squares with an ε-continuation schedule, plus a vertex polish step: the
//! check-loss minimum interpolates p+1 observations, so the near-active set
//! of the IRLS solution is re-solved exactly and kept when it improves the
//! objective.

use serde::{Deserialize, Serialize};

use super::{check_loss, ParametricError, Result};
use crate::data::FeatureMatrix;
use crate::numeric;

/// Linear quantile model over [intercept, covariates...].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QrModel {
    pub alpha: f64,
    /// coefficient on the constant term
    pub intercept: f64,
    /// slope per covariate, aligned with `names`
    pub slopes: Vec<f64>,
    pub names: Vec<String>,
    /// attained total check loss
    pub objective: f64,
}

fn total_check_loss(design: &[Vec<f64>], target: &[f64], beta: &[f64], alpha: f64) -> f64 {
    design
        .iter()
        .zip(target.iter())
        .map(|(row, &y)| {
            let fitted: f64 = row.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
            check_loss(y - fitted, alpha)
        })
        .sum()
}

fn weighted_normal_solve(
    design: &[Vec<f64>],
    target: &[f64],
    weights: &[f64],
    alpha: f64,
    ridge: f64,
) -> Option<Vec<f64>> {
    let p = design[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    let shift = 2.0 * alpha - 1.0;
    for ((row, &y), &w) in design.iter().zip(target.iter()).zip(weights.iter()) {
        for i in 0..p {
            rhs[i] += w * y * row[i] + shift * row[i];
            for j in i..p {
                xtx[i][j] += w * row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        xtx[i][i] += ridge;
        for j in 0..i {
            xtx[i][j] = xtx[j][i];
        }
    }
    numeric::solve_spd(&xtx, &rhs)
}

/// Exact interpolation through the rows indexed by `support`; `None` when
/// the square system is singular.
fn vertex_solve(design: &[Vec<f64>], target: &[f64], support: &[usize]) -> Option<Vec<f64>> {
    let p = design[0].len();
    debug_assert_eq!(support.len(), p);
    let a: Vec<Vec<f64>> = support.iter().map(|&i| design[i].clone()).collect();
    let b: Vec<f64> = support.iter().map(|&i| target[i]).collect();
    numeric::solve_general(&a, &b, 1e-12)
}

fn detect_dependent_columns(design: &[Vec<f64>], names: &[String]) -> Option<Vec<String>> {
    // Gram-matrix pivoted elimination; a column whose pivot collapses is
    // linearly dependent on the earlier ones.
    let p = design[0].len();
    let mut gram = vec![vec![0.0; p]; p];
    for row in design {
        for i in 0..p {
            for j in 0..p {
                gram[i][j] += row[i] * row[j];
            }
        }
    }
    let scale = (0..p).map(|i| gram[i][i]).fold(0.0f64, f64::max).max(1e-300);
    let mut dependent = Vec::new();
    for col in 0..p {
        if gram[col][col] <= 1e-10 * scale {
            dependent.push(names[col].clone());
            continue;
        }
        let pivot = gram[col][col];
        for r in col + 1..p {
            let f = gram[r][col] / pivot;
            for c in 0..p {
                gram[r][c] -= f * gram[col][c];
            }
        }
    }
    if dependent.is_empty() {
        None
    } else {
        Some(dependent)
    }
}

/// Fit the α-quantile regression of the matrix target on an intercept plus
/// all covariate columns (the lagged return is one of them).
pub fn fit_quantile_regression(matrix: &FeatureMatrix, alpha: f64) -> Result<QrModel> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ParametricError::InvalidArgument(format!("alpha {alpha} outside (0,1)")));
    }
    let n = matrix.n_rows();
    let p = matrix.n_cols() + 1;
    if n <= matrix.n_cols() + 2 {
        return Err(ParametricError::InsufficientData(format!(
            "quantile regression needs more than {} rows, got {n}",
            matrix.n_cols() + 2
        )));
    }

    let design: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let mut row = Vec::with_capacity(p);
            row.push(1.0);
            row.extend(matrix.row(t));
            row
        })
        .collect();
    let mut names = vec!["intercept".to_string()];
    names.extend(matrix.names.iter().cloned());
    if let Some(cols) = detect_dependent_columns(&design, &names) {
        return Err(ParametricError::SingularDesign(cols));
    }
    let target = &matrix.target;

    // scale for the smoothing schedule
    let spread = {
        let med = numeric::median(target);
        let mad = numeric::mean(&target.iter().map(|y| (y - med).abs()).collect::<Vec<_>>());
        mad.max(1e-8)
    };

    // start from the least-squares fit
    let mut beta = weighted_normal_solve(&design, target, &vec![1.0; n], 0.5, 1e-12)
        .ok_or_else(|| ParametricError::EstimationFailure("normal equations failed".into()))?;

    let mut eps = 1e-2 * spread;
    let eps_floor = 1e-12 * spread;
    let mut weights = vec![0.0; n];
    while eps >= eps_floor {
        for _ in 0..200 {
            for (t, row) in design.iter().enumerate() {
                let fitted: f64 = row.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
                weights[t] = 1.0 / (eps + (target[t] - fitted).abs());
            }
            let next = match weighted_normal_solve(&design, target, &weights, alpha, 1e-12) {
                Some(b) => b,
                None => break,
            };
            let delta = next
                .iter()
                .zip(beta.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            beta = next;
            if delta < 1e-11 * spread.max(1.0) {
                break;
            }
        }
        eps *= 0.1;
    }
    let mut objective = total_check_loss(&design, target, &beta, alpha);

    // vertex polish: interpolate the p rows with the smallest residuals
    let mut residual_order: Vec<(f64, usize)> = design
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let fitted: f64 = row.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
            ((target[t] - fitted).abs(), t)
        })
        .collect();
    residual_order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let support: Vec<usize> = residual_order.iter().take(p).map(|&(_, t)| t).collect();
    if support.len() == p {
        if let Some(candidate) = vertex_solve(&design, target, &support) {
            let candidate_obj = total_check_loss(&design, target, &candidate, alpha);
            if candidate_obj < objective {
                beta = candidate;
                objective = candidate_obj;
            }
        }
    }

    Ok(QrModel {
        alpha,
        intercept: beta[0],
        slopes: beta[1..].to_vec(),
        names: matrix.names.clone(),
        objective,
    })
}

/// Evaluate the fitted linear quantile at a covariate vector.
pub fn forecast_var_qr(model: &QrModel, covariates: &[f64]) -> Result<f64> {
    if covariates.len() != model.slopes.len() {
        return Err(ParametricError::InvalidArgument(format!(
            "covariate dimension {} does not match model dimension {}",
            covariates.len(),
            model.slopes.len()
        )));
    }
    Ok(model.intercept
        + model.slopes.iter().zip(covariates.iter()).map(|(b, x)| b * x).sum::<f64>())
}
