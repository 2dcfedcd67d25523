//! Conditional predictive ability: a Wald test on instrumented check-loss
//! differences, the fitted loss-difference series used for the performance
//! plots, and the share of dates on which the first model is better.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric;

#[derive(Debug, Error)]
pub enum CpaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, CpaError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CpaResult {
    pub wald: f64,
    pub p_value: f64,
    /// instrument count (2: constant plus lagged loss difference)
    pub q: usize,
    /// OLS of ΔL_t on the instruments
    pub beta: Vec<f64>,
    /// in-sample fitted loss-difference series h_{t−1}·β̂, aligned with t = 2..T
    pub fitted: Vec<f64>,
    /// share of dates with ΔL_t < 0 (ties excluded from the numerator)
    pub performance_share: f64,
    /// set when the instrument covariance was singular (e.g. identical
    /// forecasts); then p_value = 1 and the Wald statistic is 0
    pub degenerate: bool,
}

fn share_below_zero(diff: &[f64]) -> f64 {
    diff.iter().filter(|&&d| d < 0.0).count() as f64 / diff.len() as f64
}

fn cpa_internal(diff: &[f64], with_lag_instrument: bool) -> CpaResult {
    let t_len = diff.len();
    let n = t_len - 1;
    let q = if with_lag_instrument { 2 } else { 1 };

    // z_t = h_{t−1}·ΔL_t for t = 2..T, with h_{t−1} = (1, ΔL_{t−1})
    let mut z_mean = vec![0.0f64; q];
    let mut zs: Vec<[f64; 2]> = Vec::with_capacity(n);
    for t in 1..t_len {
        let h = [1.0, diff[t - 1]];
        let z = [diff[t], if q == 2 { h[1] * diff[t] } else { 0.0 }];
        for i in 0..q {
            z_mean[i] += z[i];
        }
        zs.push(z);
    }
    for m in &mut z_mean {
        *m /= n as f64;
    }
    let mut omega = vec![vec![0.0f64; q]; q];
    for z in &zs {
        for i in 0..q {
            for j in 0..q {
                omega[i][j] += z[i] * z[j] / n as f64;
            }
        }
    }
    let scale = (0..q).map(|i| omega[i][i]).fold(0.0f64, f64::max);
    let solved = if scale > 0.0 {
        numeric::solve_general(&omega, &z_mean, 1e-12)
    } else {
        None
    };

    let (wald, p_value, degenerate) = match solved {
        Some(x) => {
            let w = n as f64 * z_mean.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
            let w = w.max(0.0);
            (w, numeric::chi_squared_upper_tail(w, q), false)
        }
        None => (0.0, 1.0, true),
    };

    // OLS of ΔL_t on the instruments for the predicted loss-difference series
    let (beta, fitted) = if q == 2 {
        let mut xtx = [[0.0f64; 2]; 2];
        let mut xty = [0.0f64; 2];
        for t in 1..t_len {
            let h = [1.0, diff[t - 1]];
            for i in 0..2 {
                xty[i] += h[i] * diff[t];
                for j in 0..2 {
                    xtx[i][j] += h[i] * h[j];
                }
            }
        }
        let rows: Vec<Vec<f64>> = xtx.iter().map(|r| r.to_vec()).collect();
        match numeric::solve_general(&rows, &xty, 1e-12) {
            Some(b) => {
                let fitted = (1..t_len).map(|t| b[0] + b[1] * diff[t - 1]).collect();
                (b, fitted)
            }
            None => {
                let mean = numeric::mean(&diff[1..]);
                (vec![mean, 0.0], vec![mean; n])
            }
        }
    } else {
        let mean = numeric::mean(&diff[1..]);
        (vec![mean], vec![mean; n])
    };

    CpaResult {
        wald,
        p_value,
        q,
        beta,
        fitted,
        performance_share: share_below_zero(diff),
        degenerate,
    }
}

/// Giacomini–White test of equal conditional predictive ability on two
/// check-loss series from the same dates. Model 1 is the candidate: a
/// performance share above one half means it had the smaller loss more
/// often.
pub fn cpa_test(loss1: &[f64], loss2: &[f64]) -> Result<CpaResult> {
    if loss1.len() != loss2.len() {
        return Err(CpaError::InvalidArgument(format!(
            "loss series lengths differ: {} vs {}",
            loss1.len(),
            loss2.len()
        )));
    }
    if loss1.len() < 30 {
        return Err(CpaError::InvalidArgument(format!(
            "CPA test needs at least 30 observations, got {}",
            loss1.len()
        )));
    }
    let diff: Vec<f64> = loss1.iter().zip(loss2.iter()).map(|(a, b)| a - b).collect();
    Ok(cpa_internal(&diff, true))
}

/// Diagnostic variant with the constant instrument only (q = 1); the Wald
/// statistic reduces to a squared t-statistic on the mean loss difference.
pub fn cpa_test_unconditional(loss1: &[f64], loss2: &[f64]) -> Result<CpaResult> {
    if loss1.len() != loss2.len() || loss1.len() < 30 {
        return Err(CpaError::InvalidArgument("need equal series of length ≥ 30".into()));
    }
    let diff: Vec<f64> = loss1.iter().zip(loss2.iter()).map(|(a, b)| a - b).collect();
    Ok(cpa_internal(&diff, false))
}

/// Trailing mean over `window` observations; the first window−1 entries are
/// NaN.
pub fn rolling_mean(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(CpaError::InvalidArgument("window must be positive".into()));
    }
    if window > series.len() {
        return Err(CpaError::InvalidArgument(format!(
            "window {window} exceeds series length {}",
            series.len()
        )));
    }
    let mut out = vec![f64::NAN; series.len()];
    let mut acc = 0.0;
    for (t, &v) in series.iter().enumerate() {
        acc += v;
        if t + 1 > window {
            acc -= series[t - window];
        }
        if t + 1 >= window {
            out[t] = acc / window as f64;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_losses_are_degenerate() {
        let loss = vec![0.3; 60];
        let res = cpa_test(&loss, &loss).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.p_value, 1.0);
        assert_eq!(res.performance_share, 0.0);
    }

    #[test]
    fn size_close_to_nominal_under_null() {
        let mut rejections = 0;
        let reps = 200;
        for seed in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(40_000 + seed);
            let loss1: Vec<f64> = (0..300).map(|_| 0.5 + 0.1 * (rng.random::<f64>() - 0.5)).collect();
            let loss2: Vec<f64> = (0..300).map(|_| 0.5 + 0.1 * (rng.random::<f64>() - 0.5)).collect();
            if cpa_test(&loss1, &loss2).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / reps as f64;
        assert!((0.02..=0.10).contains(&rate), "CPA size {rate}");
    }

    #[test]
    fn dominated_model_is_detected() {
        // ΔL ≡ −0.05 plus independent small noise on each side
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let loss1: Vec<f64> = (0..200).map(|_| 0.45 + 0.001 * rng.random::<f64>()).collect();
        let loss2: Vec<f64> = (0..200).map(|_| 0.5 + 0.001 * rng.random::<f64>()).collect();
        let res = cpa_test(&loss1, &loss2).unwrap();
        assert!(res.performance_share > 0.99);
        assert!(res.p_value < 1e-6);
    }

    #[test]
    fn exactly_constant_difference_is_degenerate_but_dominant() {
        let loss2 = vec![0.5; 100];
        let loss1: Vec<f64> = loss2.iter().map(|l| l - 0.05).collect();
        let res = cpa_test(&loss1, &loss2).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.performance_share, 1.0);
    }

    #[test]
    fn wald_invariant_to_model_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let loss1: Vec<f64> = (0..150).map(|_| rng.random::<f64>()).collect();
        let loss2: Vec<f64> = (0..150).map(|_| rng.random::<f64>()).collect();
        let a = cpa_test(&loss1, &loss2).unwrap();
        let b = cpa_test(&loss2, &loss1).unwrap();
        assert_relative_eq!(a.wald, b.wald, max_relative = 1e-9);
        assert_relative_eq!(a.p_value, b.p_value, max_relative = 1e-9);
        assert_relative_eq!(a.beta[0], -b.beta[0], max_relative = 1e-9);
        let ties = loss1.iter().zip(loss2.iter()).filter(|(x, y)| x == y).count() as f64;
        assert_relative_eq!(
            a.performance_share,
            1.0 - b.performance_share - ties / 150.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn scale_invariance_of_p_and_share() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let loss1: Vec<f64> = (0..120).map(|_| rng.random::<f64>()).collect();
        let loss2: Vec<f64> = (0..120).map(|_| rng.random::<f64>()).collect();
        let a = cpa_test(&loss1, &loss2).unwrap();
        let l1: Vec<f64> = loss1.iter().map(|v| 40.0 * v).collect();
        let l2: Vec<f64> = loss2.iter().map(|v| 40.0 * v).collect();
        let b = cpa_test(&l1, &l2).unwrap();
        assert_relative_eq!(a.p_value, b.p_value, max_relative = 1e-9);
        assert_eq!(a.performance_share, b.performance_share);
    }

    #[test]
    fn unconditional_mode_is_squared_t_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let loss1: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let loss2: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let res = cpa_test_unconditional(&loss1, &loss2).unwrap();
        let diff: Vec<f64> = loss1.iter().zip(loss2.iter()).map(|(a, b)| a - b).collect();
        let d = &diff[1..];
        let n = d.len() as f64;
        let mean = numeric::mean(d);
        let second_moment = d.iter().map(|v| v * v).sum::<f64>() / n;
        let t_sq = n * mean * mean / second_moment;
        assert_relative_eq!(res.wald, t_sq, max_relative = 1e-10);
    }

    #[test]
    fn rolling_mean_examples() {
        assert_eq!(rolling_mean(&[3.0; 5], 3).unwrap()[2..], [3.0, 3.0, 3.0]);
        let out = rolling_mean(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert!(out[0].is_nan());
        assert_eq!(&out[1..], &[1.5, 2.5, 3.5]);
        assert_eq!(rolling_mean(&[1.0, 2.0], 1).unwrap(), vec![1.0, 2.0]);
        assert!(rolling_mean(&[1.0], 2).is_err());
    }
}
