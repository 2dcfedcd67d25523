//! Coverage backtests for a VaR forecast series: the hit sequence, actual
//! over expected exceedances, and the Kupiec, Christoffersen, and dynamic
//! quantile tests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("length mismatch: returns {returns} vs forecasts {forecasts}")]
    LengthMismatch { returns: usize, forecasts: usize },
}

pub type Result<T> = std::result::Result<T, BacktestError>;

/// Binary exceedance sequence g_t = 1{r_t < VaR_t}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HitSeries {
    pub hits: Vec<u8>,
    pub alpha: f64,
}

impl HitSeries {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.hits.iter().map(|&h| h as usize).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestResult {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
    /// columns dropped from the DQ regression because they were degenerate
    pub dropped_columns: Vec<String>,
}

/// Hits use the strict inequality r_t < VaR_t; ties count as no hit.
pub fn hit_sequence(returns: &[f64], forecasts: &[f64], alpha: f64) -> Result<HitSeries> {
    if returns.len() != forecasts.len() {
        return Err(BacktestError::LengthMismatch {
            returns: returns.len(),
            forecasts: forecasts.len(),
        });
    }
    Ok(HitSeries {
        hits: returns.iter().zip(forecasts.iter()).map(|(r, v)| u8::from(r < v)).collect(),
        alpha,
    })
}

/// Actual over expected exceedances: Σg / (αT).
pub fn aoe(hits: &HitSeries) -> f64 {
    debug_assert!(!hits.is_empty());
    hits.count() as f64 / (hits.alpha * hits.len() as f64)
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn kupiec_statistic(t: f64, x: f64, alpha: f64) -> f64 {
    // −2 ln[(1−α)^{T−x} α^x] + 2 ln[(1−x/T)^{T−x} (x/T)^x], 0·ln0 = 0
    let log_null = (t - x) * (1.0 - alpha).ln() + x * alpha.ln();
    let log_alt = if x == 0.0 || x == t {
        0.0
    } else {
        (t - x) * (1.0 - x / t).ln() + x * (x / t).ln()
    };
    (2.0 * (log_alt - log_null)).max(0.0)
}

/// Unconditional coverage likelihood ratio, χ²₁.
pub fn kupiec_test(hits: &HitSeries) -> Result<BacktestResult> {
    if hits.is_empty() {
        return Err(BacktestError::InvalidArgument("empty hit series".into()));
    }
    let statistic = kupiec_statistic(hits.len() as f64, hits.count() as f64, hits.alpha);
    Ok(BacktestResult {
        test_name: "kupiec".into(),
        statistic,
        p_value: numeric::chi_squared_upper_tail(statistic, 1),
        dof: 1,
        dropped_columns: Vec::new(),
    })
}

/// Conditional coverage: LR_cc = LR_uc + LR_ind with the first-order Markov
/// independence component, χ²₂.
pub fn christoffersen_test(hits: &HitSeries) -> Result<BacktestResult> {
    if hits.len() < 2 {
        return Err(BacktestError::InvalidArgument(
            "Christoffersen test needs at least 2 observations".into(),
        ));
    }
    let (mut n00, mut n01, mut n10, mut n11) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for pair in hits.hits.windows(2) {
        match (pair[0], pair[1]) {
            (0, 0) => n00 += 1.0,
            (0, 1) => n01 += 1.0,
            (1, 0) => n10 += 1.0,
            (1, 1) => n11 += 1.0,
            _ => unreachable!(),
        }
    }
    let ones = n01 + n11;
    let zeros = n00 + n10;
    // log-likelihood of the pooled Bernoulli vs the Markov chain
    let log_pooled = xlnx(zeros) + xlnx(ones) - xlnx(zeros + ones);
    let log_markov = xlnx(n00) + xlnx(n01) - xlnx(n00 + n01) + xlnx(n10) + xlnx(n11)
        - xlnx(n10 + n11);
    let lr_ind = (2.0 * (log_markov - log_pooled)).max(0.0);
    let lr_uc = kupiec_statistic(hits.len() as f64, hits.count() as f64, hits.alpha);
    let statistic = lr_uc + lr_ind;
    Ok(BacktestResult {
        test_name: "christoffersen".into(),
        statistic,
        p_value: numeric::chi_squared_upper_tail(statistic, 2),
        dof: 2,
        dropped_columns: Vec::new(),
    })
}

/// Dynamic quantile test: regress (g_t − α) on a constant, four lagged
/// hits, the VaR forecast, and the squared lagged return; the Wald form
/// b'(X'X)b / (α(1−α)) is χ² with one degree of freedom per retained
/// regressor. Identically-zero columns are dropped and reported.
pub fn dq_test(
    hits: &HitSeries,
    forecasts: &[f64],
    returns: &[f64],
    lags: usize,
) -> Result<BacktestResult> {
    let t_len = hits.len();
    if forecasts.len() != t_len || returns.len() != t_len {
        return Err(BacktestError::LengthMismatch {
            returns: returns.len(),
            forecasts: forecasts.len(),
        });
    }
    if t_len <= lags + 10 {
        return Err(BacktestError::InvalidArgument(format!(
            "DQ test needs more than {} observations, got {t_len}",
            lags + 10
        )));
    }
    let alpha = hits.alpha;
    let start = lags.max(1);
    let rows = t_len - start;
    let mut names: Vec<String> = vec!["const".into()];
    for k in 1..=lags {
        names.push(format!("hit_lag{k}"));
    }
    names.push("var_forecast".into());
    names.push("sq_lag_return".into());

    let mut design = vec![vec![0.0f64; names.len()]; rows];
    let mut y = vec![0.0f64; rows];
    for (row, t) in (start..t_len).enumerate() {
        design[row][0] = 1.0;
        for k in 1..=lags {
            design[row][k] = hits.hits[t - k] as f64;
        }
        design[row][lags + 1] = forecasts[t];
        design[row][lags + 2] = returns[t - 1] * returns[t - 1];
        y[row] = hits.hits[t] as f64 - alpha;
    }

    // drop identically-zero columns (common at small α: no lagged hits)
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..names.len() {
        if design.iter().any(|r| r[j] != 0.0) {
            keep.push(j);
        } else {
            dropped.push(names[j].clone());
        }
    }
    let reduced: Vec<Vec<f64>> =
        design.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
    let q = keep.len();
    let mut xtx = vec![vec![0.0f64; q]; q];
    let mut xty = vec![0.0f64; q];
    for (row, &yi) in reduced.iter().zip(y.iter()) {
        for i in 0..q {
            xty[i] += row[i] * yi;
            for j in i..q {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..q {
        for j in 0..i {
            xtx[i][j] = xtx[j][i];
        }
    }
    let beta = match numeric::solve_spd(&xtx, &xty)
        .or_else(|| numeric::solve_general(&xtx, &xty, 1e-12))
    {
        Some(b) => b,
        None => {
            return Err(BacktestError::InvalidArgument(
                "singular design in DQ regression".into(),
            ))
        }
    };
    // b'(X'X)b = b'(X'y) at the OLS solution
    let statistic = beta.iter().zip(xty.iter()).map(|(b, v)| b * v).sum::<f64>()
        / (alpha * (1.0 - alpha));
    let statistic = statistic.max(0.0);
    Ok(BacktestResult {
        test_name: "dq".into(),
        statistic,
        p_value: numeric::chi_squared_upper_tail(statistic, q),
        dof: q,
        dropped_columns: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bern_hits(alpha: f64, t: usize, seed: u64) -> HitSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HitSeries {
            hits: (0..t).map(|_| u8::from(rng.random::<f64>() < alpha)).collect(),
            alpha,
        }
    }

    #[test]
    fn hit_sequence_boundaries() {
        let returns = vec![0.01, 0.02, -0.01];
        let low = vec![-1.0; 3];
        let high = vec![1.0; 3];
        assert_eq!(hit_sequence(&returns, &low, 0.05).unwrap().count(), 0);
        assert_eq!(hit_sequence(&returns, &high, 0.05).unwrap().count(), 3);
        // ties are not hits
        let tie = hit_sequence(&[0.0], &[0.0], 0.05).unwrap();
        assert_eq!(tie.count(), 0);
    }

    #[test]
    fn hit_sequence_mixed_fixture() {
        let returns = vec![-0.05, 0.01, -0.02, 0.00, -0.10];
        let forecasts = vec![-0.03, -0.03, -0.03, -0.03, -0.03];
        let hits = hit_sequence(&returns, &forecasts, 0.05).unwrap();
        assert_eq!(hits.hits, vec![1, 0, 0, 0, 1]);
    }

    #[test]
    fn aoe_arithmetic() {
        let hits = HitSeries { hits: vec![1; 52].into_iter().chain(vec![0; 948]).collect(), alpha: 0.05 };
        assert_relative_eq!(aoe(&hits), 1.04, epsilon = 1e-12);
        let none = HitSeries { hits: vec![0; 100], alpha: 0.05 };
        assert_eq!(aoe(&none), 0.0);
    }

    #[test]
    fn kupiec_exact_coverage_is_zero() {
        let hits = HitSeries { hits: vec![1; 5].into_iter().chain(vec![0; 95]).collect(), alpha: 0.05 };
        let res = kupiec_test(&hits).unwrap();
        assert_relative_eq!(res.statistic, 0.0, epsilon = 1e-12);
        assert_relative_eq!(res.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn kupiec_closed_forms() {
        // x = 0, T = 100: LR = −200·ln(0.95)
        let hits = HitSeries { hits: vec![0; 100], alpha: 0.05 };
        let res = kupiec_test(&hits).unwrap();
        assert_relative_eq!(res.statistic, -200.0 * 0.95f64.ln(), epsilon = 1e-10);
        assert_relative_eq!(res.statistic, 10.2587, epsilon = 1e-3);

        // x = 10, T = 100 against a direct evaluation of the LR formula
        let hits = HitSeries { hits: vec![1; 10].into_iter().chain(vec![0; 90]).collect(), alpha: 0.05 };
        let res = kupiec_test(&hits).unwrap();
        let direct = -2.0 * (90.0 * 0.95f64.ln() + 10.0 * 0.05f64.ln())
            + 2.0 * (90.0 * 0.9f64.ln() + 10.0 * 0.1f64.ln());
        assert_relative_eq!(res.statistic, direct, epsilon = 1e-10);
    }

    #[test]
    fn kupiec_is_permutation_invariant() {
        let mut hits = bern_hits(0.05, 400, 8);
        let before = kupiec_test(&hits).unwrap().statistic;
        hits.hits.reverse();
        hits.hits.swap(3, 200);
        let after = kupiec_test(&hits).unwrap().statistic;
        assert_eq!(before, after);
    }

    #[test]
    fn christoffersen_flags_alternating_hits() {
        let hits = HitSeries {
            hits: (0..200).map(|t| (t % 2) as u8).collect(),
            alpha: 0.5,
        };
        let res = christoffersen_test(&hits).unwrap();
        // closed-form oracle on the alternating pattern: n01 = 100,
        // n10 = 99, the Markov log-likelihood is exactly 0, LR_uc = 0 at
        // α = 0.5 with 100 hits in 200
        let pooled = 99.0 * 99.0f64.ln() + 100.0 * 100.0f64.ln() - 199.0 * 199.0f64.ln();
        assert_relative_eq!(res.statistic, -2.0 * pooled, epsilon = 1e-8);
        assert!(res.p_value < 1e-10);
    }

    #[test]
    fn christoffersen_all_zero_reduces_to_kupiec() {
        let hits = HitSeries { hits: vec![0; 150], alpha: 0.05 };
        let cc = christoffersen_test(&hits).unwrap();
        let uc = kupiec_test(&hits).unwrap();
        assert_relative_eq!(cc.statistic, uc.statistic, epsilon = 1e-12);
    }

    #[test]
    fn christoffersen_penalizes_clustering() {
        // same hit count, clustered vs spread out; the clustered series must
        // have the larger independence component
        let mut clustered = vec![0u8; 200];
        for h in clustered.iter_mut().take(10) {
            *h = 1;
        }
        let mut spread = vec![0u8; 200];
        for i in 0..10 {
            spread[i * 20] = 1;
        }
        let c = christoffersen_test(&HitSeries { hits: clustered, alpha: 0.05 }).unwrap();
        let s = christoffersen_test(&HitSeries { hits: spread, alpha: 0.05 }).unwrap();
        assert!(c.statistic > s.statistic);
        assert!(c.p_value < s.p_value);
    }

    #[test]
    fn dq_size_close_to_nominal() {
        let mut rejections = 0;
        let reps = 200;
        for seed in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
            let t = 500;
            let hits = HitSeries {
                hits: (0..t).map(|_| u8::from(rng.random::<f64>() < 0.05)).collect(),
                alpha: 0.05,
            };
            let forecasts: Vec<f64> = (0..t).map(|_| -0.03 + 0.01 * rng.random::<f64>()).collect();
            let returns: Vec<f64> = (0..t).map(|_| 0.04 * (rng.random::<f64>() - 0.5)).collect();
            let res = dq_test(&hits, &forecasts, &returns, 4).unwrap();
            if res.p_value < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / reps as f64;
        assert!((0.01..=0.10).contains(&rate), "DQ size {rate}");
    }

    #[test]
    fn dq_rejects_clustered_hits() {
        let t = 300;
        let mut hits = vec![0u8; t];
        for h in hits.iter_mut().skip(100).take(15) {
            *h = 1;
        }
        let hits = HitSeries { hits, alpha: 0.05 };
        let forecasts = vec![-0.03; t];
        let returns: Vec<f64> = (0..t).map(|i| 0.01 * ((i * 7 % 13) as f64 - 6.0)).collect();
        let res = dq_test(&hits, &forecasts, &returns, 4).unwrap();
        assert!(res.p_value < 1e-4, "clustered hits p = {}", res.p_value);
    }

    #[test]
    fn dq_drops_zero_columns_for_hitless_series() {
        let t = 200;
        let hits = HitSeries { hits: vec![0; t], alpha: 0.05 };
        let forecasts: Vec<f64> = (0..t).map(|i| -0.02 - 0.0001 * (i % 9) as f64).collect();
        let returns: Vec<f64> = (0..t).map(|i| 0.01 * ((i % 11) as f64 - 5.0)).collect();
        let res = dq_test(&hits, &forecasts, &returns, 4).unwrap();
        assert_eq!(res.dropped_columns.len(), 4);
        assert_eq!(res.dof, 3);
        assert!(res.statistic > 0.0);
    }

    #[test]
    fn statistics_nonnegative_p_in_unit_interval() {
        for seed in 0..30 {
            let hits = bern_hits(0.05, 300, seed);
            let k = kupiec_test(&hits).unwrap();
            let c = christoffersen_test(&hits).unwrap();
            for res in [k, c] {
                assert!(res.statistic >= 0.0);
                assert!((0.0..=1.0).contains(&res.p_value));
            }
        }
    }
}
