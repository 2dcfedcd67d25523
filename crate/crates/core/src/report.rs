//! Plot-ready CSV emitters for every pipeline artifact. One row schema per
//! file; all numeric formatting is left to the CSV writer.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::cpa::{self, CpaResult};
use crate::engine::{DqMedianRow, EvalReport, ForecastSeries};
use crate::sim::{CovariateStudyRow, McOutput};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("cpa: {0}")]
    Cpa(#[from] cpa::CpaError),
}

pub type Result<T> = std::result::Result<T, ReportError>;

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ForecastRow<'a> {
    date: chrono::NaiveDate,
    asset: &'a str,
    model: &'a str,
    alpha: f64,
    window: usize,
    var_forecast: f64,
    realized: f64,
    hit: u8,
    failure: u8,
}

pub fn write_forecasts(path: &Path, series: &ForecastSeries) -> Result<()> {
    let rows: Vec<ForecastRow> = (0..series.len())
        .map(|t| ForecastRow {
            date: series.dates[t],
            asset: &series.asset_id,
            model: &series.model,
            alpha: series.alpha,
            window: series.window,
            var_forecast: series.forecasts[t],
            realized: series.realized[t],
            hit: u8::from(series.realized[t] < series.forecasts[t]),
            failure: u8::from(series.failures[t]),
        })
        .collect();
    write_rows(path, &rows)
}

#[derive(Serialize)]
struct BacktestRow<'a> {
    asset: &'a str,
    period: &'a str,
    model: &'a str,
    alpha: f64,
    window: usize,
    test: &'a str,
    statistic: f64,
    dof: usize,
    p_value: f64,
    n_obs: usize,
    n_failures: usize,
    aoe: f64,
    dropped_columns: String,
}

/// One row per (report, test): kupiec, christoffersen, dq.
pub fn write_backtests(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut rows = Vec::with_capacity(reports.len() * 3);
    for r in reports {
        for test in [&r.kupiec, &r.christoffersen, &r.dq] {
            rows.push(BacktestRow {
                asset: &r.asset_id,
                period: &r.period,
                model: &r.model,
                alpha: r.alpha,
                window: r.window,
                test: &test.test_name,
                statistic: test.statistic,
                dof: test.dof,
                p_value: test.p_value,
                n_obs: r.n_obs,
                n_failures: r.n_failures,
                aoe: r.aoe,
                dropped_columns: test.dropped_columns.join("|"),
            });
        }
    }
    write_rows(path, &rows)
}

pub fn write_dq_medians(path: &Path, rows: &[DqMedianRow]) -> Result<()> {
    write_rows(path, rows)
}

#[derive(Serialize)]
pub struct CpaSummaryRow {
    pub asset: String,
    pub period: String,
    pub model1: String,
    pub model2: String,
    pub alpha: f64,
    pub wald: f64,
    pub p_value: f64,
    pub performance_share: f64,
    pub degenerate: u8,
    /// stars per the 10/5/1% significance convention
    pub significance: String,
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

pub fn cpa_summary_row(
    asset: &str,
    period: &str,
    model1: &str,
    model2: &str,
    alpha: f64,
    result: &CpaResult,
) -> CpaSummaryRow {
    CpaSummaryRow {
        asset: asset.to_string(),
        period: period.to_string(),
        model1: model1.to_string(),
        model2: model2.to_string(),
        alpha,
        wald: result.wald,
        p_value: result.p_value,
        performance_share: result.performance_share,
        degenerate: u8::from(result.degenerate),
        significance: significance_stars(result.p_value).to_string(),
    }
}

pub fn write_cpa_summary(path: &Path, rows: &[CpaSummaryRow]) -> Result<()> {
    write_rows(path, rows)
}

#[derive(Serialize)]
struct LossSeriesRow {
    date: chrono::NaiveDate,
    loss_diff: f64,
    fitted_loss_diff: f64,
    rolling_short: f64,
    rolling_long: f64,
}

/// Per-pair loss-difference series: ΔL_t, the fitted series h_{t−1}β̂, and
/// trailing means at the two requested windows (30/180 by default).
/// The series starts at the second forecast date (the first has no lagged
/// instrument).
pub fn write_loss_series(
    path: &Path,
    dates: &[chrono::NaiveDate],
    loss1: &[f64],
    loss2: &[f64],
    fitted: &[f64],
    short_window: usize,
    long_window: usize,
) -> Result<()> {
    let diff: Vec<f64> = loss1.iter().zip(loss2.iter()).map(|(a, b)| a - b).collect();
    let aligned = &diff[1..];
    let short = cpa::rolling_mean(aligned, short_window.min(aligned.len()))?;
    let long = cpa::rolling_mean(aligned, long_window.min(aligned.len()))?;
    let rows: Vec<LossSeriesRow> = (0..aligned.len())
        .map(|t| LossSeriesRow {
            date: dates[t + 1],
            loss_diff: aligned[t],
            fitted_loss_diff: fitted[t],
            rolling_short: short[t],
            rolling_long: long[t],
        })
        .collect();
    write_rows(path, &rows)
}

#[derive(Serialize)]
pub struct ImportanceSeriesRow {
    pub date: chrono::NaiveDate,
    pub asset: String,
    pub model: String,
    pub covariate: String,
    pub weight: f64,
}

pub fn write_importance_series(path: &Path, rows: &[ImportanceSeriesRow]) -> Result<()> {
    write_rows(path, rows)
}

#[derive(Serialize)]
pub struct CovariateMedianRow {
    pub asset: String,
    pub period: String,
    pub covariate: String,
    pub median: f64,
}

pub fn write_covariate_medians(path: &Path, rows: &[CovariateMedianRow]) -> Result<()> {
    write_rows(path, rows)
}

#[derive(Serialize)]
pub struct GroupRatioRow {
    pub period: String,
    pub covariate: String,
    pub low_over_high: f64,
    pub n_low: usize,
    pub n_high: usize,
}

pub fn write_group_ratios(path: &Path, rows: &[GroupRatioRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn write_mc_tables(dir: &Path, output: &McOutput) -> Result<()> {
    write_rows(&dir.join("mc_backtests.csv"), &output.backtests)?;
    if !output.cpa.is_empty() {
        write_rows(&dir.join("mc_cpa.csv"), &output.cpa)?;
    }
    Ok(())
}

pub fn write_covariate_study(path: &Path, rows: &[CovariateStudyRow]) -> Result<()> {
    write_rows(path, rows)
}
