//! Asset ingestion and feature assembly: coinmetrics-style CSVs in, aligned
//! (target return, lagged covariate) matrices out.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric;

/// Canonical external covariate names and their coinmetrics column codings.
pub const EXTERNAL_COLUMNS: [(&str, &str); 7] = [
    ("Active_Users", "AdrActCnt"),
    ("Total_Users", "AdrBalCnt"),
    ("Total_Users_USD100", "AdrBalUSD100Cnt"),
    ("Total_Users_USD10", "AdrBalUSD10Cnt"),
    ("SER", "SER"),
    ("Transactions", "TxCnt"),
    ("Velocity", "VelCur1yr"),
];

/// Coinmetrics coding of the market-cap column. Ingested for sorting and
/// grouping only; never used as a covariate.
pub const MARKET_CAP_COLUMN: &str = "CapMrktCurUSD";

pub const LAG_RETURN_NAME: &str = "ret_lag1";
pub const SD_WINDOWS: [usize; 4] = [3, 7, 30, 60];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("csv parse error in {path} at line {line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("io error reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing covariates: {0:?}")]
    MissingCovariates(Vec<String>),
    #[error("insufficient history before period '{label}': need {needed} rows, have {available}")]
    InsufficientHistory { label: String, needed: usize, available: usize },
    #[error("period '{label}' does not overlap the data range")]
    PeriodOutOfRange { label: String },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Maps logical column roles to the header names of a source CSV.
/// Defaults follow the coinmetrics community-data codings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub date: String,
    pub price: String,
    /// canonical external name → source column name
    pub externals: BTreeMap<String, String>,
    pub market_cap: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            date: "date".to_string(),
            price: "PriceUSD".to_string(),
            externals: EXTERNAL_COLUMNS
                .iter()
                .map(|(name, coding)| (name.to_string(), coding.to_string()))
                .collect(),
            market_cap: MARKET_CAP_COLUMN.to_string(),
        }
    }
}

/// One asset's dated price/return history plus any external covariate
/// series. Immutable after construction; missing external values are NaN.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssetSeries {
    pub asset_id: String,
    /// one entry per retained source row, strictly increasing
    pub dates: Vec<NaiveDate>,
    pub prices: Vec<f64>,
    /// daily log-returns; returns[t] = ln(prices[t+1]) − ln(prices[t])
    pub returns: Vec<f64>,
    /// external series aligned to `dates` (NaN where the source was empty)
    pub externals: BTreeMap<String, Vec<f64>>,
    /// market cap aligned to `dates`, when present in the source
    pub market_cap: Option<Vec<f64>>,
}

impl AssetSeries {
    pub fn from_prices(
        asset_id: &str,
        dates: Vec<NaiveDate>,
        prices: Vec<f64>,
        externals: BTreeMap<String, Vec<f64>>,
        market_cap: Option<Vec<f64>>,
    ) -> Result<Self> {
        if prices.len() < 2 {
            return Err(DataError::InsufficientData(format!(
                "asset {asset_id}: need at least 2 valid prices, got {}",
                prices.len()
            )));
        }
        debug_assert_eq!(dates.len(), prices.len());
        for series in externals.values() {
            debug_assert_eq!(series.len(), dates.len());
        }
        let returns = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        Ok(Self { asset_id: asset_id.to_string(), dates, prices, returns, externals, market_cap })
    }

    /// Dates on which each return is realized (`returns[t]` ↔ `dates[t+1]`).
    pub fn return_dates(&self) -> &[NaiveDate] {
        &self.dates[1..]
    }
}

/// Aligned regression view: row t pairs target r_t with covariates that were
/// known one day earlier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub asset_id: String,
    pub dates: Vec<NaiveDate>,
    pub target: Vec<f64>,
    pub names: Vec<String>,
    /// column-major covariates; columns[j].len() == target.len()
    pub columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.columns.iter().map(|col| col[t]).collect()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|j| self.columns[j].as_slice())
    }

    /// A copy restricted to the named columns, in the given order.
    pub fn select_columns(&self, names: &[&str]) -> Result<FeatureMatrix> {
        let mut columns = Vec::with_capacity(names.len());
        let mut missing = Vec::new();
        for &name in names {
            match self.names.iter().position(|n| n == name) {
                Some(j) => columns.push(self.columns[j].clone()),
                None => missing.push(name.to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(DataError::MissingCovariates(missing));
        }
        Ok(FeatureMatrix {
            asset_id: self.asset_id.clone(),
            dates: self.dates.clone(),
            target: self.target.clone(),
            names: names.iter().map(|s| s.to_string()).collect(),
            columns,
        })
    }

    /// A copy of rows `range` (end exclusive).
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> FeatureMatrix {
        FeatureMatrix {
            asset_id: self.asset_id.clone(),
            dates: self.dates[range.clone()].to_vec(),
            target: self.target[range.clone()].to_vec(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
        }
    }
}

/// A labeled evaluation window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSpec {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl PeriodSpec {
    pub fn new(label: &str, start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start >= end {
            return Err(DataError::InvalidArgument(format!(
                "period '{label}': start {start} must precede end {end}"
            )));
        }
        Ok(Self { label: label.to_string(), start, end })
    }
}

fn parse_f64(field: &str) -> Option<f64> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return None;
    }
    trimmed.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Load one asset from a coinmetrics-style CSV. Rows without a positive
/// finite price are dropped; the remaining rows are treated as consecutive
/// observations. External columns from the map are attached when present in
/// the header (all-or-nothing per column, NaN for empty cells).
pub fn load_coinmetrics_csv(
    path: impl AsRef<Path>,
    asset_id: &str,
    columns: &ColumnMap,
) -> Result<AssetSeries> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path.as_ref())
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path_str.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => DataError::Parse { path: path_str.clone(), line: 0, message: e.to_string() },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::Parse {
            path: path_str.clone(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col_idx = |name: &str| headers.iter().position(|h| h == name);
    let date_idx = col_idx(&columns.date).ok_or_else(|| DataError::Parse {
        path: path_str.clone(),
        line: 1,
        message: format!("missing date column '{}'", columns.date),
    })?;
    let price_idx = col_idx(&columns.price).ok_or_else(|| DataError::Parse {
        path: path_str.clone(),
        line: 1,
        message: format!("missing price column '{}'", columns.price),
    })?;
    let external_idx: Vec<(String, usize)> = columns
        .externals
        .iter()
        .filter_map(|(name, coding)| col_idx(coding).map(|i| (name.clone(), i)))
        .collect();
    let cap_idx = col_idx(&columns.market_cap);

    let mut dates = Vec::new();
    let mut prices = Vec::new();
    let mut externals: BTreeMap<String, Vec<f64>> =
        external_idx.iter().map(|(n, _)| (n.clone(), Vec::new())).collect();
    let mut caps = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            path: path_str.clone(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let price = match parse_f64(&record[price_idx]) {
            Some(p) if p > 0.0 => p,
            _ => continue, // non-positive or missing price: drop the row
        };
        let date = NaiveDate::parse_from_str(record[date_idx].trim(), "%Y-%m-%d").map_err(
            |e| DataError::Parse {
                path: path_str.clone(),
                line,
                message: format!("bad date '{}': {e}", &record[date_idx]),
            },
        )?;
        if let Some(last) = dates.last() {
            if date <= *last {
                return Err(DataError::Parse {
                    path: path_str.clone(),
                    line,
                    message: format!("dates not strictly increasing at {date}"),
                });
            }
        }
        dates.push(date);
        prices.push(price);
        for (name, idx) in &external_idx {
            externals
                .get_mut(name)
                .unwrap()
                .push(parse_f64(&record[*idx]).unwrap_or(f64::NAN));
        }
        if let Some(idx) = cap_idx {
            caps.push(parse_f64(&record[idx]).unwrap_or(f64::NAN));
        }
    }

    let market_cap = cap_idx.map(|_| caps);
    AssetSeries::from_prices(asset_id, dates, prices, externals, market_cap)
}

/// Trailing sample standard deviation (n−1 denominator) over `window`
/// observations; the first `window − 1` entries are NaN.
pub fn rolling_sd(returns: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(DataError::InvalidArgument(format!("rolling window {window} must be ≥ 2")));
    }
    if returns.len() < window {
        return Err(DataError::InsufficientData(format!(
            "rolling window {window} exceeds series length {}",
            returns.len()
        )));
    }
    let mut out = vec![f64::NAN; returns.len()];
    for t in window - 1..returns.len() {
        out[t] = numeric::sample_std(&returns[t + 1 - window..=t]);
    }
    Ok(out)
}

/// Assemble the aligned feature matrix for one asset. Covariates for target
/// r_t are ret_lag1 = r_{t−1} and the 3/7/30/60-day return SDs ending at
/// t−1; with `use_externals`, the seven external series lagged one day are
/// appended. Rows with any missing value are dropped.
pub fn build_feature_matrix(series: &AssetSeries, use_externals: bool) -> Result<FeatureMatrix> {
    let returns = &series.returns;
    let max_window = *SD_WINDOWS.iter().max().unwrap();
    if returns.len() < max_window + 2 {
        return Err(DataError::InsufficientData(format!(
            "asset {}: need at least {} returns for the {}-day SD plus one lag plus one target, got {}",
            series.asset_id,
            max_window + 2,
            max_window,
            returns.len()
        )));
    }
    if use_externals {
        let missing: Vec<String> = EXTERNAL_COLUMNS
            .iter()
            .map(|(name, _)| name.to_string())
            .filter(|name| !series.externals.contains_key(name))
            .collect();
        if !missing.is_empty() {
            return Err(DataError::MissingCovariates(missing));
        }
    }

    let mut names = vec![LAG_RETURN_NAME.to_string()];
    for w in SD_WINDOWS {
        names.push(format!("sd_{w}"));
    }
    let sd_series: Vec<Vec<f64>> =
        SD_WINDOWS.iter().map(|&w| rolling_sd(returns, w)).collect::<Result<_>>()?;
    let external_names: Vec<&str> = if use_externals {
        EXTERNAL_COLUMNS.iter().map(|(n, _)| *n).collect()
    } else {
        Vec::new()
    };
    names.extend(external_names.iter().map(|n| n.to_string()));

    let mut dates = Vec::new();
    let mut target = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    // first target index: the 60-day SD ending at t−1 needs returns[0..60]
    for t in max_window..returns.len() {
        let mut row = Vec::with_capacity(names.len());
        row.push(returns[t - 1]);
        for sd in &sd_series {
            row.push(sd[t - 1]);
        }
        for name in &external_names {
            // externals are aligned to price dates; the value dated with
            // r_{t−1}'s realization (dates[t]) is the one-day-lagged value
            row.push(series.externals[*name][t]);
        }
        if row.iter().any(|v| v.is_nan()) {
            continue;
        }
        dates.push(series.dates[t + 1]);
        target.push(returns[t]);
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }

    if target.is_empty() {
        return Err(DataError::InsufficientData(format!(
            "asset {}: no complete rows after alignment",
            series.asset_id
        )));
    }
    Ok(FeatureMatrix { asset_id: series.asset_id.clone(), dates, target, names, columns })
}

/// Feature matrix for a bare return series (no price or external data), as
/// used by the simulation harness. Dates are synthetic counting days from an
/// arbitrary epoch.
pub fn feature_matrix_from_returns(asset_id: &str, returns: &[f64]) -> Result<FeatureMatrix> {
    let epoch = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    let dates: Vec<NaiveDate> =
        (0..returns.len() + 1).map(|i| epoch + chrono::Days::new(i as u64)).collect();
    let series = AssetSeries {
        asset_id: asset_id.to_string(),
        dates,
        prices: vec![1.0; returns.len() + 1],
        returns: returns.to_vec(),
        externals: BTreeMap::new(),
        market_cap: None,
    };
    build_feature_matrix(&series, false)
}

/// Restrict a feature matrix to a period: rows whose forecast date lies in
/// [start, end], preceded by exactly `train_len` history rows.
pub fn slice_period(
    matrix: &FeatureMatrix,
    period: &PeriodSpec,
    train_len: usize,
) -> Result<FeatureMatrix> {
    let first_in = matrix.dates.iter().position(|d| *d >= period.start);
    let last_in = matrix.dates.iter().rposition(|d| *d <= period.end);
    let (start_idx, end_idx) = match (first_in, last_in) {
        (Some(s), Some(e)) if s <= e => (s, e),
        _ => return Err(DataError::PeriodOutOfRange { label: period.label.clone() }),
    };
    if start_idx < train_len {
        return Err(DataError::InsufficientHistory {
            label: period.label.clone(),
            needed: train_len,
            available: start_idx,
        });
    }
    Ok(matrix.slice_rows(start_idx - train_len..end_idx + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn series_from_prices(prices: &[f64]) -> AssetSeries {
        let dates: Vec<NaiveDate> = (0..prices.len())
            .map(|i| date("2020-01-01") + chrono::Days::new(i as u64))
            .collect();
        AssetSeries::from_prices("test", dates, prices.to_vec(), BTreeMap::new(), None).unwrap()
    }

    #[test]
    fn two_point_log_return() {
        let s = series_from_prices(&[100.0, 110.0]);
        assert_eq!(s.returns.len(), 1);
        assert_relative_eq!(s.returns[0], 1.1f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn constant_prices_yield_zero_returns() {
        let s = series_from_prices(&[100.0, 100.0, 100.0]);
        assert_eq!(s.returns, vec![0.0, 0.0]);
    }

    #[test]
    fn missing_price_row_is_dropped() {
        // hand-built 6-row fixture with an empty price at position 3
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "date,PriceUSD").unwrap();
        writeln!(file, "2020-01-01,100").unwrap();
        writeln!(file, "2020-01-02,110").unwrap();
        writeln!(file, "2020-01-03,").unwrap();
        writeln!(file, "2020-01-04,121").unwrap();
        writeln!(file, "2020-01-05,133.1").unwrap();
        writeln!(file, "2020-01-06,146.41").unwrap();
        let s = load_coinmetrics_csv(file.path(), "fix", &ColumnMap::default()).unwrap();
        assert_eq!(s.prices.len(), 5);
        assert_eq!(s.returns.len(), 4);
        for r in &s.returns {
            assert_relative_eq!(*r, 1.1f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn insufficient_prices_error() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "date,PriceUSD").unwrap();
        writeln!(file, "2020-01-01,100").unwrap();
        let err = load_coinmetrics_csv(file.path(), "fix", &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, DataError::InsufficientData(_)));
    }

    #[test]
    fn rolling_sd_constant_series() {
        let sd = rolling_sd(&[1.0, 1.0, 1.0, 1.0], 3).unwrap();
        assert!(sd[0].is_nan() && sd[1].is_nan());
        assert_eq!(&sd[2..], &[0.0, 0.0]);
    }

    #[test]
    fn rolling_sd_two_points() {
        let sd = rolling_sd(&[0.0, 2.0], 2).unwrap();
        assert!(sd[0].is_nan());
        assert_relative_eq!(sd[1], 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rolling_sd_window_too_large() {
        assert!(rolling_sd(&[1.0, 2.0], 3).is_err());
        assert!(rolling_sd(&[1.0, 2.0, 3.0], 1).is_err());
    }

    #[test]
    fn feature_matrix_row_count() {
        // 70 prices → 69 returns → 69 − 60 = 9 rows
        let prices: Vec<f64> = (0..70).map(|i| 100.0 * (1.0 + 0.001 * i as f64)).collect();
        let s = series_from_prices(&prices);
        let m = build_feature_matrix(&s, false).unwrap();
        assert_eq!(m.n_rows(), 9);
        assert_eq!(m.names.len(), 5);
    }

    #[test]
    fn feature_matrix_constant_returns() {
        let prices: Vec<f64> = (0..70).map(|i| 100.0 * (1.05f64).powi(i)).collect();
        let s = series_from_prices(&prices);
        let m = build_feature_matrix(&s, false).unwrap();
        for t in 0..m.n_rows() {
            let row = m.row(t);
            assert_relative_eq!(row[0], 1.05f64.ln(), epsilon = 1e-9);
            for v in &row[1..] {
                assert!(v.abs() < 1e-12, "sd columns should be zero, got {v}");
            }
        }
    }

    #[test]
    fn feature_matrix_lag_alignment() {
        let prices: Vec<f64> = (0..80).map(|i| 100.0 + (i as f64) * ((i % 7) as f64)).collect();
        let s = series_from_prices(&prices);
        let m = build_feature_matrix(&s, false).unwrap();
        let lag = m.column(LAG_RETURN_NAME).unwrap();
        for t in 1..m.n_rows() {
            assert_relative_eq!(lag[t], m.target[t - 1], epsilon = 1e-15);
        }
    }

    #[test]
    fn missing_externals_error_names_columns() {
        let prices: Vec<f64> = (0..70).map(|i| 100.0 + i as f64).collect();
        let s = series_from_prices(&prices);
        match build_feature_matrix(&s, true) {
            Err(DataError::MissingCovariates(cols)) => {
                assert!(cols.contains(&"SER".to_string()));
                assert_eq!(cols.len(), 7);
            }
            other => panic!("expected MissingCovariates, got {other:?}"),
        }
    }

    #[test]
    fn slice_period_index_arithmetic() {
        let prices: Vec<f64> = (0..1262).map(|i| 100.0 + (i % 13) as f64).collect();
        let s = series_from_prices(&prices);
        let m = build_feature_matrix(&s, false).unwrap();
        assert_eq!(m.n_rows(), 1201);
        // period spanning matrix rows 600..=1099 (by date), train_len 500
        let period =
            PeriodSpec::new("p", m.dates[600], m.dates[1099]).unwrap();
        let sliced = slice_period(&m, &period, 500).unwrap();
        assert_eq!(sliced.n_rows(), 500 + 500);
        assert_eq!(sliced.dates[500], m.dates[600]);
    }

    #[test]
    fn slice_period_insufficient_history() {
        let prices: Vec<f64> = (0..200).map(|i| 100.0 + (i % 13) as f64).collect();
        let s = series_from_prices(&prices);
        let m = build_feature_matrix(&s, false).unwrap();
        let period = PeriodSpec::new("p", m.dates[0], m.dates[50]).unwrap();
        assert!(matches!(
            slice_period(&m, &period, 500),
            Err(DataError::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn price_reconstruction_from_returns() {
        let prices: Vec<f64> = (0..50).map(|i| 100.0 * (1.0 + 0.01 * ((i * i) % 17) as f64)).collect();
        let s = series_from_prices(&prices);
        let mut cum = 0.0;
        for (t, r) in s.returns.iter().enumerate() {
            cum += r;
            let rebuilt = s.prices[0] * cum.exp();
            assert_relative_eq!(rebuilt, s.prices[t + 1], max_relative = 1e-12);
        }
    }
}
