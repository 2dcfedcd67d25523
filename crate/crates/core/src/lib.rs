//! One-day-ahead Value-at-Risk forecasting for return series: an honest
//! quantile random forest next to classic benchmarks (quantile regression,
//! CAViaR-SAV, GARCH-family, historical simulation, normal fit), with
//! coverage backtests, pairwise conditional-predictive-ability comparisons,
//! a rolling forecast engine, and a Monte-Carlo harness.

pub mod backtest;
pub mod cpa;
pub mod data;
pub mod engine;
pub mod forest;
pub mod numeric;
pub mod parametric;
pub mod report;
pub mod sim;

pub use data::{AssetSeries, FeatureMatrix, PeriodSpec};
pub use engine::{ForecastSeries, ModelKind, ModelSpec, RollingConfig};
pub use forest::{ForestConfig, ImportanceReport, QuantileForest, SplitCriterion};
