//! Return-series generators and the Monte-Carlo evaluation protocol:
//! GARCH DGPs with normal or scaled-t innovations, a regime-switching SAV
//! DGP with known true VaR, and the rep-parallel harness that aggregates
//! backtest and CPA results per (dgp, model, window, level) cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backtest;
use crate::cpa;
use crate::data::{self, AssetSeries};
use crate::engine::{self, ModelKind, ModelSpec, RollingConfig};
use crate::numeric::{self, mix_seed};
use crate::parametric::{self, check_loss, GarchSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("engine: {0}")]
    Engine(#[from] engine::EngineError),
    #[error("parametric: {0}")]
    Parametric(#[from] parametric::ParametricError),
    #[error("data: {0}")]
    Data(#[from] data::DataError),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Covariate rows burn in the longest SD window before the first usable
/// target, so simulators generate this many extra leading returns.
pub const COVARIATE_BURN_IN: usize = 60;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GarchDgpParams {
    pub omega: f64,
    pub arch: f64,
    pub garch: f64,
}

impl GarchDgpParams {
    /// The standard stock-index calibration.
    pub fn standard() -> Self {
        Self { omega: 1e-4, arch: 0.1, garch: 0.8 }
    }

    pub fn persistence(&self) -> f64 {
        self.arch + self.garch
    }

    pub fn stationary_variance(&self) -> f64 {
        self.omega / (1.0 - self.persistence())
    }
}

/// VaR_{t+1} = γ0 + γ1·VaR_t + γ2·|r_t − γ3| driven by regime-switching
/// normal initial returns.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SavSimParams {
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub alpha: f64,
}

/// Regime length for the σ redraws of the SAV DGP.
pub const SAV_REGIME_LEN: usize = 100;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Dgp {
    GarchNormal(GarchDgpParams),
    GarchT5(GarchDgpParams),
    SavRegime(SavSimParams),
    /// GARCH with parameters estimated from an asset's full history
    GarchAssetFit(GarchDgpParams),
}

impl Dgp {
    pub fn name(&self) -> &'static str {
        match self {
            Dgp::GarchNormal(_) => "garch_normal",
            Dgp::GarchT5(_) => "garch_t5",
            Dgp::SavRegime(_) => "sav_regime",
            Dgp::GarchAssetFit(_) => "garch_asset_fit",
        }
    }

    /// Whether the simulator emits an exact conditional VaR series.
    pub fn has_truth(&self) -> bool {
        true
    }
}

/// Simulated returns plus the true one-step conditional VaR at `alpha`.
pub struct SimulatedSeries {
    pub returns: Vec<f64>,
    pub true_var: Vec<f64>,
}

/// GARCH(1,1) returns after a 500-step burn-in from the stationary
/// variance. `t5` swaps the innovations for t₅ scaled to unit variance.
pub fn simulate_garch(
    params: &GarchDgpParams,
    t5: bool,
    n: usize,
    alpha: f64,
    seed: u64,
) -> Result<SimulatedSeries> {
    if params.persistence() >= 1.0 || params.omega <= 0.0 {
        return Err(SimError::InvalidArgument(format!(
            "nonstationary GARCH parameters: a={} b={} ω={}",
            params.arch, params.garch, params.omega
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let t_dist = StudentT::new(5.0).unwrap();
    let t_scale = (3.0f64 / 5.0).sqrt(); // Var(t₅) = 5/3
    let z_alpha = if t5 {
        // true α-quantile of the unit-variance scaled t₅ innovation
        use statrs::distribution::{ContinuousCDF, StudentsT};
        StudentsT::new(0.0, 1.0, 5.0).unwrap().inverse_cdf(alpha) * t_scale
    } else {
        numeric::normal_quantile(alpha)
    };

    const BURN_IN: usize = 500;
    let mut sigma2 = params.stationary_variance();
    let mut prev = 0.0f64;
    let mut returns = Vec::with_capacity(n);
    let mut true_var = Vec::with_capacity(n);
    for i in 0..n + BURN_IN {
        sigma2 = params.omega + params.arch * prev * prev + params.garch * sigma2;
        let z = if t5 { t_dist.sample(&mut rng) * t_scale } else { normal.sample(&mut rng) };
        prev = z * sigma2.sqrt();
        if i >= BURN_IN {
            returns.push(prev);
            true_var.push(z_alpha * sigma2.sqrt());
        }
    }
    Ok(SimulatedSeries { returns, true_var })
}

/// Regime-switching SAV returns: σ is redrawn as 65·χ²₂ every 100
/// observations, initial returns are N(0, σ²), the VaR recursion runs on
/// them, and the emitted return at t is N(0, sd = VaR_t/Φ⁻¹(α)) so its true
/// α-quantile is VaR_t by construction.
pub fn simulate_sav(params: &SavSimParams, n: usize, seed: u64) -> Result<SimulatedSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chi2 = ChiSquared::new(2.0).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let z_alpha = numeric::normal_quantile(params.alpha);

    let mut returns = Vec::with_capacity(n);
    let mut true_var = Vec::with_capacity(n);
    let mut sigma = 0.0;
    let mut var_t = 0.0;
    for t in 0..n {
        if t % SAV_REGIME_LEN == 0 {
            sigma = 65.0 * chi2.sample(&mut rng);
        }
        if t == 0 {
            var_t = z_alpha * sigma;
        }
        let scale = var_t / z_alpha;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(SimError::InvalidArgument(format!(
                "SAV recursion produced a nonpositive scale at t={t}: VaR={var_t}, γ=({}, {}, {}, {})",
                params.gamma0, params.gamma1, params.gamma2, params.gamma3
            )));
        }
        returns.push(normal.sample(&mut rng) * scale);
        true_var.push(var_t);
        let r_init = normal.sample(&mut rng) * sigma;
        var_t = params.gamma0
            + params.gamma1 * var_t
            + params.gamma2 * (r_init - params.gamma3).abs();
    }
    Ok(SimulatedSeries { returns, true_var })
}

fn sav_sim_objective(gamma: &[f64], v0: f64, returns: &[f64], alpha: f64) -> f64 {
    if gamma[1].abs() >= 0.999999 || gamma.iter().any(|g| !g.is_finite()) {
        return f64::INFINITY;
    }
    let mut v = v0;
    let mut loss = 0.0;
    for t in 1..returns.len() {
        v = gamma[0] + gamma[1] * v + gamma[2] * (returns[t - 1] - gamma[3]).abs();
        loss += check_loss(returns[t] - v, alpha);
    }
    loss
}

/// Fit the four-parameter SAV recursion to a regime-switching normal return
/// series generated under `seed`; the result parameterizes the SAV DGP.
/// Deterministic given (alpha, seed).
pub fn fit_sav_sim_params(alpha: f64, n_fit: usize, seed: u64) -> Result<SavSimParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chi2 = ChiSquared::new(2.0).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut sigma = 0.0;
    let r_init: Vec<f64> = (0..n_fit)
        .map(|t| {
            if t % SAV_REGIME_LEN == 0 {
                sigma = 65.0 * chi2.sample(&mut rng);
            }
            normal.sample(&mut rng) * sigma
        })
        .collect();

    let head = n_fit.div_ceil(10);
    let v0 = numeric::empirical_quantile_type1(&r_init[..head], alpha);
    let scale = numeric::sample_std(&r_init);
    let boxes = [
        (-0.3 * scale, 0.0),
        (0.0, 0.99),
        (-1.0, 0.0),
        (-0.1 * scale, 0.1 * scale),
    ];
    let mut start_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
    use rand::Rng;
    let mut starts: Vec<(f64, [f64; 4])> = (0..500)
        .map(|_| {
            let g = [
                start_rng.random_range(boxes[0].0..=boxes[0].1),
                start_rng.random_range(boxes[1].0..=boxes[1].1),
                start_rng.random_range(boxes[2].0..=boxes[2].1),
                start_rng.random_range(boxes[3].0..=boxes[3].1),
            ];
            (sav_sim_objective(&g, v0, &r_init, alpha), g)
        })
        .collect();
    starts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    let mut best: Option<(f64, Vec<f64>)> = None;
    for (_, g) in starts.iter().take(10) {
        let step = [0.05 * scale, 0.05, 0.1, 0.02 * scale];
        let (candidate, obj) = numeric::nelder_mead(
            |g| sav_sim_objective(g, v0, &r_init, alpha),
            g,
            &step,
            1e-7,
            500,
        );
        if obj.is_finite() && best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, candidate));
        }
    }
    let (_, g) = best.ok_or_else(|| {
        SimError::InvalidArgument("SAV simulation fit found no stable parameters".into())
    })?;
    Ok(SavSimParams { gamma0: g[0], gamma1: g[1], gamma2: g[2], gamma3: g[3], alpha })
}

/// Plain-GARCH QMLE on an asset's full return history, packaged as a DGP.
pub fn fit_asset_garch_for_sim(asset: &AssetSeries) -> Result<Dgp> {
    if asset.returns.len() < 1000 {
        return Err(SimError::InvalidArgument(format!(
            "asset {} has {} returns; the simulation fit needs at least 1000",
            asset.asset_id,
            asset.returns.len()
        )));
    }
    let model = parametric::fit_garch(&asset.returns, GarchSpec::Plain, None)?;
    Ok(Dgp::GarchAssetFit(GarchDgpParams {
        omega: model.omega,
        arch: model.arch,
        garch: model.garch,
    }))
}

pub fn simulate_dgp(dgp: &Dgp, n: usize, alpha: f64, seed: u64) -> Result<SimulatedSeries> {
    match dgp {
        Dgp::GarchNormal(p) | Dgp::GarchAssetFit(p) => simulate_garch(p, false, n, alpha, seed),
        Dgp::GarchT5(p) => simulate_garch(p, true, n, alpha, seed),
        Dgp::SavRegime(p) => {
            if p.alpha != alpha {
                let adjusted = SavSimParams { alpha, ..*p };
                simulate_sav(&adjusted, n, seed)
            } else {
                simulate_sav(p, n, seed)
            }
        }
    }
}

/// Monte-Carlo protocol: repetitions of simulate → roll-forecast → backtest
/// (and pairwise CPA) per cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McProtocol {
    pub reps: usize,
    /// out-of-sample span plus rolling window (returns per rep, before the
    /// covariate burn-in is added internally)
    pub n: usize,
    pub windows: Vec<usize>,
    pub levels: Vec<f64>,
    pub refit_stride: usize,
    /// share-of-reps threshold for counting a backtest rejection
    pub significance: f64,
    pub seed: u64,
}

impl Default for McProtocol {
    fn default() -> Self {
        Self {
            reps: 200,
            n: 2000,
            windows: vec![500, 1000],
            levels: vec![0.05, 0.01],
            refit_stride: 1,
            significance: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McBacktestRow {
    pub dgp: String,
    pub model: String,
    pub window: usize,
    pub alpha: f64,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub dq_rejection_rate: f64,
    pub dq_mean_p: f64,
    pub kupiec_rejection_rate: f64,
    pub kupiec_mean_p: f64,
    pub christoffersen_rejection_rate: f64,
    pub christoffersen_mean_p: f64,
    pub mean_aoe: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McCpaRow {
    pub dgp: String,
    pub model1: String,
    pub model2: String,
    pub window: usize,
    pub alpha: f64,
    pub reps_ok: usize,
    pub mean_p: f64,
    pub n_p_below_10: usize,
    pub mean_performance_share: f64,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct McOutput {
    pub backtests: Vec<McBacktestRow>,
    pub cpa: Vec<McCpaRow>,
}

/// Name of the pseudo-model that forecasts the DGP's true conditional VaR.
pub const ORACLE_MODEL: &str = "Oracle";

struct RepOutcome {
    // per model: (aoe, dq_p, kupiec_p, christoffersen_p) or None on failure
    backtests: Vec<Option<(f64, f64, f64, f64)>>,
    // per pair: (p, share) or None
    cpa: Vec<Option<(f64, f64)>>,
}

fn run_rep(
    dgp: &Dgp,
    models: &[ModelSpec],
    include_oracle: bool,
    cpa_pairs: &[(ModelKind, ModelKind)],
    window: usize,
    alpha: f64,
    protocol: &McProtocol,
    rep_seed: u64,
) -> Result<RepOutcome> {
    let sim = simulate_dgp(dgp, protocol.n + COVARIATE_BURN_IN, alpha, rep_seed)?;
    let matrix = data::feature_matrix_from_returns(dgp.name(), &sim.returns)?;
    debug_assert_eq!(matrix.n_rows(), protocol.n);
    let mut config = RollingConfig::new(window, alpha, mix_seed(rep_seed, 77));
    config.refit_stride = protocol.refit_stride;

    let mut forecast_series: Vec<Option<engine::ForecastSeries>> = Vec::new();
    for spec in models {
        forecast_series.push(engine::rolling_forecast(&matrix, spec, &config).ok());
    }
    if include_oracle {
        let oos = matrix.n_rows() - window;
        let truth_offset = COVARIATE_BURN_IN + window;
        let forecasts: Vec<f64> =
            sim.true_var[truth_offset..truth_offset + oos].to_vec();
        forecast_series.push(Some(engine::ForecastSeries {
            asset_id: dgp.name().to_string(),
            model: ORACLE_MODEL.to_string(),
            alpha,
            window,
            dates: matrix.dates[window..].to_vec(),
            forecasts,
            realized: matrix.target[window..].to_vec(),
            failures: vec![false; oos],
        }));
    }

    let mut backtests = Vec::with_capacity(forecast_series.len());
    for series in &forecast_series {
        let cell = series.as_ref().and_then(|s| {
            let hits = backtest::hit_sequence(&s.realized, &s.forecasts, alpha).ok()?;
            let dq = backtest::dq_test(&hits, &s.forecasts, &s.realized, 4).ok()?;
            let kupiec = backtest::kupiec_test(&hits).ok()?;
            let christoffersen = backtest::christoffersen_test(&hits).ok()?;
            Some((backtest::aoe(&hits), dq.p_value, kupiec.p_value, christoffersen.p_value))
        });
        backtests.push(cell);
    }

    let mut cpa_cells = Vec::with_capacity(cpa_pairs.len());
    for (left, right) in cpa_pairs {
        let find = |kind: ModelKind| {
            models
                .iter()
                .position(|m| m.kind == kind)
                .and_then(|i| forecast_series[i].as_ref())
        };
        let cell = match (find(*left), find(*right)) {
            (Some(a), Some(b)) => cpa::cpa_test(&a.check_losses(), &b.check_losses())
                .ok()
                .map(|r| (r.p_value, r.performance_share)),
            _ => None,
        };
        cpa_cells.push(cell);
    }

    Ok(RepOutcome { backtests, cpa: cpa_cells })
}

/// Run the protocol for the given DGPs, models, and optional oracle row and
/// CPA pairs. Reps are independent jobs with derived seeds; aggregation is
/// over the rep index, so results do not depend on scheduling.
pub fn run_monte_carlo(
    dgps: &[Dgp],
    models: &[ModelSpec],
    include_oracle: bool,
    cpa_pairs: &[(ModelKind, ModelKind)],
    protocol: &McProtocol,
) -> Result<McOutput> {
    let mut output = McOutput::default();
    let mut model_names: Vec<String> =
        models.iter().map(|m| m.kind.name().to_string()).collect();
    if include_oracle {
        model_names.push(ORACLE_MODEL.to_string());
    }

    for (dgp_idx, dgp) in dgps.iter().enumerate() {
        for &window in &protocol.windows {
            for &alpha in &protocol.levels {
                let cell_seed = mix_seed(
                    protocol.seed,
                    (dgp_idx as u64) << 40 | (window as u64) << 20 | (alpha * 1e6) as u64,
                );
                let outcomes: Vec<Result<RepOutcome>> = (0..protocol.reps)
                    .into_par_iter()
                    .map(|rep| {
                        run_rep(
                            dgp,
                            models,
                            include_oracle,
                            cpa_pairs,
                            window,
                            alpha,
                            protocol,
                            mix_seed(cell_seed, rep as u64),
                        )
                    })
                    .collect();

                for (m_idx, name) in model_names.iter().enumerate() {
                    let cells: Vec<&(f64, f64, f64, f64)> = outcomes
                        .iter()
                        .filter_map(|o| o.as_ref().ok())
                        .filter_map(|o| o.backtests[m_idx].as_ref())
                        .collect();
                    let reps_ok = cells.len();
                    let reps_failed = protocol.reps - reps_ok;
                    let rate = |f: &dyn Fn(&(f64, f64, f64, f64)) -> f64| {
                        if reps_ok == 0 {
                            f64::NAN
                        } else {
                            cells.iter().filter(|c| f(c) < protocol.significance).count() as f64
                                / reps_ok as f64
                        }
                    };
                    let mean = |f: &dyn Fn(&(f64, f64, f64, f64)) -> f64| {
                        if reps_ok == 0 {
                            f64::NAN
                        } else {
                            cells.iter().map(|c| f(c)).sum::<f64>() / reps_ok as f64
                        }
                    };
                    output.backtests.push(McBacktestRow {
                        dgp: dgp.name().to_string(),
                        model: name.clone(),
                        window,
                        alpha,
                        reps_ok,
                        reps_failed,
                        dq_rejection_rate: rate(&|c| c.1),
                        dq_mean_p: mean(&|c| c.1),
                        kupiec_rejection_rate: rate(&|c| c.2),
                        kupiec_mean_p: mean(&|c| c.2),
                        christoffersen_rejection_rate: rate(&|c| c.3),
                        christoffersen_mean_p: mean(&|c| c.3),
                        mean_aoe: mean(&|c| c.0),
                    });
                }

                for (pair_idx, (left, right)) in cpa_pairs.iter().enumerate() {
                    let cells: Vec<&(f64, f64)> = outcomes
                        .iter()
                        .filter_map(|o| o.as_ref().ok())
                        .filter_map(|o| o.cpa[pair_idx].as_ref())
                        .collect();
                    let reps_ok = cells.len();
                    let mean = |f: &dyn Fn(&(f64, f64)) -> f64| {
                        if reps_ok == 0 {
                            f64::NAN
                        } else {
                            cells.iter().map(|c| f(c)).sum::<f64>() / reps_ok as f64
                        }
                    };
                    output.cpa.push(McCpaRow {
                        dgp: dgp.name().to_string(),
                        model1: left.name().to_string(),
                        model2: right.name().to_string(),
                        window,
                        alpha,
                        reps_ok,
                        mean_p: mean(&|c| c.0),
                        n_p_below_10: cells.iter().filter(|c| c.0 < 0.1).count(),
                        mean_performance_share: mean(&|c| c.1),
                    });
                }
            }
        }
    }
    Ok(output)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateStudyRow {
    pub label: String,
    pub mean_mse: f64,
}

/// Table of GRF prediction MSE against the true VaR for nested lagged-SD
/// covariate sets on the SAV DGP.
pub fn covariate_selection_study(
    params: &SavSimParams,
    sets: &[Vec<usize>],
    reps: usize,
    n: usize,
    window: usize,
    spec: &ModelSpec,
    refit_stride: usize,
    seed: u64,
) -> Result<Vec<CovariateStudyRow>> {
    let per_rep: Vec<Result<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = mix_seed(seed, rep as u64);
            let sim = simulate_sav(params, n + COVARIATE_BURN_IN, rep_seed)?;
            let matrix = data::feature_matrix_from_returns("sav", &sim.returns)?;
            let mut mses = Vec::with_capacity(sets.len());
            for set in sets {
                let names: Vec<String> = set.iter().map(|w| format!("sd_{w}")).collect();
                let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
                let selected = matrix.select_columns(&refs)?;
                let mut config = RollingConfig::new(window, params.alpha, mix_seed(rep_seed, 5));
                config.refit_stride = refit_stride;
                let series = engine::rolling_forecast(&selected, spec, &config)?;
                let truth_offset = COVARIATE_BURN_IN + window;
                let truth = &sim.true_var[truth_offset..truth_offset + series.len()];
                let mse = series
                    .forecasts
                    .iter()
                    .zip(truth.iter())
                    .map(|(f, t)| (f - t) * (f - t))
                    .sum::<f64>()
                    / series.len() as f64;
                mses.push(mse);
            }
            Ok(mses)
        })
        .collect();

    let mut sums = vec![0.0f64; sets.len()];
    let mut count = 0usize;
    for rep in per_rep {
        let mses = rep?;
        for (s, m) in sums.iter_mut().zip(mses.iter()) {
            *s += m;
        }
        count += 1;
    }
    Ok(sets
        .iter()
        .zip(sums.iter())
        .map(|(set, sum)| CovariateStudyRow {
            label: set.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
            mean_mse: sum / count as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn garch_long_run_variance() {
        let params = GarchDgpParams::standard();
        assert_relative_eq!(params.stationary_variance(), 1e-3, epsilon = 1e-15);
        let sim = simulate_garch(&params, false, 100_000, 0.05, 12).unwrap();
        let var = numeric::sample_variance(&sim.returns);
        assert!((var / 1e-3 - 1.0).abs() < 0.05, "sample variance {var}");
    }

    #[test]
    fn garch_degenerate_params_are_iid() {
        let params = GarchDgpParams { omega: 4e-4, arch: 0.0, garch: 0.0 };
        let sim = simulate_garch(&params, false, 50_000, 0.05, 3).unwrap();
        let var = numeric::sample_variance(&sim.returns);
        assert!((var / 4e-4 - 1.0).abs() < 0.05);
        // constant conditional VaR
        assert!(sim.true_var.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn garch_seed_reproducibility() {
        let params = GarchDgpParams::standard();
        let a = simulate_garch(&params, true, 500, 0.05, 9).unwrap();
        let b = simulate_garch(&params, true, 500, 0.05, 9).unwrap();
        assert_eq!(a.returns, b.returns);
    }

    #[test]
    fn garch_nonstationary_rejected() {
        let params = GarchDgpParams { omega: 1e-4, arch: 0.5, garch: 0.6 };
        assert!(simulate_garch(&params, false, 100, 0.05, 1).is_err());
    }

    #[test]
    fn t5_innovations_have_unit_variance() {
        use rand_distr::StudentT;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let t = StudentT::new(5.0).unwrap();
        let scale = (3.0f64 / 5.0).sqrt();
        let draws: Vec<f64> = (0..1_000_000).map(|_| t.sample(&mut rng) * scale).collect();
        let var = numeric::sample_variance(&draws);
        assert!((var - 1.0).abs() < 0.01, "scaled t5 variance {var}");
    }

    #[test]
    fn sav_constant_var_matches_quantile_identity() {
        // γ1 = γ2 = 0 keeps VaR pinned at γ0; the 5% quantile of the
        // emitted returns must then be γ0 itself
        let params = SavSimParams {
            gamma0: -0.0329,
            gamma1: 0.0,
            gamma2: 0.0,
            gamma3: 0.0,
            alpha: 0.05,
        };
        let sim = simulate_sav(&params, 200_000, 4).unwrap();
        assert!(sim.true_var.iter().skip(1).all(|&v| v == -0.0329));
        let scale = -0.0329 / numeric::normal_quantile(0.05);
        assert_relative_eq!(scale, 0.02, epsilon = 1e-4);
        let q = numeric::empirical_quantile_type1(&sim.returns, 0.05);
        assert_relative_eq!(q, -0.0329, max_relative = 0.02);
    }

    #[test]
    fn sav_regime_sigma_constant_within_blocks() {
        let params = fit_sav_sim_params(0.05, 1500, 77).unwrap();
        let sim = simulate_sav(&params, 400, 8).unwrap();
        assert_eq!(sim.returns.len(), 400);
        // conditional quantile check in buckets: hits against the true VaR
        // come out near α
        let hits = sim
            .returns
            .iter()
            .zip(sim.true_var.iter())
            .filter(|(r, v)| r < v)
            .count() as f64;
        let rate = hits / 400.0;
        assert!((0.0..=0.15).contains(&rate), "hit rate {rate}");
    }

    #[test]
    fn sav_fitted_params_have_expected_signs() {
        let params = fit_sav_sim_params(0.05, 2000, 2024).unwrap();
        assert!(params.gamma1 >= 0.0 && params.gamma1 < 1.0);
        assert!(params.gamma2 <= 0.0, "γ2 should push VaR down after large |r|");
        let sim = simulate_sav(&params, 5000, 5).unwrap();
        let hit_rate = sim
            .returns
            .iter()
            .zip(sim.true_var.iter())
            .filter(|(r, v)| r < v)
            .count() as f64
            / 5000.0;
        assert!((hit_rate - 0.05).abs() < 0.02, "true-VaR hit rate {hit_rate}");
    }

    #[test]
    fn asset_fit_requires_history() {
        let returns = vec![0.01; 500];
        let series = AssetSeries {
            asset_id: "tiny".into(),
            dates: (0..501)
                .map(|i| {
                    chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
                        + chrono::Days::new(i as u64)
                })
                .collect(),
            prices: vec![1.0; 501],
            returns,
            externals: Default::default(),
            market_cap: None,
        };
        assert!(fit_asset_garch_for_sim(&series).is_err());
    }

    #[test]
    fn oracle_coverage_in_tiny_protocol() {
        let protocol = McProtocol {
            reps: 4,
            n: 400,
            windows: vec![200],
            levels: vec![0.05],
            refit_stride: 20,
            significance: 0.05,
            seed: 31,
        };
        let dgps = vec![Dgp::GarchNormal(GarchDgpParams::standard())];
        let models = vec![ModelSpec::new(ModelKind::Hist)];
        let out = run_monte_carlo(&dgps, &models, true, &[], &protocol).unwrap();
        assert_eq!(out.backtests.len(), 2);
        let oracle = out.backtests.iter().find(|r| r.model == ORACLE_MODEL).unwrap();
        assert_eq!(oracle.reps_ok, 4);
        assert!((oracle.mean_aoe - 1.0).abs() < 0.25);
    }
}
