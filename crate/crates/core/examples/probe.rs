// Scratch harness for calibrating the Monte-Carlo cells. Not part of the
// test suite.

use quantvar_core::engine::{ModelKind, ModelSpec};
use quantvar_core::sim::{
    run_monte_carlo, Dgp, GarchDgpParams, McProtocol, SavSimParams,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("garch");
    let reps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let trees: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(100);
    let stride: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(10);

    let protocol = McProtocol {
        reps,
        n: 2000,
        windows: vec![500],
        levels: vec![0.05],
        refit_stride: stride,
        significance: 0.05,
        seed: 20_240_101,
    };

    let start = std::time::Instant::now();
    match which {
        "garch" => {
            let dgps = vec![Dgp::GarchNormal(GarchDgpParams::standard())];
            let models = vec![
                ModelSpec::new(ModelKind::Grf).with_trees(trees),
                ModelSpec::new(ModelKind::Qrf).with_trees(trees),
                ModelSpec::new(ModelKind::Hist),
            ];
            let out = run_monte_carlo(&dgps, &models, true, &[], &protocol).unwrap();
            for row in &out.backtests {
                println!(
                    "{:10} {:8} aoe={:.3} dq_rej={:.3} dq_p={:.3} kup_rej={:.3} chr_rej={:.3} ok={} fail={}",
                    row.dgp, row.model, row.mean_aoe, row.dq_rejection_rate, row.dq_mean_p,
                    row.kupiec_rejection_rate, row.christoffersen_rejection_rate,
                    row.reps_ok, row.reps_failed
                );
            }
        }
        "btc" => {
            // candidate bitcoin-like GARCH parameters
            let omega: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(4e-5);
            let arch: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.15);
            let garch: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.84);
            let cav_stride: Option<usize> =
                args.get(8).and_then(|s| s.parse().ok());
            let dgps = vec![Dgp::GarchAssetFit(GarchDgpParams { omega, arch, garch })];
            let mut cav = ModelSpec::new(ModelKind::Cav);
            cav.refit_stride = cav_stride;
            let models = vec![
                ModelSpec::new(ModelKind::Grf).with_trees(trees),
                cav,
                ModelSpec::new(ModelKind::Hist),
            ];
            let pairs = vec![(ModelKind::Grf, ModelKind::Cav)];
            let out = run_monte_carlo(&dgps, &models, false, &pairs, &protocol).unwrap();
            for row in &out.backtests {
                println!(
                    "{:16} {:8} aoe={:.3} dq_rej={:.3} kup_rej={:.3} ok={} fail={}",
                    row.dgp, row.model, row.mean_aoe, row.dq_rejection_rate,
                    row.kupiec_rejection_rate, row.reps_ok, row.reps_failed
                );
            }
            for row in &out.cpa {
                println!(
                    "CPA {} vs {}: mean_p={:.4} n_p<0.1={} share={:.3} ok={}",
                    row.model1, row.model2, row.mean_p, row.n_p_below_10,
                    row.mean_performance_share, row.reps_ok
                );
            }
        }
        "sav" => {
            let params = quantvar_core::sim::fit_sav_sim_params(0.05, 2000, 20_240_501).unwrap();
            println!(
                "fitted SAV DGP: γ0={:.4} γ1={:.4} γ2={:.4} γ3={:.4}",
                params.gamma0, params.gamma1, params.gamma2, params.gamma3
            );
            let sets: Vec<Vec<usize>> =
                vec![vec![3], vec![3, 7], vec![3, 7, 30], vec![3, 7, 30, 60]];
            let spec = ModelSpec::new(ModelKind::Grf).with_trees(trees);
            let rows = quantvar_core::sim::covariate_selection_study(
                &params, &sets, reps, 2000, 500, &spec, stride, 99,
            )
            .unwrap();
            for row in &rows {
                println!("sd set {{{}}}: mean MSE {:.4}", row.label, row.mean_mse);
            }
        }
        "savmc" => {
            let params = quantvar_core::sim::fit_sav_sim_params(0.05, 2000, 20_240_501).unwrap();
            let dgps = vec![Dgp::SavRegime(params)];
            let models = vec![
                ModelSpec::new(ModelKind::Grf).with_trees(trees),
                ModelSpec::new(ModelKind::Qrf).with_trees(trees),
                ModelSpec::new(ModelKind::Hist),
            ];
            let out = run_monte_carlo(&dgps, &models, true, &[], &protocol).unwrap();
            for row in &out.backtests {
                println!(
                    "{:10} {:8} aoe={:.3} dq_rej={:.3} ok={} fail={}",
                    row.dgp, row.model, row.mean_aoe, row.dq_rejection_rate, row.reps_ok,
                    row.reps_failed
                );
            }
        }
        other => eprintln!("unknown probe {other}"),
    }
    eprintln!("elapsed: {:.1}s", start.elapsed().as_secs_f64());
}
