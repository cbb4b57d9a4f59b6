//! `gamp sweep`: phase-plane sweep over (M/N, K/N) joining the scalar
//! state-evolution prediction with an optional finite-size empirical
//! ensemble.

use clap::Args;
use gamp_core::data::{gen_probit_data, gen_sparse_weights, Amplitude};
use gamp_core::engine::run_gamp;
use gamp_core::engine::GampConfig;
use gamp_core::error::{GampError, Result};
use gamp_core::input_channel::InputChannel;
use gamp_core::output_channel::OutputChannel;
use gamp_core::se::{
    empirical_moments, se_error_rate, se_mse, se_phase_sweep, sigma_from_moments, SweepConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated M/N values
    #[arg(long, value_delimiter = ',')]
    pub deltas: Vec<f64>,
    /// Comma-separated K/N values
    #[arg(long, value_delimiter = ',')]
    pub rhos: Vec<f64>,
    /// Zip deltas with rhos instead of taking the cartesian product
    #[arg(long)]
    pub paired: bool,
    /// Probit label-noise variance
    #[arg(long, default_value_t = 1e-2)]
    pub v: f64,
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 20)]
    pub se_iters: usize,
    #[arg(long)]
    pub seed: u64,
    /// Empirical trials per grid point (0 skips the ensemble)
    #[arg(long, default_value_t = 0)]
    pub empirical_trials: usize,
    /// Feature count N for the empirical ensemble
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
    /// Also write a gnuplot stub next to the CSV
    #[arg(long)]
    pub plot_script: Option<PathBuf>,
}

/// One finite-size trial: Bernoulli-Gaussian weights, i.i.d N(0, 1/M)
/// features, probit labels, sum-product recovery with the matched prior.
/// Returns the error-rate/MSE plug-ins of the realized estimate.
pub fn empirical_trial(
    n: usize,
    delta: f64,
    rho: f64,
    v: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let m = ((delta * n as f64).round() as usize).max(1);
    let k = ((rho * n as f64).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = gen_sparse_weights(n, k, Amplitude::Gaussian, &mut rng)?;
    let ds = gen_probit_data(&w, m, 1.0 / m as f64, v, &mut rng)?;

    let prior = InputChannel::BernoulliSpikeSlab {
        pi: k as f64 / n as f64,
        slab: Box::new(InputChannel::Gaussian { mean: 0.0, var: 1.0 }),
    };
    let channel = OutputChannel::Probit { v };
    let fit = run_gamp(&ds, &channel, &prior, &GampConfig::default())?;

    let mom = empirical_moments(&w, fit.state.w_hat.as_slice().unwrap(), delta, fit.state.k);
    let sigma = sigma_from_moments(&mom)?;
    let eps = se_error_rate(&sigma, &channel)?;
    Ok((eps, se_mse(&mom)))
}

/// Trial-averaged empirical (error rate, MSE) at one grid point.
pub fn empirical_point(
    n: usize,
    delta: f64,
    rho: f64,
    v: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let results: Vec<Result<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| empirical_trial(n, delta, rho, v, seed.wrapping_add(t as u64)))
        .collect();
    let mut eps_sum = 0.0;
    let mut mse_sum = 0.0;
    for r in results {
        let (e, m) = r?;
        eps_sum += e;
        mse_sum += m;
    }
    let tf = trials as f64;
    Ok((eps_sum / tf, mse_sum / tf))
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let grid: Vec<(f64, f64)> = if args.paired {
        if args.deltas.len() != args.rhos.len() {
            return Err(GampError::Config(
                "--paired needs equally many deltas and rhos".into(),
            ));
        }
        args.deltas.iter().copied().zip(args.rhos.iter().copied()).collect()
    } else {
        args.deltas
            .iter()
            .flat_map(|&d| args.rhos.iter().map(move |&r| (d, r)))
            .collect()
    };

    let cfg = SweepConfig {
        v: args.v,
        slab_var: 1.0,
        mc_samples: args.mc_samples,
        iters: args.se_iters,
        seed: args.seed,
    };
    let rows = se_phase_sweep(&grid, &cfg)?;

    let mut csv =
        String::from("delta,rho,ill_posed,se_epsilon,se_mse,emp_epsilon,emp_mse,trials,error\n");
    for (i, row) in rows.iter().enumerate() {
        let (emp_eps, emp_mse) = if args.empirical_trials > 0 && !row.ill_posed {
            let (e, m) = empirical_point(
                args.n,
                row.delta,
                row.rho,
                args.v,
                args.empirical_trials,
                args.seed.wrapping_mul(10_007).wrapping_add(i as u64 * 1_000_003),
            )?;
            (format!("{e:.8}"), format!("{m:.8e}"))
        } else {
            (String::new(), String::new())
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.delta,
            row.rho,
            row.ill_posed,
            row.epsilon.map_or(String::new(), |v| format!("{v:.8}")),
            row.mse.map_or(String::new(), |v| format!("{v:.8e}")),
            emp_eps,
            emp_mse,
            args.empirical_trials,
            row.error.as_deref().unwrap_or(""),
        ));
    }
    std::fs::write(&args.out, &csv)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());

    if let Some(script) = &args.plot_script {
        let stub = format!(
            "# gnuplot stub: level curves of the predicted error rate\n\
             set datafile separator ','\n\
             set xlabel 'M/N'\nset ylabel 'K/N'\n\
             set dgrid3d\nset contour base\nset view map\n\
             splot '{}' using 1:2:4 with lines title 'error rate'\n",
            args.out.display()
        );
        std::fs::write(script, stub)?;
    }
    Ok(())
}
