//! Expectation-maximization tuning of channel hyperparameters around the
//! message-passing engine: the posterior moments from a (partial) run act as
//! the E-step surrogate, and closed-form or root-found M-steps update the
//! sharpness α, probit noise v, corruption rate γ, spike-and-slab (π, μ, σ²),
//! and the Laplacian rate λ₁.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{GampConfig, GampResult, GampRunner, Mode};
use crate::error::{GampError, Result};
use crate::input_channel::{elastic_net_abs_mean, InputChannel};
use crate::numeric::{pdf_over_cdf, GaussHermite};
use crate::output_channel::OutputChannel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunableParam {
    Alpha,
    ProbitV,
    Gamma,
    Pi,
    SlabMean,
    SlabVar,
    Lambda1,
}

impl TunableParam {
    pub fn name(&self) -> &'static str {
        match self {
            TunableParam::Alpha => "alpha",
            TunableParam::ProbitV => "v",
            TunableParam::Gamma => "gamma",
            TunableParam::Pi => "pi",
            TunableParam::SlabMean => "slab_mean",
            TunableParam::SlabVar => "slab_var",
            TunableParam::Lambda1 => "lambda1",
        }
    }
}

/// When the M-step runs relative to the engine iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cadence {
    /// One parameter update per engine iteration (sum-product default).
    PerIteration,
    /// One full engine convergence per EM iteration (max-sum default).
    PerRun,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    pub em_iters: usize,
    pub gamp: GampConfig,
    pub tuned: Vec<TunableParam>,
    /// Default cadence follows the engine mode when None.
    pub cadence: Option<Cadence>,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { em_iters: 5, gamp: GampConfig::default(), tuned: Vec::new(), cadence: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaRow {
    pub em_iter: usize,
    pub name: &'static str,
    pub value: f64,
}

#[derive(Debug)]
pub struct EmResult {
    pub output: OutputChannel,
    pub input: InputChannel,
    pub gamp: GampResult,
    pub theta_trace: Vec<ThetaRow>,
    /// Names of parameters whose root-finders hit a bracket boundary.
    pub boundary_flags: Vec<&'static str>,
}

fn gh63() -> GaussHermite {
    GaussHermite::new(63)
}

/// Root of the sharpness score equation
/// 0 = Σ_m [½(ẑ_m y_m − ξ_m) + ξ_m/(1+exp(αξ_m))]
/// by safeguarded Newton on the bracket (1e-6, 1e6). The score is strictly
/// decreasing in α, so a sign check at the ends settles boundary cases.
/// Returns (alpha, hit_boundary).
pub fn update_alpha(z_hats: &[f64], xis: &[f64], ys: &[f64], alpha_old: f64) -> (f64, bool) {
    let (lo, hi) = (1e-6, 1e6);
    let g = |a: f64| -> f64 {
        z_hats
            .iter()
            .zip(xis)
            .zip(ys)
            .map(|((&z, &xi), &y)| 0.5 * (z * y - xi) + xi * crate::numeric::sigmoid(-a * xi))
            .sum()
    };
    let gp = |a: f64| -> f64 {
        xis.iter()
            .map(|&xi| {
                let s = crate::numeric::sigmoid(a * xi);
                -xi * xi * s * (1.0 - s)
            })
            .sum()
    };
    if g(lo) <= 0.0 {
        return (lo, true);
    }
    if g(hi) >= 0.0 {
        return (hi, true);
    }
    let m = z_hats.len() as f64;
    let tol = 1e-9 * m.max(1.0);
    let mut a = alpha_old.clamp(lo, hi);
    let (mut bl, mut bh) = (lo, hi);
    for _ in 0..200 {
        let ga = g(a);
        if ga.abs() < tol {
            return (a, false);
        }
        if ga > 0.0 {
            bl = a;
        } else {
            bh = a;
        }
        let d = gp(a);
        let mut next = if d < 0.0 { a - ga / d } else { f64::NAN };
        if !(next > bl && next < bh) {
            next = 0.5 * (bl + bh);
        }
        a = next;
    }
    (a, false)
}

/// Expected derivative of the probit log-likelihood in its noise variance,
/// under the label-tilted Gaussian posterior q(z) ∝ Φ(y z/√v_old)·N(z; p̂, τ_p):
/// E_q[ −(c/(2v))·φ(c)/Φ(c) ] with c = y z/√v, summed over examples.
fn probit_v_residual(
    quad: &GaussHermite,
    p_hats: &[f64],
    tau_ps: &[f64],
    ys: &[f64],
    v_old: f64,
    v: f64,
) -> f64 {
    let sv_old = v_old.sqrt();
    let sv = v.sqrt();
    let mut total = 0.0;
    for ((&p, &t), &y) in p_hats.iter().zip(tau_ps).zip(ys) {
        let sd = t.sqrt();
        let mut num = 0.0;
        let mut den = 0.0;
        for (&x, &w) in quad.nodes.iter().zip(&quad.weights) {
            let z = p + sd * x;
            let tilt = crate::numeric::normal_cdf(y * z / sv_old);
            let c = y * z / sv;
            num += w * tilt * (-(c / (2.0 * v)) * pdf_over_cdf(c));
            den += w * tilt;
        }
        if den > 0.0 {
            total += num / den;
        }
    }
    total
}

/// Noise-variance M-step for the probit channel: bracketed bisection in
/// log v on (1e-8, 1e8). Returns (v, hit_boundary).
pub fn update_probit_v(p_hats: &[f64], tau_ps: &[f64], ys: &[f64], v_old: f64) -> (f64, bool) {
    let quad = gh63();
    let r = |v: f64| probit_v_residual(&quad, p_hats, tau_ps, ys, v_old, v);
    let (lo, hi) = (1e-8_f64, 1e8_f64);
    let r_lo = r(lo);
    let r_hi = r(hi);
    // the residual is dJ/dv: negative everywhere means the likelihood keeps
    // improving as v shrinks (separable-data degeneracy) — clamp at v → 0
    // at tiny v the per-example terms can underflow to exactly zero, so the
    // comparisons are inclusive
    if r_lo <= 0.0 && r_hi <= 0.0 {
        return (lo, true);
    }
    if r_lo >= 0.0 && r_hi >= 0.0 {
        return (hi, true);
    }
    let m = ys.len() as f64;
    let tol = 1e-8 * m.max(1.0);
    let (mut a, mut b) = (lo.ln(), hi.ln());
    // orient so that r(exp(a)) > 0
    if r_lo < 0.0 {
        std::mem::swap(&mut a, &mut b);
    }
    let mut mid = 0.5 * (a + b);
    for _ in 0..200 {
        mid = 0.5 * (a + b);
        let rm = r(mid.exp());
        if rm.abs() < tol {
            break;
        }
        if rm > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    (mid.exp(), false)
}

/// Corruption-rate M-step: the mean posterior corruption responsibility,
/// clamped strictly below 1/2 for identifiability.
pub fn update_gamma(responsibilities: &[f64]) -> f64 {
    if responsibilities.is_empty() {
        return 0.0;
    }
    let g = responsibilities.iter().sum::<f64>() / responsibilities.len() as f64;
    g.clamp(0.0, 0.5 - 1e-6)
}

/// Spike-and-slab M-step by responsibility-weighted moment matching.
/// Inputs are per-coordinate posterior (π'_n, ŵ_n, τ_w,n); returns
/// (π, slab mean, slab variance).
pub fn update_spike_slab(
    nonzero_probs: &[f64],
    w_hats: &[f64],
    tau_ws: &[f64],
) -> (f64, f64, f64) {
    let n = nonzero_probs.len() as f64;
    let sum_pi: f64 = nonzero_probs.iter().sum();
    let pi = (sum_pi / n).clamp(0.0, 1.0);
    if sum_pi <= 1e-12 {
        return (pi, 0.0, 1.0);
    }
    // slab-conditional moments: E[W|on] = ŵ/π', E[W²|on] = (τ_w+ŵ²)/π',
    // so the responsibility-weighted sums telescope
    let mu = w_hats.iter().sum::<f64>() / sum_pi;
    let second: f64 = w_hats.iter().zip(tau_ws).map(|(&w, &t)| t + w * w).sum::<f64>() / sum_pi;
    let sigma2 = (second - mu * mu).max(1e-12);
    (pi, mu, sigma2)
}

/// Laplacian-rate M-step: λ₁ = N / Σ_n E[|W_n|]. Returns (λ₁, flagged);
/// a vanishing denominator leaves λ₁ unchanged with the flag set.
pub fn update_lambda1(abs_means: &[f64], lambda_old: f64) -> (f64, bool) {
    let s: f64 = abs_means.iter().sum();
    if s <= 0.0 {
        return (lambda_old, true);
    }
    (abs_means.len() as f64 / s, false)
}

fn set_alpha(output: &mut OutputChannel, a: f64) {
    match output {
        OutputChannel::Logistic { alpha } => *alpha = a,
        OutputChannel::Robust { inner, .. } => set_alpha(inner, a),
        _ => {}
    }
}

fn set_probit_v(output: &mut OutputChannel, v_new: f64) {
    match output {
        OutputChannel::Probit { v } => *v = v_new,
        OutputChannel::Robust { inner, .. } => set_probit_v(inner, v_new),
        _ => {}
    }
}

fn get_probit_v(output: &OutputChannel) -> Option<f64> {
    match output {
        OutputChannel::Probit { v } => Some(*v),
        OutputChannel::Robust { inner, .. } => get_probit_v(inner),
        _ => None,
    }
}

fn get_alpha(output: &OutputChannel) -> Option<f64> {
    match output {
        OutputChannel::Logistic { alpha } => Some(*alpha),
        OutputChannel::Robust { inner, .. } => get_alpha(inner),
        _ => None,
    }
}

fn validate_mask(
    tuned: &[TunableParam],
    output: &OutputChannel,
    input: &InputChannel,
    mode: Mode,
) -> Result<()> {
    for p in tuned {
        let ok = match p {
            TunableParam::Alpha => mode == Mode::SumProduct && get_alpha(output).is_some(),
            TunableParam::ProbitV => get_probit_v(output).is_some(),
            TunableParam::Gamma => matches!(output, OutputChannel::Robust { .. }),
            TunableParam::Pi | TunableParam::SlabMean | TunableParam::SlabVar => matches!(
                input,
                InputChannel::BernoulliSpikeSlab { slab, .. }
                    if matches!(**slab, InputChannel::Gaussian { .. })
            ),
            TunableParam::Lambda1 => matches!(
                input,
                InputChannel::Laplacian { .. } | InputChannel::ElasticNet { .. }
            ),
        };
        if !ok {
            return Err(GampError::Config(format!(
                "parameter '{}' has no update rule for the configured channels/mode",
                p.name()
            )));
        }
    }
    Ok(())
}

struct MStepCtx<'a> {
    runner: &'a GampRunner<'a>,
    ys: &'a Array1<f64>,
}

fn apply_m_step(
    ctx: &MStepCtx,
    tuned: &[TunableParam],
    output: &mut OutputChannel,
    input: &mut InputChannel,
    flags: &mut Vec<&'static str>,
) {
    let st = ctx.runner.state();
    for p in tuned {
        match p {
            TunableParam::Alpha => {
                if let Some(xis) = ctx.runner.side.xis.as_ref() {
                    let (a, flagged) = update_alpha(
                        st.z_hat.as_slice().unwrap(),
                        xis.as_slice().unwrap(),
                        ctx.ys.as_slice().unwrap(),
                        get_alpha(output).unwrap_or(1.0),
                    );
                    if flagged {
                        flags.push("alpha");
                    }
                    set_alpha(output, a);
                }
            }
            TunableParam::ProbitV => {
                let v_old = get_probit_v(output).unwrap_or(1.0);
                let (v, flagged) = update_probit_v(
                    st.p_hat.as_slice().unwrap(),
                    st.tau_p.as_slice().unwrap(),
                    ctx.ys.as_slice().unwrap(),
                    v_old,
                );
                if flagged {
                    flags.push("v");
                }
                set_probit_v(output, v);
            }
            TunableParam::Gamma => {
                if let Some(rhos) = ctx.runner.side.corruption_probs.as_ref() {
                    let g = update_gamma(rhos.as_slice().unwrap());
                    if let OutputChannel::Robust { gamma, .. } = output {
                        *gamma = g;
                    }
                }
            }
            TunableParam::Pi | TunableParam::SlabMean | TunableParam::SlabVar => {
                if let Some(pis) = ctx.runner.side.nonzero_prob.as_ref() {
                    let (pi_new, mu_new, s2_new) = update_spike_slab(
                        pis.as_slice().unwrap(),
                        st.w_hat.as_slice().unwrap(),
                        st.tau_w.as_slice().unwrap(),
                    );
                    if let InputChannel::BernoulliSpikeSlab { pi, slab } = input {
                        if tuned.contains(&TunableParam::Pi) {
                            *pi = pi_new;
                        }
                        if let InputChannel::Gaussian { mean, var } = slab.as_mut() {
                            if tuned.contains(&TunableParam::SlabMean) {
                                *mean = mu_new;
                            }
                            if tuned.contains(&TunableParam::SlabVar) {
                                *var = s2_new;
                            }
                        }
                    }
                }
            }
            TunableParam::Lambda1 => {
                let (l1_old, l2) = match input {
                    InputChannel::Laplacian { lambda1 } => (*lambda1, 0.0),
                    InputChannel::ElasticNet { lambda1, lambda2 } => (*lambda1, *lambda2),
                    _ => continue,
                };
                let abs: Vec<f64> = st
                    .r_hat
                    .iter()
                    .zip(st.tau_r.iter())
                    .map(|(&r, &t)| elastic_net_abs_mean(r, t, l1_old, l2))
                    .collect();
                let (l1, flagged) = update_lambda1(&abs, l1_old);
                if flagged {
                    flags.push("lambda1");
                }
                match input {
                    InputChannel::Laplacian { lambda1 } => *lambda1 = l1,
                    InputChannel::ElasticNet { lambda1, .. } => *lambda1 = l1,
                    _ => {}
                }
            }
        }
    }
}

fn record_theta(trace: &mut Vec<ThetaRow>, em_iter: usize, output: &OutputChannel, input: &InputChannel, tuned: &[TunableParam]) {
    for p in tuned {
        let value = match p {
            TunableParam::Alpha => get_alpha(output).unwrap_or(f64::NAN),
            TunableParam::ProbitV => get_probit_v(output).unwrap_or(f64::NAN),
            TunableParam::Gamma => match output {
                OutputChannel::Robust { gamma, .. } => *gamma,
                _ => f64::NAN,
            },
            TunableParam::Pi => match input {
                InputChannel::BernoulliSpikeSlab { pi, .. } => *pi,
                _ => f64::NAN,
            },
            TunableParam::SlabMean => match input {
                InputChannel::BernoulliSpikeSlab { slab, .. } => match slab.as_ref() {
                    InputChannel::Gaussian { mean, .. } => *mean,
                    _ => f64::NAN,
                },
                _ => f64::NAN,
            },
            TunableParam::SlabVar => match input {
                InputChannel::BernoulliSpikeSlab { slab, .. } => match slab.as_ref() {
                    InputChannel::Gaussian { var, .. } => *var,
                    _ => f64::NAN,
                },
                _ => f64::NAN,
            },
            TunableParam::Lambda1 => match input {
                InputChannel::Laplacian { lambda1 }
                | InputChannel::ElasticNet { lambda1, .. } => *lambda1,
                _ => f64::NAN,
            },
        };
        trace.push(ThetaRow { em_iter, name: p.name(), value });
    }
}

/// Alternate the engine's E-step surrogate with M-step parameter updates.
/// With an empty mask this is a single plain run.
pub fn em_fit(
    dataset: &Dataset,
    output0: &OutputChannel,
    input0: &InputChannel,
    config: &EmConfig,
) -> Result<EmResult> {
    validate_mask(&config.tuned, output0, input0, config.gamp.mode)?;
    let mut output = output0.clone();
    let mut input = input0.clone();
    let mut theta_trace = Vec::new();
    let mut flags: Vec<&'static str> = Vec::new();
    record_theta(&mut theta_trace, 0, &output, &input, &config.tuned);

    if config.tuned.is_empty() {
        let gamp = crate::engine::run_gamp(dataset, &output, &input, &config.gamp)?;
        return Ok(EmResult { output, input, gamp, theta_trace, boundary_flags: flags });
    }

    let cadence = config.cadence.unwrap_or(match config.gamp.mode {
        Mode::SumProduct => Cadence::PerIteration,
        Mode::MaxSum => Cadence::PerRun,
    });

    match cadence {
        Cadence::PerIteration => {
            let mut runner = GampRunner::new(dataset, &output, &input, &config.gamp)?;
            let mut converged = false;
            for k in 0..config.gamp.max_iter {
                let rel = runner.step(&output, &input)?;
                {
                    let ctx = MStepCtx { runner: &runner, ys: &dataset.y };
                    apply_m_step(&ctx, &config.tuned, &mut output, &mut input, &mut flags);
                }
                record_theta(&mut theta_trace, k + 1, &output, &input, &config.tuned);
                if rel < config.gamp.tol {
                    converged = true;
                    break;
                }
            }
            Ok(EmResult {
                output,
                input,
                gamp: runner.into_result(converged),
                theta_trace,
                boundary_flags: flags,
            })
        }
        Cadence::PerRun => {
            let mut last: Option<GampResult> = None;
            for it in 0..config.em_iters {
                let mut runner = GampRunner::new(dataset, &output, &input, &config.gamp)?;
                let mut converged = false;
                for _ in 0..config.gamp.max_iter {
                    let rel = runner.step(&output, &input)?;
                    if rel < config.gamp.tol {
                        converged = true;
                        break;
                    }
                }
                {
                    let ctx = MStepCtx { runner: &runner, ys: &dataset.y };
                    apply_m_step(&ctx, &config.tuned, &mut output, &mut input, &mut flags);
                }
                record_theta(&mut theta_trace, it + 1, &output, &input, &config.tuned);
                last = Some(runner.into_result(converged));
            }
            // final fit under the tuned parameters
            let gamp = crate::engine::run_gamp(dataset, &output, &input, &config.gamp)?;
            let _ = last;
            Ok(EmResult { output, input, gamp, theta_trace, boundary_flags: flags })
        }
    }
}

/// Write the θ trace as CSV (em_iter, parameter, value).
pub fn theta_trace_csv(trace: &[ThetaRow]) -> String {
    let mut s = String::from("em_iter,parameter,value\n");
    for row in trace {
        s.push_str(&format!("{},{},{:.17e}\n", row.em_iter, row.name, row.value));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{log_normal_cdf, sigmoid};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alpha_zero_correlation_hits_lower_bracket() {
        // ẑ y = 0 with common ξ: score at any α>0 is ξ(σ(-αξ) - ½) < 0
        let z = [0.0, 0.0, 0.0];
        let xi = [1.0, 1.0, 1.0];
        let y = [1.0, -1.0, 1.0];
        let (a, flagged) = update_alpha(&z, &xi, &y, 1.0);
        assert!(flagged);
        assert_eq!(a, 1e-6);
    }

    #[test]
    fn alpha_tanh_identity() {
        // single example, ξ = 1: root satisfies ẑy = tanh(α/2)
        let target = 0.5_f64;
        let zy = (target / 2.0).tanh();
        let (a, flagged) = update_alpha(&[zy], &[1.0], &[1.0], 1.0);
        assert!(!flagged);
        assert!((a - target).abs() < 1e-6, "α={a}");
        // the documented anchor: ẑy = 0.4621 → α ≈ 1.0
        let (a, _) = update_alpha(&[0.46211715726000974], &[1.0], &[1.0], 2.0);
        assert!((a - 1.0).abs() < 1e-6);
    }

    #[test]
    fn alpha_residual_small_at_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 200;
        let xis: Vec<f64> = (0..m).map(|_| 0.2 + 2.0 * rng.gen::<f64>()).collect();
        let ys: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let zs: Vec<f64> = xis
            .iter()
            .zip(&ys)
            .map(|(&xi, &y)| y * xi * (0.3 * rng.gen::<f64>()))
            .collect();
        let (a, flagged) = update_alpha(&zs, &xis, &ys, 1.0);
        assert!(!flagged);
        let resid: f64 = zs
            .iter()
            .zip(&xis)
            .zip(&ys)
            .map(|((&z, &xi), &y)| 0.5 * (z * y - xi) + xi * sigmoid(-a * xi))
            .sum();
        assert!(resid.abs() < 1e-9 * m as f64);
    }

    #[test]
    fn alpha_m_step_increases_surrogate() {
        // surrogate J(α) = Σ [log σ(αξ) + α(yẑ − ξ)/2] under frozen ξ
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = 50;
        let xis: Vec<f64> = (0..m).map(|_| 0.5 + rng.gen::<f64>()).collect();
        let ys: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let zs: Vec<f64> =
            xis.iter().zip(&ys).map(|(&xi, &y)| 0.5 * y * xi * rng.gen::<f64>()).collect();
        let j = |a: f64| -> f64 {
            zs.iter()
                .zip(&xis)
                .zip(&ys)
                .map(|((&z, &xi), &y)| -crate::numeric::log1p_exp(-a * xi) + a * (y * z - xi) / 2.0)
                .sum()
        };
        let a_old = 0.3;
        let (a_new, flagged) = update_alpha(&zs, &xis, &ys, a_old);
        if !flagged {
            assert!(j(a_new) >= j(a_old) - 1e-8);
        }
    }

    #[test]
    fn gamma_update_basics() {
        assert_eq!(update_gamma(&[0.0, 0.0]), 0.0);
        assert!((update_gamma(&[0.2, 0.4]) - 0.3).abs() < 1e-15);
        // permutation invariance
        assert_eq!(update_gamma(&[0.1, 0.5, 0.3]), update_gamma(&[0.3, 0.1, 0.5]));
        // clamping below 1/2
        assert!(update_gamma(&[1.0, 1.0]) < 0.5);
    }

    #[test]
    fn spike_slab_update_basics() {
        let (pi, _, _) = update_spike_slab(&[1.0; 4], &[1.0, -1.0, 2.0, 0.5], &[0.1; 4]);
        assert_eq!(pi, 1.0);
        // exactly K on-coordinates out of N
        let pis = [1.0, 1.0, 0.0, 0.0, 0.0];
        let (pi, _, _) = update_spike_slab(&pis, &[1.0, 1.0, 0.0, 0.0, 0.0], &[0.0; 5]);
        assert!((pi - 2.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn spike_slab_moment_matching_is_exact() {
        // all-on responsibilities: slab mean/var are the sample posterior
        // mean and total second moment about it
        let w = [1.0, 3.0];
        let t = [0.5, 0.5];
        let (_, mu, s2) = update_spike_slab(&[1.0, 1.0], &w, &t);
        assert!((mu - 2.0).abs() < 1e-12);
        // E[W²] − μ² = (0.5+1 + 0.5+9)/2 − 4 = 1.5
        assert!((s2 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn lambda1_update_basics() {
        let (l, f) = update_lambda1(&[1.0, 1.0, 1.0], 5.0);
        assert!(!f);
        assert!((l - 1.0).abs() < 1e-15);
        let (l2, _) = update_lambda1(&[0.5, 0.5, 0.5], 5.0);
        assert!((l2 - 2.0 * l).abs() < 1e-12);
        let (l3, f3) = update_lambda1(&[0.0, 0.0], 5.0);
        assert!(f3);
        assert_eq!(l3, 5.0);
    }

    #[test]
    fn probit_v_residual_signs_and_root() {
        // mildly noisy scores: a root exists and the residual vanishes there
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = 300;
        let mut ph = Vec::new();
        let mut tp = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..m {
            let z: f64 = rng.gen::<f64>() * 4.0 - 2.0;
            ph.push(z);
            tp.push(0.05 + rng.gen::<f64>());
            // flip some labels so separability does not kick in
            let y = if rng.gen::<f64>() < 0.8 { z.signum() } else { -z.signum() };
            ys.push(if y == 0.0 { 1.0 } else { y });
        }
        let (v, flagged) = update_probit_v(&ph, &tp, &ys, 1.0);
        assert!(!flagged);
        let quad = gh63();
        let resid = probit_v_residual(&quad, &ph, &tp, &ys, 1.0, v);
        assert!(resid.abs() < 1e-6 * m as f64, "residual {resid}");
        // M-step surrogate J(v) = Σ E_q[log Φ(y z/√v)] should not decrease
        let j = |vv: f64| -> f64 {
            let sv = vv.sqrt();
            ph.iter()
                .zip(&tp)
                .zip(&ys)
                .map(|((&p, &t), &y)| {
                    let sd = t.sqrt();
                    let (mut num, mut den) = (0.0, 0.0);
                    for (&x, &w) in quad.nodes.iter().zip(&quad.weights) {
                        let z = p + sd * x;
                        let tilt = crate::numeric::normal_cdf(y * z);
                        num += w * tilt * log_normal_cdf(y * z / sv);
                        den += w * tilt;
                    }
                    num / den
                })
                .sum()
        };
        assert!(j(v) >= j(1.0) - 1e-8);
    }

    #[test]
    fn probit_v_separable_data_flags_boundary() {
        // every label agrees with a huge score: likelihood always improves
        // as v shrinks
        let ph = [10.0, 12.0, 9.0];
        let tp = [0.01, 0.01, 0.01];
        let ys = [1.0, 1.0, 1.0];
        let (v, flagged) = update_probit_v(&ph, &tp, &ys, 1.0);
        assert!(flagged);
        assert!(v <= 1e-8);
    }

    #[test]
    fn empty_mask_is_single_run() {
        use crate::data::{gen_probit_data, gen_sparse_weights, Amplitude};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = gen_sparse_weights(20, 5, Amplitude::Gaussian, &mut rng).unwrap();
        let ds = gen_probit_data(&w, 40, 1.0 / 20.0, 1.0, &mut rng).unwrap();
        let out = OutputChannel::Probit { v: 1.0 };
        let inp = InputChannel::Gaussian { mean: 0.0, var: 1.0 };
        let cfg = EmConfig::default();
        let res = em_fit(&ds, &out, &inp, &cfg).unwrap();
        assert_eq!(res.output, out);
        assert_eq!(res.input, inp);
        let direct = crate::engine::run_gamp(&ds, &out, &inp, &cfg.gamp).unwrap();
        assert_eq!(res.gamp.state.w_hat, direct.state.w_hat);
    }

    #[test]
    fn mask_validation_rejects_inapplicable_params() {
        use crate::data::{gen_probit_data, gen_sparse_weights, Amplitude};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = gen_sparse_weights(5, 2, Amplitude::Gaussian, &mut rng).unwrap();
        let ds = gen_probit_data(&w, 10, 0.2, 1.0, &mut rng).unwrap();
        let cfg = EmConfig {
            tuned: vec![TunableParam::Gamma],
            ..Default::default()
        };
        let out = OutputChannel::Probit { v: 1.0 };
        let inp = InputChannel::Gaussian { mean: 0.0, var: 1.0 };
        assert!(em_fit(&ds, &out, &inp, &cfg).is_err());
    }
}
