//! Scalar state evolution: predicts the asymptotic joint Gaussian law of the
//! true score Z = xᵀw and the GAMP score Ẑᵏ = xᵀŵᵏ, and from it the test-error
//! rate and weight MSE, without running the full matrix algorithm.
//!
//! Features are modeled i.i.d. N(0, 1/M), so second moments of the weight
//! marginals map to score covariances through the ratio δ = M/N alone. The
//! fixed-point recursion itself is evaluated two ways: a Monte-Carlo scalar
//! recursion over the decoupled per-coordinate channels (default, cheap), and
//! an empirical plug-in that takes sample moments from actual finite-size runs
//! (used for cross-validation of the predictor).

use crate::error::{GampError, Result};
use crate::input_channel::InputChannel;
use crate::numeric::{adaptive_simpson, normal_pdf, GaussHermite};
use crate::output_channel::OutputChannel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::rand_core::SeedableRng;

const VAR_FLOOR: f64 = 1e-11;
const VAR_CEIL: f64 = 1e11;

/// Scalar moments of the (W, Ŵᵏ) joint at recursion step k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SEMoments {
    pub e_w: f64,
    pub var_w: f64,
    pub e_what: f64,
    pub var_what: f64,
    pub cov_w_what: f64,
    /// Label-to-feature ratio M/N.
    pub delta: f64,
    pub k: usize,
}

impl SEMoments {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(GampError::Domain(format!(
                "label-to-feature ratio must be positive, got {}",
                self.delta
            )));
        }
        if self.var_w < 0.0 || self.var_what < 0.0 {
            return Err(GampError::Domain(format!(
                "negative variance in moments: var_w={}, var_what={}",
                self.var_w, self.var_what
            )));
        }
        let bound = (self.var_w * self.var_what).sqrt() + 1e-12;
        if self.cov_w_what.abs() > bound {
            return Err(GampError::Domain(format!(
                "covariance {} exceeds Cauchy-Schwarz bound {}",
                self.cov_w_what, bound
            )));
        }
        Ok(())
    }
}

/// 2x2 covariance of the score pair (Z, Ẑᵏ); symmetric, so only the upper
/// triangle is stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaZ {
    pub s11: f64,
    pub s12: f64,
    pub s22: f64,
}

/// Score covariance from weight moments: with x_mn ~ N(0, 1/M) the score
/// second moments are the weight second moments divided by δ.
pub fn sigma_from_moments(m: &SEMoments) -> Result<SigmaZ> {
    m.validate()?;
    let d = m.delta;
    let s11 = (m.var_w + m.e_w * m.e_w) / d;
    let s12 = (m.cov_w_what + m.e_w * m.e_what) / d;
    let s22 = (m.var_what + m.e_what * m.e_what) / d;
    let scale = s11.max(s22).max(1.0);
    let det = s11 * s22 - s12 * s12;
    if s11 < -1e-12 * scale || s22 < -1e-12 * scale || det < -1e-10 * scale * scale {
        return Err(GampError::Numeric(format!(
            "score covariance is indefinite: s11={s11}, s12={s12}, s22={s22}"
        )));
    }
    Ok(SigmaZ { s11, s12, s22 })
}

/// Predicted generalization error of the sign-of-score classifier.
///
/// For the probit channel this is the orthant probability in closed form:
/// ε = 1/2 − arcsin(ρ̃)/π with ρ̃ the correlation between the noisy true score
/// Z + N(0, v) and the estimated score. Other channels fall back to 2-D
/// quadrature of E[ P(Y ≠ sgn(Ẑ)) ] under the Gaussian score pair.
pub fn se_error_rate(sigma: &SigmaZ, channel: &OutputChannel) -> Result<f64> {
    if !(sigma.s22 > 0.0) {
        return Err(GampError::Domain(
            "estimated-score variance must be positive for an error rate".into(),
        ));
    }
    match channel {
        OutputChannel::Probit { v } => Ok(probit_error_rate(sigma, *v)),
        _ => generic_error_rate(sigma, channel),
    }
}

fn probit_error_rate(sigma: &SigmaZ, v: f64) -> f64 {
    let rho = (sigma.s12 / ((sigma.s11 + v) * sigma.s22).sqrt()).clamp(-1.0, 1.0);
    0.5 - rho.asin() / std::f64::consts::PI
}

/// ε = ∫ φ(ẑ; 0, Σ₂₂) · P(Y = −sgn(ẑ) | ẑ) dẑ where P(Y = y | ẑ) averages the
/// channel's flip probability over the conditional Z | Ẑ = ẑ Gaussian. The
/// outer integrand is smooth on each half-line, so the split at 0 plus
/// adaptive quadrature over ±10 standard deviations is accurate well past
/// 1e-6.
fn generic_error_rate(sigma: &SigmaZ, channel: &OutputChannel) -> Result<f64> {
    let s22 = sigma.s22;
    let cond_mean = sigma.s12 / s22;
    let cond_var = (sigma.s11 - sigma.s12 * sigma.s12 / s22).max(0.0);
    let quad = GaussHermite::new(63);
    let sd2 = s22.sqrt();
    let p_plus = |zh: f64| -> f64 {
        quad.expect(cond_mean * zh, cond_var, |z| channel.prob_positive(z))
    };
    let neg = |zh: f64| normal_pdf(zh / sd2) / sd2 * p_plus(zh);
    let pos = |zh: f64| normal_pdf(zh / sd2) / sd2 * (1.0 - p_plus(zh));
    let lim = 10.0 * sd2;
    let e_neg = adaptive_simpson(&neg, -lim, 0.0, 1e-10);
    let e_pos = adaptive_simpson(&pos, 0.0, lim, 1e-10);
    Ok((e_neg + e_pos).clamp(0.0, 1.0))
}

/// Predicted per-coordinate weight MSE E[(W − Ŵᵏ)²].
pub fn se_mse(m: &SEMoments) -> f64 {
    m.var_w + m.e_w * m.e_w + m.var_what + m.e_what * m.e_what
        - 2.0 * (m.cov_w_what + m.e_w * m.e_what)
}

/// Monte-Carlo scalar state-evolution recursion.
///
/// Each iteration replays the two decoupled scalar channels of the matrix
/// algorithm on `mc_samples` coordinate/example draws:
/// output side — P̂ ~ N(0, Σ₁₁ − τ_p), Z | P̂ ~ N(P̂, τ_p) with τ_p = τ̄_w/δ,
/// Y ~ p(y|Z), giving the averaged inverse-variance τ̄_s and hence τ_r = 1/τ̄_s;
/// input side — R = W + √τ_r·ξ pushed through the prior's posterior-mean map,
/// whose sample moments against W form the next SEMoments. Common random
/// numbers are reused across iterations so the trajectory is smooth in k.
pub fn se_recursion(
    prior: &InputChannel,
    channel: &OutputChannel,
    delta: f64,
    mc_samples: usize,
    iters: usize,
    seed: u64,
) -> Result<Vec<SEMoments>> {
    prior.validate()?;
    channel.validate()?;
    if !(delta > 0.0) {
        return Err(GampError::Config(format!(
            "label-to-feature ratio must be positive, got {delta}"
        )));
    }
    if mc_samples < 10_000 {
        return Err(GampError::Config(format!(
            "need at least 10000 Monte-Carlo samples for a stable recursion, got {mc_samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mc_samples;
    let w: Vec<f64> = (0..n).map(|_| prior.sample(&mut rng)).collect();
    let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let gp: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let gz: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();

    let nf = n as f64;
    let e_w = w.iter().sum::<f64>() / nf;
    let m2_w = w.iter().map(|&x| x * x).sum::<f64>() / nf;
    let var_w = (m2_w - e_w * e_w).max(0.0);

    let mut tau_w = prior.prior_var().clamp(VAR_FLOOR, VAR_CEIL);
    let mut out = Vec::with_capacity(iters);

    for k in 1..=iters {
        let tau_p = (tau_w / delta).clamp(VAR_FLOOR, VAR_CEIL);
        // score second moment Σ₁₁ comes from the true weight law and never
        // changes; the estimated-score part is whatever Z retains after the
        // pseudo-prior noise τ_p is peeled off
        let s11 = m2_w / delta;
        let var_p = (s11 - tau_p).max(0.0);
        let sd_p = var_p.sqrt();
        let sd_z = tau_p.sqrt();

        let mut sum_s = 0.0;
        for i in 0..n {
            let p_hat = sd_p * gp[i];
            let z = p_hat + sd_z * gz[i];
            let y = if u[i] < channel.prob_positive(z) { 1.0 } else { -1.0 };
            let m = channel.spg(y, p_hat, tau_p).moments;
            let tau_z = m.var.clamp(0.0, tau_p);
            sum_s += (1.0 - tau_z / tau_p) / tau_p;
        }
        let tau_s = (sum_s / nf).clamp(1.0 / VAR_CEIL, 1.0 / VAR_FLOOR);
        let tau_r = 1.0 / tau_s;

        let sd_r = tau_r.sqrt();
        let mut sum_wh = 0.0;
        let mut sum_wh2 = 0.0;
        let mut sum_cross = 0.0;
        let mut sum_tw = 0.0;
        for i in 0..n {
            let r = w[i] + sd_r * xi[i];
            let m = prior.spg(r, tau_r);
            sum_wh += m.mean;
            sum_wh2 += m.mean * m.mean;
            sum_cross += w[i] * m.mean;
            sum_tw += m.var;
        }
        let e_what = sum_wh / nf;
        let what_second = sum_wh2 / nf;
        let cov = sum_cross / nf - e_w * e_what;
        tau_w = (sum_tw / nf).clamp(VAR_FLOOR, VAR_CEIL);

        let var_what = what_second - e_what * e_what;
        if var_what < -1e-10 {
            return Err(GampError::Numeric(format!(
                "state evolution produced a negative estimator variance {var_what} at step {k}"
            )));
        }
        let m = SEMoments {
            e_w,
            var_w,
            e_what,
            var_what: var_what.max(0.0),
            cov_w_what: cov,
            delta,
            k,
        };
        out.push(m);
    }
    Ok(out)
}

/// Empirical plug-in: sample moments of (true weights, one estimate) in the
/// same shape the recursion emits, for ensemble cross-checks against actual
/// finite-size runs.
pub fn empirical_moments(w_true: &[f64], w_hat: &[f64], delta: f64, k: usize) -> SEMoments {
    let nf = w_true.len() as f64;
    let e_w = w_true.iter().sum::<f64>() / nf;
    let e_what = w_hat.iter().sum::<f64>() / nf;
    let var_w = w_true.iter().map(|&x| (x - e_w) * (x - e_w)).sum::<f64>() / nf;
    let var_what = w_hat.iter().map(|&x| (x - e_what) * (x - e_what)).sum::<f64>() / nf;
    let cov = w_true
        .iter()
        .zip(w_hat)
        .map(|(&a, &b)| (a - e_w) * (b - e_what))
        .sum::<f64>()
        / nf;
    SEMoments {
        e_w,
        var_w,
        e_what,
        var_what,
        cov_w_what: cov,
        delta,
        k,
    }
}

/// Averages an ensemble of per-run moment plug-ins coordinate-wise, the
/// empirical analogue of one recursion step's output.
pub fn average_moments(rows: &[SEMoments]) -> Option<SEMoments> {
    let first = rows.first()?;
    let nf = rows.len() as f64;
    Some(SEMoments {
        e_w: rows.iter().map(|m| m.e_w).sum::<f64>() / nf,
        var_w: rows.iter().map(|m| m.var_w).sum::<f64>() / nf,
        e_what: rows.iter().map(|m| m.e_what).sum::<f64>() / nf,
        var_what: rows.iter().map(|m| m.var_what).sum::<f64>() / nf,
        cov_w_what: rows.iter().map(|m| m.cov_w_what).sum::<f64>() / nf,
        delta: first.delta,
        k: first.k,
    })
}

/// Configuration for a phase-plane sweep over (M/N, K/N) grid points with a
/// Bernoulli-Gaussian weight law and probit labels.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Probit label-noise variance.
    pub v: f64,
    /// Slab variance of the Bernoulli-Gaussian weight law.
    pub slab_var: f64,
    pub mc_samples: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            v: 1e-2,
            slab_var: 1.0,
            mc_samples: 100_000,
            iters: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    /// Label-to-feature ratio M/N.
    pub delta: f64,
    /// Nonzero-feature ratio K/N.
    pub rho: f64,
    pub epsilon: Option<f64>,
    pub mse: Option<f64>,
    /// True when K > M: more discriminative features than labels, skipped.
    pub ill_posed: bool,
    pub error: Option<String>,
}

/// Runs the recursion at each grid point; points with more discriminative
/// features than labels are flagged ill-posed and skipped, per-point failures
/// are recorded without aborting the sweep.
pub fn se_phase_sweep(grid: &[(f64, f64)], cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(GampError::Config("phase sweep needs a nonempty grid".into()));
    }
    let channel = OutputChannel::Probit { v: cfg.v };
    let mut rows = Vec::with_capacity(grid.len());
    for (i, &(delta, rho)) in grid.iter().enumerate() {
        if rho > delta {
            rows.push(SweepRow {
                delta,
                rho,
                epsilon: None,
                mse: None,
                ill_posed: true,
                error: None,
            });
            continue;
        }
        let prior = InputChannel::BernoulliSpikeSlab {
            pi: rho,
            slab: Box::new(InputChannel::Gaussian {
                mean: 0.0,
                var: cfg.slab_var,
            }),
        };
        let point = se_recursion(
            &prior,
            &channel,
            delta,
            cfg.mc_samples,
            cfg.iters,
            cfg.seed.wrapping_add(i as u64),
        )
        .and_then(|trace| {
            let last = trace.last().ok_or_else(|| {
                GampError::Numeric("empty recursion trace".into())
            })?;
            let sigma = sigma_from_moments(last)?;
            let eps = se_error_rate(&sigma, &channel)?;
            Ok((eps, se_mse(last)))
        });
        match point {
            Ok((eps, mse)) => rows.push(SweepRow {
                delta,
                rho,
                epsilon: Some(eps),
                mse: Some(mse),
                ill_posed: false,
                error: None,
            }),
            Err(e) => rows.push(SweepRow {
                delta,
                rho,
                epsilon: None,
                mse: None,
                ill_posed: false,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(rows)
}

/// CSV table of sweep rows for level-curve plotting.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("delta,rho,epsilon,mse,ill_posed,error\n");
    for r in rows {
        let eps = r.epsilon.map_or(String::new(), |v| format!("{v:.8}"));
        let mse = r.mse.map_or(String::new(), |v| format!("{v:.8e}"));
        let err = r.error.as_deref().unwrap_or("");
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.delta, r.rho, eps, mse, r.ill_posed, err
        ));
    }
    s
}
