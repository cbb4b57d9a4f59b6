//! Activation-function ("output") channels: scalar posterior moments for
//! sum-product GAMP and proximal steps for max-sum GAMP, for the logistic,
//! probit, hinge, and robustified likelihoods.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{GampError, Result};
use crate::numeric::{
    log1p_exp, log_normal_cdf, log_sum_exp2, normal_cdf, pdf_over_cdf, sigmoid, GaussHermite,
};

/// Posterior mean/variance of the score plus the log normalization constant
/// log C_y = log ∫ p(y|z) N(z; p̂, τ_p) dz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMoments {
    pub mean: f64,
    pub var: f64,
    pub log_scale: f64,
}

/// Moments plus per-example side quantities consumed by the EM tuner.
#[derive(Debug, Clone, Copy)]
pub struct OutputMoments {
    pub moments: ScalarMoments,
    /// Converged variational parameter ξ (logistic channel only).
    pub xi: Option<f64>,
    /// Posterior corruption probability ρ = P(β=0 | y) (robust channel only).
    pub corruption_prob: Option<f64>,
    pub converged: bool,
}

impl OutputMoments {
    fn plain(moments: ScalarMoments) -> Self {
        OutputMoments { moments, xi: None, corruption_prob: None, converged: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OutputChannel {
    Probit { v: f64 },
    Logistic { alpha: f64 },
    Hinge,
    Robust { gamma: f64, inner: Box<OutputChannel> },
    /// Linear-Gaussian observation y = z + N(0, var); turns the engine into
    /// a regression solver and anchors the ridge-regression oracle tests.
    Gaussian { var: f64 },
}

fn gh63() -> &'static GaussHermite {
    static GH: OnceLock<GaussHermite> = OnceLock::new();
    GH.get_or_init(|| GaussHermite::new(63))
}

/// Alg.-2 fixed-point tolerance on ξ.
const LOGISTIC_XI_TOL: f64 = 1e-9;
const LOGISTIC_MAX_ITER: usize = 100;

impl OutputChannel {
    pub fn validate(&self) -> Result<()> {
        match self {
            OutputChannel::Probit { v } if *v <= 0.0 => {
                Err(GampError::Config("probit v must be > 0".into()))
            }
            OutputChannel::Logistic { alpha } if *alpha <= 0.0 => {
                Err(GampError::Config("logistic alpha must be > 0".into()))
            }
            OutputChannel::Gaussian { var } if *var <= 0.0 => {
                Err(GampError::Config("gaussian output var must be > 0".into()))
            }
            OutputChannel::Robust { gamma, inner } => {
                if !(0.0..0.5).contains(gamma) {
                    return Err(GampError::Config("robust gamma must lie in [0, 1/2)".into()));
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    /// Pointwise conditional probability p(y = +1 | z). The hinge
    /// pseudo-likelihood is normalized over y = ±1 here.
    pub fn prob_positive(&self, z: f64) -> f64 {
        match self {
            OutputChannel::Probit { v } => normal_cdf(z / v.sqrt()),
            OutputChannel::Logistic { alpha } => sigmoid(alpha * z),
            OutputChannel::Hinge => {
                let lp = -f64::max(0.0, 1.0 - z);
                let lm = -f64::max(0.0, 1.0 + z);
                sigmoid(lp - lm)
            }
            OutputChannel::Robust { gamma, inner } => {
                gamma + (1.0 - 2.0 * gamma) * inner.prob_positive(z)
            }
            OutputChannel::Gaussian { var } => normal_cdf(z / var.sqrt()),
        }
    }

    /// Sum-product scalar step: moments of p(y|z)·N(z; p̂, τ_p).
    pub fn spg(&self, y: f64, p_hat: f64, tau_p: f64) -> OutputMoments {
        debug_assert!(tau_p > 0.0);
        match self {
            OutputChannel::Probit { v } => OutputMoments::plain(probit_spg(y, p_hat, tau_p, *v)),
            OutputChannel::Logistic { alpha } => logistic_spg(
                y,
                p_hat,
                tau_p,
                *alpha,
                LOGISTIC_XI_TOL,
                LOGISTIC_MAX_ITER,
            ),
            OutputChannel::Hinge => OutputMoments::plain(hinge_spg(y, p_hat, tau_p)),
            OutputChannel::Robust { gamma, inner } => {
                let inner_out = inner.spg(y, p_hat, tau_p);
                robust_spg(y, p_hat, tau_p, *gamma, inner_out)
            }
            OutputChannel::Gaussian { var } => {
                OutputMoments::plain(gaussian_out_spg(y, p_hat, tau_p, *var))
            }
        }
    }

    /// Max-sum scalar step: prox of the negative log-likelihood, Eq-style
    /// τ_z = τ_p/(1 + τ_p·f''(ẑ)).
    pub fn msg_prox(&self, y: f64, p_hat: f64, tau_p: f64) -> ScalarMoments {
        debug_assert!(tau_p > 0.0);
        match self {
            OutputChannel::Hinge => hinge_prox(y, p_hat, tau_p),
            OutputChannel::Gaussian { .. } => {
                // quadratic loss: the prox and the posterior mean coincide
                self.spg(y, p_hat, tau_p).moments
            }
            _ => {
                let z_hat = self.prox_root(y, p_hat, tau_p);
                let denom = (1.0 + tau_p * self.loss_d2(y, z_hat)).max(1e-12);
                ScalarMoments { mean: z_hat, var: tau_p / denom, log_scale: 0.0 }
            }
        }
    }

    /// Marginal probability of y = +1 under z ~ N(z_hat, tau_z).
    pub fn predict_proba(&self, z_hat: f64, tau_z: f64) -> f64 {
        debug_assert!(tau_z >= 0.0);
        if tau_z == 0.0 {
            return self.prob_positive(z_hat);
        }
        match self {
            OutputChannel::Probit { v } => normal_cdf(z_hat / (v + tau_z).sqrt()),
            OutputChannel::Logistic { alpha } => {
                gh63().expect(z_hat, tau_z, |z| sigmoid(alpha * z))
            }
            OutputChannel::Hinge => {
                // C_y normalization machinery: P(+1) = C_{+1} / (C_{+1} + C_{-1})
                let lp = hinge_log_scale(1.0, z_hat, tau_z);
                let lm = hinge_log_scale(-1.0, z_hat, tau_z);
                sigmoid(lp - lm)
            }
            OutputChannel::Robust { gamma, inner } => {
                gamma + (1.0 - 2.0 * gamma) * inner.predict_proba(z_hat, tau_z)
            }
            OutputChannel::Gaussian { var } => normal_cdf(z_hat / (var + tau_z).sqrt()),
        }
    }

    /// Negative log-likelihood f(u) = -log p(y|u) (hinge: the un-normalized
    /// pseudo-likelihood exp(-max(0, 1-yu))).
    pub fn loss(&self, y: f64, u: f64) -> f64 {
        match self {
            OutputChannel::Probit { v } => -log_normal_cdf(y * u / v.sqrt()),
            OutputChannel::Logistic { alpha } => log1p_exp(-y * alpha * u),
            OutputChannel::Hinge => f64::max(0.0, 1.0 - y * u),
            OutputChannel::Robust { gamma, inner } => {
                -(gamma + (1.0 - 2.0 * gamma) * (-inner.loss(y, u)).exp()).ln()
            }
            OutputChannel::Gaussian { var } => (y - u) * (y - u) / (2.0 * var),
        }
    }

    fn loss_d1(&self, y: f64, u: f64) -> f64 {
        match self {
            OutputChannel::Probit { v } => {
                let sv = v.sqrt();
                -(y / sv) * pdf_over_cdf(y * u / sv)
            }
            OutputChannel::Logistic { alpha } => -y * alpha * sigmoid(-y * alpha * u),
            OutputChannel::Hinge => {
                if y * u < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            OutputChannel::Robust { gamma, inner } => {
                let pstar = (-inner.loss(y, u)).exp();
                let dpstar = -inner.loss_d1(y, u) * pstar;
                let q = gamma + (1.0 - 2.0 * gamma) * pstar;
                -(1.0 - 2.0 * gamma) * dpstar / q
            }
            OutputChannel::Gaussian { var } => (u - y) / var,
        }
    }

    fn loss_d2(&self, y: f64, u: f64) -> f64 {
        match self {
            OutputChannel::Probit { v } => {
                let c = y * u / v.sqrt();
                let h = pdf_over_cdf(c);
                h * (h + c) / v
            }
            OutputChannel::Logistic { alpha } => {
                let s = sigmoid(alpha * u);
                alpha * alpha * s * (1.0 - s)
            }
            OutputChannel::Hinge => 0.0,
            OutputChannel::Robust { gamma, inner } => {
                let f = inner.loss(y, u);
                let f1 = inner.loss_d1(y, u);
                let f2 = inner.loss_d2(y, u);
                let pstar = (-f).exp();
                let d1 = -f1 * pstar;
                let d2 = (f1 * f1 - f2) * pstar;
                let c = 1.0 - 2.0 * gamma;
                let q = gamma + c * pstar;
                // -(d²/du²) log q(u)
                -(c * d2 * q - c * c * d1 * d1) / (q * q)
            }
            OutputChannel::Gaussian { var } => 1.0 / var,
        }
    }

    /// Root of g(u) = f'(u) + (u - p̂)/τ by bracketed bisection. For the
    /// non-convex robust loss the bracket is grown outward from p̂ so the
    /// sign change nearest p̂ is the one found.
    fn prox_root(&self, y: f64, p_hat: f64, tau_p: f64) -> f64 {
        let g = |u: f64| self.loss_d1(y, u) + (u - p_hat) / tau_p;
        let g0 = g(p_hat);
        if g0 == 0.0 {
            return p_hat;
        }
        // grow the bracket on the downhill side
        let mut step = tau_p.sqrt().max(1e-3);
        let (mut lo, mut hi);
        if g0 > 0.0 {
            hi = p_hat;
            lo = p_hat - step;
            let mut tries = 0;
            while g(lo) > 0.0 {
                step *= 2.0;
                lo -= step;
                tries += 1;
                assert!(tries < 200, "prox bracket expansion failed");
            }
        } else {
            lo = p_hat;
            hi = p_hat + step;
            let mut tries = 0;
            while g(hi) < 0.0 {
                step *= 2.0;
                hi += step;
                tries += 1;
                assert!(tries < 200, "prox bracket expansion failed");
            }
        }
        let scale = 1.0 + p_hat.abs();
        for _ in 0..500 {
            let mid = 0.5 * (lo + hi);
            let gm = g(mid);
            if gm.abs() < 1e-12 || (hi - lo) < 1e-16 * scale {
                return mid;
            }
            if gm > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Table-I closed-form probit moments.
pub fn probit_spg(y: f64, p_hat: f64, tau_p: f64, v: f64) -> ScalarMoments {
    let s = (v + tau_p).sqrt();
    let c = p_hat / s;
    let h = pdf_over_cdf(y * c); // φ(c)/Φ(yc), φ even
    let mean = p_hat + y * tau_p * h / s;
    let var = tau_p - tau_p * tau_p * h * (y * c + h) / (v + tau_p);
    ScalarMoments { mean, var: var.max(0.0), log_scale: log_normal_cdf(y * c) }
}

/// Variational fixed-point loop for the logistic channel.
pub fn logistic_spg(
    y: f64,
    p_hat: f64,
    tau_p: f64,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> OutputMoments {
    let lambda = |xi: f64| {
        if (alpha * xi).abs() < 1e-6 {
            alpha * alpha / 8.0
        } else {
            (alpha / (2.0 * xi)) * (sigmoid(alpha * xi) - 0.5)
        }
    };
    let mut xi = (tau_p + p_hat * p_hat).sqrt();
    let mut z_hat = p_hat;
    let mut tau_z = tau_p;
    let mut converged = false;
    for _ in 0..max_iter {
        let lam = lambda(xi);
        tau_z = tau_p / (1.0 + 2.0 * tau_p * lam);
        z_hat = tau_z * (p_hat / tau_p + alpha * y / 2.0);
        let xi_new = (tau_z + z_hat * z_hat).sqrt();
        let delta = (xi_new - xi).abs();
        xi = xi_new;
        if delta < tol {
            converged = true;
            break;
        }
    }
    // normalization by quadrature (the variational loop does not expose it)
    let c = gh63().expect(p_hat, tau_p, |z| sigmoid(y * alpha * z));
    OutputMoments {
        moments: ScalarMoments { mean: z_hat, var: tau_z, log_scale: c.max(f64::MIN_POSITIVE).ln() },
        xi: Some(xi),
        corruption_prob: None,
        converged,
    }
}

struct HingePieces {
    wt_lower: f64,
    wt_upper: f64,
    mu_lower: f64,
    mu_upper: f64,
    v_lower: f64,
    v_upper: f64,
    log_scale: f64,
}

fn hinge_pieces(y: f64, p_hat: f64, tau_p: f64) -> HingePieces {
    let st = tau_p.sqrt();
    let alpha_y = ((1.0 - tau_p) - y * p_hat) / st;
    let beta_y = (y * p_hat - 1.0) / st;
    let delta_y = y * p_hat - 1.0 + tau_p / 2.0;
    let log_gamma_y = -delta_y + log_normal_cdf(beta_y) - log_normal_cdf(alpha_y);
    let wt_lower = sigmoid(-log_gamma_y); // (1 + γ_y)^{-1}
    let wt_upper = sigmoid(log_gamma_y); // (1 + γ_y^{-1})^{-1}
    let h_a = pdf_over_cdf(alpha_y);
    let h_b = pdf_over_cdf(beta_y);
    HingePieces {
        wt_lower,
        wt_upper,
        mu_lower: p_hat + y * (tau_p - st * h_a),
        mu_upper: p_hat + y * st * h_b,
        v_lower: (tau_p * (1.0 - h_a * (h_a + alpha_y))).max(0.0),
        v_upper: (tau_p * (1.0 - h_b * (h_b + beta_y))).max(0.0),
        log_scale: log_sum_exp2(delta_y + log_normal_cdf(alpha_y), log_normal_cdf(beta_y)),
    }
}

/// Truncated-normal mixture moments for the hinge pseudo-likelihood.
pub fn hinge_spg(y: f64, p_hat: f64, tau_p: f64) -> ScalarMoments {
    let p = hinge_pieces(y, p_hat, tau_p);
    let mean = p.wt_lower * p.mu_lower + p.wt_upper * p.mu_upper;
    let ez2 = p.wt_lower * (p.v_lower + p.mu_lower * p.mu_lower)
        + p.wt_upper * (p.v_upper + p.mu_upper * p.mu_upper);
    ScalarMoments { mean, var: (ez2 - mean * mean).max(0.0), log_scale: p.log_scale }
}

fn hinge_log_scale(y: f64, p_hat: f64, tau_p: f64) -> f64 {
    hinge_pieces(y, p_hat, tau_p).log_scale
}

/// Mixture combination for the robustified likelihood
/// γ + (1-2γ)·p*(y|z), given the non-robust channel's output.
pub fn robust_spg(
    y: f64,
    p_hat: f64,
    tau_p: f64,
    gamma: f64,
    inner: OutputMoments,
) -> OutputMoments {
    let _ = y;
    let c_star = inner.moments.log_scale.exp();
    let c_y = gamma / (gamma + (1.0 - 2.0 * gamma) * c_star);
    let z_star = inner.moments.mean;
    let t_star = inner.moments.var;
    let mean = c_y * p_hat + (1.0 - c_y) * z_star;
    let var = c_y * (tau_p + p_hat * p_hat) + (1.0 - c_y) * (t_star + z_star * z_star)
        - mean * mean;
    let rho_num = gamma * (1.0 - c_star);
    let rho_den = rho_num + (1.0 - gamma) * c_star;
    let rho = if rho_den > 0.0 { rho_num / rho_den } else { 0.0 };
    OutputMoments {
        moments: ScalarMoments {
            mean,
            var: var.max(0.0),
            log_scale: (gamma + (1.0 - 2.0 * gamma) * c_star).ln(),
        },
        xi: inner.xi,
        corruption_prob: Some(rho.clamp(0.0, 1.0)),
        converged: inner.converged,
    }
}

/// Conjugate Gaussian update for the linear-Gaussian observation channel.
fn gaussian_out_spg(y: f64, p_hat: f64, tau_p: f64, var: f64) -> ScalarMoments {
    let s = var + tau_p;
    ScalarMoments {
        mean: p_hat + tau_p * (y - p_hat) / s,
        var: tau_p * var / s,
        log_scale: {
            let d = y - p_hat;
            -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + d * d / s)
        },
    }
}

/// Closed-form hinge prox: f(u) = max(0, 1 - yu) is piecewise linear, so the
/// minimizer shifts p̂ by yτ in the sloped region and clips at the kink.
fn hinge_prox(y: f64, p_hat: f64, tau_p: f64) -> ScalarMoments {
    let q = y * p_hat; // work in the y=+1 frame
    let z = if q + tau_p < 1.0 {
        q + tau_p
    } else if q > 1.0 {
        q
    } else {
        1.0
    };
    // f'' = 0 off the kink; the kink keeps τ_z = τ_p by convention
    ScalarMoments { mean: y * z, var: tau_p, log_scale: 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probit_uninformative_limit() {
        let m = probit_spg(1.0, 0.5, 2.0, 1e14);
        assert!((m.mean - 0.5).abs() < 1e-6);
        assert!((m.var - 2.0).abs() < 1e-6);
    }

    #[test]
    fn probit_antisymmetry() {
        let a = probit_spg(-1.0, 0.7, 1.3, 0.8);
        let b = probit_spg(1.0, -0.7, 1.3, 0.8);
        assert!((a.mean + b.mean).abs() < 1e-14);
        assert!((a.var - b.var).abs() < 1e-14);
    }

    #[test]
    fn probit_tail_stability() {
        // y disagrees badly with p̂: Φ(y c) is astronomically small
        let m = probit_spg(1.0, -40.0, 0.5, 0.25);
        assert!(m.mean.is_finite() && m.var.is_finite() && m.var >= 0.0);
        assert!(m.var <= 0.5 + 1e-12);
    }

    #[test]
    fn logistic_initialization_and_self_consistency() {
        let out = logistic_spg(1.0, 0.3, 0.7, 2.0, 1e-12, 200);
        assert!(out.converged);
        let xi = out.xi.unwrap();
        let m = out.moments;
        // fixed point: ξ = √(τ_z + ẑ²)
        assert!((xi - (m.var + m.mean * m.mean).sqrt()).abs() < 1e-9);
        // re-applying one loop body reproduces the same (ẑ, τ_z)
        let lam = (2.0 / (2.0 * xi)) * (sigmoid(2.0 * xi) - 0.5);
        let tau_z = 0.7 / (1.0 + 2.0 * 0.7 * lam);
        let z_hat = tau_z * (0.3 / 0.7 + 2.0 * 1.0 / 2.0);
        assert!((tau_z - m.var).abs() < 1e-9);
        assert!((z_hat - m.mean).abs() < 1e-9);
    }

    #[test]
    fn logistic_lambda_series_guard() {
        // λ(ξ→0) = α²/8, checked against the direct formula slightly away from 0
        let alpha = 3.0_f64;
        let xi = 1e-8_f64;
        let direct = (alpha / (2.0 * xi)) * (sigmoid(alpha * xi) - 0.5);
        assert!((direct - alpha * alpha / 8.0).abs() < 1e-6);
    }

    #[test]
    fn logistic_label_attraction() {
        for &y in &[1.0, -1.0] {
            let out = logistic_spg(y, 0.4, 1.5, 1.0, 1e-10, 100);
            let m = out.moments;
            assert!(y * m.mean >= y * 0.4 * m.var / 1.5 - 1e-12);
        }
    }

    #[test]
    fn hinge_flat_region() {
        let m = hinge_spg(1.0, 5.0, 1e-6);
        assert!((m.mean - 5.0).abs() < 1e-4);
        assert!((m.var - 1e-6).abs() < 1e-8);
    }

    #[test]
    fn hinge_antisymmetry() {
        let a = hinge_spg(-1.0, 0.4, 0.9);
        let b = hinge_spg(1.0, -0.4, 0.9);
        assert!((a.mean + b.mean).abs() < 1e-12);
        assert!((a.var - b.var).abs() < 1e-12);
    }

    #[test]
    fn robust_limits() {
        let inner = OutputMoments::plain(probit_spg(1.0, 0.3, 0.5, 1.0));
        let r0 = robust_spg(1.0, 0.3, 0.5, 0.0, inner);
        assert!((r0.moments.mean - inner.moments.mean).abs() < 1e-14);
        assert!((r0.moments.var - inner.moments.var).abs() < 1e-14);
        let rh = robust_spg(1.0, 0.3, 0.5, 0.4999999, inner);
        assert!((rh.moments.mean - 0.3).abs() < 1e-5);
        assert!((rh.moments.var - 0.5).abs() < 1e-4);
    }

    #[test]
    fn hinge_prox_piecewise() {
        let ch = OutputChannel::Hinge;
        // p̂+τ < 1
        let m = ch.msg_prox(1.0, -1.0, 0.5);
        assert_eq!(m.mean, -0.5);
        // p̂ > 1
        let m = ch.msg_prox(1.0, 2.0, 0.5);
        assert_eq!(m.mean, 2.0);
        // clipped at the kink
        let m = ch.msg_prox(1.0, 0.8, 0.5);
        assert_eq!(m.mean, 1.0);
    }

    #[test]
    fn prox_flat_gradient_keeps_p_hat() {
        let ch = OutputChannel::Probit { v: 1.0 };
        let m = ch.msg_prox(1.0, 10.0, 1.0);
        assert!((m.mean - 10.0).abs() < 1e-6);
    }

    #[test]
    fn prox_stationarity_residual() {
        for ch in [
            OutputChannel::Logistic { alpha: 1.0 },
            OutputChannel::Probit { v: 0.5 },
            OutputChannel::Robust { gamma: 0.2, inner: Box::new(OutputChannel::Logistic { alpha: 2.0 }) },
        ] {
            for &p in &[-2.0, 0.0, 1.5] {
                let m = ch.msg_prox(1.0, p, 0.8);
                let resid = ch.loss_d1(1.0, m.mean) + (m.mean - p) / 0.8;
                assert!(resid.abs() < 1e-8, "{ch:?} residual {resid}");
            }
        }
    }

    #[test]
    fn predict_proba_cases() {
        let pr = OutputChannel::Probit { v: 1.0 };
        assert!((pr.predict_proba(0.0, 0.7) - 0.5).abs() < 1e-14);
        assert!((pr.predict_proba(1.0, 0.5) - normal_cdf(1.0 / 1.5_f64.sqrt())).abs() < 1e-14);
        // point mass
        let lg = OutputChannel::Logistic { alpha: 2.0 };
        assert!((lg.predict_proba(0.3, 0.0) - sigmoid(0.6)).abs() < 1e-14);
    }

    #[test]
    fn spg_variance_contracts_for_log_concave() {
        let chans = [
            OutputChannel::Probit { v: 0.3 },
            OutputChannel::Logistic { alpha: 1.5 },
            OutputChannel::Hinge,
        ];
        for ch in &chans {
            for &p in &[-4.0, -1.0, 0.0, 2.0, 5.0] {
                for &t in &[1e-3, 1.0, 10.0] {
                    for &y in &[-1.0, 1.0] {
                        let m = ch.spg(y, p, t).moments;
                        assert!(
                            m.var > 0.0 && m.var <= t + 1e-9,
                            "{ch:?} τ_z={} τ_p={t}",
                            m.var
                        );
                    }
                }
            }
        }
    }
}
