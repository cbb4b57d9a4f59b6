//! Shared brute-force oracles used by the integration-test targets.
//!
//! Everything here computes channel moments by generic numerics (adaptive
//! quadrature, dense grid minimization) with no reference to the closed
//! forms under test.

#![allow(dead_code)]

use gamp_core::numeric::adaptive_simpson;

/// Moments of an un-normalized density f over [lo, hi] by panel-wise adaptive
/// Simpson integration. The density is rescaled by its grid maximum so the
/// integrator's absolute tolerance acts relatively, and the second moment is
/// taken about the peak to limit cancellation. Panel width ≤ sd guarantees
/// narrow bulks are never stepped over. Returns (mean, var, log ∫f).
fn quad_moments(
    f: impl Fn(f64) -> f64 + Copy,
    lo: f64,
    hi: f64,
    sd: f64,
) -> (f64, f64, f64) {
    // locate the peak on a dense grid
    let scan = 16_384;
    let mut fmax = 0.0_f64;
    let mut zpeak = lo;
    for i in 0..=scan {
        let z = lo + (hi - lo) * i as f64 / scan as f64;
        let v = f(z);
        if v > fmax {
            fmax = v;
            zpeak = z;
        }
    }
    assert!(fmax > 0.0, "oracle density identically zero on [{lo}, {hi}]");
    let g = |z: f64| f(z) / fmax;

    let step = (sd * 0.5).min(hi - lo);
    let panels = ((hi - lo) / step).ceil() as usize;
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let tol = 1e-13;
    for i in 0..panels {
        let a = lo + (hi - lo) * i as f64 / panels as f64;
        let b = lo + (hi - lo) * (i + 1) as f64 / panels as f64;
        s0 += adaptive_simpson(&g, a, b, tol);
        s1 += adaptive_simpson(&|z| (z - zpeak) * g(z), a, b, tol);
        s2 += adaptive_simpson(&|z| (z - zpeak) * (z - zpeak) * g(z), a, b, tol);
    }
    let m1 = s1 / s0;
    (zpeak + m1, s2 / s0 - m1 * m1, s0.ln() + fmax.ln())
}

/// Posterior moments of p(y|z)·N(z; p̂, τ_p) by adaptive quadrature, for any
/// pointwise likelihood bounded by 1.
pub fn quad_output_moments(
    like: impl Fn(f64) -> f64 + Copy,
    p_hat: f64,
    tau_p: f64,
) -> (f64, f64, f64) {
    let sd = tau_p.sqrt();
    // cover the Gaussian bulk, the likelihood transition region near z = 0,
    // and anything in between
    let lo = p_hat.min(-2.0) - 25.0 * sd;
    let hi = p_hat.max(2.0) + 25.0 * sd;
    let gauss = |z: f64| {
        let d = z - p_hat;
        (-0.5 * d * d / tau_p).exp() / (2.0 * std::f64::consts::PI * tau_p).sqrt()
    };
    quad_moments(|z| like(z) * gauss(z), lo, hi, sd)
}

/// Posterior moments of p(w)·N(w; r̂, τ_r) for a (possibly un-normalized)
/// prior density; returns (mean, var, log of ∫ p(w) N dw).
pub fn quad_input_moments(
    prior: impl Fn(f64) -> f64 + Copy,
    r_hat: f64,
    tau_r: f64,
) -> (f64, f64, f64) {
    let sd = tau_r.sqrt();
    let lo = (r_hat - 25.0 * sd).min(-12.0);
    let hi = (r_hat + 25.0 * sd).max(12.0);
    let gauss = |w: f64| {
        let d = w - r_hat;
        (-0.5 * d * d / tau_r).exp() / (2.0 * std::f64::consts::PI * tau_r).sqrt()
    };
    quad_moments(|w| prior(w) * gauss(w), lo, hi, sd)
}

/// argmin of f(u) + (u - p̂)²/(2τ) over a dense grid followed by
/// golden-section refinement; independent of any prox closed form.
pub fn grid_prox(obj: impl Fn(f64) -> f64 + Copy, p_hat: f64, tau: f64) -> f64 {
    let sd = tau.sqrt();
    let lo = p_hat - 30.0 * sd.max(1.0);
    let hi = p_hat + 30.0 * sd.max(1.0);
    let full = |u: f64| obj(u) + (u - p_hat) * (u - p_hat) / (2.0 * tau);
    let n = 20_000;
    let mut best = lo;
    let mut best_v = full(lo);
    for i in 1..=n {
        let u = lo + (hi - lo) * i as f64 / n as f64;
        let v = full(u);
        if v < best_v {
            best_v = v;
            best = u;
        }
    }
    let step = (hi - lo) / n as f64;
    golden_section(full, best - step, best + step)
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
