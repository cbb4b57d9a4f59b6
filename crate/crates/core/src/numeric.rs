//! Scalar numerics shared across the crate: standard-normal functions with
//! tail-stable evaluation, log-sum-exp, Gauss-Hermite nodes, and an adaptive
//! Simpson integrator used for generic-channel expectations.

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Standard normal pdf φ(x).
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal cdf Φ(x) via the complementary error function.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// log Φ(x), stable deep into the left tail.
///
/// For x ≥ -1 the direct form is fine; below that, erfc would underflow near
/// x ≈ -38, so the asymptotic series for the Mills ratio takes over.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > -1.0 {
        // ln(1 - Φ(-x)) with Φ(-x) small-to-moderate
        return libm::log1p(-0.5 * libm::erfc(x / std::f64::consts::SQRT_2));
    }
    if x > -20.0 {
        (0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        // Φ(x) ≈ φ(x)/(-x) * (1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸)
        let x2 = x * x;
        let corr = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)
            + 105.0 / (x2 * x2 * x2 * x2);
        -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + corr.ln()
    }
}

/// Mills-type ratio φ(x)/Φ(x), stable for large negative x.
#[inline]
pub fn pdf_over_cdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI - log_normal_cdf(x)).exp()
}

/// Inverse standard normal cdf (Acklam's rational approximation plus one
/// Halley refinement; good to near machine precision on (0,1)).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal_quantile requires p in (0,1)");
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * libm::log1p(-p)).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement
    let e = normal_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Numerically stable ln(e^a + e^b).
#[inline]
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Stable logistic sigmoid 1/(1+e^{-x}).
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        libm::log1p(x.exp())
    }
}

/// Gauss-Hermite nodes/weights in "probabilist" form: with the returned
/// (x_i, w_i), E[g(Z)] for Z ~ N(mu, var) is approximated by
/// Σ w_i g(mu + sqrt(var) x_i), and Σ w_i = 1.
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes nodes by Newton iteration on the physicists' Hermite
    /// polynomial, then rescales to the probabilist convention.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0f64; n];
        let mut weights = vec![0.0f64; n];
        let m = (n + 1) / 2;
        let mut z = 0.0f64;
        for i in 0..m {
            // Stroud-Secrest style initial guesses
            z = match i {
                0 => ((2 * n + 1) as f64).sqrt() - 1.85575 * ((2 * n + 1) as f64).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                // recurrence for H_n at z (orthonormal weights handled below)
                let mut p1 = std::f64::consts::PI.powf(-0.25);
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                        - ((j as f64) / (j as f64 + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        // physicists' -> probabilist: x = sqrt(2) t, weights normalized by sqrt(pi)
        let norm: f64 = weights.iter().sum();
        for i in 0..n {
            nodes[i] *= std::f64::consts::SQRT_2;
            weights[i] /= norm;
        }
        nodes.reverse();
        GaussHermite { nodes, weights }
    }

    /// E[g(Z)] for Z ~ N(mean, var).
    pub fn expect(&self, mean: f64, var: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        let sd = var.max(0.0).sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(mean + sd * x))
            .sum()
    }
}

/// Adaptive Simpson quadrature of f on [a, b] to absolute tolerance tol.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_matches_table_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.6448536269514722) - 0.95).abs() < 1e-12);
        assert!((normal_cdf(-1.0) - 0.15865525393145707).abs() < 1e-14);
    }

    #[test]
    fn log_cdf_deep_tail() {
        // reference: ln Φ(-25) computed with mpmath = -316.63940800802026
        assert!((log_normal_cdf(-25.0) - (-316.63940800802026)).abs() < 1e-8);
        // continuity across the branch switch
        for x in [-0.9, -1.1, -19.9, -20.1, -37.0, -50.0] {
            let l = log_normal_cdf(x);
            assert!(l.is_finite(), "log_normal_cdf({x}) not finite");
        }
        // straddle the series/erfc branch switch (mpmath references)
        assert!((log_normal_cdf(-19.999999) - (-203.91713532134467)).abs() < 1e-7);
        assert!((log_normal_cdf(-20.000001) - (-203.91717542085085)).abs() < 1e-7);
    }

    #[test]
    fn mills_ratio_asymptotics() {
        // φ(x)/Φ(x) -> -x as x -> -inf
        let x = -40.0;
        let r = pdf_over_cdf(x);
        assert!((r / (-x) - 1.0).abs() < 1e-3);
        // moderate value against direct computation
        let x = -3.0;
        let direct = normal_pdf(x) / normal_cdf(x);
        assert!((pdf_over_cdf(x) - direct).abs() < 1e-12);
    }

    #[test]
    fn quantile_roundtrip() {
        for &p in &[1e-10, 1e-4, 0.05, 0.3, 0.5, 0.9, 0.95, 1.0 - 1e-6] {
            let x = normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() < 1e-12 * (1.0 + 1.0 / p.min(1.0 - p)));
        }
        assert!((normal_quantile(0.95) - 1.6448536269514722).abs() < 1e-10);
    }

    #[test]
    fn gauss_hermite_moments() {
        let gh = GaussHermite::new(63);
        let m0: f64 = gh.weights.iter().sum();
        assert!((m0 - 1.0).abs() < 1e-12);
        let m2 = gh.expect(0.0, 1.0, |z| z * z);
        assert!((m2 - 1.0).abs() < 1e-10);
        let m4 = gh.expect(0.0, 1.0, |z| z.powi(4));
        assert!((m4 - 3.0).abs() < 1e-9);
        // E[Φ(Z)] with Z ~ N(mu, s2) equals Φ(mu/sqrt(1+s2))
        let e = gh.expect(0.5, 2.0, normal_cdf);
        assert!((e - normal_cdf(0.5 / 3.0_f64.sqrt())).abs() < 1e-8);
    }

    #[test]
    fn simpson_gaussian_integral() {
        let i = adaptive_simpson(&|x: f64| normal_pdf(x), -12.0, 12.0, 1e-12);
        assert!((i - 1.0).abs() < 1e-10);
        let i = adaptive_simpson(&|x: f64| x * x * normal_pdf(x), -14.0, 14.0, 1e-12);
        assert!((i - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_and_log1p_exp_stable() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((log1p_exp(50.0) - 50.0).abs() < 1e-12);
        assert!((log1p_exp(0.0) - 2.0_f64.ln()).abs() < 1e-15);
    }
}
