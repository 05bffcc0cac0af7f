//! Moments and CDF of a univariate normal truncated to [a, b].
//!
//! Standardized limits α = (a − μ̄)/ϑ and ξ = (b − μ̄)/ϑ are evaluated with
//! scaled complementary error functions when the interval lies in a tail, so
//! that the normalizing mass Φ(ξ) − Φ(α) never has to be formed explicitly.
//! Narrow intervals use Gauss–Legendre quadrature and far one-sided tails an
//! asymptotic Mills-ratio series.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::OnceLock;

use libm::erfc;

use crate::error::{Error, Result};

/// Standardized width below which moments are integrated numerically.
const NARROW_WIDTH: f64 = 0.1;
/// Lower limit beyond which a one-sided tail uses the asymptotic series.
const ASYMPTOTIC_TAIL: f64 = 20.0;
const GL_NODES: usize = 24;
const GL_PANELS: usize = 8;

/// Normal N(μ̄, ϑ²) truncated to [a, b]; a may be −∞ and b may be +∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormalParams {
    pub mu_bar: f64,
    pub theta2: f64,
    pub a: f64,
    pub b: f64,
}

impl TruncatedNormalParams {
    pub fn new(mu_bar: f64, theta2: f64, a: f64, b: f64) -> Result<Self> {
        if !(theta2 > 0.0 && theta2.is_finite()) {
            return Err(Error::DegenerateContrast(theta2));
        }
        if a.is_nan() || b.is_nan() || !mu_bar.is_finite() {
            return Err(Error::InvalidInput("truncation parameters must not be NaN".into()));
        }
        if !(a < b) {
            return Err(Error::EmptyTruncation {
                alpha: (a - mu_bar) / theta2.sqrt(),
                xi: (b - mu_bar) / theta2.sqrt(),
            });
        }
        Ok(Self { mu_bar, theta2, a, b })
    }

    pub fn theta(&self) -> f64 {
        self.theta2.sqrt()
    }

    pub fn alpha(&self) -> f64 {
        (self.a - self.mu_bar) / self.theta()
    }

    pub fn xi(&self) -> f64 {
        (self.b - self.mu_bar) / self.theta()
    }

    /// Mean and variance of the truncated law.
    pub fn moments(&self) -> Result<(f64, f64)> {
        let (m, v) = standard_moments(self.alpha(), self.xi())?;
        Ok((self.mu_bar + self.theta() * m, self.theta2 * v))
    }

    /// P(X ≤ x) under the truncated law.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.a {
            return 0.0;
        }
        if x >= self.b {
            return 1.0;
        }
        standard_cdf(self.alpha(), self.xi(), (x - self.mu_bar) / self.theta())
    }
}

/// Mean and variance of a truncated normal; see [`TruncatedNormalParams`].
pub fn truncnorm_moments(params: &TruncatedNormalParams) -> Result<(f64, f64)> {
    params.moments()
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Scaled complementary error function e^{x²} erfc(x).
pub fn erfcx(x: f64) -> f64 {
    if x < 5.0 {
        if x < -26.0 {
            return f64::INFINITY;
        }
        return (x * x).exp() * erfc(x);
    }
    // Continued fraction erfc(x) = e^{−x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))),
    // evaluated with the modified Lentz method.
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / (f * PI.sqrt())
}

/// Q(x)/φ(x) = √(π/2) erfcx(x/√2), the Mills ratio, for x ≥ 0.
fn mills(x: f64) -> f64 {
    (PI / 2.0).sqrt() * erfcx(x / SQRT_2)
}

fn standard_moments(alpha: f64, xi: f64) -> Result<(f64, f64)> {
    if xi <= 0.0 {
        let (m, v) = standard_moments(-xi, -alpha)?;
        return Ok((-m, v));
    }
    let empty = || Error::EmptyTruncation { alpha, xi };
    if !(alpha < xi) {
        return Err(empty());
    }
    let (m, v) = if xi - alpha < NARROW_WIDTH {
        quadrature_moments(alpha, xi)
    } else if alpha >= ASYMPTOTIC_TAIL {
        // relative mass of the upper limit, e^{−(ξ²−α²)/2}
        let ratio = (-(xi - alpha) * (xi + alpha) / 2.0).exp();
        if ratio < 1e-18 {
            asymptotic_tail_moments(alpha)
        } else {
            quadrature_moments(alpha, xi)
        }
    } else if alpha >= 0.0 {
        right_tail_moments(alpha, xi)
    } else {
        central_moments(alpha, xi)
    };
    if !(m.is_finite() && v.is_finite() && v > 0.0) {
        return Err(empty());
    }
    Ok((m, v))
}

/// λ_a = φ(α)/Z and λ_b = φ(ξ)/Z with both limits ≥ 0.
fn right_tail_moments(alpha: f64, xi: f64) -> (f64, f64) {
    let ra = mills(alpha);
    let (rb, ratio) = if xi.is_infinite() {
        (0.0, 0.0)
    } else {
        (mills(xi), (-(xi - alpha) * (xi + alpha) / 2.0).exp())
    };
    // Z/φ(α) = R(α) − R(ξ)φ(ξ)/φ(α)
    let z = ra - rb * ratio;
    let la = 1.0 / z;
    let lb = ratio / z;
    let xi_lb = if xi.is_infinite() { 0.0 } else { xi * lb };
    let mean = la - lb;
    let var = 1.0 + alpha * la - xi_lb - mean * mean;
    (mean, var)
}

fn central_moments(alpha: f64, xi: f64) -> (f64, f64) {
    let z = norm_cdf(xi) - norm_cdf(alpha);
    let (pa, apa) = if alpha.is_infinite() {
        (0.0, 0.0)
    } else {
        let p = norm_pdf(alpha);
        (p, alpha * p)
    };
    let (pb, bpb) = if xi.is_infinite() {
        (0.0, 0.0)
    } else {
        let p = norm_pdf(xi);
        (p, xi * p)
    };
    let mean = (pa - pb) / z;
    let var = 1.0 + (apa - bpb) / z - mean * mean;
    (mean, var)
}

/// X | X > α for large α via the series αR(α) = Σ (−1)^k (2k−1)!! α^{−2k}.
fn asymptotic_tail_moments(alpha: f64) -> (f64, f64) {
    const TERMS: usize = 12;
    let u = 1.0 / (alpha * alpha);
    let mut c = [0.0_f64; TERMS + 2];
    c[0] = 1.0;
    for k in 1..TERMS + 2 {
        c[k] = -c[k - 1] * (2 * k - 1) as f64;
    }
    let s: f64 = c.iter().take(TERMS + 1).rev().fold(0.0, |acc, ck| acc * u + ck);
    // var = (s² − (1 − s)/u)/s², numerator expanded to avoid cancellation
    let mut numerator = 0.0;
    let mut upow = 1.0;
    for k in 0..=TERMS {
        let sq: f64 = (0..=k).map(|i| c[i] * c[k - i]).sum();
        numerator += (sq + c[k + 1]) * upow;
        upow *= u;
    }
    let mean = alpha / s;
    (mean, numerator / (s * s))
}

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_NODES;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Composite Gauss–Legendre moments on a finite interval. The density is
/// evaluated relative to its value at the limit nearest zero.
fn quadrature_moments(alpha: f64, xi: f64) -> (f64, f64) {
    let hi = if xi.is_infinite() {
        alpha + 60.0 / alpha.max(1.0)
    } else {
        xi
    };
    let anchor = if alpha > 0.0 {
        alpha
    } else if hi < 0.0 {
        hi
    } else {
        0.0
    };
    let (nodes, weights) = gauss_legendre();
    let panel = (hi - alpha) / GL_PANELS as f64;
    let mut points = Vec::with_capacity(GL_PANELS * GL_NODES);
    for p in 0..GL_PANELS {
        let mid = alpha + panel * (p as f64 + 0.5);
        for (x, w) in nodes.iter().zip(weights) {
            let t = mid + 0.5 * panel * x;
            let density = (-(t - anchor) * (t + anchor) / 2.0).exp();
            points.push((t, w * density));
        }
    }
    let mass: f64 = points.iter().map(|(_, w)| w).sum();
    let mean: f64 = points.iter().map(|(t, w)| t * w).sum::<f64>() / mass;
    let var: f64 = points.iter().map(|(t, w)| (t - mean) * (t - mean) * w).sum::<f64>() / mass;
    (mean, var)
}

/// CDF of the standard normal truncated to [α, ξ] at α < t < ξ.
fn standard_cdf(alpha: f64, xi: f64, t: f64) -> f64 {
    if alpha >= 0.0 {
        // (Q(α) − Q(t))/(Q(α) − Q(ξ)), scaled by 1/φ(α)
        let scaled_q = |x: f64| {
            if x.is_infinite() {
                0.0
            } else {
                mills(x) * (-(x - alpha) * (x + alpha) / 2.0).exp()
            }
        };
        let qa = mills(alpha);
        return ((qa - scaled_q(t)) / (qa - scaled_q(xi))).clamp(0.0, 1.0);
    }
    if xi <= 0.0 {
        return 1.0 - standard_cdf(-xi, -alpha, -t);
    }
    let lo = if alpha.is_infinite() { 0.0 } else { norm_cdf(alpha) };
    let hi = if xi.is_infinite() { 1.0 } else { norm_cdf(xi) };
    ((norm_cdf(t) - lo) / (hi - lo)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(mu: f64, t2: f64, a: f64, b: f64) -> TruncatedNormalParams {
        TruncatedNormalParams::new(mu, t2, a, b).unwrap()
    }

    #[test]
    fn untruncated_returns_parameters() {
        let (m, v) = params(1.3, 2.5, f64::NEG_INFINITY, f64::INFINITY).moments().unwrap();
        assert_relative_eq!(m, 1.3, epsilon = 1e-14);
        assert_relative_eq!(v, 2.5, epsilon = 1e-14);
    }

    #[test]
    fn half_normal() {
        let (m, v) = params(0.0, 1.0, 0.0, f64::INFINITY).moments().unwrap();
        assert!((m - 0.7978846).abs() < 1e-6);
        assert!((v - 0.3633802).abs() < 1e-6);
        let (m, v) = params(0.0, 1.0, f64::NEG_INFINITY, 0.0).moments().unwrap();
        assert!((m + 0.7978846).abs() < 1e-6);
        assert!((v - 0.3633802).abs() < 1e-6);
    }

    #[test]
    fn symmetric_limits() {
        let (m, v) = params(0.0, 4.0, -1.5, 1.5).moments().unwrap();
        assert!(m.abs() < 1e-14);
        assert!(v < 4.0);
    }

    #[test]
    fn erfcx_matches_direct_form() {
        for &x in &[-3.0_f64, -0.5, 0.0, 0.3, 1.0, 2.5, 4.9, 5.0, 5.1, 8.0, 12.0] {
            let direct = (x * x).exp() * erfc(x);
            assert_relative_eq!(erfcx(x), direct, max_relative = 1e-11);
        }
        // large-x asymptote 1/(x√π)
        assert_relative_eq!(erfcx(1e6), 1.0 / (1e6 * PI.sqrt()), max_relative = 1e-12);
    }

    /// Composite Simpson integration of the truncated density.
    fn simpson(alpha: f64, xi: f64) -> (f64, f64) {
        let lo = alpha.max(-40.0);
        let hi = xi.min(lo.max(0.0) + 40.0);
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let anchor = if lo > 0.0 {
            lo
        } else if hi < 0.0 {
            hi
        } else {
            0.0
        };
        let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let t = lo + h * i as f64;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let d = w * (-(t - anchor) * (t + anchor) / 2.0).exp();
            z += d;
            s1 += d * t;
            s2 += d * t * t;
        }
        let m = s1 / z;
        (m, s2 / z - m * m)
    }

    #[test]
    fn branches_agree_with_numerical_integration() {
        let cases = [
            (-1.0, 2.0),
            (0.5, 1.7),
            (1.0, 6.0),
            (-3.0, -0.4),
            (0.2, 0.25),
            (2.0, 2.05),
            (-0.03, 0.03),
            (3.0, 9.0),
            (f64::NEG_INFINITY, 1.2),
            (-2.0, f64::INFINITY),
        ];
        for (a, b) in cases {
            let (m, v) = standard_moments(a, b).unwrap();
            let (mn, vn) = simpson(a, b);
            assert_relative_eq!(m, mn, max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(v, vn, max_relative = 1e-6);
        }
    }

    #[test]
    fn far_tails_are_finite_and_consistent() {
        // X | X > α has mean ≈ α + 1/α and variance ≈ 1/α²
        for &a in &[10.0, 25.0, 40.0, 200.0] {
            let (m, v) = standard_moments(a, f64::INFINITY).unwrap();
            assert_relative_eq!(m, a + 1.0 / a, max_relative = 3.0 / (a * a * a * a) + 1e-12);
            assert_relative_eq!(v * a * a, 1.0, max_relative = 10.0 / (a * a));
        }
        // continuity across the asymptotic switch
        let below = standard_moments(ASYMPTOTIC_TAIL - 1e-9, f64::INFINITY).unwrap();
        let above = standard_moments(ASYMPTOTIC_TAIL + 1e-9, f64::INFINITY).unwrap();
        assert_relative_eq!(below.1, above.1, max_relative = 1e-8);
        let (m, v) = standard_moments(-40.0, -39.5).unwrap();
        assert!(m < -39.5 && m > -40.0 && v > 0.0);
    }

    #[test]
    fn narrow_interval_is_nearly_uniform() {
        let (m, v) = standard_moments(30.0, 30.001).unwrap();
        assert_relative_eq!(m, 30.0005, max_relative = 1e-6);
        assert_relative_eq!(v, 1e-6 / 12.0, max_relative = 0.1);
    }

    #[test]
    fn empty_interval_errors() {
        assert!(TruncatedNormalParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(TruncatedNormalParams::new(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn cdf_matches_naive() {
        let p = params(0.5, 2.0, -1.0, 3.0);
        for &x in &[-0.5, 0.0, 1.0, 2.9] {
            let (al, xi, t) = (p.alpha(), p.xi(), (x - 0.5) / 2f64.sqrt());
            let expected = (norm_cdf(t) - norm_cdf(al)) / (norm_cdf(xi) - norm_cdf(al));
            assert_relative_eq!(p.cdf(x), expected, max_relative = 1e-12);
        }
        let tail = params(0.0, 1.0, 3.0, 4.0);
        let (al, xi) = (3.0, 4.0);
        let expected = (norm_cdf(3.5) - norm_cdf(al)) / (norm_cdf(xi) - norm_cdf(al));
        assert_relative_eq!(tail.cdf(3.5), expected, max_relative = 1e-9);
        assert_eq!(tail.cdf(2.0), 0.0);
        assert_eq!(tail.cdf(5.0), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn variance_positive_and_shrunk(mu in -5.0f64..5.0, t2 in 0.01f64..10.0, a in -10.0f64..10.0, w in 1e-3f64..20.0, inf_a: bool, inf_b: bool) {
                let lo = if inf_a { f64::NEG_INFINITY } else { a };
                let hi = if inf_b { f64::INFINITY } else { a + w };
                let p = TruncatedNormalParams::new(mu, t2, lo, hi).unwrap();
                let (m, v) = p.moments().unwrap();
                prop_assert!(v > 0.0);
                prop_assert!(v <= t2 * (1.0 + 1e-10));
                prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
            }
        }
    }
}
