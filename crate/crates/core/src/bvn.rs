//! Univariate and bivariate standard normal CDFs.
//!
//! The bivariate routine follows Genz's BVND: Gauss–Legendre quadrature of
//! Plackett's identity for moderate correlation, and the Drezner–Wesolowsky
//! asymptotic expansion with a quadrature correction for `|rho| >= 0.925`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use statrs::function::erf::erfc;

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Positive half of an `n`-point Gauss–Legendre rule on `[-1, 1]` (n even).
fn gauss_legendre_half(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n / 2);
    for i in 0..n / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
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
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn rule(points: usize) -> &'static [(f64, f64)] {
    static R6: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static R12: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static R20: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    match points {
        6 => R6.get_or_init(|| gauss_legendre_half(6)),
        12 => R12.get_or_init(|| gauss_legendre_half(12)),
        _ => R20.get_or_init(|| gauss_legendre_half(20)),
    }
}

/// `P(X > h, Y > k)` for a standard bivariate normal with correlation `r`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let r = r.clamp(-1.0, 1.0);
    let nodes = if r.abs() < 0.3 {
        rule(6)
    } else if r.abs() < 0.75 {
        rule(12)
    } else {
        rule(20)
    };
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for &(x, w) in nodes {
            for sx in [-x, x] {
                let sn = (asr * (1.0 + sx) / 2.0).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (4.0 * PI) + norm_cdf(-h) * norm_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a * (-(bs / as_ + hk) / 2.0).exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp() * (2.0 * PI).sqrt() * norm_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(x, w) in nodes {
            for sx in [-x, x] {
                let xs = (a * (sx + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a * w * asr.exp() * ((-hk * xs / (2.0 * (1.0 + rs).powi(2))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / (2.0 * PI);
    }
    if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            out += norm_cdf(k) - norm_cdf(h);
        }
        out
    }
}

/// `P(X <= a, Y <= b)` for a standard bivariate normal with correlation `rho`.
pub fn bvn_cdf(a: f64, b: f64, rho: f64) -> f64 {
    bvn_upper(-a, -b, rho).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force oracle: integrate `phi(x) Phi((b - rho x)/sqrt(1-rho^2))` over `x < a`.
    fn quad_cdf(a: f64, b: f64, rho: f64) -> f64 {
        let lo = -12.0;
        let n = 200_000;
        let h = (a - lo) / n as f64;
        let s = (1.0 - rho * rho).sqrt();
        let f = |x: f64| norm_pdf(x) * norm_cdf((b - rho * x) / s);
        let mut acc = f(lo) + f(a);
        for i in 1..n {
            let x = lo + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        acc * h / 3.0
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in [6, 12, 20] {
            let s: f64 = rule(n).iter().map(|(_, w)| 2.0 * w).sum();
            assert!((s - 2.0).abs() < 1e-14);
        }
        // exactness on x^10 for the 6-point rule: integral 2/11
        let s: f64 = rule(6).iter().map(|(x, w)| 2.0 * w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn matches_quadrature_at_reference_point() {
        let v = bvn_cdf(0.5, -0.3, 0.4);
        assert!((v - quad_cdf(0.5, -0.3, 0.4)).abs() < 1e-6);
    }

    #[test]
    fn matches_quadrature_on_grid() {
        for &rho in &[-0.95, -0.8, -0.5, -0.1, 0.0, 0.2, 0.6, 0.9, 0.93, 0.99] {
            for &a in &[-2.0, -0.7, 0.0, 1.1, 2.5] {
                for &b in &[-1.5, 0.3, 1.9] {
                    let v = bvn_cdf(a, b, rho);
                    let q = quad_cdf(a, b, rho);
                    assert!((v - q).abs() < 1e-7, "a={a} b={b} rho={rho}: {v} vs {q}");
                }
            }
        }
    }

    #[test]
    fn closed_forms() {
        assert!((bvn_cdf(0.0, 0.0, 0.0) - 0.25).abs() < 1e-15);
        // orthant probability 1/4 + asin(rho)/(2 pi)
        for rho in [-0.9, -0.3, 0.5, 0.97] {
            let want = 0.25 + f64::asin(rho) / (2.0 * PI);
            assert!((bvn_cdf(0.0, 0.0, rho) - want).abs() < 1e-12);
        }
        assert!((bvn_cdf(0.3, 1.2, 0.0) - norm_cdf(0.3) * norm_cdf(1.2)).abs() < 1e-15);
        assert!((bvn_cdf(0.3, 1.2, 1.0) - norm_cdf(0.3)).abs() < 1e-15);
        assert!((bvn_cdf(0.3, 1.2, -1.0) - (norm_cdf(0.3) + norm_cdf(1.2) - 1.0)).abs() < 1e-15);
    }
}
