//! Standard-normal helpers for the ordered-probit head.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Upper tail `1 - Phi(x)`, accurate for large positive `x`.
fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `ln(1 - Phi(x))`, with an asymptotic expansion once `erfc` underflows.
fn log_sf(x: f64) -> f64 {
    let q = norm_sf(x);
    if q > 1e-300 {
        q.ln()
    } else {
        -0.5 * x * x - (x * (2.0 * std::f64::consts::PI).sqrt()).ln() + (1.0 - 1.0 / (x * x)).ln()
    }
}

/// `ln P(lo < Z <= hi)` for a standard normal `Z`.
pub fn log_interval_prob(lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    if lo >= 0.0 {
        let (a, b) = (norm_sf(lo), norm_sf(hi));
        if a > 1e-300 && a - b > 0.0 {
            (a - b).ln()
        } else {
            // deep upper tail: ln Q(lo) + ln(1 - Q(hi)/Q(lo))
            let ratio = if hi.is_finite() { (log_sf(hi) - log_sf(lo)).exp() } else { 0.0 };
            log_sf(lo) + (-ratio).ln_1p().max(-690.0)
        }
    } else if hi <= 0.0 {
        log_interval_prob(-hi, -lo)
    } else {
        (1.0 - norm_sf(hi) - norm_cdf(lo)).max(1e-300).ln()
    }
}

/// Draws `Z ~ N(0, 1)` conditioned on `lo < Z < hi` by rejection.
pub fn sample_truncated_std<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    if hi <= 0.0 {
        return -sample_truncated_std(rng, -hi, -lo);
    }
    if lo < 0.0 {
        if hi - lo < 2.5 {
            loop {
                let z = rng.random_range(lo..hi);
                if rng.random::<f64>() < (-0.5 * z * z).exp() {
                    return z;
                }
            }
        }
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z > lo && z < hi {
                return z;
            }
        }
    }
    // 0 <= lo < hi
    if hi.is_finite() && hi * hi - lo * lo < 2.0 {
        loop {
            let z = rng.random_range(lo..hi);
            if rng.random::<f64>() < (0.5 * (lo * lo - z * z)).exp() {
                return z;
            }
        }
    }
    let rate = 0.5 * (lo + (lo * lo + 4.0).sqrt());
    let exp = Exp::new(rate).expect("positive rate");
    loop {
        let z = lo + exp.sample(rng);
        if z >= hi {
            continue;
        }
        if rng.random::<f64>() < (-0.5 * (z - rate) * (z - rate)).exp() {
            return z;
        }
    }
}
