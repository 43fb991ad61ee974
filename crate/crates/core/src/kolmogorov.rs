//! Kolmogorov distribution: the law of `sup_{t∈[0,1]} |B(t)|` for a Brownian bridge `B`.

use crate::error::{Error, Result};

const TERM_TOL: f64 = 1e-12;

/// `P(sup |B| ≤ a) = 1 − 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²a²)`.
///
/// Below `a = 0.6` the equivalent Jacobi-theta form
/// `√(2π)/a · Σ exp(−(2k−1)²π²/(8a²))` is summed instead; the alternating
/// series converges too slowly there.
pub fn kolmogorov_cdf(a: f64) -> f64 {
    if a.is_nan() || a <= 0.0 {
        return 0.0;
    }
    if a < 0.6 {
        let c = std::f64::consts::PI.powi(2) / (8.0 * a * a);
        let mut sum = 0.0;
        for k in 1.. {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * c).exp();
            sum += term;
            if term < TERM_TOL * sum.max(f64::MIN_POSITIVE) || k > 1000 {
                break;
            }
        }
        return ((2.0 * std::f64::consts::PI).sqrt() / a * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1.. {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * a * a).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < TERM_TOL {
            break;
        }
    }
    (1.0 - 2.0 * sum).clamp(0.0, 1.0)
}

/// Upper-`alpha` point `a(α)`: `kolmogorov_cdf(a) = 1 − alpha`, by bisection.
pub fn kolmogorov_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One-sample Kolmogorov–Smirnov distance `sup |F̂ − F|`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0_f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    // Stephens' small-sample correction
    let p = 1.0 - kolmogorov_cdf((en + 0.12 + 0.11 / en) * d);
    (d, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_at_zero_is_zero() {
        assert_eq!(kolmogorov_cdf(0.0), 0.0);
    }

    #[test]
    fn standard_points() {
        assert!((kolmogorov_cdf(1.3581) - 0.95).abs() < 1e-3);
        assert!((kolmogorov_cdf(1.6276) - 0.99).abs() < 1e-3);
    }

    #[test]
    fn quantiles() {
        assert!((kolmogorov_quantile(0.05).unwrap() - 1.3581).abs() < 1e-3);
        assert!((kolmogorov_quantile(0.01).unwrap() - 1.6276).abs() < 1e-3);
        for x in [0.5, 0.1, 0.05] {
            let a = kolmogorov_quantile(x).unwrap();
            assert!((kolmogorov_cdf(a) - (1.0 - x)).abs() < 1e-9);
        }
    }

    #[test]
    fn quantile_domain() {
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(kolmogorov_quantile(bad), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn both_series_agree_at_the_switch() {
        // evaluate the alternating series directly slightly below the switch
        let a: f64 = 0.59;
        let mut alt = 0.0;
        for k in 1..200 {
            let t = (-2.0 * (k * k) as f64 * a * a).exp();
            alt += if k % 2 == 1 { t } else { -t };
        }
        assert!((kolmogorov_cdf(a) - (1.0 - 2.0 * alt)).abs() < 1e-12);
        assert!(kolmogorov_cdf(0.6 - 1e-12) <= kolmogorov_cdf(0.6 + 1e-12) + 1e-12);
    }

    #[test]
    fn monotone() {
        let mut prev = 0.0;
        for i in 1..400 {
            let c = kolmogorov_cdf(i as f64 * 0.01);
            assert!(c >= prev - 1e-15);
            prev = c;
        }
        assert!(prev > 1.0 - 1e-12);
    }

    #[test]
    fn two_sample_identical_and_shifted() {
        let a: Vec<f64> = (0..200).map(f64::from).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
        let b: Vec<f64> = a.iter().map(|x| x + 100.0).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!((d - 0.5).abs() < 1e-12);
        assert!(p < 1e-6);
    }

    #[test]
    fn one_sample_distance_of_uniform_grid() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_distance(&xs, |x| x) - 0.005).abs() < 1e-12);
    }
}
