use crate::error::{Error, Result};

/// One-sample Kolmogorov-Smirnov result.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KsResult {
    /// `sup |F_N - F|` over the sample points.
    pub d: f64,
    /// Asymptotic p-value from the Kolmogorov distribution.
    pub p_value: f64,
    pub n: usize,
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // the alternating series converges slowly here; use the dual form
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=20)
            .map(|j| {
                let odd = (2 * j - 1) as f64;
                (-odd * odd * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|j| {
            let j = j as f64;
            let sign = if j as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * j * j * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// KS test of `samples` against the continuous CDF `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::Diagnostic("KS test on an empty sample".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Diagnostic("KS test on a sample with NaN".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    let p_value = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
    Ok(KsResult { d, p_value, n: xs.len() })
}

/// KS test restricted to `|x| > threshold`, with the reference CDF
/// conditioned on the same event.
pub fn ks_tail(samples: &[f64], cdf: impl Fn(f64) -> f64, threshold: f64) -> Result<KsResult> {
    let tail: Vec<f64> = samples.iter().copied().filter(|x| x.abs() > threshold).collect();
    if tail.is_empty() {
        return Err(Error::Diagnostic(format!("no samples beyond |x| > {threshold}")));
    }
    let lo = cdf(-threshold);
    let hi = cdf(threshold);
    let mass = lo + (1.0 - hi);
    if !(mass > 0.0) {
        return Err(Error::Diagnostic(format!("reference has no mass beyond |x| > {threshold}")));
    }
    ks_statistic(&tail, |x| {
        if x <= -threshold {
            cdf(x) / mass
        } else {
            (lo + (cdf(x) - hi).max(0.0)) / mass
        }
    })
}
