use rand::Rng;

use crate::error::{Error, Result};

pub const MIN_RESAMPLES: usize = 200;
pub const MIN_CHAINS: usize = 8;

/// Bootstrap summary of a statistic over chains.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BootstrapCi {
    /// Statistic on the original chains.
    pub point: f64,
    /// Mean over resamples.
    pub mean: f64,
    /// 16th percentile.
    pub lo: f64,
    /// 84th percentile.
    pub hi: f64,
    /// Resamples on which the statistic was undefined.
    pub undefined: usize,
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    let pos = q * (xs.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < xs.len() {
        xs[i] + frac * (xs[i + 1] - xs[i])
    } else {
        xs[i]
    }
}

/// Resamples chain indices with replacement `b` times and summarizes
/// `statistic` with its mean and central 68% interval. The statistic
/// returns `None` where it is undefined; those resamples are counted and
/// skipped.
pub fn bootstrap<R: Rng + ?Sized>(
    rng: &mut R,
    n_chains: usize,
    b: usize,
    statistic: impl Fn(&[usize]) -> Option<f64>,
) -> Result<BootstrapCi> {
    if n_chains < MIN_CHAINS {
        return Err(Error::Diagnostic(format!("bootstrap needs at least {MIN_CHAINS} chains, got {n_chains}")));
    }
    if b < MIN_RESAMPLES {
        return Err(Error::Diagnostic(format!("bootstrap needs at least {MIN_RESAMPLES} resamples, got {b}")));
    }
    let all: Vec<usize> = (0..n_chains).collect();
    let point = statistic(&all).ok_or_else(|| Error::Diagnostic("statistic undefined on the full set of chains".into()))?;
    let mut values = Vec::with_capacity(b);
    let mut idx = vec![0; n_chains];
    let mut undefined = 0;
    for _ in 0..b {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n_chains);
        }
        match statistic(&idx) {
            Some(v) if !v.is_nan() => values.push(v),
            _ => undefined += 1,
        }
    }
    if values.is_empty() {
        return Err(Error::Diagnostic("statistic undefined on every resample".into()));
    }
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(BootstrapCi {
        point,
        mean,
        lo: quantile_sorted(&values, 0.16),
        hi: quantile_sorted(&values, 0.84),
        undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_chains_give_zero_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ci = bootstrap(&mut rng, 10, 300, |_| Some(4.2)).unwrap();
        assert_eq!((ci.lo, ci.hi, ci.point), (4.2, 4.2, 4.2));
        assert!((ci.mean - 4.2).abs() < 1e-12);
    }

    #[test]
    fn refuses_small_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(bootstrap(&mut rng, 10, 1, |_| Some(1.0)).is_err());
        assert!(bootstrap(&mut rng, 4, 500, |_| Some(1.0)).is_err());
    }

    #[test]
    fn quantiles() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.5), 2.0);
        assert_eq!(quantile_sorted(&xs, 0.125), 0.5);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
    }

    #[test]
    fn interval_covers_the_mean_of_chain_values() {
        // per-chain values with known spread; the statistic is their mean
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut covered = 0;
        for _ in 0..100 {
            let vals: Vec<f64> = (0..20).map(|_| 5.0 + rng.sample::<f64, _>(StandardNormal)).collect();
            let ci = bootstrap(&mut rng, vals.len(), 200, |idx| {
                Some(idx.iter().map(|&i| vals[i]).sum::<f64>() / idx.len() as f64)
            })
            .unwrap();
            if ci.lo <= 5.0 && 5.0 <= ci.hi {
                covered += 1;
            }
        }
        assert!(covered >= 60, "covered {covered}/100");
    }
}
