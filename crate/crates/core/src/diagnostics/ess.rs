use crate::error::{Error, Result};

/// Result of the error-based estimator.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ErrorEss {
    /// `(sd / se)^2`; `+inf` when every chain hit the true value.
    pub per_chain: f64,
    /// Root mean square deviation of chain estimates from the truth.
    pub se: f64,
    pub n_chains: usize,
    pub warning: Option<String>,
}

impl ErrorEss {
    pub fn total(&self) -> f64 {
        self.per_chain * self.n_chains as f64
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn autocovariance(xs: &[f64], mean: f64, lag: usize) -> f64 {
    let n = xs.len();
    xs[..n - lag]
        .iter()
        .zip(&xs[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum::<f64>()
        / n as f64
}

/// Integrated autocorrelation time `1 + 2 sum_t rho_t`, truncated by Geyer's
/// initial positive sequence over lag pairs.
pub fn integrated_autocorr_time(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < 10 {
        return Err(Error::Diagnostic(format!("series of length {n} is too short for ESS")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Diagnostic("series contains non-finite values".into()));
    }
    let m = mean(xs);
    let c0 = autocovariance(xs, m, 0);
    if !(c0 > 0.0) || c0 <= (1e-12 * m).powi(2) {
        return Err(Error::Diagnostic("series has zero variance".into()));
    }
    let mut pair_sum = 0.0;
    let mut lag = 0;
    while lag + 1 < n {
        let gamma = (autocovariance(xs, m, lag) + autocovariance(xs, m, lag + 1)) / c0;
        if gamma <= 0.0 {
            break;
        }
        pair_sum += gamma;
        lag += 2;
    }
    Ok(-1.0 + 2.0 * pair_sum)
}

/// Autocorrelation ESS of one chain, `N / tau`, capped at `N`.
pub fn autocorr_ess(xs: &[f64]) -> Result<f64> {
    let tau = integrated_autocorr_time(xs)?;
    let n = xs.len() as f64;
    Ok(if tau <= 1.0 { n } else { n / tau })
}

/// Sum of per-chain autocorrelation ESS.
pub fn multi_chain_ess(chains: &[Vec<f64>]) -> Result<f64> {
    chains.iter().map(|c| autocorr_ess(c)).sum()
}

/// ESS implied by the spread of per-chain estimates around a known mean:
/// `se` is the root mean square error across chains and each chain is worth
/// `(true_sd / se)^2` independent draws.
pub fn error_based_ess(estimates: &[f64], true_mean: f64, true_sd: f64) -> Result<ErrorEss> {
    const MIN_CHAINS: usize = 8;
    if estimates.len() < MIN_CHAINS {
        return Err(Error::Diagnostic(format!(
            "error-based ESS needs at least {MIN_CHAINS} chains, got {}",
            estimates.len()
        )));
    }
    if !(true_sd > 0.0) || !true_mean.is_finite() {
        return Err(Error::Diagnostic("reference moments must be finite with positive sd".into()));
    }
    if estimates.iter().any(|e| !e.is_finite()) {
        return Err(Error::Diagnostic("non-finite chain estimate".into()));
    }
    let n = estimates.len();
    let se = (estimates.iter().map(|e| (e - true_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let identical = estimates.iter().all(|e| *e == estimates[0]);
    let warning = identical.then(|| "chain estimates have zero variance across chains; se is unreliable".to_string());
    let per_chain = if se == 0.0 {
        f64::INFINITY
    } else {
        (true_sd / se).powi(2)
    };
    Ok(ErrorEss {
        per_chain,
        se,
        n_chains: n,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (1.0 - rho * rho).sqrt();
        let mut x: f64 = rng.sample(StandardNormal);
        (0..n)
            .map(|_| {
                x = rho * x + s * rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn white_noise() {
        let xs = ar1(0.0, 100_000, 1);
        let r = autocorr_ess(&xs).unwrap() / xs.len() as f64;
        assert!((0.9..=1.1).contains(&r), "{r}");
    }

    #[test]
    fn ar1_matches_closed_form() {
        let n = 100_000;
        let xs = ar1(0.5, n, 2);
        let target = n as f64 / 3.0;
        let ess = autocorr_ess(&xs).unwrap();
        assert!((ess / target - 1.0).abs() < 0.1, "{ess} vs {target}");
    }

    #[test]
    fn constant_series_is_undefined() {
        assert!(matches!(autocorr_ess(&[2.5; 100]), Err(Error::Diagnostic(_))));
        assert!(autocorr_ess(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn antithetic_series_is_capped() {
        let xs: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(autocorr_ess(&xs).unwrap(), 1000.0);
    }

    #[test]
    fn affine_invariance() {
        let xs = ar1(0.8, 5000, 3);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 7.5 * x).collect();
        let (a, b) = (autocorr_ess(&xs).unwrap(), autocorr_ess(&ys).unwrap());
        assert!((a / b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn error_based_on_iid_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 400;
        let means: Vec<f64> = (0..400)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).sum::<f64>() / n as f64)
            .collect();
        let e = error_based_ess(&means, 0.0, 1.0).unwrap();
        assert!((e.per_chain / n as f64 - 1.0).abs() < 0.25, "{}", e.per_chain);
        assert_eq!(e.total(), e.per_chain * 400.0);
    }

    #[test]
    fn error_based_edge_cases() {
        let e = error_based_ess(&[1.0; 8], 1.0, 2.0).unwrap();
        assert_eq!(e.per_chain, f64::INFINITY);
        let dup = error_based_ess(&[0.3; 50], 0.0, 1.0).unwrap();
        assert!(dup.warning.is_some());
        assert!(error_based_ess(&[0.1; 7], 0.0, 1.0).is_err());
    }
}
