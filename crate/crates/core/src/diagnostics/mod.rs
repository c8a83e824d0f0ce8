//! Effective sample size, cost per effective draw, KS tests and bootstrap
//! intervals over chains.
//!
//! Two ESS flavours are reported. The autocorrelation ESS is computed per
//! chain and summed. The error-based ESS compares each chain's estimate with
//! a known expectation and converts the root mean square error into an
//! equivalent number of independent draws. Cost is sampling-phase joint
//! evaluations divided by ESS.

mod bootstrap;
mod ess;
mod ks;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Moment, MomentRef};
use crate::sampler::ChainResult;

pub use bootstrap::{bootstrap, BootstrapCi, MIN_CHAINS as BOOTSTRAP_MIN_CHAINS, MIN_RESAMPLES};
pub use ess::{autocorr_ess, error_based_ess, integrated_autocorr_time, multi_chain_ess, ErrorEss};
pub use ks::{kolmogorov_sf, ks_statistic, ks_tail, KsResult};

/// `n_evals / ess`; `None` when the ESS is undefined.
pub fn cost_per_ess(n_evals: u64, ess: Option<f64>) -> Option<f64> {
    let ess = ess?;
    (ess > 0.0).then(|| n_evals as f64 / ess)
}

/// Per-chain ingredients of an [`EssReport`] for one moment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSummary {
    pub n_draws: usize,
    pub n_evals: u64,
    /// Autocorrelation ESS per coordinate; `None` where undefined.
    pub ess_r: Vec<Option<f64>>,
    /// Chain average of the moment per coordinate.
    pub means: Vec<f64>,
}

impl ChainSummary {
    pub fn new(chain: &ChainResult, moment: Moment) -> Self {
        let (ess_r, means) = (0..chain.dim)
            .map(|j| {
                let xs: Vec<f64> = chain.column(j).into_iter().map(|x| moment.apply(x)).collect();
                (autocorr_ess(&xs).ok(), ess::mean(&xs))
            })
            .unzip();
        Self {
            n_draws: chain.n_draws(),
            n_evals: chain.sampling_evals(),
            ess_r,
            means,
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }
}

/// ESS and cost for one moment, reported at the slowest coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssReport {
    pub moment: Moment,
    pub n_chains: usize,
    /// Total draws over chains.
    pub n_draws: usize,
    /// Sampling-phase evaluations summed over chains.
    pub n_evals: u64,
    /// Coordinate with the smallest ESS (error-based when available).
    pub slowest_index: usize,
    pub ess_r: Option<f64>,
    pub ess_c: Option<f64>,
    pub cost_r: Option<f64>,
    pub cost_c: Option<f64>,
    /// Per-coordinate values, summed over chains.
    pub ess_r_all: Vec<Option<f64>>,
    pub ess_c_all: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

fn argmin(xs: &[Option<f64>]) -> Option<usize> {
    xs.iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

impl EssReport {
    /// Builds the report from per-chain summaries. `refs` holds the true
    /// moment per coordinate; without it only the autocorrelation ESS is
    /// available.
    pub fn from_summaries(summaries: &[ChainSummary], moment: Moment, refs: Option<&[MomentRef]>) -> Result<Self> {
        let first = summaries.first().ok_or_else(|| Error::Diagnostic("no chains".into()))?;
        let d = first.dim();
        if summaries.iter().any(|s| s.dim() != d) {
            return Err(Error::Diagnostic("chains disagree on dimension".into()));
        }
        if refs.is_some_and(|r| r.len() != d) {
            return Err(Error::Diagnostic(format!("{} reference moments for {d} coordinates", refs.map_or(0, |r| r.len()))));
        }
        let mut warnings = Vec::new();
        // a chain whose ESS is undefined (constant draws) counts as zero
        let ess_r_all: Vec<Option<f64>> = (0..d)
            .map(|j| {
                let defined: Vec<f64> = summaries.iter().filter_map(|s| s.ess_r[j]).collect();
                let missing = summaries.len() - defined.len();
                if defined.is_empty() {
                    return None;
                }
                if missing > 0 {
                    warnings.push(format!("coordinate {j}: {missing} chain(s) with undefined autocorrelation ESS counted as 0"));
                }
                Some(defined.iter().sum())
            })
            .collect();
        let ess_c_all: Vec<Option<f64>> = match refs {
            Some(refs) => (0..d)
                .map(|j| {
                    let est: Vec<f64> = summaries.iter().map(|s| s.means[j]).collect();
                    match error_based_ess(&est, refs[j].mean, refs[j].sd) {
                        Ok(e) => {
                            if let Some(w) = e.warning.as_ref() {
                                warnings.push(format!("coordinate {j}: {w}"));
                            }
                            Some(e.total())
                        }
                        Err(e) => {
                            warnings.push(format!("coordinate {j}: {e}"));
                            None
                        }
                    }
                })
                .collect(),
            None => vec![None; d],
        };
        let slowest_index = argmin(&ess_c_all).or_else(|| argmin(&ess_r_all)).unwrap_or(0);
        let n_evals = summaries.iter().map(|s| s.n_evals).sum();
        let ess_r = ess_r_all[slowest_index];
        let ess_c = ess_c_all[slowest_index];
        Ok(Self {
            moment,
            n_chains: summaries.len(),
            n_draws: summaries.iter().map(|s| s.n_draws).sum(),
            n_evals,
            slowest_index,
            ess_r,
            ess_c,
            cost_r: cost_per_ess(n_evals, ess_r),
            cost_c: cost_per_ess(n_evals, ess_c),
            ess_r_all,
            ess_c_all,
            warnings,
        })
    }

    pub fn new(chains: &[ChainResult], moment: Moment, refs: Option<&[MomentRef]>) -> Result<Self> {
        let summaries: Vec<ChainSummary> = chains.iter().map(|c| ChainSummary::new(c, moment)).collect();
        Self::from_summaries(&summaries, moment, refs)
    }

    /// Error-based cost when available, otherwise autocorrelation cost.
    pub fn primary_cost(&self) -> Option<f64> {
        self.cost_c.or(self.cost_r)
    }

    /// Cost for a fixed coordinate rather than the slowest one.
    pub fn cost_at(&self, j: usize) -> (Option<f64>, Option<f64>) {
        (cost_per_ess(self.n_evals, self.ess_r_all[j]), cost_per_ess(self.n_evals, self.ess_c_all[j]))
    }
}

/// Bootstrap interval of the primary cost, resampling chains.
pub fn bootstrap_cost<R: Rng + ?Sized>(
    rng: &mut R,
    summaries: &[ChainSummary],
    moment: Moment,
    refs: Option<&[MomentRef]>,
    b: usize,
) -> Result<BootstrapCi> {
    bootstrap(rng, summaries.len(), b, |idx| {
        let picked: Vec<ChainSummary> = idx.iter().map(|&i| summaries[i].clone()).collect();
        EssReport::from_summaries(&picked, moment, refs).ok()?.primary_cost()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(evals: u64, ess: f64, mean: f64) -> ChainSummary {
        ChainSummary {
            n_draws: 100,
            n_evals: evals,
            ess_r: vec![Some(ess), Some(2.0 * ess)],
            means: vec![mean, mean],
        }
    }

    #[test]
    fn cost_examples() {
        assert_eq!(cost_per_ess(1000, Some(100.0)), Some(10.0));
        assert_eq!(cost_per_ess(1000, None), None);
        assert_eq!(cost_per_ess(2000, Some(100.0)), Some(20.0));
    }

    #[test]
    fn report_sums_chains_and_picks_slowest() {
        let s: Vec<ChainSummary> = (0..8).map(|i| summary(500, 50.0, 0.1 * (i as f64 - 3.5))).collect();
        let r = EssReport::from_summaries(&s, Moment::First, None).unwrap();
        assert_eq!(r.slowest_index, 0);
        assert_eq!(r.ess_r, Some(400.0));
        assert_eq!(r.cost_r, Some(4000.0 / 400.0));
        assert_eq!(r.ess_c, None);
        let refs = [MomentRef { mean: 0.0, sd: 1.0 }; 2];
        let r = EssReport::from_summaries(&s, Moment::First, Some(&refs)).unwrap();
        assert!(r.ess_c.unwrap() > 0.0);
        assert_eq!(r.primary_cost(), r.cost_c);
    }

    #[test]
    fn stuck_chains_count_as_zero() {
        let mut s: Vec<ChainSummary> = (0..8).map(|_| summary(100, 10.0, 0.0)).collect();
        s[3].ess_r[1] = None;
        let r = EssReport::from_summaries(&s, Moment::First, None).unwrap();
        assert_eq!(r.ess_r_all[1], Some(7.0 * 20.0));
        assert_eq!(r.warnings.len(), 1);
        for c in s.iter_mut() {
            c.ess_r[1] = None;
        }
        let r = EssReport::from_summaries(&s, Moment::First, None).unwrap();
        assert_eq!(r.ess_r_all[1], None);
        assert_eq!(r.cost_at(1).0, None);
    }

    #[test]
    fn bootstrap_of_identical_chains() {
        let s: Vec<ChainSummary> = (0..8).map(|_| summary(100, 10.0, 0.0)).collect();
        let mut rng = crate::rng::chain_rng(1);
        let ci = bootstrap_cost(&mut rng, &s, Moment::First, None, 200).unwrap();
        assert_eq!(ci.lo, ci.hi);
        assert_eq!(ci.point, 10.0);
    }
}
