//! Target densities.
//!
//! A benchmark model implements [`Density`]: a pure log density with an
//! analytic gradient over unconstrained coordinates. Samplers never touch a
//! `Density` directly; they go through a [`TargetModel`], which owns the
//! density and an atomic counter of joint (log density + gradient)
//! evaluations. The counter is the source of truth for the cost metric.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::RngCore;

mod eight_schools;
mod funnel;
mod gaussian;
mod gradcheck;
mod lighthouse;
mod mixture;
mod stoch_vol;

pub use eight_schools::{EightSchools, EightSchoolsData};
pub use funnel::{reference_sample as funnel_reference_sample, Funnel};
pub use gaussian::{Flat, Gaussian};
pub use gradcheck::{check_gradient, GradientCheck};
pub use lighthouse::{Lighthouse, LighthouseData};
pub use mixture::{reference_sample as mixture_reference_sample, Mixture};
pub use stoch_vol::{simulate as stoch_vol_simulate, StochVol, StochVolData};

/// Which expectation a diagnostic is about: `E[q]` or `E[q^2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Moment {
    First,
    Second,
}

impl Moment {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Moment::First => x,
            Moment::Second => x * x,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Moment::First => "theta",
            Moment::Second => "theta_sq",
        }
    }
}

/// Posterior mean and standard deviation of a scalar functional.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MomentRef {
    pub mean: f64,
    pub sd: f64,
}

/// A differentiable log density on unconstrained coordinates.
pub trait Density: Send + Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> &str;

    /// Returns `log pi(q)` (up to an additive constant) and writes its
    /// gradient into `grad`.
    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64;

    /// A point in the bulk of the distribution.
    fn typical_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    /// One exact iid draw, when the model admits one.
    fn reference_draw(&self, _rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        None
    }

    /// Closed-form per-coordinate moments, when known.
    fn exact_moments(&self, _moment: Moment) -> Option<Vec<MomentRef>> {
        None
    }
}

/// A density together with its evaluation counter.
///
/// [`TargetModel::fork`] shares the density but starts a fresh counter, which
/// is how concurrent chains keep exact per-chain tallies.
pub struct TargetModel {
    density: Arc<dyn Density>,
    evals: AtomicU64,
}

impl std::fmt::Debug for TargetModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetModel")
            .field("name", &self.name())
            .field("dim", &self.dim())
            .field("evals", &self.eval_count())
            .finish()
    }
}

impl TargetModel {
    pub fn new(density: impl Density + 'static) -> Self {
        Self::from_boxed(Box::new(density))
    }

    pub fn from_boxed(density: Box<dyn Density>) -> Self {
        Self {
            density: Arc::from(density),
            evals: AtomicU64::new(0),
        }
    }

    /// Same density, counter reset to zero.
    pub fn fork(&self) -> Self {
        Self {
            density: Arc::clone(&self.density),
            evals: AtomicU64::new(0),
        }
    }

    pub fn shared(density: impl Density + 'static) -> Arc<Self> {
        Arc::new(Self::new(density))
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn name(&self) -> &str {
        self.density.name()
    }

    pub fn density(&self) -> &dyn Density {
        self.density.as_ref()
    }

    /// One joint evaluation. Non-finite or NaN results are reported as
    /// `-inf` so callers can treat them as zero density.
    pub fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(q.len(), self.dim());
        debug_assert_eq!(grad.len(), self.dim());
        self.evals.fetch_add(1, Ordering::Relaxed);
        let lp = self.density.log_density_grad(q, grad);
        if lp.is_nan() || lp == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    /// Log density alone. Counts as one joint evaluation.
    pub fn log_density(&self, q: &[f64]) -> f64 {
        let mut grad = vec![0.0; self.dim()];
        self.log_density_grad(q, &mut grad)
    }

    pub fn eval_count(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn typical_point(&self) -> Vec<f64> {
        self.density.typical_point()
    }

    pub fn reference_draw(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        self.density.reference_draw(rng)
    }

    pub fn exact_moments(&self, moment: Moment) -> Option<Vec<MomentRef>> {
        self.density.exact_moments(moment)
    }
}
