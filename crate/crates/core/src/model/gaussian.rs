use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{Density, Moment, MomentRef};
use crate::error::{Error, Result};
use crate::math::LN_2PI;

/// Zero-mean normal with independent coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    scales: Vec<f64>,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidModel("gaussian scales must be positive".into()));
        }
        let log_norm = -scales.iter().map(|s| s.ln() + 0.5 * LN_2PI).sum::<f64>();
        Ok(Self { scales, log_norm })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(vec![1.0; d]).expect("d > 0")
    }
}

impl Density for Gaussian {
    fn dim(&self) -> usize {
        self.scales.len()
    }

    fn name(&self) -> &str {
        "normal"
    }

    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = self.log_norm;
        for ((g, &x), &s) in grad.iter_mut().zip(q).zip(&self.scales) {
            let prec = 1.0 / (s * s);
            lp -= 0.5 * x * x * prec;
            *g = -x * prec;
        }
        lp
    }

    fn reference_draw(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        Some(
            self.scales
                .iter()
                .map(|s| {
                    let z: f64 = StandardNormal.sample(rng);
                    s * z
                })
                .collect(),
        )
    }

    fn exact_moments(&self, moment: Moment) -> Option<Vec<MomentRef>> {
        Some(
            self.scales
                .iter()
                .map(|s| match moment {
                    Moment::First => MomentRef { mean: 0.0, sd: *s },
                    Moment::Second => MomentRef {
                        mean: s * s,
                        sd: 2f64.sqrt() * s * s,
                    },
                })
                .collect(),
        )
    }
}

/// Improper uniform density: `log pi = 0`, zero gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Flat {
    d: usize,
}

impl Flat {
    pub fn new(d: usize) -> Self {
        Self { d }
    }
}

impl Density for Flat {
    fn dim(&self) -> usize {
        self.d
    }

    fn name(&self) -> &str {
        "flat"
    }

    fn log_density_grad(&self, _q: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        0.0
    }
}
