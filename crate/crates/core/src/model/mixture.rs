use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::{Density, Moment, MomentRef};
use crate::error::{Error, Result};
use crate::math::LN_2PI;

/// Univariate Gaussian mixture `sum_i w_i N(theta | mu_i, sigma_i^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    weights: Vec<f64>,
    locs: Vec<f64>,
    scales: Vec<f64>,
    log_norm: Vec<f64>,
}

impl Mixture {
    pub fn new(weights: Vec<f64>, locs: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if n == 0 || locs.len() != n || scales.len() != n {
            return Err(Error::InvalidModel(
                "mixture weights, locations and scales must be non-empty and of equal length".into(),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidModel("mixture weights must be positive".into()));
        }
        if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidModel("mixture scales must be positive".into()));
        }
        if locs.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidModel("mixture locations must be finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("mixture weights sum to {total}, not 1")));
        }
        let log_norm = weights
            .iter()
            .zip(&scales)
            .map(|(w, s)| w.ln() - s.ln() - 0.5 * LN_2PI)
            .collect();
        Ok(Self {
            weights,
            locs,
            scales,
            log_norm,
        })
    }

    /// Two components: equal weights, locations (0, 3), scales (0.1, 1).
    pub fn benchmark() -> Self {
        Self::new(vec![0.5, 0.5], vec![0.0, 3.0], vec![0.1, 1.0]).expect("valid benchmark")
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// Ancestral draw that also reports the selected component.
    pub fn draw_with_component(&self, rng: &mut dyn RngCore) -> (usize, f64) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        (pick, self.locs[pick] + self.scales[pick] * z)
    }

    fn raw_moment(&self, order: u32) -> f64 {
        self.weights
            .iter()
            .zip(self.locs.iter().zip(&self.scales))
            .map(|(w, (m, s))| {
                let (m2, s2) = (m * m, s * s);
                w * match order {
                    1 => *m,
                    2 => m2 + s2,
                    3 => m * m2 + 3.0 * m * s2,
                    4 => m2 * m2 + 6.0 * m2 * s2 + 3.0 * s2 * s2,
                    _ => unreachable!(),
                }
            })
            .sum()
    }
}

impl Density for Mixture {
    fn dim(&self) -> usize {
        1
    }

    fn name(&self) -> &str {
        "mixture"
    }

    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let theta = q[0];
        let term = |i: usize| {
            let z = (theta - self.locs[i]) / self.scales[i];
            self.log_norm[i] - 0.5 * z * z
        };
        // log-sum-exp with the largest component factored out
        let top = (0..self.components()).map(term).fold(f64::NEG_INFINITY, f64::max);
        let (mut mass, mut slope) = (0.0, 0.0);
        for i in 0..self.components() {
            let w = (term(i) - top).exp();
            mass += w;
            slope -= w * (theta - self.locs[i]) / (self.scales[i] * self.scales[i]);
        }
        grad[0] = slope / mass;
        top + mass.ln()
    }

    fn typical_point(&self) -> Vec<f64> {
        vec![self.locs[0]]
    }

    fn reference_draw(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        Some(vec![self.draw_with_component(rng).1])
    }

    fn exact_moments(&self, moment: Moment) -> Option<Vec<MomentRef>> {
        let (m1, m2) = (self.raw_moment(1), self.raw_moment(2));
        let r = match moment {
            Moment::First => MomentRef {
                mean: m1,
                sd: (m2 - m1 * m1).sqrt(),
            },
            Moment::Second => MomentRef {
                mean: m2,
                sd: (self.raw_moment(4) - m2 * m2).sqrt(),
            },
        };
        Some(vec![r])
    }
}

/// `n` ancestral draws.
pub fn reference_sample(mixture: &Mixture, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
    (0..n).map(|_| mixture.draw_with_component(rng).1).collect()
}
