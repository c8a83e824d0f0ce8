use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{Density, Moment, MomentRef};
use crate::error::{Error, Result};
use crate::math::LN_2PI;

/// Neal's funnel: `beta ~ N(0, sigma^2)`, `alpha_i | beta ~ N(0, e^beta)`.
///
/// Coordinate 0 is `beta`; coordinates `1..d` are the `alpha_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Funnel {
    d: usize,
    sigma: f64,
}

impl Funnel {
    pub fn new(d: usize, sigma: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidModel(format!("funnel needs d >= 2, got {d}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidModel(format!("funnel sigma must be positive, got {sigma}")));
        }
        Ok(Self { d, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Density for Funnel {
    fn dim(&self) -> usize {
        self.d
    }

    fn name(&self) -> &str {
        "funnel"
    }

    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let beta = q[0];
        let s2 = self.sigma * self.sigma;
        let inv_var = (-beta).exp();
        let k = (self.d - 1) as f64;

        let mut lp = -0.5 * (LN_2PI + s2.ln()) - 0.5 * beta * beta / s2;
        lp -= 0.5 * k * (LN_2PI + beta);
        let mut sum_sq = 0.0;
        for (g, &a) in grad[1..].iter_mut().zip(&q[1..]) {
            sum_sq += a * a;
            *g = -a * inv_var;
        }
        lp -= 0.5 * sum_sq * inv_var;
        grad[0] = -beta / s2 - 0.5 * k + 0.5 * sum_sq * inv_var;
        lp
    }

    fn reference_draw(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(self.d);
        let z: f64 = StandardNormal.sample(rng);
        let beta = self.sigma * z;
        out.push(beta);
        let scale = (0.5 * beta).exp();
        for _ in 1..self.d {
            let z: f64 = StandardNormal.sample(rng);
            out.push(scale * z);
        }
        Some(out)
    }

    fn exact_moments(&self, moment: Moment) -> Option<Vec<MomentRef>> {
        let s2 = self.sigma * self.sigma;
        let (beta, alpha) = match moment {
            Moment::First => (
                MomentRef { mean: 0.0, sd: self.sigma },
                // Var(alpha) = E[e^beta] = e^{s2/2}
                MomentRef { mean: 0.0, sd: (0.25 * s2).exp() },
            ),
            Moment::Second => (
                MomentRef { mean: s2, sd: 2f64.sqrt() * s2 },
                // E[alpha^4] = 3 E[e^{2 beta}] = 3 e^{2 s2}
                MomentRef {
                    mean: (0.5 * s2).exp(),
                    sd: (3.0 * (2.0 * s2).exp() - s2.exp()).sqrt(),
                },
            ),
        };
        let mut out = vec![alpha; self.d];
        out[0] = beta;
        Some(out)
    }
}

/// `n` exact draws from the non-centred representation of the funnel.
pub fn reference_sample(funnel: &Funnel, rng: &mut dyn RngCore, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| funnel.reference_draw(rng).expect("funnel has an exact sampler")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::ks_statistic;
    use crate::math::std_normal_cdf;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eval(f: &Funnel, q: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; q.len()];
        let lp = f.log_density_grad(q, &mut g);
        (lp, g)
    }

    #[test]
    fn origin_value_in_two_dimensions() {
        let f = Funnel::new(2, 3.0).unwrap();
        let (lp, _) = eval(&f, &[0.0, 0.0]);
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 9.0).ln()
            - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(lp, expected, max_relative = 1e-14);
        assert_relative_eq!(lp, -2.93648, epsilon = 1e-5);
    }

    #[test]
    fn alpha_gradient_vanishes_at_zero() {
        let f = Funnel::new(2, 3.0).unwrap();
        for beta in [-4.0, 0.0, 2.5] {
            assert_eq!(eval(&f, &[beta, 0.0]).1[1], 0.0);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Funnel::new(1, 3.0).is_err());
        assert!(Funnel::new(3, 0.0).is_err());
        assert!(Funnel::new(3, f64::NAN).is_err());
    }

    #[test]
    fn reference_sampler_matches_beta_marginal() {
        let f = Funnel::new(4, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let draws = reference_sample(&f, &mut rng, n);
        let betas: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let mean = betas.iter().sum::<f64>() / n as f64;
        let var = betas.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var / 9.0 - 1.0).abs() < 0.05, "var {var}");

        let p_neck = std_normal_cdf(-5.0 / 3.0);
        assert_relative_eq!(p_neck, 0.0478, epsilon = 1e-4);
        let frac = betas.iter().filter(|&&b| b < -5.0).count() as f64 / n as f64;
        let se = (p_neck * (1.0 - p_neck) / n as f64).sqrt();
        assert!((frac - p_neck).abs() < 3.0 * se, "frac {frac}");

        let ks = ks_statistic(&betas, |x| std_normal_cdf(x / 3.0)).unwrap();
        assert!(ks.d < 1.628 / (n as f64).sqrt(), "D = {}", ks.d);
    }
}
