use std::path::Path;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::Density;
use crate::dataset;
use crate::error::{Error, Result};
use crate::math::{log_cauchy, log_cosh, log_half_cauchy, LN_2PI};

const MU_PRIOR_SCALE: f64 = 10.0;
const SIGMA_PRIOR_SCALE: f64 = 5.0;

/// Desk-scale synthetic series: length, `(mu, sigma, phi)` and seed.
pub const DESK_T: usize = 100;
pub const DESK_TRUTH: (f64, f64, f64) = (-1.0, 0.3, 0.95);
pub const DESK_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StochVolData {
    /// Mean-corrected returns.
    pub returns: Vec<f64>,
    /// Log-volatility path, when the series was simulated.
    pub latent: Option<Vec<f64>>,
}

impl StochVolData {
    pub fn new(returns: Vec<f64>) -> Result<Self> {
        if returns.is_empty() || returns.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidModel("stochastic volatility needs finite returns".into()));
        }
        Ok(Self { returns, latent: None })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let mut cols = dataset::read_columns_from_path(path, &["y"])?;
        Self::new(cols.pop().unwrap())
    }

    /// The fixed synthetic series used by the desk-scale presets.
    pub fn desk_default() -> Self {
        let (mu, sigma, phi) = DESK_TRUTH;
        let mut rng = crate::rng::chain_rng(DESK_SEED);
        simulate(&mut rng, DESK_T, mu, sigma, phi).expect("valid desk parameters")
    }
}

/// Simulates `h_1 ~ N(mu, sigma^2 / (1 - phi^2))`,
/// `h_t = mu + phi (h_{t-1} - mu) + sigma z_t` and `y_t ~ N(0, e^{h_t})`.
pub fn simulate(rng: &mut dyn RngCore, t: usize, mu: f64, sigma: f64, phi: f64) -> Result<StochVolData> {
    if t == 0 {
        return Err(Error::InvalidModel("series length must be positive".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidModel(format!("sigma must be non-negative, got {sigma}")));
    }
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidModel(format!("phi must lie in (-1, 1), got {phi}")));
    }
    if !mu.is_finite() {
        return Err(Error::InvalidModel("mu must be finite".into()));
    }
    let mut h = Vec::with_capacity(t);
    let mut y = Vec::with_capacity(t);
    let stationary_sd = sigma / (1.0 - phi * phi).sqrt();
    let mut prev = mu;
    for i in 0..t {
        let z: f64 = StandardNormal.sample(rng);
        let ht = if i == 0 {
            mu + stationary_sd * z
        } else {
            mu + phi * (prev - mu) + sigma * z
        };
        let e: f64 = StandardNormal.sample(rng);
        h.push(ht);
        y.push((0.5 * ht).exp() * e);
        prev = ht;
    }
    Ok(StochVolData {
        returns: y,
        latent: Some(h),
    })
}

/// Stochastic volatility on `(mu, log sigma, atanh phi, h_1..h_T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochVol {
    data: StochVolData,
}

impl StochVol {
    pub fn new(data: StochVolData) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &StochVolData {
        &self.data
    }
}

impl Density for StochVol {
    fn dim(&self) -> usize {
        self.data.returns.len() + 3
    }

    fn name(&self) -> &str {
        "stoch_vol"
    }

    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let (mu, log_sigma, u) = (q[0], q[1], q[2]);
        let h = &q[3..];
        let sigma = log_sigma.exp();
        let s2 = sigma * sigma;
        let phi = u.tanh();
        // 1 - phi^2 = sech^2(u), kept in log form for large |u|
        let log_w = -2.0 * log_cosh(u);
        let w = log_w.exp();

        let mut lp = log_cauchy(mu, 0.0, MU_PRIOR_SCALE);
        let mut d_mu = -2.0 * mu / (MU_PRIOR_SCALE * MU_PRIOR_SCALE + mu * mu);

        lp += log_half_cauchy(sigma, SIGMA_PRIOR_SCALE) + log_sigma;
        let c2 = SIGMA_PRIOR_SCALE * SIGMA_PRIOR_SCALE;
        let mut d_ls = -2.0 * s2 / (c2 + s2) + 1.0;

        // uniform(-1, 1) prior on phi and the tanh Jacobian
        lp += -std::f64::consts::LN_2 + log_w;
        let mut d_u = -2.0 * phi;

        for g in grad[3..].iter_mut() {
            *g = 0.0;
        }

        let dev1 = h[0] - mu;
        lp += -0.5 * LN_2PI - log_sigma + 0.5 * log_w - 0.5 * w * dev1 * dev1 / s2;
        grad[3] -= w * dev1 / s2;
        d_mu += w * dev1 / s2;
        d_ls += -1.0 + w * dev1 * dev1 / s2;
        d_u += -phi + phi * w * dev1 * dev1 / s2;

        for t in 1..h.len() {
            let lag = h[t - 1] - mu;
            let r = h[t] - mu - phi * lag;
            lp += -0.5 * LN_2PI - log_sigma - 0.5 * r * r / s2;
            grad[3 + t] -= r / s2;
            grad[3 + t - 1] += phi * r / s2;
            d_mu += r * (1.0 - phi) / s2;
            d_ls += -1.0 + r * r / s2;
            d_u += w * r * lag / s2;
        }

        for (t, &y) in self.data.returns.iter().enumerate() {
            let scaled = y * y * (-h[t]).exp();
            lp += -0.5 * LN_2PI - 0.5 * h[t] - 0.5 * scaled;
            grad[3 + t] += -0.5 + 0.5 * scaled;
        }

        grad[0] = d_mu;
        grad[1] = d_ls;
        grad[2] = d_u;
        lp
    }

    fn typical_point(&self) -> Vec<f64> {
        let y = &self.data.returns;
        let ms = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        let level = ms.max(1e-12).ln();
        let mut q = vec![level, 0.3f64.ln(), 0.9f64.atanh()];
        q.extend(std::iter::repeat_n(level, y.len()));
        q
    }
}
