use std::path::Path;

use super::Density;
use crate::dataset;
use crate::error::{Error, Result};
use crate::math::LN_PI;

#[derive(Debug, Clone, PartialEq)]
pub struct LighthouseData {
    pub flashes: Vec<f64>,
}

impl LighthouseData {
    pub fn new(flashes: Vec<f64>) -> Result<Self> {
        if flashes.is_empty() || flashes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("lighthouse needs at least one finite flash position".into()));
        }
        Ok(Self { flashes })
    }

    /// Three flashes at 0.9, 1.2 and 1.21.
    pub fn benchmark() -> Self {
        Self::new(vec![0.9, 1.2, 1.21]).expect("valid")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let mut cols = dataset::read_columns_from_path(path, &["x"])?;
        Self::new(cols.pop().unwrap())
    }
}

/// Gull's lighthouse on `(x0, log y)` with flat priors on `x0` and `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lighthouse {
    data: LighthouseData,
}

impl Lighthouse {
    pub fn new(data: LighthouseData) -> Self {
        Self { data }
    }
}

impl Density for Lighthouse {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "lighthouse"
    }

    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let (x0, log_y) = (q[0], q[1]);
        let y = log_y.exp();
        let y2 = y * y;
        let n = self.data.flashes.len() as f64;
        // Cauchy likelihoods plus the log-Jacobian of y = exp(log y)
        let mut lp = n * (log_y - LN_PI) + log_y;
        let mut d_x0 = 0.0;
        let mut d_log_y = n + 1.0;
        for &x in &self.data.flashes {
            let dx = x - x0;
            let r = y2 + dx * dx;
            lp -= r.ln();
            d_x0 += 2.0 * dx / r;
            d_log_y -= 2.0 * y2 / r;
        }
        grad[0] = d_x0;
        grad[1] = d_log_y;
        lp
    }

    fn typical_point(&self) -> Vec<f64> {
        let mut xs = self.data.flashes.clone();
        xs.sort_by(f64::total_cmp);
        vec![xs[xs.len() / 2], (0.2f64).ln()]
    }
}
