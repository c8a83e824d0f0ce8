use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::log1m_exp;
use crate::phase_space::{MassMatrix, ProposalMapSpec};

/// Floor applied to `log(1 - alpha)` on the current-point side of a ratio.
pub const LOG_COMPLEMENT_FLOOR: f64 = -700.0;

/// Sampling method as named in run specs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Hmc,
    Drhmc,
    DrhmcProb,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hmc => "hmc",
            Method::Drhmc => "drhmc",
            Method::DrhmcProb => "drhmc-prob",
        }
    }

    pub fn is_delayed_rejection(self) -> bool {
        self != Method::Hmc
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hmc" => Ok(Method::Hmc),
            "drhmc" => Ok(Method::Drhmc),
            "drhmc-prob" => Ok(Method::DrhmcProb),
            other => Err(Error::Unknown {
                kind: "method",
                name: other.to_string(),
            }),
        }
    }
}

/// Probability of making stage `j + 1` after stage `j` was rejected with
/// acceptance probability `alpha_j`. Only consulted in probabilistic mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetryRule {
    /// `p = 1`.
    Always,
    /// `p = 1 - alpha_j`.
    OneMinusAlpha,
    /// A fixed probability in `[0, 1]`.
    Constant(f64),
}

impl RetryRule {
    /// `log p` given `log alpha_j`.
    pub fn log_prob(self, log_alpha: f64) -> f64 {
        match self {
            RetryRule::Always => 0.0,
            RetryRule::OneMinusAlpha => log1m_exp(log_alpha),
            RetryRule::Constant(c) => c.ln(),
        }
    }
}

impl Default for RetryRule {
    fn default() -> Self {
        RetryRule::OneMinusAlpha
    }
}

/// Everything a transition needs besides the model and the RNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrConfig {
    /// Stage-1 step size.
    pub eps0: f64,
    /// Stage-1 leapfrog count.
    pub n_steps: usize,
    pub mass: MassMatrix,
    /// Maximum number of proposals per transition; 1 is plain HMC.
    pub k_max: usize,
    /// Step-size divisor between stages.
    pub a: usize,
    pub probabilistic: bool,
    #[serde(default)]
    pub retry_rule: RetryRule,
}

impl DrConfig {
    pub fn hmc(eps0: f64, n_steps: usize, mass: MassMatrix) -> Result<Self> {
        Self::new(eps0, n_steps, mass, 1, 2, false)
    }

    pub fn new(
        eps0: f64,
        n_steps: usize,
        mass: MassMatrix,
        k_max: usize,
        a: usize,
        probabilistic: bool,
    ) -> Result<Self> {
        let cfg = Self {
            eps0,
            n_steps,
            mass,
            k_max,
            a,
            probabilistic,
            retry_rule: RetryRule::OneMinusAlpha,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config for `method`; `k_max` and `a` are ignored for HMC.
    pub fn for_method(method: Method, eps0: f64, n_steps: usize, mass: MassMatrix, k_max: usize, a: usize) -> Result<Self> {
        match method {
            Method::Hmc => Self::hmc(eps0, n_steps, mass),
            Method::Drhmc => Self::new(eps0, n_steps, mass, k_max, a, false),
            Method::DrhmcProb => Self::new(eps0, n_steps, mass, k_max, a, true),
        }
    }

    pub fn with_retry_rule(mut self, rule: RetryRule) -> Result<Self> {
        self.retry_rule = rule;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        if self.k_max > 16 {
            return Err(Error::InvalidConfig(format!("k_max = {} is beyond any sensible ladder", self.k_max)));
        }
        if let RetryRule::Constant(c) = self.retry_rule {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidConfig(format!("constant retry probability {c} outside [0, 1]")));
            }
        }
        ProposalMapSpec::new(self.eps0, self.n_steps, self.k_max, self.a)?;
        Ok(())
    }

    pub fn method(&self) -> Method {
        match (self.k_max, self.probabilistic) {
            (1, _) => Method::Hmc,
            (_, false) => Method::Drhmc,
            (_, true) => Method::DrhmcProb,
        }
    }

    pub fn integration_time(&self) -> f64 {
        self.eps0 * self.n_steps as f64
    }

    pub fn stage_spec(&self, stage: usize) -> ProposalMapSpec {
        ProposalMapSpec {
            eps: self.eps0,
            n_steps: self.n_steps,
            stage,
            a: self.a,
        }
    }

    /// Retry rule in effect; deterministic mode always retries.
    pub(crate) fn effective_rule(&self) -> RetryRule {
        if self.probabilistic {
            self.retry_rule
        } else {
            RetryRule::Always
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
