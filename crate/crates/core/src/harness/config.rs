//! Run specifications: strict JSON parsing, defaults and validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    EightSchools, EightSchoolsData, Funnel, Gaussian, Lighthouse, LighthouseData, Mixture, Moment, StochVol,
    StochVolData, TargetModel,
};
use crate::sampler::{Method, RetryRule};

/// A benchmark target and its parameters. Dataset paths are resolved
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Funnel {
        d: usize,
        #[serde(default = "default_funnel_sigma")]
        sigma: f64,
    },
    EightSchools {
        #[serde(default)]
        data: Option<PathBuf>,
    },
    Lighthouse {
        #[serde(default)]
        data: Option<PathBuf>,
    },
    Mixture {
        #[serde(default)]
        weights: Option<Vec<f64>>,
        #[serde(default)]
        locs: Option<Vec<f64>>,
        #[serde(default)]
        scales: Option<Vec<f64>>,
    },
    StochVol {
        #[serde(default)]
        data: Option<PathBuf>,
    },
    Normal {
        d: usize,
        #[serde(default)]
        scales: Option<Vec<f64>>,
    },
}

fn default_funnel_sigma() -> f64 {
    3.0
}

impl ModelSpec {
    pub const NAMES: [&'static str; 6] = ["funnel", "eight_schools", "lighthouse", "mixture", "stoch_vol", "normal"];

    /// Default parameters for a model name.
    pub fn named(name: &str) -> Result<Self> {
        Ok(match name {
            "funnel" => ModelSpec::Funnel { d: 5, sigma: 3.0 },
            "eight_schools" => ModelSpec::EightSchools { data: None },
            "lighthouse" => ModelSpec::Lighthouse { data: None },
            "mixture" => ModelSpec::Mixture {
                weights: None,
                locs: None,
                scales: None,
            },
            "stoch_vol" => ModelSpec::StochVol { data: None },
            "normal" => ModelSpec::Normal { d: 10, scales: None },
            other => {
                return Err(Error::Unknown {
                    kind: "model",
                    name: other.to_string(),
                })
            }
        })
    }

    pub fn build(&self, base_dir: &Path) -> Result<TargetModel> {
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base_dir.join(p) };
        Ok(match self {
            ModelSpec::Funnel { d, sigma } => TargetModel::new(Funnel::new(*d, *sigma)?),
            ModelSpec::EightSchools { data } => {
                let data = match data {
                    Some(p) => EightSchoolsData::from_path(&resolve(p))?,
                    None => EightSchoolsData::rubin(),
                };
                TargetModel::new(EightSchools::new(data))
            }
            ModelSpec::Lighthouse { data } => {
                let data = match data {
                    Some(p) => LighthouseData::from_path(&resolve(p))?,
                    None => LighthouseData::benchmark(),
                };
                TargetModel::new(Lighthouse::new(data))
            }
            ModelSpec::Mixture { weights, locs, scales } => match (weights, locs, scales) {
                (None, None, None) => TargetModel::new(Mixture::benchmark()),
                (Some(w), Some(l), Some(s)) => TargetModel::new(Mixture::new(w.clone(), l.clone(), s.clone())?),
                _ => {
                    return Err(Error::config(
                        "model",
                        "mixture needs all of weights, locs and scales, or none of them",
                    ))
                }
            },
            ModelSpec::StochVol { data } => {
                let data = match data {
                    Some(p) => StochVolData::from_path(&resolve(p))?,
                    None => StochVolData::desk_default(),
                };
                TargetModel::new(StochVol::new(data))
            }
            ModelSpec::Normal { d, scales } => match scales {
                Some(s) => {
                    if s.len() != *d {
                        return Err(Error::config("model.scales", format!("expected {d} scales, got {}", s.len())));
                    }
                    TargetModel::new(Gaussian::new(s.clone())?)
                }
                None => TargetModel::new(Gaussian::standard(*d)),
            },
        })
    }
}

/// Grid axes. HMC cells only use the step-size axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_multipliers")]
    pub eps_multipliers: Vec<f64>,
    /// Step-size multipliers for HMC cells; defaults to `eps_multipliers`.
    #[serde(default)]
    pub hmc_eps_multipliers: Option<Vec<f64>>,
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    #[serde(default = "default_a")]
    pub a: Vec<usize>,
}

fn default_multipliers() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 5.0]
}

fn default_k() -> Vec<usize> {
    vec![2, 3, 4]
}

fn default_a() -> Vec<usize> {
    vec![2, 5, 10]
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            eps_multipliers: default_multipliers(),
            hmc_eps_multipliers: None,
            k: default_k(),
            a: default_a(),
        }
    }
}

/// Step size and mass handling before sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSpec {
    /// Fixed base step size; when absent it is adapted during warmup.
    #[serde(default)]
    pub step_size: Option<f64>,
    /// Fixed diagonal mass; when absent it is adapted, or the identity if
    /// the step size is fixed.
    #[serde(default)]
    pub mass: Option<Vec<f64>>,
    #[serde(default = "default_target_accept")]
    pub target_accept: f64,
    /// Cap on leapfrog steps per warmup transition.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_target_accept() -> f64 {
    0.8
}

fn default_max_steps() -> usize {
    1000
}

impl Default for TuningSpec {
    fn default() -> Self {
        Self {
            step_size: None,
            mass: None,
            target_accept: default_target_accept(),
            max_steps: default_max_steps(),
        }
    }
}

impl TuningSpec {
    pub fn adapts(&self) -> bool {
        self.step_size.is_none()
    }
}

/// Long run whose pooled moments stand in for exact ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    #[serde(default = "default_reference_chains")]
    pub n_chains: usize,
    #[serde(default = "default_reference_draws")]
    pub n_draws: usize,
}

fn default_reference_chains() -> usize {
    8
}

fn default_reference_draws() -> usize {
    50_000
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub model: ModelSpec,
    /// One method or a list of methods.
    #[serde(deserialize_with = "one_or_many")]
    pub method: Vec<Method>,
    #[serde(default)]
    pub grid: GridSpec,
    /// Trajectory length `T = eps * n`, shared by every cell.
    pub integration_time: f64,
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    #[serde(default = "default_warmup")]
    pub n_warmup: usize,
    #[serde(default = "default_draws")]
    pub n_draws: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tuning: TuningSpec,
    #[serde(default = "default_moments")]
    pub moments: Vec<Moment>,
    #[serde(default)]
    pub retry_rule: RetryRule,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
}

fn default_chains() -> usize {
    50
}

fn default_warmup() -> usize {
    1000
}

fn default_draws() -> usize {
    20_000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_moments() -> Vec<Moment> {
    vec![Moment::First, Moment::Second]
}

fn default_resamples() -> usize {
    200
}

fn one_or_many<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<Method>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Method),
        Many(Vec<Method>),
    }
    match OneOrMany::deserialize(de) {
        Ok(OneOrMany::One(m)) => Ok(vec![m]),
        Ok(OneOrMany::Many(v)) => Ok(v),
        Err(_) => Err(serde::de::Error::custom(
            "expected \"hmc\", \"drhmc\", \"drhmc-prob\" or a list of them",
        )),
    }
}

/// Rejects objects with repeated keys anywhere in the document.
fn check_duplicate_keys(text: &str) -> Result<()> {
    use serde::de::{MapAccess, SeqAccess, Visitor};

    struct Strict(String);

    impl<'de> serde::de::DeserializeSeed<'de> for Strict {
        type Value = ();

        fn deserialize<D: Deserializer<'de>>(self, de: D) -> std::result::Result<(), D::Error> {
            de.deserialize_any(self)
        }
    }

    impl<'de> Visitor<'de> for Strict {
        type Value = ();

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("any JSON value")
        }

        fn visit_bool<E>(self, _: bool) -> std::result::Result<(), E> {
            Ok(())
        }
        fn visit_i64<E>(self, _: i64) -> std::result::Result<(), E> {
            Ok(())
        }
        fn visit_u64<E>(self, _: u64) -> std::result::Result<(), E> {
            Ok(())
        }
        fn visit_f64<E>(self, _: f64) -> std::result::Result<(), E> {
            Ok(())
        }
        fn visit_str<E>(self, _: &str) -> std::result::Result<(), E> {
            Ok(())
        }
        fn visit_unit<E>(self) -> std::result::Result<(), E> {
            Ok(())
        }

        fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<(), A::Error> {
            let mut i = 0;
            while seq.next_element_seed(Strict(format!("{}[{i}]", self.0)))?.is_some() {
                i += 1;
            }
            Ok(())
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<(), A::Error> {
            let mut seen = std::collections::BTreeSet::new();
            while let Some(key) = map.next_key::<String>()? {
                let path = if self.0.is_empty() { key.clone() } else { format!("{}.{key}", self.0) };
                if !seen.insert(key) {
                    return Err(serde::de::Error::custom(format!("duplicate key `{path}`")));
                }
                map.next_value_seed(Strict(path))?;
            }
            Ok(())
        }
    }

    let mut de = serde_json::Deserializer::from_str(text);
    serde::de::DeserializeSeed::deserialize(Strict(String::new()), &mut de)
        .map_err(|e| Error::config("<document>", e.to_string()))
}

fn positive(path: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::config(path, "must be positive"))
    } else {
        Ok(())
    }
}

fn positive_f(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive and finite, got {v}")))
    }
}

impl RunSpec {
    /// Strict parse: unknown keys, duplicate keys and bad values are errors
    /// that name the offending field.
    pub fn parse_str(text: &str) -> Result<Self> {
        check_duplicate_keys(text)?;
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: RunSpec = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<document>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn parse_config(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.method.is_empty() {
            return Err(Error::config("method", "at least one method is required"));
        }
        positive_f("integration_time", self.integration_time)?;
        positive("n_chains", self.n_chains)?;
        positive("n_draws", self.n_draws)?;
        if self.grid.eps_multipliers.is_empty() {
            return Err(Error::config("grid.eps_multipliers", "must not be empty"));
        }
        for (i, m) in self.grid.eps_multipliers.iter().enumerate() {
            positive_f(&format!("grid.eps_multipliers[{i}]"), *m)?;
        }
        if let Some(ms) = &self.grid.hmc_eps_multipliers {
            if ms.is_empty() {
                return Err(Error::config("grid.hmc_eps_multipliers", "must not be empty"));
            }
            for (i, m) in ms.iter().enumerate() {
                positive_f(&format!("grid.hmc_eps_multipliers[{i}]"), *m)?;
            }
        }
        if self.method.iter().any(|m| m.is_delayed_rejection()) {
            if self.grid.k.is_empty() || self.grid.a.is_empty() {
                return Err(Error::config("grid", "k and a must not be empty for delayed-rejection methods"));
            }
            for (i, k) in self.grid.k.iter().enumerate() {
                if !(1..=8).contains(k) {
                    return Err(Error::config(format!("grid.k[{i}]"), format!("stage count must be in 1..=8, got {k}")));
                }
            }
            for (i, a) in self.grid.a.iter().enumerate() {
                if *a < 2 {
                    return Err(Error::config(format!("grid.a[{i}]"), format!("adaptivity factor must be >= 2, got {a}")));
                }
            }
        }
        if let Some(eps) = self.tuning.step_size {
            positive_f("tuning.step_size", eps)?;
        }
        if let Some(mass) = &self.tuning.mass {
            for (i, m) in mass.iter().enumerate() {
                positive_f(&format!("tuning.mass[{i}]"), *m)?;
            }
        }
        if !(self.tuning.target_accept > 0.0 && self.tuning.target_accept < 1.0) {
            return Err(Error::config("tuning.target_accept", "must lie in (0, 1)"));
        }
        positive("tuning.max_steps", self.tuning.max_steps)?;
        if let RetryRule::Constant(c) = self.retry_rule {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::config("retry_rule.constant", format!("probability {c} outside [0, 1]")));
            }
        }
        if self.moments.is_empty() {
            return Err(Error::config("moments", "must not be empty"));
        }
        if self.bootstrap_resamples < crate::diagnostics::MIN_RESAMPLES {
            return Err(Error::config(
                "bootstrap_resamples",
                format!("must be at least {}", crate::diagnostics::MIN_RESAMPLES),
            ));
        }
        if let Some(r) = &self.reference {
            positive("reference.n_chains", r.n_chains)?;
            positive("reference.n_draws", r.n_draws)?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the resolved spec as canonical JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("spec serializes")))
    }
}

/// Reads and strictly parses a run spec file.
pub fn parse_config(path: &Path) -> Result<RunSpec> {
    RunSpec::parse_config(path)
}

/// Documented defaults and CSV layouts, as printed by the `schema` command.
pub fn schema() -> serde_json::Value {
    let defaults = RunSpec {
        model: ModelSpec::Funnel { d: 5, sigma: 3.0 },
        method: vec![Method::Drhmc],
        grid: GridSpec::default(),
        integration_time: 1.0,
        n_chains: default_chains(),
        n_warmup: default_warmup(),
        n_draws: default_draws(),
        seed: 0,
        output_dir: default_output_dir(),
        tuning: TuningSpec::default(),
        moments: default_moments(),
        retry_rule: RetryRule::default(),
        bootstrap_resamples: default_resamples(),
        reference: None,
    };
    let mut models = BTreeMap::new();
    for name in ModelSpec::NAMES {
        models.insert(name, serde_json::to_value(ModelSpec::named(name).expect("known model")).expect("serializes"));
    }
    serde_json::json!({
        "run_spec": {
            "required": ["model", "method", "integration_time"],
            "methods": ["hmc", "drhmc", "drhmc-prob"],
            "retry_rules": ["always", "one-minus-alpha", {"constant": "p in [0, 1]"}],
            "moments": ["first", "second"],
            "defaults": defaults,
            "reference": {"n_chains": default_reference_chains(), "n_draws": default_reference_draws()},
            "models": models,
        },
        "csv": {
            "summary.csv": super::output::SUMMARY_COLUMNS,
            "cells/<cell>/chain_<i>.csv": ["iter", "stage", "stages_tried", "evals", "q0", "q1", "..."],
            "figures/funnel-marginal.csv": super::figures::MARGINAL_COLUMNS,
            "figures/stage-histogram.csv": super::figures::STAGE_COLUMNS,
            "figures/cost-ratio.csv": super::figures::COST_RATIO_COLUMNS,
        },
        "sidecar": "cells/<cell>/cell.json: toolkit version, config hash, resolved spec, cell, tuning, seeds, evaluation counts, stage histogram, reports",
    })
}
