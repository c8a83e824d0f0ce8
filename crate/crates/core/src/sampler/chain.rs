use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TargetModel;
use crate::phase_space::PhasePoint;
use crate::rng::{chain_rng, ChainRng};

use super::{drhmc_transition, DrConfig, ProposalLadder};

/// A running chain: model, frozen config, RNG stream and current state.
pub struct Sampler<'m> {
    model: &'m TargetModel,
    config: DrConfig,
    rng: ChainRng,
    state: PhasePoint,
}

impl<'m> Sampler<'m> {
    /// Starts at `q0`, which costs one evaluation.
    pub fn new(model: &'m TargetModel, config: DrConfig, q0: Vec<f64>, rng: ChainRng) -> Result<Self> {
        config.validate()?;
        if config.mass.dim() != model.dim() || q0.len() != model.dim() {
            return Err(Error::InvalidConfig(format!(
                "dimension mismatch: model {}, mass {}, start {}",
                model.dim(),
                config.mass.dim(),
                q0.len()
            )));
        }
        let d = q0.len();
        let state = PhasePoint::new(q0, vec![0.0; d], model);
        if !state.is_finite() {
            return Err(Error::InvalidModel(format!("{}: zero density at the initial point", model.name())));
        }
        Ok(Self {
            model,
            config,
            rng,
            state,
        })
    }

    pub fn config(&self) -> &DrConfig {
        &self.config
    }

    pub fn position(&self) -> &[f64] {
        &self.state.q
    }

    pub fn step(&mut self) -> ProposalLadder {
        let (next, ladder) = drhmc_transition(&mut self.rng, &self.state, &self.config, self.model);
        self.state = next;
        ladder
    }

    /// Discards `n_warmup` transitions, then records `n_draws`.
    pub fn run(mut self, seed: u64, n_warmup: usize, n_draws: usize) -> Result<ChainResult> {
        if n_draws == 0 {
            return Err(Error::InvalidConfig("n_draws must be at least 1".into()));
        }
        let fingerprint = self.config.fingerprint();
        let start = self.model.eval_count();
        // the initial evaluation happened in `new`
        let base = 1;
        for _ in 0..n_warmup {
            self.step();
        }
        let warmup_evals = base + self.model.eval_count() - start;
        let d = self.model.dim();
        let mut out = ChainResult {
            seed,
            dim: d,
            initial: self.state.q.clone(),
            draws: Vec::with_capacity(n_draws * d),
            stage_tags: Vec::with_capacity(n_draws),
            stages_tried: Vec::with_capacity(n_draws),
            eval_counts: Vec::with_capacity(n_draws),
            warmup_evals,
            divergences: 0,
            config: self.config.clone(),
            fingerprint,
        };
        for _ in 0..n_draws {
            let ladder = self.step();
            out.draws.extend_from_slice(&self.state.q);
            out.stage_tags.push(ladder.accepted_stage as u8);
            out.stages_tried.push(ladder.stages_tried() as u8);
            out.eval_counts.push(base + self.model.eval_count() - start);
            out.divergences += ladder.divergent() as u64;
        }
        debug_assert_eq!(self.config.fingerprint(), out.fingerprint);
        Ok(out)
    }
}

/// Draws from one chain plus the bookkeeping needed for cost accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    pub seed: u64,
    pub dim: usize,
    /// Position before the first recorded transition.
    pub initial: Vec<f64>,
    /// Row-major `n_draws x dim`.
    pub draws: Vec<f64>,
    /// Accepted stage per draw, 0 for a full rejection.
    pub stage_tags: Vec<u8>,
    /// Number of proposals made per draw.
    pub stages_tried: Vec<u8>,
    /// Cumulative joint evaluations since the chain started, after each draw.
    pub eval_counts: Vec<u64>,
    /// Evaluations before the first recorded draw, the initial one included.
    pub warmup_evals: u64,
    /// Transitions in which some proposal diverged.
    pub divergences: u64,
    pub config: DrConfig,
    pub fingerprint: String,
}

impl ChainResult {
    pub fn n_draws(&self) -> usize {
        self.stage_tags.len()
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }

    /// Starting point of transition `i`.
    pub fn origin(&self, i: usize) -> &[f64] {
        if i == 0 {
            &self.initial
        } else {
            self.draw(i - 1)
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        assert!(j < self.dim);
        self.draws.iter().skip(j).step_by(self.dim).copied().collect()
    }

    pub fn total_evals(&self) -> u64 {
        self.eval_counts.last().copied().unwrap_or(self.warmup_evals)
    }

    /// Evaluations spent while recording draws.
    pub fn sampling_evals(&self) -> u64 {
        self.total_evals() - self.warmup_evals
    }

    /// Counts of accepted stage per draw, index 0 for full rejections.
    pub fn stage_histogram(&self) -> Vec<u64> {
        let mut h = vec![0; self.config.k_max + 1];
        for &t in &self.stage_tags {
            h[t as usize] += 1;
        }
        h
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.stage_tags.iter().filter(|&&t| t > 0).count() as f64 / self.n_draws() as f64
    }
}

/// Runs a chain from the model's typical point with an RNG seeded by `seed`.
/// The `n_warmup` transitions use the given config unchanged; adaptive
/// warmup lives in [`crate::adaptation`].
pub fn run_chain(seed: u64, model: &TargetModel, config: &DrConfig, n_warmup: usize, n_draws: usize) -> Result<ChainResult> {
    Sampler::new(model, config.clone(), model.typical_point(), chain_rng(seed))?.run(seed, n_warmup, n_draws)
}
