//! HMC and delayed-rejection HMC transitions.
//!
//! A transition refreshes the momentum and then walks a ladder of proposals
//! `F_1(x), F_2(x), ...`, each with a smaller step size and proportionally
//! more steps. Stage `k` is accepted with
//!
//! ```text
//! alpha_k(x) = min(1, pi(y)/pi(x) * prod_{i<k} (1 - alpha_i(y)) / (1 - alpha_i(x)))
//! ```
//!
//! for `y = F_k(x)`, where `pi` is the joint density `exp(-H)`. The `alpha_i(y)`
//! terms require the ghost points behind `y`; see [`tree`]. In probabilistic
//! mode a rejected stage `j` is followed by stage `j + 1` only with
//! probability `p_{j+1}`, and the ratio gains the matching `p(y)/p(x)` factors.

mod chain;
mod config;
mod tree;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::TargetModel;
use crate::phase_space::{flow_map, hamiltonian, MassMatrix, PhasePoint};

pub use chain::{run_chain, ChainResult, Sampler};
pub use config::{DrConfig, Method, RetryRule, LOG_COMPLEMENT_FLOOR};

use tree::{clamp_log_prob, stage_term, GhostTree};

/// `p ~ N(0, M)` for diagonal `M`.
pub fn refresh_momentum<R: Rng + ?Sized>(rng: &mut R, mass: &MassMatrix) -> Vec<f64> {
    mass.diag()
        .iter()
        .map(|m| m.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `log min(1, exp(H(x) - H(y)))`; `-inf` when `y` has zero density.
pub fn log_alpha1(x: &PhasePoint, y: &PhasePoint, mass: &MassMatrix) -> f64 {
    let hy = hamiltonian(y, mass);
    if hy == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    clamp_log_prob(hamiltonian(x, mass) - hy)
}

/// `log alpha_k` from the ratio pieces: `log_ratio = log pi(y) - log pi(x)`,
/// and the `log alpha_i` at `y` and at `x` for `i < k`. With a retry rule
/// the `p_{i+1}` factors are composed in as well.
pub fn combine_log_alpha(log_ratio: f64, log_alpha_y: &[f64], log_alpha_x: &[f64], rule: Option<RetryRule>) -> f64 {
    assert_eq!(log_alpha_y.len(), log_alpha_x.len());
    let s = log_alpha_y
        .iter()
        .zip(log_alpha_x)
        .fold(log_ratio, |s, (&ly, &lx)| s + stage_term(ly, lx, rule));
    clamp_log_prob(s)
}

/// `log alpha_k(x)` with `x` carrying its momentum. Uses the retry factors
/// exactly when `config.probabilistic` is set.
pub fn log_alpha_k(x: &PhasePoint, k: usize, config: &DrConfig, model: &TargetModel) -> f64 {
    let mut tree = GhostTree::new(x.clone(), config, &config.mass, model, k);
    tree.log_alpha(0, k)
}

/// [`log_alpha_k`] in probabilistic mode under `config.retry_rule`.
pub fn log_alpha_k_probabilistic(x: &PhasePoint, k: usize, config: &DrConfig, model: &TargetModel) -> f64 {
    let cfg = DrConfig {
        probabilistic: true,
        ..config.clone()
    };
    log_alpha_k(x, k, &cfg, model)
}

/// Retry probability after stage `j` was rejected with `log alpha_j(x)`.
pub fn retry_probability(log_alpha_j: f64, config: &DrConfig) -> f64 {
    config.effective_rule().log_prob(log_alpha_j).exp()
}

/// What happened at one stage of a transition.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub proposal: PhasePoint,
    /// `log pi` at the proposal (`-inf` if it diverged).
    pub log_density: f64,
    pub log_alpha: f64,
    pub divergent: bool,
    /// Probability of going on to the next stage, set when this stage was
    /// rejected and a later stage existed.
    pub retry_prob: Option<f64>,
}

/// Record of one transition's ladder.
#[derive(Debug, Clone)]
pub struct ProposalLadder {
    pub origin: PhasePoint,
    pub stages: Vec<StageRecord>,
    /// 0 when every stage was rejected, otherwise the 1-based accepted stage.
    pub accepted_stage: usize,
    /// Distinct phase points in the tree, the origin included.
    pub nodes: usize,
    pub leapfrog_steps: u64,
    /// New joint evaluations spent by this transition.
    pub evals: u64,
    /// Set when a zero-probability ratio let ghosts go unevaluated.
    pub short_circuited: bool,
}

impl ProposalLadder {
    pub fn stages_tried(&self) -> usize {
        self.stages.len()
    }

    pub fn divergent(&self) -> bool {
        self.stages.iter().any(|s| s.divergent)
    }
}

/// Plain HMC: refresh, one leapfrog trajectory with flip, Metropolis test.
/// Returns the next state and whether the proposal was accepted.
pub fn hmc_transition<R: Rng + ?Sized>(
    rng: &mut R,
    x: &PhasePoint,
    eps: f64,
    n_steps: usize,
    mass: &MassMatrix,
    model: &TargetModel,
) -> (PhasePoint, bool) {
    let x = x.with_momentum(refresh_momentum(rng, mass));
    let spec = crate::phase_space::ProposalMapSpec {
        eps,
        n_steps,
        stage: 1,
        a: 2,
    };
    let y = flow_map(&x, &spec, mass, model).point;
    let la = log_alpha1(&x, &y, mass);
    let u: f64 = rng.random();
    if u.ln() < la {
        (y, true)
    } else {
        (x, false)
    }
}

/// One delayed-rejection transition from `x`.
pub fn drhmc_transition<R: Rng + ?Sized>(
    rng: &mut R,
    x: &PhasePoint,
    config: &DrConfig,
    model: &TargetModel,
) -> (PhasePoint, ProposalLadder) {
    let mass = &config.mass;
    let origin = x.with_momentum(refresh_momentum(rng, mass));
    let mut tree = GhostTree::new(origin.clone(), config, mass, model, config.k_max);
    let mut stages = Vec::with_capacity(config.k_max);
    let mut accepted = 0;
    for k in 1..=config.k_max {
        let la = tree.log_alpha(0, k);
        let node = tree.node(1 << (k - 1));
        stages.push(StageRecord {
            proposal: node.point.clone(),
            log_density: node.point.log_density(),
            log_alpha: la,
            divergent: node.divergent,
            retry_prob: None,
        });
        let u: f64 = rng.random();
        if u.ln() < la {
            accepted = k;
            break;
        }
        if k == config.k_max {
            break;
        }
        let log_p = config.effective_rule().log_prob(la);
        stages[k - 1].retry_prob = Some(log_p.exp());
        let u: f64 = rng.random();
        // a stage whose predecessor had alpha = 1 in floating point cannot be
        // reached consistently; treat it as declined
        let reachable = log1m_floor_ok(la) && log_p > LOG_COMPLEMENT_FLOOR;
        if !(reachable && u.ln() < log_p) {
            break;
        }
    }
    let next = if accepted > 0 {
        tree.take_node(1 << (accepted - 1)).point
    } else {
        origin.clone()
    };
    let ladder = ProposalLadder {
        origin,
        stages,
        accepted_stage: accepted,
        nodes: tree.nodes_built,
        leapfrog_steps: tree.leapfrog_steps,
        evals: tree.evals,
        short_circuited: tree.short_circuited,
    };
    (next, ladder)
}

fn log1m_floor_ok(log_alpha: f64) -> bool {
    crate::math::log1m_exp(log_alpha) > LOG_COMPLEMENT_FLOOR
}

/// Evaluates stages `1..=k` at `x` as if every earlier stage had been
/// rejected and retried, building every ghost the recursion asks for.
/// Instrumentation for checking the cost of reaching stage `k`.
pub fn forced_ladder(x: &PhasePoint, k: usize, config: &DrConfig, model: &TargetModel) -> ProposalLadder {
    let mut tree = GhostTree::new(x.clone(), config, &config.mass, model, k).exhaustive();
    let mut stages = Vec::with_capacity(k);
    for stage in 1..=k {
        let la = tree.log_alpha(0, stage);
        let node = tree.node(1 << (stage - 1));
        stages.push(StageRecord {
            proposal: node.point.clone(),
            log_density: node.point.log_density(),
            log_alpha: la,
            divergent: node.divergent,
            retry_prob: (stage < k).then_some(1.0),
        });
    }
    ProposalLadder {
        origin: x.clone(),
        stages,
        accepted_stage: 0,
        nodes: tree.nodes_built,
        leapfrog_steps: tree.leapfrog_steps,
        evals: tree.evals,
        short_circuited: false,
    }
}

/// Leapfrog steps needed to reach stage `k` with every ghost evaluated:
/// `sum_{j=1..k} 2^(k-j) a^(j-1) n`.
pub fn ladder_cost(n: usize, a: usize, k: usize) -> u64 {
    (1..=k)
        .map(|j| (1u64 << (k - j)) * (a as u64).pow(j as u32 - 1) * n as u64)
        .sum()
}
