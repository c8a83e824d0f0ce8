//! Lazily built tree of stage-map images rooted at the current point.
//!
//! Node `m` is indexed by a bitmask of stages, bit `i - 1` standing for
//! `F_i`. Stages are applied from the highest bit down, so
//! `node(m) = F_min(m)(node(m without min(m)))` and the root is `node(0)`.
//! Acceptance of stage `k` from node `m` only ever involves stages below
//! `min(m)`, which keeps every required point inside the `2^k_max` slots.
//! Nodes and acceptance probabilities are memoized, so each point is
//! integrated once per transition.

use crate::math::log1m_exp;
use crate::model::TargetModel;
use crate::phase_space::{flow_map, hamiltonian, MassMatrix, PhasePoint};

use super::config::{DrConfig, RetryRule, LOG_COMPLEMENT_FLOOR};

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub point: PhasePoint,
    pub energy: f64,
    pub divergent: bool,
}

pub(crate) struct GhostTree<'a> {
    model: &'a TargetModel,
    mass: &'a MassMatrix,
    config: &'a DrConfig,
    rule: RetryRule,
    depth: usize,
    nodes: Vec<Option<Node>>,
    log_alpha: Vec<f64>,
    /// Stop summing stage terms once the ratio is already zero.
    short_circuit: bool,
    pub leapfrog_steps: u64,
    pub evals: u64,
    pub nodes_built: usize,
    pub short_circuited: bool,
}

/// One factor of the stage-`k` ratio: `(1 - alpha_i(y)) / (1 - alpha_i(x))`,
/// times `p_{i+1}(y) / p_{i+1}(x)` when a retry rule is given. All in logs.
pub(crate) fn stage_term(log_alpha_y: f64, log_alpha_x: f64, rule: Option<RetryRule>) -> f64 {
    let mut t = log1m_exp(log_alpha_y) - log1m_exp(log_alpha_x).max(LOG_COMPLEMENT_FLOOR);
    if let Some(rule) = rule {
        t += rule.log_prob(log_alpha_y) - rule.log_prob(log_alpha_x).max(LOG_COMPLEMENT_FLOOR);
    }
    t
}

/// `min(0, .)` that maps NaN to `-inf`.
pub(crate) fn clamp_log_prob(s: f64) -> f64 {
    if s.is_nan() {
        f64::NEG_INFINITY
    } else {
        s.min(0.0)
    }
}

impl<'a> GhostTree<'a> {
    pub fn new(root: PhasePoint, config: &'a DrConfig, mass: &'a MassMatrix, model: &'a TargetModel, depth: usize) -> Self {
        assert!((1..=16).contains(&depth), "ladder depth {depth} out of range");
        let size = 1usize << depth;
        let mut nodes = vec![None; size];
        let energy = hamiltonian(&root, mass);
        nodes[0] = Some(Node {
            divergent: !energy.is_finite(),
            point: root,
            energy,
        });
        Self {
            model,
            mass,
            config,
            rule: config.effective_rule(),
            depth,
            nodes,
            log_alpha: vec![f64::NAN; size * (depth + 1)],
            short_circuit: true,
            leapfrog_steps: 0,
            evals: 0,
            nodes_built: 1,
            short_circuited: false,
        }
    }

    /// Evaluate every ghost even when the outcome is already decided.
    pub fn exhaustive(mut self) -> Self {
        self.short_circuit = false;
        self
    }

    pub fn node(&mut self, mask: usize) -> &Node {
        self.ensure(mask);
        self.nodes[mask].as_ref().expect("node built")
    }

    pub fn take_node(&mut self, mask: usize) -> Node {
        self.ensure(mask);
        self.nodes[mask].take().expect("node built")
    }

    fn ensure(&mut self, mask: usize) {
        if self.nodes[mask].is_some() {
            return;
        }
        let stage = mask.trailing_zeros() as usize + 1;
        let parent = mask & (mask - 1);
        self.ensure(parent);
        let spec = self.config.stage_spec(stage);
        let from = &self.nodes[parent].as_ref().expect("parent built").point;
        let flow = flow_map(from, &spec, self.mass, self.model);
        self.leapfrog_steps += flow.steps as u64;
        self.evals += flow.evals;
        self.nodes_built += 1;
        let energy = hamiltonian(&flow.point, self.mass);
        self.nodes[mask] = Some(Node {
            divergent: flow.divergent || !energy.is_finite(),
            point: flow.point,
            energy,
        });
    }

    /// `log alpha_k` for the ladder started at `node(mask)`.
    pub fn log_alpha(&mut self, mask: usize, k: usize) -> f64 {
        debug_assert!(k >= 1 && k <= self.depth);
        debug_assert!(mask == 0 || (mask.trailing_zeros() as usize) >= k, "stage {k} is not below node {mask:b}");
        let slot = mask * (self.depth + 1) + k;
        if !self.log_alpha[slot].is_nan() {
            return self.log_alpha[slot];
        }
        let value = self.compute_log_alpha(mask, k);
        self.log_alpha[slot] = value;
        value
    }

    fn compute_log_alpha(&mut self, mask: usize, k: usize) -> f64 {
        if self.node(mask).divergent {
            return f64::NEG_INFINITY;
        }
        let forward = mask | (1 << (k - 1));
        let (hx, hy, y_divergent) = {
            let hx = self.node(mask).energy;
            let y = self.node(forward);
            (hx, y.energy, y.divergent)
        };
        if y_divergent {
            return f64::NEG_INFINITY;
        }
        let rule = self.config.probabilistic.then_some(self.rule);
        let mut s = hx - hy;
        for i in 1..k {
            let lx = self.log_alpha(mask, i);
            let ly = self.log_alpha(forward, i);
            s += stage_term(ly, lx, rule);
            if s == f64::NEG_INFINITY && self.short_circuit {
                if i + 1 < k {
                    self.short_circuited = true;
                }
                break;
            }
        }
        clamp_log_prob(s)
    }
}
