//! Warmup: dual-averaging step-size adaptation and diagonal mass estimation.
//!
//! Warmup runs plain HMC with a fixed integration time `T`, so the number of
//! leapfrog steps follows the step size. The mass matrix is re-estimated at
//! the end of each slow window (75 iterations of initial buffer, then windows
//! of 25, 50, 100, ... and a terminal buffer), after which the step size
//! search and the averager restart.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TargetModel;
use crate::phase_space::{flow_map, MassMatrix, PhasePoint, ProposalMapSpec};
use crate::sampler::{log_alpha1, refresh_momentum};

/// Nesterov dual averaging of `log eps` toward a target acceptance rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DualAveraging {
    pub mu: f64,
    pub target: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    t: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
}

impl DualAveraging {
    /// Shrinks toward `log(10 eps_init)`, the usual choice.
    pub fn new(eps_init: f64, target: f64) -> Self {
        Self::with_mu(eps_init, target, (10.0 * eps_init).ln())
    }

    pub fn with_mu(eps_init: f64, target: f64, mu: f64) -> Self {
        Self {
            mu,
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            t: 0.0,
            h_bar: 0.0,
            log_eps: eps_init.ln(),
            log_eps_bar: 0.0,
        }
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept: f64) -> f64 {
        let accept = if accept.is_nan() { 0.0 } else { accept.clamp(0.0, 1.0) };
        self.t += 1.0;
        let eta = 1.0 / (self.t + self.t0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept);
        self.log_eps = self.mu - self.t.sqrt() / self.gamma * self.h_bar;
        let w = self.t.powf(-self.kappa);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
        self.log_eps.exp()
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// The averaged iterate, frozen for sampling.
    pub fn final_step_size(&self) -> f64 {
        if self.t == 0.0 {
            self.current()
        } else {
            self.log_eps_bar.exp()
        }
    }
}

/// Warmup schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmupPlan {
    pub n_warmup: usize,
    pub target_accept: f64,
    pub integration_time: f64,
    /// Half-open iteration ranges whose draws feed a mass estimate.
    pub mass_windows: Vec<(usize, usize)>,
    /// Cap on leapfrog steps per warmup transition.
    pub max_steps: usize,
    /// Starting mass; the identity when absent.
    #[serde(default)]
    pub initial_mass: Option<MassMatrix>,
}

impl WarmupPlan {
    pub const INIT_BUFFER: usize = 75;
    pub const TERM_BUFFER: usize = 50;
    pub const BASE_WINDOW: usize = 25;
    pub const DEFAULT_MAX_STEPS: usize = 1000;

    /// Default schedule with doubling mass windows.
    pub fn new(n_warmup: usize, integration_time: f64) -> Result<Self> {
        let plan = Self {
            n_warmup,
            target_accept: 0.8,
            integration_time,
            mass_windows: Self::default_windows(n_warmup),
            max_steps: Self::DEFAULT_MAX_STEPS,
            initial_mass: None,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Initial buffer of 75, doubling windows from 25, and a terminal buffer
    /// of `max(50, n / 5)` for the final step-size averaging. Short warmups
    /// fall back to a single window between 15% and 90%.
    pub fn default_windows(n: usize) -> Vec<(usize, usize)> {
        let (init, term, base) = if n >= Self::INIT_BUFFER + Self::TERM_BUFFER + Self::BASE_WINDOW {
            (Self::INIT_BUFFER, Self::TERM_BUFFER.max(n / 5), Self::BASE_WINDOW)
        } else if n >= 20 {
            let init = (0.15 * n as f64) as usize;
            let term = (0.1 * n as f64) as usize;
            (init, term, n - init - term)
        } else {
            return Vec::new();
        };
        let end = n - term;
        let mut windows = Vec::new();
        let mut start = init;
        let mut size = base;
        while start < end {
            let mut stop = (start + size).min(end);
            // fold a short remainder into the last window
            if stop + 2 * size > end {
                stop = end;
            }
            windows.push((start, stop));
            start = stop;
            size *= 2;
        }
        windows
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidConfig(format!("target acceptance {} outside (0, 1)", self.target_accept)));
        }
        if !(self.integration_time > 0.0 && self.integration_time.is_finite()) {
            return Err(Error::InvalidConfig("integration time must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        if let Some(m) = &self.initial_mass {
            if m.diag().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidConfig("initial mass must be positive and finite".into()));
            }
        }
        let mut last = 0;
        for &(a, b) in &self.mass_windows {
            if a < last || b <= a || b > self.n_warmup {
                return Err(Error::InvalidConfig(format!("mass window {a}..{b} overlaps or leaves the warmup")));
            }
            last = b;
        }
        Ok(())
    }
}

/// Smallest number of draws accepted by [`estimate_diag_mass`].
pub const MIN_MASS_DRAWS: usize = 50;

/// `M^-1 = 0.9 var + 0.1` per coordinate; coordinates with zero or
/// non-finite variance get unit mass.
pub fn estimate_diag_mass(draws: &[Vec<f64>]) -> Result<MassMatrix> {
    if draws.len() < MIN_MASS_DRAWS {
        return Err(Error::InvalidConfig(format!(
            "mass estimate needs at least {MIN_MASS_DRAWS} draws, got {}",
            draws.len()
        )));
    }
    let d = draws[0].len();
    let n = draws.len() as f64;
    let inv = (0..d)
        .map(|j| {
            let mean = draws.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = draws.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            if var > 0.0 && var.is_finite() {
                0.9 * var + 0.1
            } else {
                1.0
            }
        })
        .collect();
    MassMatrix::from_inverse(inv)
}

fn leapfrog_count(time: f64, eps: f64, cap: usize) -> usize {
    ((time / eps).round() as usize).clamp(1, cap)
}

/// One HMC transition for warmup; returns the acceptance probability.
fn hmc_step<R: Rng + ?Sized>(
    rng: &mut R,
    x: &mut PhasePoint,
    eps: f64,
    n_steps: usize,
    mass: &MassMatrix,
    model: &TargetModel,
) -> f64 {
    let start = x.with_momentum(refresh_momentum(rng, mass));
    let spec = ProposalMapSpec {
        eps,
        n_steps,
        stage: 1,
        a: 2,
    };
    let y = flow_map(&start, &spec, mass, model).point;
    let la = log_alpha1(&start, &y, mass);
    let u: f64 = rng.random();
    if u.ln() < la {
        *x = y;
    }
    la.exp()
}

/// Doubles or halves `eps` until a single leapfrog step crosses acceptance
/// 1/2.
pub fn find_reasonable_step_size<R: Rng + ?Sized>(
    rng: &mut R,
    x: &PhasePoint,
    eps_init: f64,
    mass: &MassMatrix,
    model: &TargetModel,
) -> f64 {
    let start = x.with_momentum(refresh_momentum(rng, mass));
    let accept = |eps: f64| {
        let spec = ProposalMapSpec {
            eps,
            n_steps: 1,
            stage: 1,
            a: 2,
        };
        let y = flow_map(&start, &spec, mass, model).point;
        log_alpha1(&start, &y, mass)
    };
    let mut eps = eps_init;
    let up = accept(eps) > 0.5f64.ln();
    for _ in 0..60 {
        let next = if up { eps * 2.0 } else { eps / 2.0 };
        let la = accept(next);
        if (up && la <= 0.5f64.ln()) || (!up && la > 0.5f64.ln()) {
            return if up { eps } else { next };
        }
        eps = next;
    }
    eps
}

/// Adapted tuning plus the warmup's final position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WarmupResult {
    pub eps: f64,
    pub mass: MassMatrix,
    pub position: Vec<f64>,
    /// Joint evaluations, the initial one included.
    pub evals: u64,
    pub mean_accept: f64,
}

/// Adapts `eps` and a diagonal mass from `q0` under `plan`.
pub fn warmup<R: Rng + ?Sized>(
    rng: &mut R,
    model: &TargetModel,
    q0: Vec<f64>,
    plan: &WarmupPlan,
) -> Result<WarmupResult> {
    plan.validate()?;
    let start_evals = model.eval_count();
    let d = model.dim();
    let mut mass = match &plan.initial_mass {
        Some(m) if m.dim() == d => m.clone(),
        Some(m) => return Err(Error::InvalidConfig(format!("initial mass has dimension {}, model {d}", m.dim()))),
        None => MassMatrix::identity(d),
    };
    let mut x = PhasePoint::new(q0, vec![0.0; d], model);
    if !x.is_finite() {
        return Err(Error::InvalidModel(format!("{}: zero density at the warmup start", model.name())));
    }
    let init_guess = (plan.integration_time / 10.0).min(1.0);
    let mut eps = find_reasonable_step_size(rng, &x, init_guess, &mass, model);
    let mut averager = DualAveraging::new(eps, plan.target_accept);
    let mut windows = plan.mass_windows.iter().peekable();
    let mut window_draws: Vec<Vec<f64>> = Vec::new();
    let mut accept_sum = 0.0;
    for it in 0..plan.n_warmup {
        let n = leapfrog_count(plan.integration_time, eps, plan.max_steps);
        let accept = hmc_step(rng, &mut x, eps, n, &mass, model);
        accept_sum += accept;
        eps = averager.update(accept);
        let Some(&&(lo, hi)) = windows.peek() else { continue };
        if it >= lo && it < hi {
            window_draws.push(x.q.clone());
        }
        if it + 1 == hi {
            windows.next();
            if window_draws.len() >= MIN_MASS_DRAWS {
                mass = estimate_diag_mass(&window_draws)?;
                x = PhasePoint::from_parts(x.q.clone(), vec![0.0; d], x.log_density(), x.grad().to_vec());
                eps = find_reasonable_step_size(rng, &x, averager.final_step_size(), &mass, model);
                averager = DualAveraging::new(eps, plan.target_accept);
            }
            window_draws.clear();
        }
    }
    let eps = if plan.n_warmup == 0 { eps } else { averager.final_step_size() };
    Ok(WarmupResult {
        eps,
        mass,
        position: x.q.clone(),
        evals: model.eval_count() - start_evals,
        mean_accept: if plan.n_warmup == 0 { f64::NAN } else { accept_sum / plan.n_warmup as f64 },
    })
}
