//! Phase space, the leapfrog integrator and the stage proposal maps.
//!
//! The stage-`k` proposal map runs `n * a^(k-1)` leapfrog steps of size
//! `eps / a^(k-1)` and then negates the momentum. Every such map is a
//! volume-preserving involution; the probes at the bottom of this module
//! check both properties numerically.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::TargetModel;

/// Energy error above which a trajectory is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Diagonal mass matrix `M`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MassMatrix {
    diag: Vec<f64>,
    inv: Vec<f64>,
}

impl MassMatrix {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || diag.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidConfig("mass matrix entries must be positive and finite".into()));
        }
        let inv = diag.iter().map(|m| 1.0 / m).collect();
        Ok(Self { diag, inv })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            diag: vec![1.0; d],
            inv: vec![1.0; d],
        }
    }

    /// Builds `M` from the diagonal of `M^-1`.
    pub fn from_inverse(inv: Vec<f64>) -> Result<Self> {
        Self::new(inv.iter().map(|v| 1.0 / v).collect())
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn inv_diag(&self) -> &[f64] {
        &self.inv
    }

    /// `p^T M^-1 p / 2`.
    pub fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv).map(|(p, m)| p * p * m).sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for MassMatrix {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MassMatrix> for Vec<f64> {
    fn from(m: MassMatrix) -> Self {
        m.diag
    }
}

/// A state `(q, p)` with the log density and gradient at `q` cached.
///
/// The cache always equals a fresh evaluation at `q`, except for divergent
/// points, whose log density is `-inf` regardless of `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    log_density: f64,
    grad: Vec<f64>,
}

impl PhasePoint {
    /// Evaluates the model at `q` (one joint evaluation).
    pub fn new(q: Vec<f64>, p: Vec<f64>, model: &TargetModel) -> Self {
        assert_eq!(q.len(), p.len(), "q and p must have the same length");
        let mut grad = vec![0.0; q.len()];
        let log_density = model.log_density_grad(&q, &mut grad);
        Self { q, p, log_density, grad }
    }

    /// Assembles a point from an already computed evaluation at `q`.
    pub fn from_parts(q: Vec<f64>, p: Vec<f64>, log_density: f64, grad: Vec<f64>) -> Self {
        assert_eq!(q.len(), p.len());
        assert_eq!(q.len(), grad.len());
        Self { q, p, log_density, grad }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn log_density(&self) -> f64 {
        self.log_density
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn is_finite(&self) -> bool {
        self.log_density.is_finite()
    }

    pub fn flip(&mut self) {
        for p in &mut self.p {
            *p = -*p;
        }
    }

    /// Same position and cached evaluation, new momentum.
    pub fn with_momentum(&self, p: Vec<f64>) -> Self {
        assert_eq!(p.len(), self.q.len());
        Self {
            q: self.q.clone(),
            p,
            log_density: self.log_density,
            grad: self.grad.clone(),
        }
    }

    /// `(q, p)` concatenated.
    pub fn to_state(&self) -> Vec<f64> {
        let mut v = self.q.clone();
        v.extend_from_slice(&self.p);
        v
    }

    fn poison(&mut self) {
        self.log_density = f64::NEG_INFINITY;
    }
}

/// `H(q, p) = -log pi(q) + p^T M^-1 p / 2`; `+inf` where the density vanishes.
pub fn hamiltonian(x: &PhasePoint, mass: &MassMatrix) -> f64 {
    if x.log_density == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    -x.log_density + mass.kinetic(&x.p)
}

/// Step size, leapfrog count and adaptivity factor of one stage map.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProposalMapSpec {
    /// Stage-1 step size.
    pub eps: f64,
    /// Stage-1 leapfrog count.
    pub n_steps: usize,
    /// 1-based stage index.
    pub stage: usize,
    /// Step-size divisor between consecutive stages.
    pub a: usize,
}

impl ProposalMapSpec {
    pub fn new(eps: f64, n_steps: usize, stage: usize, a: usize) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size must be positive, got {eps}")));
        }
        if stage == 0 {
            return Err(Error::InvalidConfig("stages are numbered from 1".into()));
        }
        if a < 2 {
            return Err(Error::InvalidConfig(format!("adaptivity factor must be >= 2, got {a}")));
        }
        let spec = Self { eps, n_steps, stage, a };
        spec.checked_steps()
            .ok_or_else(|| Error::InvalidConfig("leapfrog count overflows".into()))?;
        Ok(spec)
    }

    fn scale(&self) -> Option<usize> {
        self.a.checked_pow(u32::try_from(self.stage - 1).ok()?)
    }

    fn checked_steps(&self) -> Option<usize> {
        self.n_steps.checked_mul(self.scale()?)
    }

    /// `eps * a^-(stage-1)`.
    pub fn step_size(&self) -> f64 {
        self.eps / (self.a as f64).powi(self.stage as i32 - 1)
    }

    /// `n * a^(stage-1)`.
    pub fn leapfrog_steps(&self) -> usize {
        self.checked_steps().expect("validated at construction")
    }

    /// Integration time, identical for every stage.
    pub fn integration_time(&self) -> f64 {
        self.eps * self.n_steps as f64
    }

    pub fn at_stage(&self, stage: usize) -> Self {
        Self { stage, ..*self }
    }
}

/// Result of running a map: the image point plus bookkeeping.
#[derive(Debug, Clone)]
pub struct Flow {
    pub point: PhasePoint,
    /// Leapfrog steps actually taken.
    pub steps: usize,
    /// Joint model evaluations spent.
    pub evals: u64,
    /// Set when the trajectory blew up; the point then has `H = +inf`.
    pub divergent: bool,
}

fn half_kick(p: &mut [f64], grad: &[f64], half_eps: f64) {
    for (p, g) in p.iter_mut().zip(grad) {
        *p += half_eps * g;
    }
}

fn leapfrog_in_place(x: &mut PhasePoint, eps: f64, mass: &MassMatrix, model: &TargetModel) {
    let half = 0.5 * eps;
    // dU = -grad log pi, so p - eps/2 dU is p + eps/2 grad
    half_kick(&mut x.p, &x.grad, half);
    for ((q, p), m) in x.q.iter_mut().zip(&x.p).zip(mass.inv_diag()) {
        *q += eps * m * p;
    }
    x.log_density = model.log_density_grad(&x.q, &mut x.grad);
    half_kick(&mut x.p, &x.grad, half);
}

/// One leapfrog step: half kick, drift, half kick. Costs one new gradient
/// since the gradient at the start point is cached.
pub fn leapfrog(x: &PhasePoint, eps: f64, mass: &MassMatrix, model: &TargetModel) -> PhasePoint {
    let mut out = x.clone();
    leapfrog_in_place(&mut out, eps, mass, model);
    out
}

/// `steps` leapfrog steps without the momentum flip. Integration stops at
/// the first non-finite state or once the energy error exceeds
/// [`DIVERGENCE_THRESHOLD`].
pub fn integrate(x: &PhasePoint, eps: f64, steps: usize, mass: &MassMatrix, model: &TargetModel) -> Flow {
    let mut point = x.clone();
    if !point.is_finite() {
        point.poison();
        return Flow {
            point,
            steps: 0,
            evals: 0,
            divergent: true,
        };
    }
    let h0 = hamiltonian(x, mass);
    for taken in 1..=steps {
        leapfrog_in_place(&mut point, eps, mass, model);
        let h = hamiltonian(&point, mass);
        let blown = !h.is_finite()
            || h - h0 > DIVERGENCE_THRESHOLD
            || point.q.iter().chain(&point.p).any(|v| !v.is_finite());
        if blown {
            point.poison();
            return Flow {
                point,
                steps: taken,
                evals: taken as u64,
                divergent: true,
            };
        }
    }
    Flow {
        point,
        steps,
        evals: steps as u64,
        divergent: false,
    }
}

/// The stage map `F_k = L^{n a^(k-1)}_{eps a^-(k-1)} P`.
pub fn flow_map(x: &PhasePoint, spec: &ProposalMapSpec, mass: &MassMatrix, model: &TargetModel) -> Flow {
    let mut flow = integrate(x, spec.step_size(), spec.leapfrog_steps(), mass, model);
    flow.point.flip();
    flow
}

/// `|F(F(x)) - x| / (1 + |x|)` over the joint state, or `None` if either
/// application diverged.
pub fn involution_error(
    x: &PhasePoint,
    map: impl Fn(&PhasePoint) -> Option<PhasePoint>,
) -> Option<f64> {
    let once = map(x)?;
    let twice = map(&once)?;
    let (a, b) = (x.to_state(), twice.to_state());
    let diff = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|u| u * u).sum::<f64>().sqrt();
    Some(diff / (1.0 + norm))
}

/// Convenience wrapper of [`involution_error`] for a stage map.
pub fn stage_involution_error(
    x: &PhasePoint,
    spec: &ProposalMapSpec,
    mass: &MassMatrix,
    model: &TargetModel,
) -> Option<f64> {
    involution_error(x, |y| {
        let f = flow_map(y, spec, mass, model);
        (!f.divergent).then_some(f.point)
    })
}

/// `|det DF(x)|` of a map on the joint state, by central differences of
/// step `h`.
pub fn jacobian_determinant(
    state: &[f64],
    h: f64,
    map: impl Fn(&[f64]) -> Option<Vec<f64>>,
) -> Result<f64> {
    let n = state.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    let mut probe = state.to_vec();
    for j in 0..n {
        probe[j] = state[j] + h;
        let up = map(&probe).ok_or_else(|| Error::Numerical(format!("map diverged probing column {j}")))?;
        probe[j] = state[j] - h;
        let down = map(&probe).ok_or_else(|| Error::Numerical(format!("map diverged probing column {j}")))?;
        probe[j] = state[j];
        for i in 0..n {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Jacobian entry".into()));
    }
    let det = jac.determinant();
    if !det.is_finite() {
        return Err(Error::Numerical("ill-conditioned Jacobian".into()));
    }
    Ok(det.abs())
}

/// Finite-difference `|det|` of the stage map at `x`.
pub fn jacobian_determinant_probe(
    spec: &ProposalMapSpec,
    mass: &MassMatrix,
    model: &TargetModel,
    x: &PhasePoint,
    h: f64,
) -> Result<f64> {
    let d = x.dim();
    jacobian_determinant(&x.to_state(), h, |s| {
        let start = PhasePoint::new(s[..d].to_vec(), s[d..].to_vec(), model);
        let f = flow_map(&start, spec, mass, model);
        (!f.divergent).then(|| f.point.to_state())
    })
}

/// `|H(L^n x) - H(x)|` for `n = round(time / eps)` leapfrog steps.
pub fn energy_error(x: &PhasePoint, eps: f64, time: f64, mass: &MassMatrix, model: &TargetModel) -> f64 {
    let steps = (time / eps).round().max(1.0) as usize;
    let f = integrate(x, eps, steps, mass, model);
    (hamiltonian(&f.point, mass) - hamiltonian(x, mass)).abs()
}

/// Least-squares slope of `log(mean |dH|)` against `log eps` over a set of
/// start points; about 2 for a second-order integrator.
pub fn energy_error_slope(
    points: &[PhasePoint],
    step_sizes: &[f64],
    time: f64,
    mass: &MassMatrix,
    model: &TargetModel,
) -> f64 {
    let xs: Vec<f64> = step_sizes.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = step_sizes
        .iter()
        .map(|&eps| {
            let mean = points.iter().map(|x| energy_error(x, eps, time, mass, model)).sum::<f64>()
                / points.len() as f64;
            mean.ln()
        })
        .collect();
    least_squares_slope(&xs, &ys)
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
