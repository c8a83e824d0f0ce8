//! Property audits of the proposal maps and gradient checks, reported as
//! measured values against tolerances.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::model::{check_gradient, TargetModel};
use crate::phase_space::{
    energy_error, flow_map, involution_error, jacobian_determinant, MassMatrix, PhasePoint, ProposalMapSpec,
};
use crate::phase_space::least_squares_slope;
use crate::rng::{chain_rng, ChainRng};

pub const INVOLUTION_TOL: f64 = 1e-8;
pub const JACOBIAN_TOL: f64 = 1e-5;
pub const SLOPE_RANGE: (f64, f64) = (1.9, 2.1);
/// Energy-probe step sizes as fractions of the map's step size.
pub const SLOPE_STEP_FRACTIONS: [f64; 4] = [0.5, 0.25, 0.125, 0.0625];
/// Largest dimension on which the Jacobian probe runs.
pub const JACOBIAN_MAX_DIM: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditOptions {
    pub eps: f64,
    pub n_steps: usize,
    pub a: usize,
    pub k_max: usize,
    pub n_points: usize,
    /// Finite-difference step of the Jacobian probe.
    pub h: f64,
    /// Trajectory length of the energy probe, run at fractions of `eps`.
    pub time: f64,
    /// Start points for the energy probe.
    pub slope_points: usize,
    pub seed: u64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            eps: 0.01,
            n_steps: 10,
            a: 2,
            k_max: 4,
            n_points: 1000,
            h: 1e-5,
            time: 1.0,
            slope_points: 50,
            seed: 0,
        }
    }
}

/// A position in the bulk: an exact draw when the model has one, otherwise
/// a jittered typical point.
pub fn random_position(model: &TargetModel, rng: &mut ChainRng) -> Vec<f64> {
    if let Some(q) = model.reference_draw(rng) {
        return q;
    }
    model
        .typical_point()
        .into_iter()
        .map(|x| x + 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn random_point(model: &TargetModel, rng: &mut ChainRng) -> PhasePoint {
    let q = random_position(model, rng);
    let p = (0..model.dim()).map(|_| rng.sample(StandardNormal)).collect();
    PhasePoint::new(q, p, model)
}

/// One row of the audit table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub name: String,
    pub measured: f64,
    pub tolerance: String,
    /// Points that contributed.
    pub points: usize,
    /// Points skipped because a map diverged.
    pub skipped: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub model: String,
    pub dim: usize,
    pub options: AuditOptions,
    pub probes: Vec<Probe>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.probes.iter().all(|p| p.pass)
    }

    pub fn probe(&self, name: &str) -> Option<&Probe> {
        self.probes.iter().find(|p| p.name == name)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "audit {} (d={})", self.model, self.dim)?;
        writeln!(f, "{:<22} {:>12} {:>16} {:>7} {:>7}  result", "probe", "measured", "tolerance", "points", "skipped")?;
        for p in &self.probes {
            writeln!(
                f,
                "{:<22} {:>12.3e} {:>16} {:>7} {:>7}  {}",
                p.name,
                p.measured,
                p.tolerance,
                p.points,
                p.skipped,
                if p.pass { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Audits the stage maps `F_1..F_kmax` built from `opts`.
pub fn audit(model: &TargetModel, opts: &AuditOptions) -> AuditReport {
    let base = ProposalMapSpec {
        eps: opts.eps,
        n_steps: opts.n_steps,
        stage: 1,
        a: opts.a,
    };
    let mass = MassMatrix::identity(model.dim());
    audit_with_map(model, opts, |x, k| {
        let f = flow_map(x, &base.at_stage(k), &mass, model);
        (!f.divergent).then_some(f.point)
    })
}

/// Audits an arbitrary family of stage maps. `map(x, k)` returns `None`
/// where stage `k` diverges.
pub fn audit_with_map(
    model: &TargetModel,
    opts: &AuditOptions,
    map: impl Fn(&PhasePoint, usize) -> Option<PhasePoint>,
) -> AuditReport {
    let d = model.dim();
    let mut rng = chain_rng(opts.seed);
    let points: Vec<PhasePoint> = (0..opts.n_points).map(|_| random_point(model, &mut rng)).collect();
    let mut probes = Vec::new();
    for k in 1..=opts.k_max {
        let (mut worst, mut used, mut skipped) = (0.0f64, 0, 0);
        for x in &points {
            match involution_error(x, |y| map(y, k)) {
                Some(e) => {
                    worst = worst.max(if e.is_nan() { f64::INFINITY } else { e });
                    used += 1;
                }
                None => skipped += 1,
            }
        }
        probes.push(Probe {
            name: format!("involution k={k}"),
            measured: worst,
            tolerance: format!("<= {INVOLUTION_TOL:e}"),
            points: used,
            skipped,
            pass: used > 0 && worst <= INVOLUTION_TOL,
        });
    }
    if d <= JACOBIAN_MAX_DIM {
        for k in 1..=opts.k_max {
            let (mut worst, mut used, mut skipped) = (0.0f64, 0, 0);
            for x in &points {
                let det = jacobian_determinant(&x.to_state(), opts.h, |s| {
                    let start = PhasePoint::new(s[..d].to_vec(), s[d..].to_vec(), model);
                    map(&start, k).map(|y| y.to_state())
                });
                match det {
                    Ok(det) => {
                        worst = worst.max((det - 1.0).abs());
                        used += 1;
                    }
                    Err(_) => skipped += 1,
                }
            }
            probes.push(Probe {
                name: format!("jacobian k={k}"),
                measured: worst,
                tolerance: format!("|det-1| <= {JACOBIAN_TOL:e}"),
                points: used,
                skipped,
                pass: used > 0 && worst <= JACOBIAN_TOL,
            });
        }
    }
    let mass = MassMatrix::identity(d);
    let steps: Vec<f64> = SLOPE_STEP_FRACTIONS.iter().map(|f| f * opts.eps).collect();
    let mut sums = vec![0.0; steps.len()];
    let (mut used, mut skipped) = (0, 0);
    for x in points.iter().take(opts.slope_points) {
        let errs: Vec<f64> = steps.iter().map(|&e| energy_error(x, e, opts.time, &mass, model)).collect();
        if errs.iter().all(|e| e.is_finite()) {
            sums.iter_mut().zip(&errs).for_each(|(s, e)| *s += e);
            used += 1;
        } else {
            skipped += 1;
        }
    }
    let xs: Vec<f64> = steps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = sums.iter().map(|s| (s / used as f64).ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    probes.push(Probe {
        name: "energy error slope".into(),
        measured: slope,
        tolerance: format!("in [{}, {}]", SLOPE_RANGE.0, SLOPE_RANGE.1),
        points: used,
        skipped,
        pass: used > 0 && (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&slope),
    });
    AuditReport {
        model: model.name().to_string(),
        dim: d,
        options: opts.clone(),
        probes,
    }
}

/// Worst finite-difference gradient error over random points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub model: String,
    pub points: usize,
    pub h: f64,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub worst_point: Vec<f64>,
    pub worst_index: usize,
    /// Points where some gradient component was not finite.
    pub non_finite_points: usize,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.non_finite_points == 0 && self.max_rel_error <= self.tolerance
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gradcheck {:<14} points={} max_rel_error={:.3e} (tol {:e}, coordinate {}) non_finite={}  {}",
            self.model,
            self.points,
            self.max_rel_error,
            self.tolerance,
            self.worst_index,
            self.non_finite_points,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

pub fn gradcheck(model: &TargetModel, n_points: usize, h: f64, tolerance: f64, seed: u64) -> GradcheckReport {
    let mut rng = chain_rng(seed);
    let mut report = GradcheckReport {
        model: model.name().to_string(),
        points: n_points,
        h,
        tolerance,
        max_rel_error: 0.0,
        worst_point: Vec::new(),
        worst_index: 0,
        non_finite_points: 0,
    };
    for _ in 0..n_points {
        let q = random_position(model, &mut rng);
        let c = check_gradient(model, &q, h);
        if !c.non_finite.is_empty() {
            report.non_finite_points += 1;
        }
        if c.max_rel_error > report.max_rel_error || report.worst_point.is_empty() {
            report.max_rel_error = report.max_rel_error.max(c.max_rel_error);
            report.worst_index = c.worst_index;
            report.worst_point = q;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Flat, Funnel};
    use crate::phase_space::integrate;

    fn quick() -> AuditOptions {
        AuditOptions {
            n_points: 40,
            slope_points: 20,
            ..AuditOptions::default()
        }
    }

    #[test]
    fn funnel_default_map_passes() {
        let model = TargetModel::new(Funnel::new(2, 3.0).unwrap());
        let r = audit(&model, &quick());
        assert!(r.passed(), "{r}");
        assert_eq!(r.probes.len(), 4 + 4 + 1);
    }

    #[test]
    fn drift_without_flip_fails_involution() {
        let model = TargetModel::new(Funnel::new(2, 3.0).unwrap());
        let mass = MassMatrix::identity(2);
        let r = audit_with_map(&model, &quick(), |x, _| {
            let f = integrate(x, 0.01, 10, &mass, &model);
            (!f.divergent).then_some(f.point)
        });
        for k in 1..=4 {
            assert!(!r.probe(&format!("involution k={k}")).unwrap().pass);
        }
    }

    #[test]
    fn flat_density_has_unit_jacobian() {
        let model = TargetModel::new(Flat::new(3));
        let opts = AuditOptions {
            n_points: 10,
            ..AuditOptions::default()
        };
        let r = audit(&model, &opts);
        for k in 1..=4 {
            let p = r.probe(&format!("jacobian k={k}")).unwrap();
            assert!(p.pass && p.measured < 1e-8, "{p:?}");
        }
    }

    #[test]
    fn gradcheck_reports_worst_point() {
        let model = TargetModel::new(Funnel::new(3, 3.0).unwrap());
        let r = gradcheck(&model, 20, 1e-5, 1e-5, 3);
        assert!(r.passed(), "{r}");
        assert_eq!(r.worst_point.len(), 3);
    }
}
