use super::TargetModel;

/// Outcome of a finite-difference gradient audit at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// Worst `|fd - analytic| / max(1, |analytic|)` over coordinates.
    pub max_rel_error: f64,
    pub worst_index: usize,
    /// Coordinates where either gradient was not finite.
    pub non_finite: Vec<usize>,
}

impl GradientCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.non_finite.is_empty() && self.max_rel_error <= tol
    }
}

/// Compares the analytic gradient with central differences of step `h`.
///
/// The error is relative for components of magnitude above one and
/// absolute below, so exact zeros in the gradient do not blow it up.
pub fn check_gradient(model: &TargetModel, q: &[f64], h: f64) -> GradientCheck {
    let d = model.dim();
    let mut grad = vec![0.0; d];
    model.log_density_grad(q, &mut grad);
    let mut probe = q.to_vec();
    let mut out = GradientCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        non_finite: Vec::new(),
    };
    for j in 0..d {
        probe[j] = q[j] + h;
        let up = model.log_density(&probe);
        probe[j] = q[j] - h;
        let down = model.log_density(&probe);
        probe[j] = q[j];
        let fd = (up - down) / (2.0 * h);
        if !fd.is_finite() || !grad[j].is_finite() {
            out.non_finite.push(j);
            continue;
        }
        let err = (fd - grad[j]).abs() / grad[j].abs().max(1.0);
        if err > out.max_rel_error {
            out.max_rel_error = err;
            out.worst_index = j;
        }
    }
    out
}
