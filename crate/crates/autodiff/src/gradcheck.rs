//! Central finite-difference gradient checks in 64-bit.
//!
//! The relative error of one coordinate is `|a - f| / max(|a|, |f|, floor)`
//! where `a` is the reverse-mode gradient and `f` the central difference.
//! The floor keeps coordinates whose true gradient is (near) zero from
//! dividing rounding noise by nothing.

use crate::{Graph, NodeId, Result, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(input, flat index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares reverse-mode gradients of the scalar built by `f` with central
/// differences for every coordinate of every input.
pub fn check<F>(inputs: &[Tensor<f64>], eps: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    check_subset(inputs, eps, usize::MAX, f)
}

/// Like [`check`] but probes at most `max_per_input` evenly spaced
/// coordinates of each input.
pub fn check_subset<F>(inputs: &[Tensor<f64>], eps: f64, max_per_input: usize, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &ids)?;
        Ok(g.value(out).data()[0])
    };

    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &ids)?;
    g.backward(out)?;

    let mut report = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: (0, 0),
        coordinates: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (which, id) in ids.iter().enumerate() {
        let analytic = g
            .grad(*id)
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[which].len()]);
        let len = inputs[which].len();
        let step = if max_per_input >= len {
            1
        } else {
            len.div_ceil(max_per_input)
        };
        for idx in (0..len).step_by(step.max(1)) {
            let orig = inputs[which].data()[idx];
            work[which].data_mut()[idx] = orig + eps;
            let plus = eval(&work)?;
            work[which].data_mut()[idx] = orig - eps;
            let minus = eval(&work)?;
            work[which].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = relative_error(analytic[idx], numeric);
            report.coordinates += 1;
            report.max_abs_error = report.max_abs_error.max((analytic[idx] - numeric).abs());
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (which, idx);
            }
        }
    }
    Ok(report)
}
