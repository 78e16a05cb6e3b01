//! Central finite-difference verification of reverse-mode gradients.
//!
//! The checker only ever evaluates the graph forward, so it is independent
//! of the backward implementation it verifies.

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    /// Worst relative error across all checked entries.
    pub max_rel_err: f64,
    /// Worst absolute error across entries in the small-gradient regime.
    pub max_abs_err: f64,
    /// Number of scalar entries checked.
    pub entries: usize,
}

/// Check the analytic gradient of `build` w.r.t. every entry of every input
/// against central finite differences with step `h`.
///
/// `build` must construct the same scalar function of its leaf inputs on
/// every call. An entry passes when the relative error is at most `rel_tol`,
/// or — where the analytic gradient magnitude is below 1e-3 — when the
/// absolute error is at most `abs_tol`.
pub fn check_gradients<F>(
    build: F,
    inputs: &[Tensor],
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let eval = |points: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = points.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &ids)?;
        tape.value(loss).as_scalar()
    };

    // analytic gradients
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &ids)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        entries: 0,
    };

    for (k, input) in inputs.iter().enumerate() {
        let analytic: Vec<f64> = match grads.wrt(ids[k]) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; input.numel()],
        };
        for e in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[e] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[e] -= h;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
            let a = analytic[e];
            let abs_err = (a - numeric).abs();
            let rel_err = abs_err / a.abs().max(numeric.abs()).max(1e-12);
            report.entries += 1;
            let small = a.abs() < 1e-3;
            if small {
                report.max_abs_err = report.max_abs_err.max(abs_err);
            }
            report.max_rel_err = report.max_rel_err.max(rel_err);
            let ok = rel_err <= rel_tol || (small && abs_err <= abs_tol);
            if !ok {
                return Err(Error::Numeric(format!(
                    "gradient mismatch at input {k} entry {e}: \
                     analytic {a:.9e}, finite-diff {numeric:.9e} \
                     (rel {rel_err:.3e}, abs {abs_err:.3e})"
                )));
            }
        }
    }
    Ok(report)
}
