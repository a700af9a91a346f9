use tabext_core::ingest::FeaturizedTable;

use crate::error::Result;
use crate::model::SegModel;

/// Magnitudes below this are compared on an absolute scale.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(GRAD_CHECK_FLOOR)
}

/// Central differences with `step` on every scalar parameter.
pub fn grad_check(model: &SegModel, table: &FeaturizedTable, step: f64) -> Result<GradCheck> {
    let (_, grads) = model.loss_and_grad(table)?;
    let mut probe = model.clone();
    let mut report = GradCheck { checked: 0, max_rel_err: 0.0, worst: (String::new(), 0), analytic: 0.0, numeric: 0.0 };
    for p in 0..grads.len() {
        for k in 0..grads[p].len() {
            let orig = probe.params().tensor(p).data()[k];
            probe.params_mut().tensors_mut()[p].data_mut()[k] = orig + step;
            let up = probe.loss(table)?;
            probe.params_mut().tensors_mut()[p].data_mut()[k] = orig - step;
            let down = probe.loss(table)?;
            probe.params_mut().tensors_mut()[p].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = grads[p].data()[k];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (model.params().names()[p].clone(), k);
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
