//! Central finite-difference gradients for any [`ParamSet`].

use super::params::ParamSet;

/// Gradients below this magnitude are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// `(f(θ + ε e_k) − f(θ − ε e_k)) / 2ε` for every parameter.
pub fn numeric_gradient<P: ParamSet>(params: &P, mut loss: impl FnMut(&P) -> f64, eps: f64) -> P {
    let mut grads = params.zeroed();
    let mut probe = params.clone();
    let sizes: Vec<usize> = params.blocks().iter().map(|b| b.values.len()).collect();
    for (bi, &len) in sizes.iter().enumerate() {
        for k in 0..len {
            let orig = probe.blocks()[bi].values[k];
            probe.blocks_mut()[bi].values[k] = orig + eps;
            let up = loss(&probe);
            probe.blocks_mut()[bi].values[k] = orig - eps;
            let down = loss(&probe);
            probe.blocks_mut()[bi].values[k] = orig;
            grads.blocks_mut()[bi].values[k] = (up - down) / (2.0 * eps);
        }
    }
    grads
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over entries of `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
    pub max_rel_error: f64,
    pub worst_block: String,
    pub worst_index: usize,
    pub checked: usize,
}

pub fn check_gradients<P: ParamSet>(analytic: &P, numeric: &P) -> GradCheckReport {
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_block: String::new(), worst_index: 0, checked: 0 };
    for (a, n) in analytic.blocks().iter().zip(numeric.blocks()) {
        for (k, (x, y)) in a.values.iter().zip(n.values).enumerate() {
            let err = rel_error(*x, *y);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst_block = a.name.clone();
                report.worst_index = k;
            }
        }
    }
    report
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR)
}
