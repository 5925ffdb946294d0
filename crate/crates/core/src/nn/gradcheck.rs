//! Central-difference gradient verification in 64-bit precision.

use alloc::vec::Vec;

/// Default finite-difference step.
pub const STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute rather than
/// relative terms.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Index of the coordinate with the largest error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Relative discrepancy `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares `analytic` against central differences of `f` around `params`.
///
/// `indices` restricts the check to a subset of coordinates; `None` checks
/// every coordinate. `f` must be a deterministic function of its argument.
pub fn grad_check<F>(params: &[f64], analytic: &[f64], indices: Option<&[usize]>, mut f: F) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "grad_check: gradient length");
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: idx.len(),
    };
    for &i in idx {
        let orig = work[i];
        work[i] = orig + STEP;
        let plus = f(&work);
        work[i] = orig - STEP;
        let minus = f(&work);
        work[i] = orig;
        let numeric = (plus - minus) / (2.0 * STEP);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || !err.is_finite() {
            report.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report
}
