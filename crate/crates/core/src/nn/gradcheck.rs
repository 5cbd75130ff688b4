//! Central finite-difference comparison against the reverse pass.

use super::params::{ParamGrads, ParamStore};

/// Components where both the analytic and numeric derivative are below this
/// magnitude are compared absolutely instead of relatively. With `eps` near
/// 1e-6 and losses of order one, round-off alone moves the numeric estimate
/// by a few 1e-10, so exactly-zero gradients need this much slack.
pub const ZERO_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

/// Perturbs every scalar parameter by `±eps` and compares
/// `(f(w+eps) − f(w−eps)) / 2eps` with the analytic gradient.
///
/// `eval` must be deterministic and return the loss together with its
/// analytic gradients.
pub fn check_gradients<F>(store: &mut ParamStore, eps: f64, eval: F) -> GradCheckReport
where
    F: Fn(&ParamStore) -> (f64, ParamGrads),
{
    let (_, analytic) = eval(store);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.get(id).len();
        for k in 0..n {
            let orig = store.get(id).as_slice().expect("contiguous")[k];
            store.get_mut(id).as_slice_mut().expect("contiguous")[k] = orig + eps;
            let plus = eval(store).0;
            store.get_mut(id).as_slice_mut().expect("contiguous")[k] = orig - eps;
            let minus = eval(store).0;
            store.get_mut(id).as_slice_mut().expect("contiguous")[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let exact = analytic
                .get(id)
                .map(|g| g.as_slice().expect("contiguous")[k])
                .unwrap_or(0.0);
            let scale = exact.abs().max(numeric.abs());
            let err = if scale < ZERO_FLOOR {
                (exact - numeric).abs()
            } else {
                (exact - numeric).abs() / scale
            };
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = format!("{}[{k}] analytic={exact:e} numeric={numeric:e}", store.name(id));
            }
        }
    }
    report
}
