//! Central-difference verification of analytic gradients.

use crate::numerics::ParamSet;

/// Compare the gradient buffers stored in `params` against central finite
/// differences of `loss`, entry by entry.
///
/// Returns the maximum over all entries of
/// `|analytic - central| / max(1, |central|)`. The caller populates the
/// gradient buffers (one backward pass) before calling; `loss` must evaluate
/// the same objective from parameter values alone.
pub fn grad_check<F>(params: &mut ParamSet, loss: F, eps: f64) -> f64
where
    F: Fn(&ParamSet) -> f64,
{
    let mut worst = 0.0f64;
    let n_params = params.len();
    for pi in 0..n_params {
        let n_entries = {
            let p = params.iter().nth(pi).unwrap();
            p.value.rows() * p.value.cols()
        };
        for ei in 0..n_entries {
            let original = params.iter().nth(pi).unwrap().value.data()[ei];
            let analytic = params.iter().nth(pi).unwrap().grad.data()[ei];

            set_entry(params, pi, ei, original + eps);
            let up = loss(params);
            set_entry(params, pi, ei, original - eps);
            let down = loss(params);
            set_entry(params, pi, ei, original);

            let central = (up - down) / (2.0 * eps);
            let err = (analytic - central).abs() / central.abs().max(1.0);
            if err > worst {
                worst = err;
            }
        }
    }
    worst
}

fn set_entry(params: &mut ParamSet, pi: usize, ei: usize, v: f64) {
    let p = params.iter_mut().nth(pi).unwrap();
    p.value.data_mut()[ei] = v;
}
