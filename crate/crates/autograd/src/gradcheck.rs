//! Central finite differences, as an oracle for reverse-mode gradients.
//!
//! Nothing here calls into the backward rules: the numeric side only ever
//! evaluates the forward function.

use crate::tensor::Tensor;
use crate::var::{backward, no_grad, Var};

/// `d f / d inputs[which]` by central differences with step `h`.
pub fn numeric_grad(
    f: &dyn Fn(&[Tensor<f64>]) -> f64,
    inputs: &[Tensor<f64>],
    which: usize,
    h: f64,
) -> Tensor<f64> {
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let n = inputs[which].numel();
    let mut out = Tensor::zeros(inputs[which].shape());
    for i in 0..n {
        let orig = work[which].data()[i];
        work[which].data_mut()[i] = orig + h;
        let plus = f(&work);
        work[which].data_mut()[i] = orig - h;
        let minus = f(&work);
        work[which].data_mut()[i] = orig;
        out.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    out
}

/// Worst mismatch found by [`check_gradients`].
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Relative error with a small absolute floor so entries that are zero on
/// both sides do not divide by zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs()).max(1e-6))
}

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences for every element of every input.
pub fn check_gradients(
    f: &dyn Fn(&[Var<f64>]) -> Var<f64>,
    inputs: &[Tensor<f64>],
    h: f64,
) -> GradCheckReport {
    let leaves: Vec<Var<f64>> = inputs.iter().cloned().map(Var::leaf).collect();
    let out = f(&leaves);
    let grads = backward(&out, false);
    let scalar_f = |xs: &[Tensor<f64>]| -> f64 {
        no_grad(|| {
            let vs: Vec<Var<f64>> = xs.iter().cloned().map(Var::constant).collect();
            f(&vs).item()
        })
    };
    let mut worst = GradCheckReport {
        input: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        max_rel_err: 0.0,
        checked: 0,
    };
    for (k, leaf) in leaves.iter().enumerate() {
        let analytic = grads.tensor_or_zeros(leaf);
        let numeric = numeric_grad(&scalar_f, inputs, k, h);
        for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
            let e = rel_err(a, n);
            worst.checked += 1;
            if e > worst.max_rel_err {
                worst = GradCheckReport {
                    input: k,
                    index: i,
                    analytic: a,
                    numeric: n,
                    max_rel_err: e,
                    checked: worst.checked,
                };
            }
        }
    }
    worst
}
