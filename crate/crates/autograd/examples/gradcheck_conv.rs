//! Reverse-mode gradients of a dilated, padded convolution followed by a
//! tanh, checked against central differences, plus a second-order gradient.

use ocogan_autograd::gradcheck::check_gradients;
use ocogan_autograd::{backward, ConvGeom, Tensor, Var};

fn main() {
    let x = Tensor::from_fn(&[2, 3, 6, 6], |i| ((i * 37 % 101) as f64 / 50.0) - 1.0);
    let w = Tensor::from_fn(&[4, 3, 3, 3], |i| ((i * 13 % 29) as f64 / 29.0) - 0.5);
    let geom = ConvGeom { stride: 1, padding: 2, dilation: 2 };
    let report = check_gradients(&|v| v[0].conv2d(&v[1], geom).tanh().square().sum_all(), &[x.clone(), w], 1e-5);
    println!(
        "checked {} entries, worst relative error {:.2e} (input {}, index {})",
        report.checked, report.max_rel_err, report.input, report.index
    );

    // d/dx of |d/dx sum(tanh(x))|^2, through the first backward pass.
    let xv = Var::leaf(x);
    let g = backward(&xv.tanh().sum_all(), true);
    let gx = g.get(&xv).expect("input gradient");
    let gg = backward(&gx.square().sum_all(), false);
    let second = gg.get(&xv).expect("second-order gradient");
    println!("second-order gradient norm {:.4}", second.value().data().iter().map(|v| v * v).sum::<f64>().sqrt());
}
