use ocogan_autograd::gradcheck::{check_gradients, numeric_grad};
use ocogan_autograd::{backward, no_grad, ConvGeom, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-6;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn assert_grads(name: &str, f: &dyn Fn(&[Var<f64>]) -> Var<f64>, inputs: &[Tensor<f64>]) {
    let report = check_gradients(f, inputs, H);
    assert!(report.max_rel_err < TOL, "{name}: {report:?}");
}

#[test]
fn pointwise_and_broadcast_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[2, 3, 4]);
    let b = rand_tensor(&mut rng, &[3, 1]).map(|x| x + 2.5);
    assert_grads("add/mul/div", &|v| v[0].add(&v[1]).mul(&v[0]).div(&v[1]).sum_all(), &[a.clone(), b.clone()]);
    assert_grads("sub/neg", &|v| v[0].sub(&v[1]).neg().square().mean_all(), &[a.clone(), b.clone()]);
    assert_grads("exp/ln", &|v| v[1].ln().mul(&v[0].exp()).sum_all(), &[a.clone(), b.clone()]);
    assert_grads("tanh/sqrt", &|v| v[0].tanh().mul(&v[1].sqrt()).sum_all(), &[a.clone(), b.clone()]);
    assert_grads("sigmoid/softplus", &|v| v[0].sigmoid().add(&v[0].mul_scalar(3.0).softplus()).sum_all(), &[a.clone()]);
    assert_grads("leaky", &|v| v[0].leaky_relu(0.2).square().sum_all(), &[a.clone()]);
    assert_grads("sum_keep/broadcast", &|v| v[0].sum_keep(&[0, 2]).broadcast_to(&[2, 3, 4]).mul(&v[0]).sum_all(), &[a.clone()]);
    assert_grads("mean_keep", &|v| v[0].mean_keep(&[2]).square().sum_all(), &[a]);
}

#[test]
fn structural_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, &[2, 3, 4, 4]);
    let b = rand_tensor(&mut rng, &[2, 2, 4, 4]);
    let w = rand_tensor(&mut rng, &[5, 5]);
    assert_grads(
        "concat/narrow",
        &|v| {
            let c = Var::concat(&[v[0].clone(), v[1].clone()], 1);
            c.narrow(1, 1, 3).square().sum_all().add(&c.narrow(1, 4, 1).sum_all())
        },
        &[a.clone(), b],
    );
    assert_grads("unnarrow", &|v| v[0].unnarrow(&[2, 6, 4, 4], 1, 2).square().mul_scalar(0.5).sum_all(), &[a.clone()]);
    assert_grads("upsample/pool", &|v| v[0].upsample2().square().avg_pool2().avg_pool2().square().sum_all(), &[a.clone()]);
    assert_grads(
        "log_softmax",
        &|v| v[0].log_softmax(1).mul(&v[0].softmax(1)).sum_all(),
        &[a.clone()],
    );
    assert_grads(
        "matmul",
        &|v| {
            let x = v[0].reshape(&[6, 16]).narrow(1, 0, 5);
            x.matmul(&v[1]).tanh().matmul_t(true, &x, false).sum_all().add(&v[1].matmul_t(true, &v[1], true).sum_all())
        },
        &[a, w],
    );
}

#[test]
fn convolution_first_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (geom, k) in [
        (ConvGeom::same(3, 1), 3),
        (ConvGeom::same(3, 2), 3),
        (ConvGeom::new(2, 1, 1), 3),
        (ConvGeom::new(2, 1, 1), 4),
        (ConvGeom::default(), 1),
    ] {
        let x = rand_tensor(&mut rng, &[2, 3, 6, 6]);
        let w = rand_tensor(&mut rng, &[4, 3, k, k]);
        assert_grads(&format!("conv {geom:?}"), &|v| v[0].conv2d(&v[1], geom).square().sum_all(), &[x.clone(), w.clone()]);
        let y = x.conv2d(&w, geom);
        let y2 = rand_tensor(&mut rng, y.shape());
        assert_grads(
            &format!("transposed conv {geom:?}"),
            &|v| v[0].conv2d_input_grad(&v[1], (6, 6), geom).square().sum_all(),
            &[y2.clone(), w.clone()],
        );
        assert_grads(
            &format!("conv weight grad {geom:?}"),
            &|v| v[0].conv2d_weight_grad(&v[1], (k, k), geom).square().sum_all(),
            &[x, y2],
        );
    }
}

/// Penalty `|d f / d x|^2` differentiated w.r.t. the parameters, checked by
/// finite differences of the (first-order) penalty value.
#[test]
fn second_order_through_conv_net() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&mut rng, &[2, 2, 6, 6]);
    let w1 = rand_tensor(&mut rng, &[3, 2, 3, 3]);
    let w2 = rand_tensor(&mut rng, &[4, 3, 3, 3]);
    let lin = rand_tensor(&mut rng, &[4, 1]);
    let net = |x: &Var<f64>, w1: &Var<f64>, w2: &Var<f64>, lin: &Var<f64>| -> Var<f64> {
        let h = x.conv2d(w1, ConvGeom::same(3, 1)).tanh().avg_pool2();
        let h = h.conv2d(w2, ConvGeom::same(3, 2)).softplus().add(&h.sum_keep(&[1]));
        let pooled = h.mean_keep(&[2, 3]).reshape(&[2, 4]);
        pooled.matmul(lin).sigmoid().sum_all()
    };
    let penalty = |v: &[Var<f64>]| -> Var<f64> {
        let xl = Var::leaf(v[0].value().clone());
        let out = net(&xl, &v[1], &v[2], &v[3]);
        let g = backward(&out, true);
        g.get(&xl).expect("input grad").square().sum_all()
    };
    let params = [x.clone(), w1.clone(), w2.clone(), lin.clone()];
    let leaves: Vec<Var<f64>> = params.iter().cloned().map(Var::leaf).collect();
    let p = penalty(&leaves);
    let grads = backward(&p, false);
    let value = |xs: &[Tensor<f64>]| -> f64 {
        let vs: Vec<Var<f64>> = xs.iter().cloned().map(Var::leaf).collect();
        penalty(&vs).item()
    };
    for k in 1..4 {
        let analytic = grads.tensor_or_zeros(&leaves[k]);
        let numeric = numeric_grad(&value, &params, k, H);
        let err = analytic.max_abs_diff(&numeric);
        let scale = numeric.data().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(err <= 1e-5 * scale.max(1e-3), "param {k}: err {err}, scale {scale}");
    }
}

#[test]
fn no_grad_records_nothing() {
    let x = Var::leaf(Tensor::<f32>::ones(&[3]));
    let y = no_grad(|| x.mul_scalar(2.0).exp());
    assert!(!y.requires_grad() && y.is_leaf());
    let z = x.mul_scalar(2.0);
    assert!(z.requires_grad() && !z.is_leaf());
}

proptest! {
    #[test]
    fn broadcast_then_sum_to_scales_by_count(
        c in 1usize..4, h in 1usize..5, w in 1usize..5, n in 1usize..3, seed in 0u64..1000
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small = rand_tensor(&mut rng, &[1, c, 1, 1]);
        let big = small.broadcast_to(&[n, c, h, w]);
        let back = big.sum_to(&[1, c, 1, 1]);
        let k = (n * h * w) as f64;
        for (a, b) in back.data().iter().zip(small.data()) {
            prop_assert!((a - k * b).abs() < 1e-12);
        }
    }
}
