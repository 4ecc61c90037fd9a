#![allow(dead_code)]

use ocogan::autograd::gradcheck::rel_err;
use ocogan::autograd::{backward, no_grad, Element, ParamStore, Tensor, Var};
use ocogan::{ModelConfig, Upsample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Two generator levels and two encoder stages at 8x8, at most 8 channels.
pub fn micro_model() -> ModelConfig {
    ModelConfig {
        z_dim: 4,
        noise_dim: 3,
        style_channels: 4,
        mapping_hidden: 6,
        mapping_layers: 2,
        gen_channels: vec![8, 6],
        upsample: Upsample::Nearest,
        disc_channels: vec![4, 8],
        aspp_rates: vec![1, 2],
    }
}

pub fn randn<T: Element>(seed: u64, shape: &[usize]) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| T::from_f64_lossy(StandardNormal.sample(&mut rng)))
}

pub fn uniform(seed: u64, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// One-hot `(N, C, H, W)` from random labels.
pub fn random_seg<T: Element>(seed: u64, n: usize, c: usize, h: usize, w: usize) -> Tensor<T> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tensor::zeros(&[n, c, h, w]);
    for i in 0..n {
        for p in 0..h * w {
            let k = rng.gen_range(0..c);
            t.data_mut()[(i * c + k) * h * w + p] = T::one();
        }
    }
    t
}

/// Worst relative error between reverse-mode parameter gradients of `f`
/// and central differences over every trainable scalar whose name passes
/// `select`, with the name and index of the worst entry.
pub fn param_gradcheck(
    store: &ParamStore<f64>,
    select: impl Fn(&str) -> bool,
    f: impl Fn(&ParamStore<f64>) -> Var<f64>,
    h: f64,
) -> (f64, String, usize, usize) {
    let grads = backward(&f(store), false);
    let mut worst = (0.0, String::new(), 0, 0);
    let mut work = store.clone();
    for id in store.trainable_ids().collect::<Vec<_>>() {
        let name = store.name(id).to_string();
        if !select(&name) {
            continue;
        }
        let analytic = grads.tensor_or_zeros(store.var(id));
        let base = store.value(id).clone();
        for i in 0..base.numel() {
            let mut eval = |delta: f64| {
                let mut t = base.clone();
                t.data_mut()[i] += delta;
                work.set(id, t);
                no_grad(|| f(&work).item())
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let e = rel_err(analytic.data()[i], numeric);
            worst.3 += 1;
            if e > worst.0 {
                worst = (e, name.clone(), i, worst.3);
            }
        }
        work.set(id, base);
    }
    worst
}

/// A fixed random linear functional of `x`, so every output entry matters.
pub fn probe<T: Element>(x: &Var<T>, seed: u64) -> Var<T> {
    x.mul(&Var::constant(randn(seed, x.shape()))).sum_all()
}

pub mod oracles;

/// A random conditional-loss instance: `n` maps of `c` classes on 4x4 and
/// `(n, c+1, 4, 4)` real and fake logits.
pub struct LossInstance {
    pub real: Tensor<f64>,
    pub fake: Tensor<f64>,
    pub seg: Tensor<f64>,
    pub labels: Vec<Vec<usize>>,
}

pub fn loss_instance(seed: u64, n: usize, c: usize) -> LossInstance {
    let seg = random_seg::<f64>(seed, n, c, 4, 4);
    let labels = (0..n)
        .map(|i| (0..16).map(|p| (0..c).find(|&k| seg.data()[(i * c + k) * 16 + p] == 1.0).unwrap()).collect())
        .collect();
    LossInstance {
        real: randn(seed ^ 0xA, &[n, c + 1, 4, 4]).map(|v| 3.0 * v),
        fake: randn(seed ^ 0xB, &[n, c + 1, 4, 4]).map(|v| 3.0 * v),
        seg,
        labels,
    }
}

/// `(N, K, H, W)` to nested `[n][k][pixel]`.
pub fn nested(t: &Tensor<f64>) -> oracles::Logits {
    let (n, k, h, w) = t.dims4();
    (0..n)
        .map(|i| (0..k).map(|j| t.data()[(i * k + j) * h * w..(i * k + j + 1) * h * w].to_vec()).collect())
        .collect()
}
