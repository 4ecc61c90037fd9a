//! Building blocks shared by the generator and the discriminator.
//!
//! Weights are stored as standard normals and multiplied by `1/sqrt(fan_in)`
//! at use (equalized learning rate).

use ocogan_autograd::{ConvGeom, Element, ParamId, ParamStore, Path, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;

pub const LRELU_SLOPE: f64 = 0.2;
pub const NORM_EPS: f64 = 1e-8;
const SN_EPS: f64 = 1e-12;

pub fn lrelu<T: Element>(x: &Var<T>) -> Var<T> {
    x.leaky_relu(T::from_f64_lossy(LRELU_SLOPE))
}

pub fn randn<T: Element, R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.sample::<f64, _>(StandardNormal)))
}

/// Per-channel, per-image standardization over the spatial axes.
pub fn instance_standardize<T: Element>(x: &Var<T>) -> Var<T> {
    let mean = x.mean_keep(&[2, 3]);
    let centered = x.sub(&mean);
    let var = centered.square().mean_keep(&[2, 3]);
    centered.div(&var.add_scalar(T::from_f64_lossy(NORM_EPS)).sqrt())
}

fn add_channel_bias<T: Element>(y: Var<T>, store: &ParamStore<T>, bias: Option<ParamId>) -> Var<T> {
    match bias {
        None => y,
        Some(b) => {
            let c = store.value(b).numel();
            y.add(&store.var(b).reshape(&[1, c, 1, 1]))
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub geom: ConvGeom,
    pub scale: f64,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Element, R: Rng + ?Sized>(
        p: &mut Path<'_, T>,
        rng: &mut R,
        c_in: usize,
        c_out: usize,
        k: usize,
        geom: ConvGeom,
        bias: bool,
    ) -> Conv {
        let weight = p.param("weight", randn(rng, &[c_out, c_in, k, k]));
        let bias = bias.then(|| p.param("bias", Tensor::zeros(&[c_out])));
        Conv { weight, bias, geom, scale: 1.0 / ((c_in * k * k) as f64).sqrt() }
    }

    /// Same-padded 3x3 (or any odd `k`) convolution with bias.
    pub fn same<T: Element, R: Rng + ?Sized>(p: &mut Path<'_, T>, rng: &mut R, c_in: usize, c_out: usize, k: usize) -> Conv {
        Conv::new(p, rng, c_in, c_out, k, ConvGeom::same(k, 1), true)
    }

    pub fn weight<T: Element>(&self, store: &ParamStore<T>) -> Var<T> {
        store.var(self.weight).mul_scalar(T::from_f64_lossy(self.scale))
    }

    pub fn forward<T: Element>(&self, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        add_channel_bias(x.conv2d(&self.weight(store), self.geom), store, self.bias)
    }
}

/// 4x4 stride-2 transposed convolution doubling the spatial size.
#[derive(Clone, Debug)]
pub struct ConvTranspose {
    pub weight: ParamId,
    pub bias: ParamId,
    scale: f64,
}

impl ConvTranspose {
    pub fn new<T: Element, R: Rng + ?Sized>(p: &mut Path<'_, T>, rng: &mut R, c_in: usize, c_out: usize) -> Self {
        let weight = p.param("weight", randn(rng, &[c_in, c_out, 4, 4]));
        let bias = p.param("bias", Tensor::zeros(&[c_out]));
        ConvTranspose { weight, bias, scale: 1.0 / ((c_in * 4) as f64).sqrt() }
    }

    pub fn forward<T: Element>(&self, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        let (_, _, h, w) = x.value().dims4();
        let wt = store.var(self.weight).mul_scalar(T::from_f64_lossy(self.scale));
        let y = x.conv2d_input_grad(&wt, (2 * h, 2 * w), ConvGeom::new(2, 1, 1));
        add_channel_bias(y, store, Some(self.bias))
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    scale: f64,
}

impl Linear {
    pub fn new<T: Element, R: Rng + ?Sized>(p: &mut Path<'_, T>, rng: &mut R, d_in: usize, d_out: usize) -> Self {
        let weight = p.param("weight", randn(rng, &[d_out, d_in]));
        let bias = p.param("bias", Tensor::zeros(&[d_out]));
        Linear { weight, bias, scale: 1.0 / (d_in as f64).sqrt() }
    }

    /// `(N, d_in) -> (N, d_out)`.
    pub fn forward<T: Element>(&self, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        let w = store.var(self.weight).mul_scalar(T::from_f64_lossy(self.scale));
        let d_out = store.value(self.bias).numel();
        x.matmul_t(false, &w, true).add(&store.var(self.bias).reshape(&[1, d_out]))
    }
}

fn normalize<T: Element>(v: &mut Tensor<T>) {
    let norm = v.data().iter().map(|x| x.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
    let inv = T::from_f64_lossy(1.0 / (norm + SN_EPS));
    v.map_inplace(|x| x * inv);
}

/// Runs `n_iter` power-iteration steps for the top singular pair of `w`
/// (flattened to `rows x rest`) and returns `(w / sigma, sigma)`.
///
/// `u` (length `rows`) carries the persistent left-vector state.
pub fn spectral_normalize<T: Element>(w: &Tensor<T>, u: &mut Tensor<T>, n_iter: usize) -> (Tensor<T>, f64) {
    let rows = w.dim(0);
    let w2 = w.reshape(&[rows, w.numel() / rows]);
    let mut v = Tensor::zeros(&[w2.dim(1), 1]);
    for _ in 0..n_iter.max(1) {
        v = w2.matmul(true, &u.reshape(&[rows, 1]), false);
        normalize(&mut v);
        let mut next = w2.matmul(false, &v, false).into_reshape(&[rows]);
        normalize(&mut next);
        *u = next;
    }
    let sigma = w2.matmul(false, &v, false).data().iter().zip(u.data()).map(|(a, b)| a.to_f64_lossy() * b.to_f64_lossy()).sum::<f64>();
    let inv = T::from_f64_lossy(1.0 / sigma.max(SN_EPS));
    (w.map(|x| x * inv), sigma)
}

/// A convolution whose weight is divided by a power-iteration estimate of
/// its largest singular value. The singular vectors are buffers and are
/// treated as constants when differentiating.
#[derive(Clone, Debug)]
pub struct SnConv {
    pub conv: Conv,
    pub u: ParamId,
    pub v: ParamId,
}

impl SnConv {
    pub fn new<T: Element, R: Rng + ?Sized>(
        p: &mut Path<'_, T>,
        rng: &mut R,
        c_in: usize,
        c_out: usize,
        k: usize,
        geom: ConvGeom,
    ) -> SnConv {
        let conv = Conv::new(p, rng, c_in, c_out, k, geom, true);
        let mut u0 = randn::<T, _>(rng, &[c_out]);
        normalize(&mut u0);
        let u = p.buffer("sn_u", u0);
        let v = p.buffer("sn_v", Tensor::zeros(&[c_in * k * k]));
        SnConv { conv, u, v }
    }

    pub fn same<T: Element, R: Rng + ?Sized>(p: &mut Path<'_, T>, rng: &mut R, c_in: usize, c_out: usize, k: usize) -> SnConv {
        SnConv::new(p, rng, c_in, c_out, k, ConvGeom::same(k, 1))
    }

    /// Advances the power iteration by `n_iter` steps and stores `u`, `v`.
    pub fn power_iterate<T: Element>(&self, store: &mut ParamStore<T>, n_iter: usize) {
        let w = store.value(self.conv.weight).clone();
        let mut u = store.value(self.u).clone();
        let rows = w.dim(0);
        let w2 = w.reshape(&[rows, w.numel() / rows]);
        let mut v = store.value(self.v).clone();
        for _ in 0..n_iter {
            v = w2.matmul(true, &u.reshape(&[rows, 1]), false).into_reshape(&[w2.dim(1)]);
            normalize(&mut v);
            u = w2.matmul(false, &v.reshape(&[w2.dim(1), 1]), false).into_reshape(&[rows]);
            normalize(&mut u);
        }
        store.set(self.u, u);
        store.set(self.v, v);
    }

    /// Current estimate `u^T W v` of the top singular value of the scaled weight.
    pub fn sigma<T: Element>(&self, store: &ParamStore<T>) -> Var<T> {
        let w = self.conv.weight(store);
        let rows = w.shape()[0];
        let cols = store.value(self.v).numel();
        let u = Var::constant(store.value(self.u).reshape(&[1, rows]));
        let v = Var::constant(store.value(self.v).reshape(&[cols, 1]));
        u.matmul(&w.reshape(&[rows, cols]).matmul(&v)).add_scalar(T::from_f64_lossy(SN_EPS))
    }

    pub fn weight<T: Element>(&self, store: &ParamStore<T>) -> Var<T> {
        self.conv.weight(store).div(&self.sigma(store))
    }

    pub fn forward<T: Element>(&self, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        add_channel_bias(x.conv2d(&self.weight(store), self.conv.geom), store, self.conv.bias)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spectral_normalize_diag() {
        let w = Tensor::<f64>::from_f64(&[2, 2], &[3.0, 0.0, 0.0, 1.0]);
        let mut u = Tensor::from_f64(&[2], &[0.6, 0.8]);
        let (wn, sigma) = spectral_normalize(&w, &mut u, 50);
        assert!((sigma - 3.0).abs() < 1e-4);
        assert!((wn.data()[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn zero_weight_normalizes_to_zero() {
        let w = Tensor::<f64>::zeros(&[3, 4]);
        let mut u = Tensor::from_f64(&[3], &[1.0, 0.0, 0.0]);
        let (wn, _) = spectral_normalize(&w, &mut u, 3);
        assert!(wn.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn standardize_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Var::constant(randn::<f64, _>(&mut rng, &[2, 3, 5, 5]).map(|v| 3.0 * v + 1.5));
        let y = instance_standardize(&x);
        let mean = y.mean_keep(&[2, 3]);
        let var = y.square().mean_keep(&[2, 3]);
        for (&m, &v) in mean.value().data().iter().zip(var.value().data()) {
            assert!(m.abs() < 1e-4 && (v - 1.0).abs() < 1e-4);
        }
    }
}
