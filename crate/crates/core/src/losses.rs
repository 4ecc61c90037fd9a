//! Adversarial objectives, class balancing, R1 and LabelMix.

use ocogan_autograd::{backward, is_grad_enabled, Element, Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};

/// `mean(softplus(-real)) + mean(softplus(fake))`.
pub fn loss_d_uncond<T: Element>(logit_real: &Var<T>, logit_fake: &Var<T>) -> Var<T> {
    logit_real.neg().softplus().mean_all().add(&logit_fake.softplus().mean_all())
}

/// Non-saturating generator loss, `mean(softplus(-fake))`.
pub fn loss_g_uncond<T: Element>(logit_fake: &Var<T>) -> Var<T> {
    logit_fake.neg().softplus().mean_all()
}

/// Inverse class frequency over an `(N, C, H, W)` one-hot batch, scaled so
/// that a uniform batch gets all-ones weights; absent classes get 0.
pub fn class_weights<T: Element>(seg: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = seg.dims4();
    let hw = h * w;
    let mut counts = vec![0.0f64; c];
    for i in 0..n {
        for (k, count) in counts.iter_mut().enumerate() {
            let base = (i * c + k) * hw;
            *count += seg.data()[base..base + hw].iter().map(|v| v.to_f64_lossy()).sum::<f64>();
        }
    }
    let total: f64 = counts.iter().sum();
    let present = counts.iter().filter(|&&x| x > 0.0).count() as f64;
    Tensor::from_fn(&[c], |k| {
        if counts[k] > 0.0 {
            T::from_f64_lossy(total / (counts[k] * present))
        } else {
            T::zero()
        }
    })
}

/// `-sum_k alpha_k s_k log softmax(logits)_k`, averaged over batch and pixels.
/// `logits` has `C+1` channels, `seg` and `alpha` cover the first `C`.
pub fn weighted_class_ce<T: Element>(logits: &Var<T>, seg: &Tensor<T>, alpha: &Tensor<T>) -> Var<T> {
    let (n, c, h, w) = seg.dims4();
    let logp = logits.log_softmax(1).narrow(1, 0, c);
    let weights = seg.zip_with(&alpha.reshape(&[1, c, 1, 1]), |s, a| s * a);
    let per = T::from_f64_lossy(-1.0 / (n * h * w) as f64);
    logp.mul(&Var::constant(weights)).sum_all().mul_scalar(per)
}

/// `-log softmax(logits)_fake` (the last channel), averaged over batch and pixels.
pub fn fake_class_ce<T: Element>(logits: &Var<T>) -> Var<T> {
    let c1 = logits.shape()[1];
    logits.log_softmax(1).narrow(1, c1 - 1, 1).mean_all().neg()
}

/// Real pixels to their class, fake pixels to the extra class.
pub fn loss_d_cond<T: Element>(logits_real: &Var<T>, seg: &Tensor<T>, logits_fake: &Var<T>, alpha: &Tensor<T>) -> Var<T> {
    weighted_class_ce(logits_real, seg, alpha).add(&fake_class_ce(logits_fake))
}

/// Fake pixels pushed toward the class they were conditioned on.
pub fn loss_g_cond<T: Element>(logits_fake: &Var<T>, seg: &Tensor<T>, alpha: &Tensor<T>) -> Var<T> {
    weighted_class_ce(logits_fake, seg, alpha)
}

/// `(gamma / 2) * mean_n |d head(x)_n / d x_n|^2` at `x_real`, built so that
/// it can be differentiated with respect to the head's parameters.
pub fn r1_penalty<T: Element>(
    x_real: &Tensor<T>,
    gamma: f64,
    head: impl FnOnce(&Var<T>) -> Result<Var<T>>,
) -> Result<Var<T>> {
    if !is_grad_enabled() {
        return Err(Error::internal("R1 penalty requested with gradient recording disabled"));
    }
    let n = x_real.dim(0).max(1);
    let x = Var::leaf(x_real.clone());
    let logits = head(&x)?;
    let grads = backward(&logits.sum_all(), true);
    Ok(match grads.get(&x) {
        Some(g) => g.square().sum_all().mul_scalar(T::from_f64_lossy(gamma / 2.0 / n as f64)),
        None => Var::scalar(T::zero()),
    })
}

/// One fair coin per (sample, class); pixels take their class's coin.
/// Returns `(N, 1, H, W)` with entries in `{0, 1}`.
pub fn labelmix_mask<T: Element, R: Rng + ?Sized>(seg: &Tensor<T>, rng: &mut R) -> Tensor<T> {
    let (n, c, h, w) = seg.dims4();
    let hw = h * w;
    let mut mask = Tensor::zeros(&[n, 1, h, w]);
    let d = seg.data();
    for i in 0..n {
        let coins: Vec<bool> = (0..c).map(|_| rng.gen()).collect();
        for p in 0..hw {
            let k = (0..c).fold(0, |best, k| if d[(i * c + k) * hw + p] > d[(i * c + best) * hw + p] { k } else { best });
            if coins[k] {
                mask.data_mut()[i * hw + p] = T::one();
            }
        }
    }
    mask
}

/// `mix = M x_real + (1 - M) x_fake`.
pub fn labelmix_images<T: Element>(x_real: &Tensor<T>, x_fake: &Tensor<T>, mask: &Tensor<T>) -> Tensor<T> {
    let keep_real = x_real.zip_with(mask, |x, m| x * m);
    let keep_fake = x_fake.zip_with(&mask.map(|m| T::one() - m), |x, m| x * m);
    keep_real.zip_with(&keep_fake, |a, b| a + b)
}

/// Mean squared difference between the logits of the mixed image and the
/// mask-mixed logits of the real and fake images.
pub fn labelmix_consistency<T: Element>(
    logits_mix: &Var<T>,
    logits_real: &Var<T>,
    logits_fake: &Var<T>,
    mask: &Tensor<T>,
) -> Var<T> {
    let m = Var::constant(mask.clone());
    let inv = Var::constant(mask.map(|v| T::one() - v));
    let target = logits_real.mul(&m).add(&logits_fake.mul(&inv));
    logits_mix.sub(&target).square().mean_all()
}

/// LabelMix loss with a pixel-logit function `disc`.
pub fn labelmix_loss<T: Element>(
    x_real: &Tensor<T>,
    x_fake: &Tensor<T>,
    mask: &Tensor<T>,
    disc: impl Fn(&Var<T>) -> Result<Var<T>>,
) -> Result<Var<T>> {
    let mix = labelmix_images(x_real, x_fake, mask);
    let lm = disc(&Var::constant(mix))?;
    let lr = disc(&Var::constant(x_real.clone()))?;
    let lf = disc(&Var::constant(x_fake.clone()))?;
    Ok(labelmix_consistency(&lm, &lr, &lf, mask))
}
