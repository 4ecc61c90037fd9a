//! The hybrid generator: two style networks feeding one synthesis network.

mod style;
mod synthesis;

pub use style::{noise_field, CondStyleNet, UncondStyleNet};
pub use synthesis::{modulated_block, ModBlock, SynthesisNet};

use ocogan_autograd::{Element, ParamStore, Tensor, Var};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::ModelConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StyleSource {
    Unconditional,
    Conditional,
}

/// One style map per synthesis level, coarsest first, each `(N, S, H_r, W_r)`.
#[derive(Clone, Debug)]
pub struct StylePyramid<T: Element> {
    pub maps: Vec<Var<T>>,
    pub source: StyleSource,
}

/// Whether style maps get Gumbel noise (training) or not (evaluation).
pub enum StyleNoise<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

/// `n` latent vectors with i.i.d. standard normal entries, `(n, dim)`.
pub fn sample_latent<T: Element, R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> Result<Tensor<T>> {
    if n == 0 {
        return Err(Error::config("latent batch size must be at least 1"));
    }
    Ok(Tensor::from_fn(&[n, dim], |_| T::from_f64_lossy(rng.sample::<f64, _>(StandardNormal))))
}

/// Seeded convenience form of [`sample_latent`].
pub fn sample_latent_seeded<T: Element>(seed: u64, n: usize, dim: usize) -> Result<Tensor<T>> {
    sample_latent(&mut ChaCha8Rng::seed_from_u64(seed), n, dim)
}

/// A standard Gumbel draw; `u` is kept strictly inside `(0, 1)`.
fn gumbel<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    -(-u.ln()).ln()
}

/// Softmax over channels of `(x + g) / tau`, with `g` Gumbel noise in
/// training and zero in evaluation.
pub fn gumbel_softmax<T: Element>(x: &Var<T>, tau: f64, noise: &mut StyleNoise<'_>) -> Result<Var<T>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config(format!("Gumbel-softmax temperature must be positive, got {tau}")));
    }
    let logits = match noise {
        StyleNoise::Eval => x.clone(),
        StyleNoise::Train(rng) => {
            let g = Tensor::from_fn(x.shape(), |_| T::from_f64_lossy(gumbel(&mut **rng)));
            x.add(&Var::constant(g))
        }
    };
    Ok(logits.mul_scalar(T::from_f64_lossy(1.0 / tau)).softmax(1))
}

#[derive(Clone, Debug)]
pub struct Generator<T: Element> {
    pub model: ModelConfig,
    pub resolution: usize,
    pub num_classes: usize,
    pub tau: f64,
    pub store: ParamStore<T>,
    pub style_u: UncondStyleNet,
    pub style_c: CondStyleNet,
    pub synth: SynthesisNet,
}

impl<T: Element> Generator<T> {
    /// Parameters are grouped under `style_u.`, `style_c.` and `synth.`.
    pub fn new(model: &ModelConfig, resolution: usize, num_classes: usize, tau: f64, seed: u64) -> Result<Self> {
        model.validate_generator(resolution)?;
        if num_classes < 2 {
            return Err(Error::config("the generator needs at least two classes"));
        }
        if !(tau > 0.0) {
            return Err(Error::config(format!("Gumbel-softmax temperature must be positive, got {tau}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut root = store.root();
        let style_u = UncondStyleNet::new(&mut root.sub("style_u"), &mut rng, model, resolution);
        let style_c = CondStyleNet::new(&mut root.sub("style_c"), &mut rng, model, num_classes);
        let synth = SynthesisNet::new(&mut root.sub("synth"), &mut rng, model, resolution);
        Ok(Generator {
            model: model.clone(),
            resolution,
            num_classes,
            tau,
            store,
            style_u,
            style_c,
            synth,
        })
    }

    pub fn levels(&self) -> usize {
        self.model.gen_channels.len()
    }

    /// Spatial size of level `r`.
    pub fn level_size(&self, r: usize) -> usize {
        self.model.base_resolution(self.resolution) << r
    }

    pub fn uncond_styles(&self, z: &Var<T>, noise: &mut StyleNoise<'_>) -> Result<StylePyramid<T>> {
        if z.shape().len() != 2 || z.shape()[1] != self.model.z_dim {
            return Err(Error::data(format!("latent has shape {:?}, expected (N, {})", z.shape(), self.model.z_dim)));
        }
        let logits = self.style_u.forward(&self.store, z, self.model.base_resolution(self.resolution));
        self.activate(logits, StyleSource::Unconditional, noise)
    }

    /// `seg` is `(N, C, H, W)` one-hot, `z64` is `(N, noise_dim)`.
    pub fn cond_styles(&self, seg: &Var<T>, z64: &Var<T>, noise: &mut StyleNoise<'_>) -> Result<StylePyramid<T>> {
        let s = seg.shape();
        if s.len() != 4 || s[1] != self.num_classes || s[2] != self.resolution || s[3] != self.resolution {
            return Err(Error::data(format!(
                "segmentation batch has shape {s:?}, expected (N, {}, {r}, {r})",
                self.num_classes,
                r = self.resolution
            )));
        }
        if z64.shape() != [s[0], self.model.noise_dim] {
            return Err(Error::data(format!(
                "noise vector has shape {:?}, expected ({}, {})",
                z64.shape(),
                s[0],
                self.model.noise_dim
            )));
        }
        let logits = self.style_c.forward(&self.store, seg, z64, self.levels());
        self.activate(logits, StyleSource::Conditional, noise)
    }

    fn activate(&self, logits: Vec<Var<T>>, source: StyleSource, noise: &mut StyleNoise<'_>) -> Result<StylePyramid<T>> {
        let maps = logits.iter().map(|l| gumbel_softmax(l, self.tau, noise)).collect::<Result<_>>()?;
        Ok(StylePyramid { maps, source })
    }

    pub fn synthesize(&self, pyramid: &StylePyramid<T>) -> Result<Var<T>> {
        self.synth.forward(&self.store, &pyramid.maps)
    }

    pub fn generate_uncond(&self, z: &Var<T>, noise: &mut StyleNoise<'_>) -> Result<Var<T>> {
        self.synthesize(&self.uncond_styles(z, noise)?)
    }

    pub fn generate_cond(&self, z64: &Var<T>, seg: &Var<T>, noise: &mut StyleNoise<'_>) -> Result<Var<T>> {
        self.synthesize(&self.cond_styles(seg, z64, noise)?)
    }
}
