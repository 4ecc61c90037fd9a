use ocogan_autograd::{ConvGeom, Element, ParamId, ParamStore, Path, Tensor, Var};
use rand::Rng;

use crate::config::{ModelConfig, Upsample};
use crate::error::{Error, Result};
use crate::layers::{instance_standardize, lrelu, randn, Conv, ConvTranspose};

/// Style-modulated normalization followed by a 3x3 convolution.
#[derive(Clone, Debug)]
pub struct ModBlock {
    /// 1x1 convolution from the style map to `(gamma, beta)`.
    pub affine: Conv,
    pub conv: Conv,
    pub c_in: usize,
}

impl ModBlock {
    pub fn new<T: Element, R: Rng + ?Sized>(
        p: &mut Path<'_, T>,
        rng: &mut R,
        style_channels: usize,
        c_in: usize,
        c_out: usize,
    ) -> Self {
        let affine = {
            let mut a = p.sub("affine");
            let weight = a.param("weight", randn(rng, &[2 * c_in, style_channels, 1, 1]));
            let bias = a.param("bias", Tensor::from_fn(&[2 * c_in], |i| if i < c_in { T::one() } else { T::zero() }));
            Conv {
                weight,
                bias: Some(bias),
                geom: ConvGeom::default(),
                scale: 1.0 / (style_channels as f64).sqrt(),
            }
        };
        let conv = Conv::same(&mut p.sub("conv"), rng, c_in, c_out, 3);
        ModBlock { affine, conv, c_in }
    }

    /// `(gamma, beta)`, each `(N, c_in, H, W)`.
    pub fn gamma_beta<T: Element>(&self, store: &ParamStore<T>, style: &Var<T>) -> (Var<T>, Var<T>) {
        let gb = self.affine.forward(store, style);
        (gb.narrow(1, 0, self.c_in), gb.narrow(1, self.c_in, self.c_in))
    }
}

/// `lrelu(conv(gamma * standardize(x) + beta))`.
pub fn modulated_block<T: Element>(store: &ParamStore<T>, block: &ModBlock, x: &Var<T>, style: &Var<T>) -> Result<Var<T>> {
    if x.shape().len() != 4 || style.shape().len() != 4 || x.shape()[2..] != style.shape()[2..] || x.shape()[0] != style.shape()[0] {
        return Err(Error::internal(format!(
            "features {:?} and style map {:?} disagree in batch or spatial size",
            x.shape(),
            style.shape()
        )));
    }
    let (gamma, beta) = block.gamma_beta(store, style);
    let y = gamma.mul(&instance_standardize(x)).add(&beta);
    Ok(lrelu(&block.conv.forward(store, &y)))
}

#[derive(Clone, Debug)]
pub struct SynthLevel {
    pub mod1: ModBlock,
    pub mod2: ModBlock,
    pub skip: Conv,
    pub up: Option<ConvTranspose>,
}

#[derive(Clone, Debug)]
pub struct SynthesisNet {
    pub constant: ParamId,
    pub levels: Vec<SynthLevel>,
    pub to_rgb: Conv,
    pub upsample: Upsample,
}

impl SynthesisNet {
    pub fn new<T: Element, R: Rng + ?Sized>(p: &mut Path<'_, T>, rng: &mut R, m: &ModelConfig, resolution: usize) -> Self {
        let base = m.base_resolution(resolution);
        let widths = &m.gen_channels;
        let constant = p.param("const", randn(rng, &[1, widths[0], base, base]));
        let last = widths.len() - 1;
        let levels = (0..widths.len())
            .map(|r| {
                let mut lp = p.sub(&format!("level{r}"));
                let c_in = if r == 0 { widths[0] } else { widths[r - 1] };
                let c = widths[r];
                SynthLevel {
                    mod1: ModBlock::new(&mut lp.sub("mod1"), rng, m.style_channels, c_in, c),
                    mod2: ModBlock::new(&mut lp.sub("mod2"), rng, m.style_channels, c, c),
                    skip: Conv::new(&mut lp.sub("skip"), rng, c_in, c, 1, ConvGeom::default(), true),
                    up: (r < last && m.upsample == Upsample::Transposed)
                        .then(|| ConvTranspose::new(&mut lp.sub("up"), rng, c, c)),
                }
            })
            .collect();
        let to_rgb = Conv::new(&mut p.sub("to_rgb"), rng, widths[last], 3, 1, ConvGeom::default(), true);
        SynthesisNet { constant, levels, to_rgb, upsample: m.upsample }
    }

    /// Images in `[-1, 1]` from style maps (coarsest first).
    pub fn forward<T: Element>(&self, store: &ParamStore<T>, maps: &[Var<T>]) -> Result<Var<T>> {
        if maps.len() != self.levels.len() {
            return Err(Error::internal(format!(
                "style pyramid has {} levels, the synthesis network {}",
                maps.len(),
                self.levels.len()
            )));
        }
        let n = maps[0].shape()[0];
        let c = store.value(self.constant).shape().to_vec();
        let mut x = store.var(self.constant).broadcast_to(&[n, c[1], c[2], c[3]]);
        let last = self.levels.len() - 1;
        for (r, (level, style)) in self.levels.iter().zip(maps).enumerate() {
            let h = modulated_block(store, &level.mod1, &x, style)?;
            let mut h = modulated_block(store, &level.mod2, &h, style)?;
            let mut skip = level.skip.forward(store, &x);
            if r < last {
                h = match &level.up {
                    Some(up) => up.forward(store, &h),
                    None => h.upsample2(),
                };
                skip = skip.upsample2();
            }
            x = h.add(&skip);
        }
        Ok(self.to_rgb.forward(store, &x).tanh())
    }
}
