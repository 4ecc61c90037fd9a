//! U-Net discriminator with a whole-image head on the bottleneck and a
//! per-pixel `(C+1)`-way head on the decoder.

use ocogan_autograd::{ConvGeom, Element, ParamStore, Path, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::layers::{lrelu, Conv, Linear, SnConv};

/// Power iterations run at construction so the first normalized weights
/// are already close to unit spectral norm.
pub const SN_INIT_ITERS: usize = 256;

/// Downsampling residual block.
#[derive(Clone, Debug)]
pub struct ResBlockD {
    pub conv1: Conv,
    pub conv2: Conv,
    pub shortcut: Conv,
    pub preact: bool,
}

impl ResBlockD {
    fn new<T: Element, R: Rng + ?Sized>(p: &mut Path<'_, T>, rng: &mut R, c_in: usize, c_out: usize, preact: bool) -> Self {
        ResBlockD {
            conv1: Conv::same(&mut p.sub("conv1"), rng, c_in, c_out, 3),
            conv2: Conv::same(&mut p.sub("conv2"), rng, c_out, c_out, 3),
            shortcut: Conv::new(&mut p.sub("shortcut"), rng, c_in, c_out, 1, ConvGeom::default(), true),
            preact,
        }
    }

    fn forward<T: Element>(&self, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        let h = if self.preact { lrelu(x) } else { x.clone() };
        let h = self.conv2.forward(store, &lrelu(&self.conv1.forward(store, &h))).avg_pool2();
        h.add(&self.shortcut.forward(store, &x.avg_pool2()))
    }
}

/// Upsampling residual block; every convolution is spectrally normalized.
#[derive(Clone, Debug)]
pub struct ResBlockU {
    pub conv1: SnConv,
    pub conv2: SnConv,
    pub shortcut: SnConv,
}

impl ResBlockU {
    fn new<T: Element, R: Rng + ?Sized>(p: &mut Path<'_, T>, rng: &mut R, c_in: usize, c_out: usize) -> Self {
        ResBlockU {
            conv1: SnConv::same(&mut p.sub("conv1"), rng, c_in, c_out, 3),
            conv2: SnConv::same(&mut p.sub("conv2"), rng, c_out, c_out, 3),
            shortcut: SnConv::new(&mut p.sub("shortcut"), rng, c_in, c_out, 1, ConvGeom::default()),
        }
    }

    fn forward<T: Element>(&self, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        let u = x.upsample2();
        let h = self.conv2.forward(store, &lrelu(&self.conv1.forward(store, &lrelu(&u))));
        h.add(&self.shortcut.forward(store, x).upsample2())
    }

    fn sn_layers(&self) -> [&SnConv; 3] {
        [&self.conv1, &self.conv2, &self.shortcut]
    }
}

/// Parallel dilated 3x3 convolutions, concatenated and fused by a 1x1.
#[derive(Clone, Debug)]
pub struct Aspp {
    pub rates: Vec<usize>,
    pub branches: Vec<Conv>,
    pub fuse: Conv,
}

impl Aspp {
    fn new<T: Element, R: Rng + ?Sized>(p: &mut Path<'_, T>, rng: &mut R, channels: usize, rates: &[usize]) -> Self {
        let branches = rates
            .iter()
            .enumerate()
            .map(|(i, &r)| Conv::new(&mut p.sub(&format!("branch{i}")), rng, channels, channels, 3, ConvGeom::same(3, r), true))
            .collect();
        let fuse = Conv::new(&mut p.sub("fuse"), rng, rates.len() * channels, channels, 1, ConvGeom::default(), true);
        Aspp { rates: rates.to_vec(), branches, fuse }
    }

    /// Per-branch outputs before concatenation.
    pub fn branch_outputs<T: Element>(&self, store: &ParamStore<T>, x: &Var<T>) -> Vec<Var<T>> {
        self.branches.iter().map(|b| b.forward(store, x)).collect()
    }

    pub fn forward<T: Element>(&self, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        let cat = Var::concat(&self.branch_outputs(store, x), 1);
        self.fuse.forward(store, &lrelu(&cat))
    }
}

/// Encoder stage outputs: all but the last are skips, the last is the bottleneck.
#[derive(Clone, Debug)]
pub struct Encoded<T: Element> {
    pub skips: Vec<Var<T>>,
    pub bottleneck: Var<T>,
}

#[derive(Clone, Debug)]
pub struct DiscOutput<T: Element> {
    /// `(N,)` pre-sigmoid real/fake score.
    pub image_logit: Var<T>,
    /// `(N, C+1, H, W)`; the last channel is the fake class.
    pub pixel_logits: Var<T>,
}

#[derive(Clone, Debug)]
pub struct Discriminator<T: Element> {
    pub model: ModelConfig,
    pub resolution: usize,
    pub num_classes: usize,
    pub store: ParamStore<T>,
    pub enc: Vec<ResBlockD>,
    pub head_conv: Conv,
    pub head_fc: Linear,
    pub aspp: Aspp,
    pub dec: Vec<ResBlockU>,
    pub out: SnConv,
}

impl<T: Element> Discriminator<T> {
    /// Parameters are grouped under `enc.`, `head_u.`, `aspp.` and `dec.`.
    pub fn new(model: &ModelConfig, resolution: usize, num_classes: usize, seed: u64) -> Result<Self> {
        model.validate_discriminator(resolution)?;
        if num_classes < 2 {
            return Err(Error::config("the discriminator needs at least two classes"));
        }
        let widths = &model.disc_channels;
        let n = widths.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut root = store.root();
        let enc = {
            let mut p = root.sub("enc");
            (0..n)
                .map(|i| {
                    let c_in = if i == 0 { 3 } else { widths[i - 1] };
                    ResBlockD::new(&mut p.sub(&format!("block{i}")), &mut rng, c_in, widths[i], i > 0)
                })
                .collect()
        };
        let bottleneck = widths[n - 1];
        let (head_conv, head_fc) = {
            let mut p = root.sub("head_u");
            let conv = Conv::same(&mut p.sub("conv"), &mut rng, bottleneck, bottleneck, 3);
            let fc = Linear::new(&mut p.sub("fc"), &mut rng, bottleneck, 1);
            (conv, fc)
        };
        let aspp = Aspp::new(&mut root.sub("aspp"), &mut rng, bottleneck, &model.aspp_rates);
        let (dec, out) = {
            let mut p = root.sub("dec");
            let mut c_in = bottleneck;
            let mut blocks = Vec::with_capacity(n);
            for i in 0..n {
                let c_out = if i + 1 < n { widths[n - 2 - i] } else { widths[0] };
                blocks.push(ResBlockU::new(&mut p.sub(&format!("block{i}")), &mut rng, c_in, c_out));
                c_in = if i + 1 < n { c_out + widths[n - 2 - i] } else { c_out };
            }
            let out = SnConv::new(&mut p.sub("out"), &mut rng, c_in, num_classes + 1, 1, ConvGeom::default());
            (blocks, out)
        };
        let mut d = Discriminator {
            model: model.clone(),
            resolution,
            num_classes,
            store,
            enc,
            head_conv,
            head_fc,
            aspp,
            dec,
            out,
        };
        d.power_iterate(SN_INIT_ITERS);
        Ok(d)
    }

    pub fn encode(&self, x: &Var<T>) -> Result<Encoded<T>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 3 || s[2] != self.resolution || s[3] != self.resolution {
            return Err(Error::data(format!(
                "discriminator input has shape {s:?}, expected (N, 3, {r}, {r})",
                r = self.resolution
            )));
        }
        let mut h = x.clone();
        let mut outs = Vec::with_capacity(self.enc.len());
        for block in &self.enc {
            h = block.forward(&self.store, &h);
            outs.push(h.clone());
        }
        let bottleneck = outs.pop().expect("at least one stage");
        Ok(Encoded { skips: outs, bottleneck })
    }

    /// conv -> global average pool -> linear, `(N,)`.
    pub fn uncond_head(&self, bottleneck: &Var<T>) -> Var<T> {
        let n = bottleneck.shape()[0];
        let h = lrelu(&self.head_conv.forward(&self.store, &lrelu(bottleneck)));
        let c = h.shape()[1];
        let pooled = h.mean_keep(&[2, 3]).reshape(&[n, c]);
        self.head_fc.forward(&self.store, &pooled).reshape(&[n])
    }

    pub fn aspp(&self, bottleneck: &Var<T>) -> Var<T> {
        self.aspp.forward(&self.store, bottleneck)
    }

    pub fn decode(&self, aspp_out: &Var<T>, skips: &[Var<T>]) -> Result<Var<T>> {
        if skips.len() + 1 != self.dec.len() {
            return Err(Error::internal(format!("decoder expects {} skips, got {}", self.dec.len() - 1, skips.len())));
        }
        let mut h = aspp_out.clone();
        for (i, block) in self.dec.iter().enumerate() {
            h = block.forward(&self.store, &h);
            if let Some(skip) = skips.len().checked_sub(i + 1).map(|k| &skips[k]) {
                if skip.shape()[2..] != h.shape()[2..] {
                    return Err(Error::internal(format!("skip {:?} does not match decoder {:?}", skip.shape(), h.shape())));
                }
                h = Var::concat(&[h, skip.clone()], 1);
            }
        }
        Ok(self.out.forward(&self.store, &lrelu(&h)))
    }

    pub fn forward(&self, x: &Var<T>) -> Result<DiscOutput<T>> {
        let e = self.encode(x)?;
        let image_logit = self.uncond_head(&e.bottleneck);
        let pixel_logits = self.decode(&self.aspp(&e.bottleneck), &e.skips)?;
        Ok(DiscOutput { image_logit, pixel_logits })
    }

    pub fn image_logit(&self, x: &Var<T>) -> Result<Var<T>> {
        Ok(self.uncond_head(&self.encode(x)?.bottleneck))
    }

    pub fn pixel_logits(&self, x: &Var<T>) -> Result<Var<T>> {
        let e = self.encode(x)?;
        self.decode(&self.aspp(&e.bottleneck), &e.skips)
    }

    /// A copy whose parameters are constants, for passes that must not
    /// accumulate discriminator gradients.
    pub fn frozen(&self) -> Self {
        Discriminator { store: self.store.frozen(), ..self.clone() }
    }

    pub fn sn_layers(&self) -> Vec<&SnConv> {
        let mut v: Vec<&SnConv> = self.dec.iter().flat_map(|b| b.sn_layers()).collect();
        v.push(&self.out);
        v
    }

    /// Advances every spectral-norm power iteration by `n_iter` steps.
    pub fn power_iterate(&mut self, n_iter: usize) {
        let layers: Vec<SnConv> = self.sn_layers().into_iter().cloned().collect();
        for l in &layers {
            l.power_iterate(&mut self.store, n_iter);
        }
    }
}
