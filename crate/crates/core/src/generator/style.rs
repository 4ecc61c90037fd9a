use ocogan_autograd::{Element, ParamStore, Path, Var};
use rand::Rng;

use crate::config::ModelConfig;
use crate::layers::{lrelu, Conv, Linear};

/// Latent vector -> MLP -> base style map, then conv + upsample per level.
#[derive(Clone, Debug)]
pub struct UncondStyleNet {
    pub mapping: Vec<Linear>,
    pub convs: Vec<Conv>,
    pub style_channels: usize,
}

impl UncondStyleNet {
    pub fn new<T: Element, R: Rng + ?Sized>(p: &mut Path<'_, T>, rng: &mut R, m: &ModelConfig, resolution: usize) -> Self {
        let base = m.base_resolution(resolution);
        let out = m.style_channels * base * base;
        let mut mapping = Vec::with_capacity(m.mapping_layers);
        for i in 0..m.mapping_layers {
            let d_in = if i == 0 { m.z_dim } else { m.mapping_hidden };
            let d_out = if i + 1 == m.mapping_layers { out } else { m.mapping_hidden };
            mapping.push(Linear::new(&mut p.sub(&format!("mapping{i}")), rng, d_in, d_out));
        }
        let convs = (1..m.gen_channels.len())
            .map(|r| Conv::same(&mut p.sub(&format!("level{r}")), rng, m.style_channels, m.style_channels, 3))
            .collect();
        UncondStyleNet { mapping, convs, style_channels: m.style_channels }
    }

    /// Pre-activation style logits, coarsest level first.
    pub fn forward<T: Element>(&self, store: &ParamStore<T>, z: &Var<T>, base: usize) -> Vec<Var<T>> {
        let mut h = z.clone();
        for (i, layer) in self.mapping.iter().enumerate() {
            if i > 0 {
                h = lrelu(&h);
            }
            h = layer.forward(store, &h);
        }
        let n = z.shape()[0];
        let mut t = h.reshape(&[n, self.style_channels, base, base]);
        let mut out = vec![t.clone()];
        for conv in &self.convs {
            t = conv.forward(store, &lrelu(&t).upsample2());
            out.push(t.clone());
        }
        out
    }
}

/// Spatially replicates `(N, D)` noise to `(N, D, H, W)`.
pub fn noise_field<T: Element>(z64: &Var<T>, height: usize, width: usize) -> Var<T> {
    let (n, d) = (z64.shape()[0], z64.shape()[1]);
    z64.reshape(&[n, d, 1, 1]).broadcast_to(&[n, d, height, width])
}

/// Segmentation map + replicated noise -> conv at full resolution, then
/// average-pool + conv down to the base resolution.
#[derive(Clone, Debug)]
pub struct CondStyleNet {
    pub input: Conv,
    pub down: Vec<Conv>,
}

impl CondStyleNet {
    pub fn new<T: Element, R: Rng + ?Sized>(p: &mut Path<'_, T>, rng: &mut R, m: &ModelConfig, num_classes: usize) -> Self {
        let levels = m.gen_channels.len();
        let input = Conv::same(&mut p.sub(&format!("level{}", levels - 1)), rng, num_classes + m.noise_dim, m.style_channels, 3);
        let down = (0..levels - 1)
            .rev()
            .map(|r| Conv::same(&mut p.sub(&format!("level{r}")), rng, m.style_channels, m.style_channels, 3))
            .collect();
        CondStyleNet { input, down }
    }

    /// Pre-activation style logits, coarsest level first.
    pub fn forward<T: Element>(&self, store: &ParamStore<T>, seg: &Var<T>, z64: &Var<T>, levels: usize) -> Vec<Var<T>> {
        let (_, _, h, w) = seg.value().dims4();
        let x = Var::concat(&[seg.clone(), noise_field(z64, h, w)], 1);
        let mut t = self.input.forward(store, &x);
        let mut out = Vec::with_capacity(levels);
        out.push(t.clone());
        for conv in &self.down {
            t = conv.forward(store, &lrelu(&t).avg_pool2());
            out.push(t.clone());
        }
        out.reverse();
        out
    }
}
