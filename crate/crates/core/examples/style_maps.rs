//! Builds both style pyramids of an untrained generator and checks that
//! every site is a distribution over style channels.

use ocogan::autograd::{no_grad, Var};
use ocogan::datagen::{one_hot_batch, Dataset};
use ocogan::generator::sample_latent_seeded;
use ocogan::{Generator, RunConfig, StyleNoise};

fn main() -> ocogan::Result<()> {
    let cfg = RunConfig::tiny();
    let ds = Dataset::generate(&cfg.data)?;
    let res = cfg.data.resolution;
    let g: Generator<f32> = Generator::new(&cfg.model, res, ds.num_classes, 1.0, 0)?;

    let z = Var::constant(sample_latent_seeded(1, 2, cfg.model.z_dim)?);
    let maps: Vec<&[u8]> = ds.train[..2].iter().map(|s| s.labels.as_slice()).collect();
    let seg = Var::constant(one_hot_batch(&maps, res, res, ds.num_classes)?);
    let z64 = Var::constant(sample_latent_seeded(2, 2, cfg.model.noise_dim)?);

    let uncond = no_grad(|| g.uncond_styles(&z, &mut StyleNoise::Eval))?;
    let cond = no_grad(|| g.cond_styles(&seg, &z64, &mut StyleNoise::Eval))?;
    for (name, p) in [("uncond", &uncond), ("cond", &cond)] {
        for (r, m) in p.maps.iter().enumerate() {
            let (n, c, h, w) = m.value().dims4();
            let d = m.value().data();
            let worst = (0..n * h * w)
                .map(|i| {
                    let (b, s) = (i / (h * w), i % (h * w));
                    let sum: f32 = (0..c).map(|k| d[(b * c + k) * h * w + s]).sum();
                    (sum - 1.0).abs()
                })
                .fold(0.0f32, f32::max);
            println!("{name} level {r}: {:?}, max |site sum - 1| = {worst:.2e}", m.shape());
        }
    }
    Ok(())
}
