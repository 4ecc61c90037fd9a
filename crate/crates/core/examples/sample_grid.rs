//! Writes unconditional and segmentation-conditioned sample grids from an
//! untrained generator.

use ocogan::autograd::{no_grad, Var};
use ocogan::datagen::{one_hot_batch, Dataset};
use ocogan::generator::sample_latent_seeded;
use ocogan::imaging::{label_images, save_grid};
use ocogan::{Generator, RunConfig, StyleNoise};

fn main() -> ocogan::Result<()> {
    let cfg = RunConfig::tiny();
    let ds = Dataset::generate(&cfg.data)?;
    let res = cfg.data.resolution;
    let g: Generator<f32> = Generator::new(&cfg.model, res, ds.num_classes, 1.0, 0)?;
    let out = std::env::temp_dir().join("ocogan_samples");
    std::fs::create_dir_all(&out).expect("output dir");

    let z = Var::constant(sample_latent_seeded(0, 16, cfg.model.z_dim)?);
    let uncond = no_grad(|| g.generate_uncond(&z, &mut StyleNoise::Eval))?;
    save_grid(&out.join("uncond.png"), uncond.value(), 4)?;

    let maps: Vec<&[u8]> = ds.val[..4].iter().map(|s| s.labels.as_slice()).collect();
    let seg = Var::constant(one_hot_batch(&maps, res, res, ds.num_classes)?);
    let z64 = Var::constant(sample_latent_seeded(1, 4, cfg.model.noise_dim)?);
    let cond = no_grad(|| g.generate_cond(&z64, &seg, &mut StyleNoise::Eval))?;
    save_grid(&out.join("cond.png"), cond.value(), 4)?;
    save_grid(&out.join("maps.png"), &label_images(&maps, res, res), 4)?;
    println!("wrote grids to {}", out.display());
    Ok(())
}
