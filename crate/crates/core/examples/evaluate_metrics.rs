//! FID, CFID and oracle-segmenter mIoU for an untrained generator, plus the
//! Frechet distance between two closed-form Gaussians.

use nalgebra::{DMatrix, DVector};
use ocogan::datagen::Dataset;
use ocogan::metrics::{evaluate, frechet_distance, GaussianFit};
use ocogan::{Generator, RunConfig};

fn main() -> ocogan::Result<()> {
    let a = GaussianFit { mu: DVector::from_vec(vec![0.0, 0.0]), sigma: DMatrix::identity(2, 2), n: 2 };
    let b = GaussianFit { mu: DVector::from_vec(vec![1.0, 0.0]), sigma: DMatrix::identity(2, 2) * 4.0, n: 2 };
    // |mu1 - mu2|^2 + tr(I + 4I - 2 * 2I) = 1 + 2.
    println!("Frechet distance = {:.6}", frechet_distance(&a, &b)?);

    let cfg = RunConfig::tiny();
    let ds = Dataset::generate(&cfg.data)?;
    let g: Generator<f32> = Generator::new(&cfg.model, cfg.data.resolution, ds.num_classes, 1.0, 0)?;
    let report = evaluate(&g, &ds, &cfg.eval, 0)?;
    print!("{}", report.to_text());
    Ok(())
}
