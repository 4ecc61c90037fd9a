//! Renders a small shapes dataset, writes it to disk and reloads it.

use ocogan::datagen::Dataset;
use ocogan::ShapesConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ShapesConfig { train_count: 64, val_count: 16, ..ShapesConfig::default() };
    let ds = Dataset::generate(&cfg)?;
    let dir = tempfile::tempdir()?;
    ds.save(dir.path())?;
    let back = Dataset::load(dir.path(), None)?;

    let mut counts = vec![0usize; ds.num_classes];
    for s in &ds.train {
        for &l in &s.labels {
            counts[l as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    println!("{} train / {} val images at {0}x{0}", back.train.len(), back.val.len());
    for (k, n) in counts.iter().enumerate() {
        println!("class {k}: {:.3}", *n as f64 / total as f64);
    }
    Ok(())
}
