//! Trains every mode for a short budget at reduced widths and prints the
//! comparison table.

use ocogan::cli::{cmd_ablate, cmd_gen_data, AblateArgs, GenDataArgs, TrainOverrides};
use ocogan::RunConfig;

fn main() -> ocogan::Result<()> {
    let budget = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let dir = tempfile::tempdir().expect("temp dir");
    let config = dir.path().join("tiny.toml");
    std::fs::write(&config, RunConfig::tiny().to_toml_string()).expect("write config");
    let data = dir.path().join("data");
    cmd_gen_data(&GenDataArgs {
        out: data.clone(),
        config: Some(config.clone()),
        resolution: None,
        num_classes: None,
        train_count: None,
        val_count: None,
        seed: None,
        force: false,
    })?;
    let table = cmd_ablate(&AblateArgs {
        data,
        out: dir.path().join("ablation"),
        budget,
        config: Some(config),
        overrides: TrainOverrides::default(),
    })?;
    print!("{}", table.to_text());
    Ok(())
}
