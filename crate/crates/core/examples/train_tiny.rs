//! Trains the reduced-width model for a few dozen joint steps and prints
//! the metrics log.

use ocogan::datagen::Dataset;
use ocogan::trainer::run_with;
use ocogan::RunConfig;

fn main() -> ocogan::Result<()> {
    let mut cfg = RunConfig::tiny();
    cfg.train.total_steps = 40;
    let ds = Dataset::generate(&cfg.data)?;
    let dir = tempfile::tempdir().expect("temp dir");
    let out = run_with(&cfg, &ds, dir.path(), None, &mut |m| {
        if m.step % 10 == 0 {
            println!("{}", m.to_log_line());
        }
    })?;
    println!("{} checkpoints, {} R1 steps", out.checkpoints.len(), out.state.r1_applications);
    Ok(())
}
