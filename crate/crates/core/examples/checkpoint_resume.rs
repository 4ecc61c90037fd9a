//! Interrupts a run halfway, resumes it from the checkpoint and confirms the
//! final weights match an uninterrupted run byte for byte.

use std::fs;

use ocogan::datagen::Dataset;
use ocogan::trainer::{load_checkpoint, run, run_with};
use ocogan::RunConfig;

fn main() -> ocogan::Result<()> {
    let mut cfg = RunConfig::tiny();
    cfg.train.total_steps = 20;
    let ds = Dataset::generate(&cfg.data)?;
    let (a, b) = (tempfile::tempdir().expect("temp dir"), tempfile::tempdir().expect("temp dir"));

    run(&cfg, &ds, a.path())?;
    let mid = a.path().join("ckpt/step_000010.bin");
    let state = load_checkpoint(&mid)?;
    println!("loaded step {} ({} bytes)", state.step, fs::metadata(&mid).map(|m| m.len()).unwrap_or(0));
    run_with(&cfg, &ds, b.path(), Some(&mid), &mut |_| {})?;

    let last = "ckpt/step_000020.bin";
    let same = fs::read(a.path().join(last)).ok() == fs::read(b.path().join(last)).ok();
    println!("resumed run identical: {same}");
    Ok(())
}
