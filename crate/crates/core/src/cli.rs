//! The `ocogan` command line: `gen-data`, `train`, `sample`, `eval` and
//! `ablate`.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numerical
//! abort, 4 I/O. Relative output paths are resolved against
//! `$OCOGAN_OUTPUT_ROOT` when it is set.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ocogan_autograd::{no_grad, Var};
use serde::{Deserialize, Serialize};

use crate::config::{Mode, Regime, RunConfig};
use crate::datagen::{one_hot_encode, read_label_png, Dataset};
use crate::error::{Error, IoContext, Result};
use crate::generator::{sample_latent_seeded, StyleNoise};
use crate::imaging::{label_images, save_grid, square_cols};
use crate::metrics::{evaluate, MetricsReport};
use crate::trainer::{load_checkpoint, run_with, TrainState};

pub const OUTPUT_ROOT_ENV: &str = "OCOGAN_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "ocogan", version, about = "Hybrid conditional/unconditional GAN on a synthetic shapes benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic shapes dataset.
    GenData(GenDataArgs),
    /// Train a model into a run directory.
    Train(TrainArgs),
    /// Write a sample grid from a checkpoint's EMA generator.
    Sample(SampleArgs),
    /// Compute FID, CFID and mIoU for a checkpoint.
    Eval(EvalArgs),
    /// Train every mode at an equal step budget and tabulate the metrics.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Run config; only the `[data]` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub val_count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Joint,
    CondOnly,
    UncondOnly,
    StageUncondThenCond,
    StageCondThenUncond,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Joint => Mode::Joint,
            ModeArg::CondOnly => Mode::CondOnly,
            ModeArg::UncondOnly => Mode::UncondOnly,
            ModeArg::StageUncondThenCond => Mode::StageUncondThenCond,
            ModeArg::StageCondThenUncond => Mode::StageCondThenUncond,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Full,
    Limited,
    Partial,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Regime {
        match r {
            RegimeArg::Full => Regime::Full,
            RegimeArg::Limited => Regime::Limited,
            RegimeArg::Partial => Regime::Partial,
        }
    }
}

/// Training flags that override the config file.
#[derive(Debug, Default, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    #[arg(long)]
    pub labeled_count: Option<usize>,
    #[arg(long)]
    pub bs_uncond: Option<usize>,
    #[arg(long)]
    pub bs_cond: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        if let Some(v) = self.steps {
            t.total_steps = v;
        }
        if let Some(v) = self.mode {
            t.mode = v.into();
        }
        if let Some(v) = self.regime {
            t.regime = v.into();
        }
        if let Some(v) = self.labeled_count {
            t.labeled_count = v;
        }
        if let Some(v) = self.bs_uncond {
            t.bs_uncond = v;
        }
        if let Some(v) = self.bs_cond {
            t.bs_cond = Some(v);
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// Print a progress line every this many steps (0 = silent).
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleMode {
    Cond,
    Uncond,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_enum)]
    pub mode: SampleMode,
    /// Label-map PNG (one channel, class index per pixel); required for `cond`.
    #[arg(long)]
    pub seg: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub sets: Option<usize>,
    #[arg(long)]
    pub samples_per_set: Option<usize>,
    /// Report path without extension; `.txt` and `.json` are written.
    /// Defaults to `eval_step_NNNNNN` next to the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub budget: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// `path`, prefixed with `$OCOGAN_OUTPUT_ROOT` when relative.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if path.is_relative() && !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => cmd_gen_data(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Sample(a) => cmd_sample(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|r| print!("{}", r.to_text())),
        Command::Ablate(a) => cmd_ablate(&a).map(|t| print!("{}", t.to_text())),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn dir_is_nonempty(dir: &Path) -> Result<bool> {
    if !dir.exists() {
        return Ok(false);
    }
    Ok(fs::read_dir(dir).at(dir)?.next().is_some())
}

/// Writes the dataset and returns its directory.
pub fn cmd_gen_data(a: &GenDataArgs) -> Result<PathBuf> {
    let mut cfg = load_config(a.config.as_deref())?.data;
    if let Some(v) = a.resolution {
        cfg.resolution = v;
    }
    if let Some(v) = a.num_classes {
        cfg.num_classes = v;
    }
    if let Some(v) = a.train_count {
        cfg.train_count = v;
    }
    if let Some(v) = a.val_count {
        cfg.val_count = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let out = output_path(&a.out);
    if dir_is_nonempty(&out)? {
        if !a.force {
            return Err(Error::config(format!("{} is not empty; pass --force to overwrite", out.display())));
        }
        for sub in ["train", "val"] {
            let d = out.join(sub);
            if d.exists() {
                fs::remove_dir_all(&d).at(&d)?;
            }
        }
    }
    Dataset::generate(&cfg)?.save(&out)?;
    eprintln!("wrote {} train and {} val samples to {}", cfg.train_count, cfg.val_count, out.display());
    Ok(out)
}

/// The run config for `data`: the file (or defaults) with flags applied;
/// without a file, the data section follows the dataset.
fn effective_config(config: Option<&Path>, overrides: &TrainOverrides, dataset: &Dataset) -> Result<RunConfig> {
    let mut cfg = load_config(config)?;
    if config.is_none() {
        cfg.data.resolution = dataset.resolution;
        cfg.data.num_classes = dataset.num_classes;
        cfg.data.train_count = dataset.train.len();
        cfg.data.val_count = dataset.val.len();
    }
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_train(a: &TrainArgs) -> Result<TrainState> {
    let dataset = Dataset::load(&a.data, None)?;
    let cfg = effective_config(a.config.as_deref(), &a.overrides, &dataset)?;
    let out = output_path(&a.out);
    let every = a.log_every;
    let mut progress = |m: &crate::trainer::StepMetrics| {
        if every > 0 && m.step % every == 0 {
            eprintln!(
                "step {:>6}  d {:.4}  g {:.4}  r1 {:.4}  {:.0} ms",
                m.step, m.d_total, m.g_total, m.r1, m.wall_ms
            );
        }
    };
    let artifacts = run_with(&cfg, &dataset, &out, a.resume.as_deref(), &mut progress)?;
    eprintln!("finished at step {} in {}", artifacts.state.step, out.display());
    Ok(artifacts.state)
}

/// Writes the grid (and, for `cond`, the map beside it); returns the paths.
pub fn cmd_sample(a: &SampleArgs) -> Result<Vec<PathBuf>> {
    if a.n == 0 {
        return Err(Error::config("--n must be at least 1"));
    }
    let seg_path = match (a.mode, &a.seg) {
        (SampleMode::Cond, None) => return Err(Error::config("--mode cond requires --seg")),
        (_, s) => s.clone(),
    };
    let state = load_checkpoint(&a.ckpt)?;
    let g = &state.ema;
    let out = output_path(&a.out);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let mut written = vec![out.clone()];
    let images = match a.mode {
        SampleMode::Uncond => {
            let z = sample_latent_seeded(a.seed, a.n, g.model.z_dim)?;
            no_grad(|| g.generate_uncond(&Var::constant(z), &mut StyleNoise::Eval))?
        }
        SampleMode::Cond => {
            let path = seg_path.expect("checked above");
            let res = g.resolution;
            let labels = read_label_png(&path, res)?;
            let map = one_hot_encode(&labels, res, res, g.num_classes)
                .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
            let one = map.onehot.data().to_vec();
            let seg = ocogan_autograd::Tensor::new(
                &[a.n, g.num_classes, res, res],
                (0..a.n).flat_map(|_| one.iter().copied()).collect(),
            );
            let z64 = sample_latent_seeded(a.seed, a.n, g.model.noise_dim)?;
            let map_path = out.with_file_name(format!(
                "{}_map.png",
                out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            ));
            save_grid(&map_path, &label_images(&[&labels], res, res), 1)?;
            written.push(map_path);
            no_grad(|| g.generate_cond(&Var::constant(z64), &Var::constant(seg), &mut StyleNoise::Eval))?
        }
    };
    save_grid(&out, images.value(), square_cols(a.n))?;
    Ok(written)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<MetricsReport> {
    let state = load_checkpoint(&a.ckpt)?;
    let dataset = Dataset::load(&a.data, Some(state.config.data.resolution))?;
    if dataset.num_classes != state.config.data.num_classes {
        return Err(Error::data(format!(
            "dataset has {} classes, checkpoint expects {}",
            dataset.num_classes, state.config.data.num_classes
        )));
    }
    let mut eval = state.config.eval.clone();
    if let Some(s) = a.sets {
        eval.sets = s;
    }
    if let Some(n) = a.samples_per_set {
        eval.samples_per_set = Some(n);
    }
    let report = evaluate(&state.ema, &dataset, &eval, state.step)?;
    let stem = match &a.out {
        Some(p) => output_path(p),
        None => a
            .ckpt
            .parent()
            .and_then(Path::parent)
            .unwrap_or(Path::new("."))
            .join(format!("eval_step_{:06}", state.step)),
    };
    let (txt, _) = report.save(&stem)?;
    eprintln!("wrote {}", txt.display());
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: Mode,
    pub fid: f64,
    pub cfid: f64,
    pub miou: f64,
}

/// One row per training mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub budget: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "budget = {} steps", self.budget);
        let _ = writeln!(s, "{:<24} {:>10} {:>10} {:>8}", "mode", "FID", "CFID", "mIoU");
        for r in &self.rows {
            let _ = writeln!(s, "{:<24} {:>10.3} {:>10.3} {:>8.4}", r.mode.name(), r.fid, r.cfid, r.miou);
        }
        s
    }
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<AblationTable> {
    let dataset = Dataset::load(&a.data, None)?;
    let mut base = effective_config(a.config.as_deref(), &a.overrides, &dataset)?;
    base.train.total_steps = a.budget;
    let out = output_path(&a.out);
    fs::create_dir_all(&out).at(&out)?;
    let mut rows = Vec::new();
    for mode in Mode::ALL {
        let mut cfg = base.clone();
        cfg.train.mode = mode;
        let run_dir = out.join(mode.name());
        eprintln!("ablation: {} for {} steps", mode.name(), a.budget);
        let artifacts = run_with(&cfg, &dataset, &run_dir, None, &mut |_| {})?;
        let report = evaluate(&artifacts.state.ema, &dataset, &cfg.eval, artifacts.state.step)?;
        report.save(&run_dir.join("eval"))?;
        rows.push(AblationRow { mode, fid: report.fid.mean, cfid: report.cfid.mean, miou: report.miou.mean });
    }
    let table = AblationTable { budget: a.budget, rows };
    let txt = out.join("ablation.txt");
    fs::write(&txt, table.to_text()).at(&txt)?;
    let json = out.join("ablation.json");
    fs::write(&json, serde_json::to_string_pretty(&table).expect("table serializes")).at(&json)?;
    Ok(table)
}
