//! Mixed-batch adversarial training: one discriminator and one generator
//! update per step, lazy R1, generator EMA, checkpoints and run directories.

mod checkpoint;
mod log;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, load_checkpoint_as, save_checkpoint, Sections, MAGIC, VERSION};
pub use log::{parse_log, StepMetrics};

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ocogan_autograd::{backward, no_grad, Adam, Element, Gradients, ParamKind, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Mode, RunConfig, TrainConfig};
use crate::datagen::{horizontal_flip, make_split, one_hot_batch, sample_seed, Dataset, DatasetSplit, LabeledSample};
use crate::discriminator::Discriminator;
use crate::error::{Error, IoContext, Result};
use crate::generator::{sample_latent, sample_latent_seeded, Generator, StyleNoise};
use crate::imaging::{label_images, save_grid, square_cols};
use crate::losses::{
    class_weights, labelmix_consistency, labelmix_images, labelmix_mask, loss_d_cond, loss_d_uncond, loss_g_cond,
    loss_g_uncond, r1_penalty,
};

pub const GEN_GROUPS: [&str; 3] = ["style_u", "style_c", "synth"];
pub const DISC_GROUPS: [&str; 4] = ["enc", "head_u", "aspp", "dec"];

/// Images with their one-hot maps, `(N, 3, H, W)` and `(N, C, H, W)`.
#[derive(Clone, Debug)]
pub struct LabeledBatch {
    pub images: Tensor<f32>,
    pub seg: Tensor<f32>,
}

impl LabeledBatch {
    pub fn from_samples(samples: &[LabeledSample], num_classes: usize) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::data("empty labeled batch"))?;
        let maps: Vec<&[u8]> = samples.iter().map(|s| s.labels.as_slice()).collect();
        Ok(LabeledBatch {
            images: stack_images(samples)?,
            seg: one_hot_batch(&maps, first.height, first.width, num_classes)?,
        })
    }
}

/// `(N, 3, H, W)` from samples of equal size.
pub fn stack_images(samples: &[LabeledSample]) -> Result<Tensor<f32>> {
    let first = samples.first().ok_or_else(|| Error::data("empty image batch"))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(samples.len() * 3 * h * w);
    for s in samples {
        if (s.height, s.width) != (h, w) {
            return Err(Error::data(format!("mixed sample sizes {h}x{w} and {}x{}", s.height, s.width)));
        }
        data.extend_from_slice(&s.image);
    }
    Ok(Tensor::new(&[samples.len(), 3, h, w], data))
}

/// Which branches run and which parameter groups each optimizer may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Phase {
    pub uncond: bool,
    pub cond: bool,
    pub gen_groups: &'static [&'static str],
    pub disc_groups: &'static [&'static str],
}

const JOINT: Phase = Phase { uncond: true, cond: true, gen_groups: &GEN_GROUPS, disc_groups: &DISC_GROUPS };
const COND_ONLY: Phase = Phase {
    uncond: false,
    cond: true,
    gen_groups: &["style_c", "synth"],
    disc_groups: &["enc", "aspp", "dec"],
};
const UNCOND_ONLY: Phase = Phase {
    uncond: true,
    cond: false,
    gen_groups: &["style_u", "synth"],
    disc_groups: &["enc", "head_u"],
};
const COND_AFTER_UNCOND: Phase = Phase {
    uncond: false,
    cond: true,
    gen_groups: &["style_c"],
    disc_groups: &["aspp", "dec"],
};
const UNCOND_AFTER_COND: Phase = Phase {
    uncond: true,
    cond: false,
    gen_groups: &["style_u"],
    disc_groups: &["head_u"],
};

fn in_groups(groups: &[&str], name: &str) -> bool {
    groups.iter().any(|g| name.strip_prefix(g).is_some_and(|rest| rest.starts_with('.')))
}

impl Phase {
    /// The schedule of `mode` at step `step` (1-based) of `total_steps`.
    /// Stage-wise modes switch after `total_steps / 2` steps.
    pub fn at(mode: Mode, step: u64, total_steps: u64) -> Phase {
        let first_half = step <= total_steps / 2;
        match mode {
            Mode::Joint => JOINT,
            Mode::CondOnly => COND_ONLY,
            Mode::UncondOnly => UNCOND_ONLY,
            Mode::StageUncondThenCond if first_half => UNCOND_ONLY,
            Mode::StageUncondThenCond => COND_AFTER_UNCOND,
            Mode::StageCondThenUncond if first_half => COND_ONLY,
            Mode::StageCondThenUncond => UNCOND_AFTER_COND,
        }
    }

    pub fn trains_gen(&self, name: &str) -> bool {
        in_groups(self.gen_groups, name)
    }

    pub fn trains_disc(&self, name: &str) -> bool {
        in_groups(self.disc_groups, name)
    }
}

fn derived_seed(seed: u64, k: u64) -> u64 {
    sample_seed(seed, 0x7EED, k)
}

/// Everything a checkpoint holds.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: RunConfig,
    pub gen: Generator<f32>,
    /// Exponential moving average of `gen`; never optimized.
    pub ema: Generator<f32>,
    pub disc: Discriminator<f32>,
    pub opt_g: Adam<f32>,
    pub opt_d: Adam<f32>,
    /// Completed steps.
    pub step: u64,
    pub r1_applications: u64,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let (res, c) = (config.data.resolution, config.data.num_classes);
        let t = &config.train;
        let gen = Generator::new(&config.model, res, c, t.gumbel_tau, derived_seed(t.seed, 1))?;
        let disc = Discriminator::new(&config.model, res, c, derived_seed(t.seed, 2))?;
        let opt = || Adam::new(t.lr, t.adam_b1, t.adam_b2, t.adam_eps);
        Ok(TrainState {
            ema: gen.clone(),
            gen,
            disc,
            opt_g: opt(),
            opt_d: opt(),
            step: 0,
            r1_applications: 0,
            rng: ChaCha8Rng::seed_from_u64(derived_seed(t.seed, 3)),
            config,
        })
    }

    pub fn phase(&self, step: u64) -> Phase {
        Phase::at(self.config.train.mode, step, self.config.train.total_steps)
    }

    /// Whether the lazy R1 term is added on step `step`.
    pub fn r1_due(&self, step: u64) -> bool {
        let t = &self.config.train;
        self.phase(step).uncond && t.r1_gamma > 0.0 && step % t.r1_interval == 0
    }
}

/// `ema = decay * ema + (1 - decay) * live` for every trainable entry;
/// buffers are copied.
pub fn ema_update<T: Element>(live: &ParamStore<T>, ema: &mut ParamStore<T>, decay: f64) -> Result<()> {
    let d = T::from_f64_lossy(decay);
    let one_minus = T::from_f64_lossy(1.0 - decay);
    let ids: Vec<_> = live.ids().collect();
    for id in ids {
        let name = live.name(id);
        let target = ema.find(name).ok_or_else(|| Error::internal(format!("EMA has no entry `{name}`")))?;
        let (lv, ev) = (live.value(id), ema.value(target));
        if lv.shape() != ev.shape() {
            return Err(Error::ShapeMismatch { name: name.to_string(), expected: ev.shape().to_vec(), found: lv.shape().to_vec() });
        }
        let next = match live.kind(id) {
            ParamKind::Trainable => ev.zip_with(lv, |e, l| d * e + one_minus * l),
            ParamKind::Buffer => lv.clone(),
        };
        ema.set(target, next);
    }
    Ok(())
}

/// Decay used on step `step`.
pub fn ema_decay_at(train: &TrainConfig, step: u64) -> f64 {
    if train.ema_warmup {
        train.ema_decay.min((1.0 + step as f64) / (10.0 + step as f64))
    } else {
        train.ema_decay
    }
}

fn grad_norm(store: &ParamStore<f32>, grads: &Gradients<f32>, active: impl Fn(&str) -> bool) -> f64 {
    let mut sq = 0.0f64;
    for id in store.trainable_ids() {
        if !active(store.name(id)) {
            continue;
        }
        if let Some(g) = grads.get(store.var(id)) {
            sq += g.value().data().iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>();
        }
    }
    sq.sqrt()
}

fn generate_uncond(gen: &Generator<f32>, n: usize, rng: &mut ChaCha8Rng) -> Result<Var<f32>> {
    let z = Var::constant(sample_latent(rng, n, gen.model.z_dim)?);
    gen.generate_uncond(&z, &mut StyleNoise::Train(rng))
}

fn generate_cond(gen: &Generator<f32>, seg: &Tensor<f32>, rng: &mut ChaCha8Rng) -> Result<Var<f32>> {
    let z64 = Var::constant(sample_latent(rng, seg.dim(0), gen.model.noise_dim)?);
    gen.generate_cond(&z64, &Var::constant(seg.clone()), &mut StyleNoise::Train(rng))
}

/// Unweighted generator losses of each active branch.
#[derive(Clone, Debug)]
pub struct GenLosses {
    pub uncond: Option<Var<f32>>,
    pub cond: Option<Var<f32>>,
}

/// Generator objectives against a discriminator whose parameters are held
/// constant, so the graph reaches only generator parameters.
pub fn generator_losses(
    gen: &Generator<f32>,
    disc: &Discriminator<f32>,
    n_uncond: Option<usize>,
    seg: Option<&Tensor<f32>>,
    rng: &mut ChaCha8Rng,
) -> Result<GenLosses> {
    let fake_u = n_uncond.map(|n| generate_uncond(gen, n, rng)).transpose()?;
    let fake_c = seg.map(|s| generate_cond(gen, s, rng)).transpose()?;
    generator_losses_on(disc, fake_u.as_ref(), fake_c.as_ref().zip(seg))
}

/// [`generator_losses`] on images already generated; `cond` pairs the fakes
/// with the maps they were conditioned on.
pub fn generator_losses_on(
    disc: &Discriminator<f32>,
    uncond: Option<&Var<f32>>,
    cond: Option<(&Var<f32>, &Tensor<f32>)>,
) -> Result<GenLosses> {
    let frozen = disc.frozen();
    let uncond = match uncond {
        Some(fake) => Some(loss_g_uncond(&frozen.image_logit(fake)?)),
        None => None,
    };
    let cond = match cond {
        Some((fake, seg)) => Some(loss_g_cond(&frozen.pixel_logits(fake)?, seg, &class_weights(seg))),
        None => None,
    };
    Ok(GenLosses { uncond, cond })
}

fn accumulate(total: &mut Option<Var<f32>>, term: Var<f32>) {
    *total = Some(match total.take() {
        Some(t) => t.add(&term),
        None => term,
    });
}

fn check_batches(
    phase: Phase,
    train: &TrainConfig,
    labeled: Option<&LabeledBatch>,
    unlabeled: Option<&Tensor<f32>>,
) -> Result<()> {
    if phase.uncond {
        let x = unlabeled.ok_or_else(|| Error::data("this step trains the unconditional branch but got no unlabeled batch"))?;
        if x.dim(0) != train.bs_uncond {
            return Err(Error::data(format!("unlabeled batch has {} images, expected {}", x.dim(0), train.bs_uncond)));
        }
    }
    if phase.cond {
        let b = labeled.ok_or_else(|| Error::data("this step trains the conditional branch but got no labeled batch"))?;
        if b.images.dim(0) != train.bs_cond() || b.seg.dim(0) != train.bs_cond() {
            return Err(Error::data(format!(
                "labeled batch has {} images and {} maps, expected {}",
                b.images.dim(0),
                b.seg.dim(0),
                train.bs_cond()
            )));
        }
    }
    Ok(())
}

/// One discriminator update, one generator update and one EMA update.
///
/// Batches for a branch the current phase does not train are ignored.
pub fn train_step(state: &mut TrainState, labeled: Option<&LabeledBatch>, unlabeled: Option<&Tensor<f32>>) -> Result<StepMetrics> {
    let start = Instant::now();
    let k = state.step + 1;
    let phase = state.phase(k);
    let r1_due = state.r1_due(k);
    let train = state.config.train.clone();
    check_batches(phase, &train, labeled, unlabeled)?;
    let real_u = if phase.uncond { unlabeled } else { None };
    let lab = if phase.cond { labeled } else { None };
    let w_u = train.uncond_loss_weight;
    let TrainState { gen, ema, disc, opt_g, opt_d, rng, .. } = state;
    let mut m = StepMetrics { step: k, uncond_weight: w_u, r1_applied: r1_due, ..StepMetrics::default() };

    if phase.disc_groups.contains(&"dec") {
        disc.power_iterate(1);
    }
    // Fakes keep their generator graph; the discriminator sees detached copies.
    let gen_u = real_u.map(|x| generate_uncond(gen, x.dim(0), rng)).transpose()?;
    let gen_c = lab.map(|b| generate_cond(gen, &b.seg, rng)).transpose()?;
    let fake_u = gen_u.as_ref().map(Var::detach);
    let fake_c = gen_c.as_ref().map(Var::detach);

    let mut d_loss = None;
    if let (Some(x), Some(f)) = (real_u, &fake_u) {
        let l = loss_d_uncond(&disc.image_logit(&Var::constant(x.clone()))?, &disc.image_logit(f)?);
        m.d_uncond = l.item() as f64;
        accumulate(&mut d_loss, l.mul_scalar(w_u as f32));
    }
    if let (Some(b), Some(f)) = (lab, &fake_c) {
        let alpha = class_weights(&b.seg);
        let logits_real = disc.pixel_logits(&Var::constant(b.images.clone()))?;
        let logits_fake = disc.pixel_logits(f)?;
        let l = loss_d_cond(&logits_real, &b.seg, &logits_fake, &alpha);
        m.d_cond = l.item() as f64;
        accumulate(&mut d_loss, l);
        if train.lambda_labelmix > 0.0 {
            let mask = labelmix_mask(&b.seg, rng);
            let mix = labelmix_images(&b.images, f.value(), &mask);
            let logits_mix = disc.pixel_logits(&Var::constant(mix))?;
            let l = labelmix_consistency(&logits_mix, &logits_real, &logits_fake, &mask);
            m.labelmix = l.item() as f64;
            accumulate(&mut d_loss, l.mul_scalar(train.lambda_labelmix as f32));
        }
    }
    if r1_due {
        let x = real_u.expect("R1 is only due when the unconditional branch runs");
        let l = r1_penalty(x, train.r1_gamma, |x| disc.image_logit(x))?.mul_scalar(train.r1_interval as f32);
        m.r1 = l.item() as f64;
        accumulate(&mut d_loss, l);
    }
    m.d_total = w_u * m.d_uncond + m.d_cond + train.lambda_labelmix * m.labelmix + m.r1;
    let d_loss = d_loss.ok_or_else(|| Error::internal("no discriminator loss in this phase"))?;
    let d_grads = backward(&d_loss, false);
    m.d_grad_norm = grad_norm(&disc.store, &d_grads, |n| phase.trains_disc(n));
    if !(m.d_total.is_finite() && (d_loss.item() as f64).is_finite() && m.d_grad_norm.is_finite()) {
        return Err(Error::Numerical { step: k, detail: m.diagnostic("discriminator") });
    }
    opt_d.step(&mut disc.store, &d_grads, |_, name| phase.trains_disc(name));
    drop(d_grads);

    let g = generator_losses_on(disc, gen_u.as_ref(), gen_c.as_ref().zip(lab.map(|b| &b.seg)))?;
    let mut g_loss = None;
    if let Some(l) = g.uncond {
        m.g_uncond = l.item() as f64;
        accumulate(&mut g_loss, l.mul_scalar(w_u as f32));
    }
    if let Some(l) = g.cond {
        m.g_cond = l.item() as f64;
        accumulate(&mut g_loss, l);
    }
    m.g_total = w_u * m.g_uncond + m.g_cond;
    let g_loss = g_loss.ok_or_else(|| Error::internal("no generator loss in this phase"))?;
    let g_grads = backward(&g_loss, false);
    m.g_grad_norm = grad_norm(&gen.store, &g_grads, |n| phase.trains_gen(n));
    if !(m.g_total.is_finite() && (g_loss.item() as f64).is_finite() && m.g_grad_norm.is_finite()) {
        return Err(Error::Numerical { step: k, detail: m.diagnostic("generator") });
    }
    opt_g.step(&mut gen.store, &g_grads, |_, name| phase.trains_gen(name));

    ema_update(&gen.store, &mut ema.store, ema_decay_at(&train, k))?;
    state.step = k;
    if r1_due {
        state.r1_applications += 1;
    }
    m.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(m)
}

/// Draws training batches with replacement from the split's pools.
#[derive(Clone, Debug)]
pub struct BatchSampler<'a> {
    dataset: &'a Dataset,
    pub uncond_pool: Vec<usize>,
    pub cond_pool: Vec<usize>,
}

impl<'a> BatchSampler<'a> {
    /// Unconditional batches come from every training image, conditional
    /// batches from the labeled ones.
    pub fn new(dataset: &'a Dataset, split: &DatasetSplit) -> Self {
        BatchSampler { dataset, uncond_pool: split.all_images(), cond_pool: split.labeled.clone() }
    }

    fn pick<R: Rng>(&self, pool: &[usize], n: usize, flip_prob: f64, rng: &mut R) -> Result<Vec<LabeledSample>> {
        if pool.is_empty() {
            return Err(Error::data("cannot draw a batch from an empty pool"));
        }
        Ok((0..n)
            .map(|_| {
                let s = &self.dataset.train[pool[rng.gen_range(0..pool.len())]];
                horizontal_flip(s, flip_prob, rng)
            })
            .collect())
    }

    /// Batches for `phase`, in a fixed order: unconditional first.
    pub fn draw<R: Rng>(
        &self,
        train: &TrainConfig,
        phase: Phase,
        rng: &mut R,
    ) -> Result<(Option<LabeledBatch>, Option<Tensor<f32>>)> {
        let unlabeled = if phase.uncond {
            Some(stack_images(&self.pick(&self.uncond_pool, train.bs_uncond, train.flip_prob, rng)?)?)
        } else {
            None
        };
        let labeled = if phase.cond {
            let samples = self.pick(&self.cond_pool, train.bs_cond(), train.flip_prob, rng)?;
            Some(LabeledBatch::from_samples(&samples, self.dataset.num_classes)?)
        } else {
            None
        };
        Ok((labeled, unlabeled))
    }
}

/// Draws the step's batches from `state.rng` and trains on them.
pub fn sample_and_step(state: &mut TrainState, sampler: &BatchSampler<'_>) -> Result<StepMetrics> {
    let phase = state.phase(state.step + 1);
    let train = state.config.train.clone();
    let (labeled, unlabeled) = sampler.draw(&train, phase, &mut state.rng)?;
    train_step(state, labeled.as_ref(), unlabeled.as_ref())
}

/// Paths written by [`run`].
#[derive(Debug)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub config_snapshot: PathBuf,
    pub metrics_log: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub sample_grids: Vec<PathBuf>,
    /// Metrics of the steps executed by this call.
    pub history: Vec<StepMetrics>,
    pub state: TrainState,
}

pub fn checkpoint_path(run_dir: &Path, step: u64) -> PathBuf {
    run_dir.join("ckpt").join(format!("step_{step:06}.bin"))
}

pub fn sample_grid_path(run_dir: &Path, step: u64, kind: &str) -> PathBuf {
    run_dir.join("samples").join(format!("step_{step:06}_{kind}.png"))
}

/// Exclusive ownership of a run directory, released on drop.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::config(format!(
                "run directory {} is in use (remove {} if no run is active)",
                run_dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn check_dataset(config: &RunConfig, dataset: &Dataset) -> Result<()> {
    if dataset.resolution != config.data.resolution || dataset.num_classes != config.data.num_classes {
        return Err(Error::data(format!(
            "dataset is {}x{} with {} classes but the config expects {}x{} with {}",
            dataset.resolution,
            dataset.resolution,
            dataset.num_classes,
            config.data.resolution,
            config.data.resolution,
            config.data.num_classes
        )));
    }
    if dataset.train.is_empty() {
        return Err(Error::data("the dataset has no training samples"));
    }
    for (i, s) in dataset.train.iter().enumerate() {
        s.check_labels(dataset.num_classes).map_err(|e| Error::data(format!("training sample {i}: {e}")))?;
    }
    Ok(())
}

/// Fixed inputs for the periodic sample grids.
struct GridInputs {
    z: Tensor<f32>,
    z64: Tensor<f32>,
    seg: Tensor<f32>,
    maps: Tensor<f32>,
}

impl GridInputs {
    fn new(config: &RunConfig, dataset: &Dataset) -> Result<Self> {
        let pool = if dataset.val.is_empty() { &dataset.train } else { &dataset.val };
        let n = config.train.sample_count.max(1).min(pool.len());
        let labels: Vec<&[u8]> = pool[..n].iter().map(|s| s.labels.as_slice()).collect();
        let seed = derived_seed(config.train.seed, 4);
        Ok(GridInputs {
            z: sample_latent_seeded(seed, config.train.sample_count.max(1), config.model.z_dim)?,
            z64: sample_latent_seeded(seed ^ 1, n, config.model.noise_dim)?,
            seg: one_hot_batch(&labels, dataset.resolution, dataset.resolution, dataset.num_classes)?,
            maps: label_images(&labels, dataset.resolution, dataset.resolution),
        })
    }

    fn write(&self, ema: &Generator<f32>, run_dir: &Path, step: u64, out: &mut Vec<PathBuf>) -> Result<()> {
        let (uncond, cond) = no_grad(|| -> Result<_> {
            let u = ema.generate_uncond(&Var::constant(self.z.clone()), &mut StyleNoise::Eval)?;
            let c = ema.generate_cond(&Var::constant(self.z64.clone()), &Var::constant(self.seg.clone()), &mut StyleNoise::Eval)?;
            Ok((u.value().clone(), c.value().clone()))
        })?;
        for (kind, images) in [("uncond", &uncond), ("cond", &cond)] {
            let path = sample_grid_path(run_dir, step, kind);
            save_grid(&path, images, square_cols(images.dim(0)))?;
            out.push(path);
        }
        Ok(())
    }
}

/// Keeps the log lines of steps up to `step` and returns an append handle.
fn open_log(path: &Path, resume_step: Option<u64>) -> Result<File> {
    match resume_step {
        None => File::create(path).at(path),
        Some(step) => {
            let text = fs::read_to_string(path).unwrap_or_default();
            let kept: String = text
                .lines()
                .filter(|l| log::line_step(l).is_some_and(|s| s <= step))
                .map(|l| format!("{l}\n"))
                .collect();
            fs::write(path, kept).at(path)?;
            OpenOptions::new().append(true).open(path).at(path)
        }
    }
}

/// Trains from scratch into `run_dir`.
pub fn run(config: &RunConfig, dataset: &Dataset, run_dir: &Path) -> Result<RunArtifacts> {
    run_with(config, dataset, run_dir, None, &mut |_| {})
}

/// Trains into `run_dir`, optionally resuming from a checkpoint, calling
/// `on_step` after every step.
pub fn run_with(
    config: &RunConfig,
    dataset: &Dataset,
    run_dir: &Path,
    resume: Option<&Path>,
    on_step: &mut dyn FnMut(&StepMetrics),
) -> Result<RunArtifacts> {
    config.validate()?;
    check_dataset(config, dataset)?;
    let train = &config.train;
    let split = make_split(dataset.train.len(), train.regime, train.labeled_count, train.seed)?;
    if train.mode.uses_cond() && split.labeled.is_empty() {
        return Err(Error::config(format!("mode {} needs labeled samples but the split has none", train.mode.name())));
    }
    let sampler = BatchSampler::new(dataset, &split);
    fs::create_dir_all(run_dir).at(run_dir)?;
    let _lock = RunLock::acquire(run_dir)?;
    for sub in ["ckpt", "samples"] {
        let d = run_dir.join(sub);
        fs::create_dir_all(&d).at(&d)?;
    }
    let config_snapshot = run_dir.join("config.snapshot");
    fs::write(&config_snapshot, config.to_toml_string()).at(&config_snapshot)?;

    let mut state = match resume {
        Some(path) => {
            let mut s = load_checkpoint_as(path, config)?;
            s.config = config.clone();
            s
        }
        None => TrainState::new(config.clone())?,
    };
    let metrics_log = run_dir.join("metrics.log");
    let mut log = open_log(&metrics_log, resume.map(|_| state.step))?;
    let grids = GridInputs::new(config, dataset)?;
    let mut artifacts_ckpt = Vec::new();
    let mut artifacts_grids = Vec::new();

    if resume.is_none() {
        let init = log::init_line(&state);
        writeln!(log, "{init}").at(&metrics_log)?;
        let path = checkpoint_path(run_dir, 0);
        save_checkpoint(&state, &path)?;
        artifacts_ckpt.push(path);
        grids.write(&state.ema, run_dir, 0, &mut artifacts_grids)?;
    }

    let mut history = Vec::new();
    while state.step < train.total_steps {
        let m = match sample_and_step(&mut state, &sampler) {
            Ok(m) => m,
            Err(e) => {
                if let Error::Numerical { step, detail } = &e {
                    let _ = writeln!(log, "step={step} event=abort {detail}");
                }
                return Err(e);
            }
        };
        writeln!(log, "{}", m.to_log_line()).at(&metrics_log)?;
        on_step(&m);
        let k = m.step;
        history.push(m);
        let last = k == train.total_steps;
        if k % train.checkpoint_interval == 0 || last {
            let path = checkpoint_path(run_dir, k);
            save_checkpoint(&state, &path)?;
            artifacts_ckpt.push(path);
        }
        if k % train.eval_interval == 0 || last {
            grids.write(&state.ema, run_dir, k, &mut artifacts_grids)?;
        }
    }
    log.flush().at(&metrics_log)?;
    let maps = run_dir.join("samples").join("cond_maps.png");
    save_grid(&maps, &grids.maps, square_cols(grids.maps.dim(0)))?;
    Ok(RunArtifacts {
        run_dir: run_dir.to_path_buf(),
        config_snapshot,
        metrics_log,
        checkpoints: artifacts_ckpt,
        sample_grids: artifacts_grids,
        history,
        state,
    })
}

/// Generator parameter fingerprint restricted to `groups`.
pub fn gen_fingerprint(state: &TrainState, groups: &[&str]) -> u64 {
    state.gen.store.fingerprint(|n| in_groups(groups, n))
}

/// Discriminator parameter fingerprint restricted to `groups`.
pub fn disc_fingerprint(state: &TrainState, groups: &[&str]) -> u64 {
    state.disc.store.fingerprint(|n| in_groups(groups, n))
}
