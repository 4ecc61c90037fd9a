//! Run configuration: the `[data]`, `[model]`, `[train]` and `[eval]` tables
//! of a TOML file. Every field has a default, unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapesConfig {
    pub resolution: usize,
    pub num_classes: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Standard deviation of per-pixel noise, in 8-bit intensity units.
    pub pixel_noise: f64,
    /// Half-width of the per-shape uniform color offset, in 8-bit units.
    pub color_jitter: f64,
    pub seed: u64,
}

impl Default for ShapesConfig {
    fn default() -> Self {
        ShapesConfig {
            resolution: 32,
            num_classes: 4,
            train_count: 2000,
            val_count: 256,
            min_shapes: 1,
            max_shapes: 3,
            pixel_noise: 6.0,
            color_jitter: 12.0,
            seed: 0,
        }
    }
}

impl ShapesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution != 32 && self.resolution != 64 {
            return Err(Error::config(format!("data.resolution must be 32 or 64, got {}", self.resolution)));
        }
        if self.num_classes < 2 {
            return Err(Error::config(format!("data.num_classes must be >= 2, got {}", self.num_classes)));
        }
        if self.num_classes > crate::datagen::PALETTE.len() {
            return Err(Error::config(format!(
                "data.num_classes must be <= {}, got {}",
                crate::datagen::PALETTE.len(),
                self.num_classes
            )));
        }
        if self.min_shapes > self.max_shapes {
            return Err(Error::config("data.min_shapes exceeds data.max_shapes"));
        }
        if !(self.pixel_noise >= 0.0 && self.color_jitter >= 0.0) {
            return Err(Error::config("data.pixel_noise and data.color_jitter must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsample {
    /// Nearest-neighbour doubling followed by the next 3x3 convolution.
    Nearest,
    /// Learned 4x4 stride-2 transposed convolution.
    Transposed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub z_dim: usize,
    pub noise_dim: usize,
    pub style_channels: usize,
    pub mapping_hidden: usize,
    pub mapping_layers: usize,
    /// Synthesis widths, coarsest level first. One level per entry.
    pub gen_channels: Vec<usize>,
    pub upsample: Upsample,
    /// Encoder widths, one downsampling stage per entry.
    pub disc_channels: Vec<usize>,
    pub aspp_rates: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            z_dim: 64,
            noise_dim: 64,
            style_channels: 32,
            mapping_hidden: 256,
            mapping_layers: 2,
            gen_channels: vec![128, 64, 32],
            upsample: Upsample::Nearest,
            disc_channels: vec![32, 64, 128],
            aspp_rates: vec![1, 2, 4],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, resolution: usize) -> Result<()> {
        let nonzero = [
            ("model.z_dim", self.z_dim),
            ("model.noise_dim", self.noise_dim),
            ("model.style_channels", self.style_channels),
            ("model.mapping_hidden", self.mapping_hidden),
            ("model.mapping_layers", self.mapping_layers),
        ];
        for (key, v) in nonzero {
            if v == 0 {
                return Err(Error::config(format!("{key} must be positive")));
            }
        }
        self.validate_generator(resolution)?;
        self.validate_discriminator(resolution)
    }

    pub fn validate_generator(&self, resolution: usize) -> Result<()> {
        if self.gen_channels.is_empty() || self.gen_channels.contains(&0) {
            return Err(Error::config("model.gen_channels must be a nonempty list of positive widths"));
        }
        let levels = self.gen_channels.len();
        if levels >= usize::BITS as usize || resolution % (1 << (levels - 1)) != 0 || resolution == 0 {
            return Err(Error::config(format!("resolution {resolution} is not divisible by 2^{}", levels - 1)));
        }
        Ok(())
    }

    pub fn validate_discriminator(&self, resolution: usize) -> Result<()> {
        if self.disc_channels.is_empty() || self.disc_channels.contains(&0) {
            return Err(Error::config("model.disc_channels must be a nonempty list of positive widths"));
        }
        let stages = self.disc_channels.len();
        if stages >= usize::BITS as usize || resolution % (1 << stages) != 0 {
            return Err(Error::config(format!("resolution {resolution} cannot be halved {stages} times")));
        }
        let bottleneck = resolution >> stages;
        if self.aspp_rates.is_empty() {
            return Err(Error::config("model.aspp_rates must not be empty"));
        }
        for &r in &self.aspp_rates {
            if r == 0 || r > bottleneck {
                return Err(Error::config(format!(
                    "model.aspp_rates entry {r} is invalid for a {bottleneck}x{bottleneck} bottleneck"
                )));
            }
        }
        Ok(())
    }

    pub fn base_resolution(&self, resolution: usize) -> usize {
        resolution >> (self.gen_channels.len() - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Joint,
    CondOnly,
    UncondOnly,
    StageUncondThenCond,
    StageCondThenUncond,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Joint,
        Mode::CondOnly,
        Mode::UncondOnly,
        Mode::StageUncondThenCond,
        Mode::StageCondThenUncond,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Joint => "joint",
            Mode::CondOnly => "cond_only",
            Mode::UncondOnly => "uncond_only",
            Mode::StageUncondThenCond => "stage_uncond_then_cond",
            Mode::StageCondThenUncond => "stage_cond_then_uncond",
        }
    }

    pub fn uses_cond(self) -> bool {
        self != Mode::UncondOnly
    }

    pub fn uses_uncond(self) -> bool {
        self != Mode::CondOnly
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Full,
    Limited,
    Partial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub bs_uncond: usize,
    /// Defaults to 16, or 4 in the `partial` regime.
    pub bs_cond: Option<usize>,
    pub lr: f64,
    pub adam_b1: f64,
    pub adam_b2: f64,
    pub adam_eps: f64,
    pub r1_gamma: f64,
    pub r1_interval: u64,
    pub ema_decay: f64,
    /// Caps the decay at `(1 + k) / (10 + k)` on step `k`.
    pub ema_warmup: bool,
    pub uncond_loss_weight: f64,
    pub lambda_labelmix: f64,
    pub gumbel_tau: f64,
    pub flip_prob: f64,
    pub mode: Mode,
    pub seed: u64,
    pub regime: Regime,
    pub labeled_count: usize,
    pub checkpoint_interval: u64,
    pub eval_interval: u64,
    /// Images per sample grid written at each evaluation interval.
    pub sample_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 3000,
            bs_uncond: 32,
            bs_cond: None,
            lr: 0.002,
            adam_b1: 0.0,
            adam_b2: 0.99,
            adam_eps: 1e-8,
            r1_gamma: 10.0,
            r1_interval: 16,
            ema_decay: 0.999,
            ema_warmup: true,
            uncond_loss_weight: 1.0,
            lambda_labelmix: 10.0,
            gumbel_tau: 1.0,
            flip_prob: 0.5,
            mode: Mode::Joint,
            seed: 0,
            regime: Regime::Full,
            labeled_count: 200,
            checkpoint_interval: 1000,
            eval_interval: 500,
            sample_count: 16,
        }
    }
}

impl TrainConfig {
    pub fn bs_cond(&self) -> usize {
        self.bs_cond.unwrap_or(if self.regime == Regime::Partial { 4 } else { 16 })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("train.lr", self.lr),
            ("train.adam_eps", self.adam_eps),
            ("train.gumbel_tau", self.gumbel_tau),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{key} must be positive and finite, got {v}")));
            }
        }
        let non_negative = [
            ("train.r1_gamma", self.r1_gamma),
            ("train.uncond_loss_weight", self.uncond_loss_weight),
            ("train.lambda_labelmix", self.lambda_labelmix),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{key} must be >= 0 and finite, got {v}")));
            }
        }
        let unit = [
            ("train.adam_b1", self.adam_b1),
            ("train.adam_b2", self.adam_b2),
            ("train.ema_decay", self.ema_decay),
            ("train.flip_prob", self.flip_prob),
        ];
        for (key, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{key} must lie in [0, 1], got {v}")));
            }
        }
        if self.r1_interval == 0 || self.checkpoint_interval == 0 || self.eval_interval == 0 {
            return Err(Error::config("train intervals must be positive"));
        }
        if self.bs_cond() == 0 && self.mode != Mode::UncondOnly {
            return Err(Error::config(format!("train.bs_cond = 0 requires mode uncond_only, not {}", self.mode.name())));
        }
        if self.bs_uncond == 0 && self.mode != Mode::CondOnly {
            return Err(Error::config(format!("train.bs_uncond = 0 requires mode cond_only, not {}", self.mode.name())));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    /// Fixed-seed random convolutional features.
    RandomConv,
    /// Raw pixels, flattened.
    Pixels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub sets: usize,
    /// Samples per set; the validation-set size when absent.
    pub samples_per_set: Option<usize>,
    pub extractor: ExtractorKind,
    pub extractor_seed: u64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            sets: 5,
            samples_per_set: None,
            extractor: ExtractorKind::RandomConv,
            extractor_seed: 20_231_205,
            seed: 1000,
            batch_size: 64,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sets == 0 || self.batch_size == 0 || self.samples_per_set == Some(0) {
            return Err(Error::config("eval.sets, eval.batch_size and eval.samples_per_set must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: ShapesConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.model.validate(self.data.resolution)?;
        self.train.validate()?;
        self.eval.validate()
    }

    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// A small configuration that trains in seconds; handy for examples and tests.
    pub fn tiny() -> Self {
        RunConfig {
            data: ShapesConfig {
                train_count: 64,
                val_count: 32,
                ..ShapesConfig::default()
            },
            model: ModelConfig {
                z_dim: 16,
                noise_dim: 8,
                style_channels: 8,
                mapping_hidden: 32,
                mapping_layers: 2,
                gen_channels: vec![16, 8, 8],
                upsample: Upsample::Nearest,
                disc_channels: vec![8, 8, 16],
                aspp_rates: vec![1, 2],
            },
            train: TrainConfig {
                total_steps: 20,
                bs_uncond: 4,
                bs_cond: Some(2),
                checkpoint_interval: 10,
                eval_interval: 10,
                sample_count: 4,
                ..TrainConfig::default()
            },
            eval: EvalConfig {
                sets: 2,
                samples_per_set: Some(32),
                batch_size: 32,
                ..EvalConfig::default()
            },
        }
    }
}
