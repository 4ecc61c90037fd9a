//! A hybrid conditional/unconditional GAN at desk scale: one synthesis
//! network driven by spatial style maps from either latent noise or a
//! segmentation map, trained against a shared U-Net discriminator, with a
//! synthetic shapes benchmark and its evaluation harness.

pub mod cli;
pub mod config;
pub mod datagen;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod imaging;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod trainer;

pub use config::{EvalConfig, ExtractorKind, Mode, ModelConfig, Regime, RunConfig, ShapesConfig, TrainConfig, Upsample};
pub use discriminator::{DiscOutput, Discriminator, Encoded};
pub use error::{Error, Result};
pub use generator::{Generator, StyleNoise, StylePyramid, StyleSource};
pub use ocogan_autograd as autograd;
