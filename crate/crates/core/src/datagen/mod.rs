//! Synthetic shapes, label maps, supervision splits and dataset I/O.

mod io;
mod shapes;
mod split;

pub use io::{read_image_png, read_label_png, write_image_png, write_label_png, Manifest};
pub use shapes::{class_names, generate_shapes_sample, sample_seed, ShapeKind, PALETTE};
pub use split::{make_split, DatasetSplit};

use ocogan_autograd::{Element, Tensor};
use rand::Rng;

use crate::config::ShapesConfig;
use crate::error::{Error, Result};

/// An RGB image in `[-1, 1]` (channel-major, `3 x H x W`) with its label map.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub height: usize,
    pub width: usize,
    pub image: Vec<f32>,
    pub labels: Vec<u8>,
}

impl LabeledSample {
    pub fn new(height: usize, width: usize, image: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        if image.len() != 3 * height * width || labels.len() != height * width {
            return Err(Error::data(format!(
                "sample buffers ({} image, {} label values) do not match {height}x{width}",
                image.len(),
                labels.len()
            )));
        }
        if let Some(v) = image.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::data(format!("image value {v} outside [-1, 1]")));
        }
        Ok(LabeledSample { height, width, image, labels })
    }

    /// Label maps are checked lazily; call this before trusting `labels`.
    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        check_labels(&self.labels, self.width, num_classes)
    }

    pub fn image_tensor<T: Element>(&self) -> Tensor<T> {
        Tensor::from_fn(&[1, 3, self.height, self.width], |i| T::from_f64_lossy(self.image[i] as f64))
    }

    pub fn one_hot(&self, num_classes: usize) -> Result<SegMap> {
        one_hot_encode(&self.labels, self.height, self.width, num_classes)
    }

    /// 8-bit pixel values, channel-major.
    pub fn image_u8(&self) -> Vec<u8> {
        self.image.iter().map(|&v| to_u8(v)).collect()
    }
}

pub(crate) fn to_u8(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

pub(crate) fn from_u8(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

fn check_labels(labels: &[u8], width: usize, num_classes: usize) -> Result<()> {
    match labels.iter().position(|&l| l as usize >= num_classes) {
        None => Ok(()),
        Some(i) => Err(Error::data(format!(
            "label {} at pixel (row {}, col {}) is not below the class count {num_classes}",
            labels[i],
            i / width,
            i % width
        ))),
    }
}

/// One-hot semantic map, shape `(C, H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegMap {
    pub onehot: Tensor<f32>,
}

impl SegMap {
    pub fn num_classes(&self) -> usize {
        self.onehot.dim(0)
    }

    pub fn argmax(&self) -> Vec<u8> {
        let (c, h, w) = (self.onehot.dim(0), self.onehot.dim(1), self.onehot.dim(2));
        let d = self.onehot.data();
        (0..h * w)
            .map(|p| (0..c).fold(0, |best, k| if d[k * h * w + p] > d[best * h * w + p] { k } else { best }) as u8)
            .collect()
    }
}

/// `onehot[k, h, w] = 1` iff `labels[h, w] = k`.
pub fn one_hot_encode(labels: &[u8], height: usize, width: usize, num_classes: usize) -> Result<SegMap> {
    if labels.len() != height * width {
        return Err(Error::data(format!("label map has {} pixels, expected {height}x{width}", labels.len())));
    }
    check_labels(labels, width, num_classes)?;
    let hw = height * width;
    let mut onehot = Tensor::zeros(&[num_classes, height, width]);
    let d = onehot.data_mut();
    for (p, &l) in labels.iter().enumerate() {
        d[l as usize * hw + p] = 1.0;
    }
    Ok(SegMap { onehot })
}

/// Stacks label maps into an `(N, C, H, W)` one-hot batch.
pub fn one_hot_batch<T: Element>(maps: &[&[u8]], height: usize, width: usize, num_classes: usize) -> Result<Tensor<T>> {
    let hw = height * width;
    let mut out = Tensor::zeros(&[maps.len(), num_classes, height, width]);
    let d = out.data_mut();
    for (n, labels) in maps.iter().enumerate() {
        if labels.len() != hw {
            return Err(Error::data(format!("label map {n} has {} pixels, expected {hw}", labels.len())));
        }
        check_labels(labels, width, num_classes)?;
        for (p, &l) in labels.iter().enumerate() {
            d[(n * num_classes + l as usize) * hw + p] = T::one();
        }
    }
    Ok(out)
}

/// Mirrors image and labels together with probability `p`.
///
/// # Panics
/// If `p` is outside `[0, 1]`.
pub fn horizontal_flip<R: Rng + ?Sized>(sample: &LabeledSample, p: f64, rng: &mut R) -> LabeledSample {
    assert!((0.0..=1.0).contains(&p), "flip probability {p} outside [0, 1]");
    if p > 0.0 && rng.gen_bool(p) {
        flipped(sample)
    } else {
        sample.clone()
    }
}

pub fn flipped(sample: &LabeledSample) -> LabeledSample {
    let (h, w) = (sample.height, sample.width);
    let mut out = sample.clone();
    for row in 0..3 * h {
        out.image[row * w..(row + 1) * w].reverse();
    }
    for row in 0..h {
        out.labels[row * w..(row + 1) * w].reverse();
    }
    out
}

/// Train and validation samples plus class metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub resolution: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
}

impl Dataset {
    /// The procedural dataset; a pure function of `cfg`.
    pub fn generate(cfg: &ShapesConfig) -> Result<Dataset> {
        cfg.validate()?;
        let make = |split: u64, count: usize| -> Result<Vec<LabeledSample>> {
            (0..count).map(|i| generate_shapes_sample(sample_seed(cfg.seed, split, i as u64), cfg)).collect()
        };
        Ok(Dataset {
            resolution: cfg.resolution,
            num_classes: cfg.num_classes,
            class_names: class_names(cfg.num_classes),
            train: make(0, cfg.train_count)?,
            val: make(1, cfg.val_count)?,
        })
    }
}
