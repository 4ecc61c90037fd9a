//! Fréchet distance over a pluggable feature extractor, an oracle segmenter
//! for the shapes family, mIoU, and report assembly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ocogan_autograd::{no_grad, ConvGeom, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{EvalConfig, ExtractorKind};
use crate::datagen::{one_hot_batch, Dataset, PALETTE};
use crate::error::{Error, IoContext, Result};
use crate::generator::{sample_latent_seeded, Generator, StyleNoise};
use crate::layers::lrelu;

/// Sample mean and unbiased covariance of a feature set.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFit {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

impl GaussianFit {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Fits `features`, one row per sample.
pub fn gaussian_fit(features: &DMatrix<f64>) -> Result<GaussianFit> {
    let (n, f) = features.shape();
    if n < 2 {
        return Err(Error::data(format!("a Gaussian fit needs at least 2 samples, got {n}")));
    }
    let mut mu = DVector::zeros(f);
    for row in features.row_iter() {
        mu += row.transpose();
    }
    mu /= n as f64;
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let mut sigma = centered.transpose() * &centered / (n - 1) as f64;
    sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(GaussianFit { mu, sigma, n })
}

fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -1e-8 * scale {
            return Err(Error::data(format!("covariance is not positive semi-definite (eigenvalue {v:e})")));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// `|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)`.
pub fn frechet_distance(g1: &GaussianFit, g2: &GaussianFit) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::data(format!("feature dimensions differ: {} vs {}", g1.dim(), g2.dim())));
    }
    let diff = &g1.mu - &g2.mu;
    let s1h = sym_sqrt(&g1.sigma)?;
    let inner = &s1h * &g2.sigma * &s1h;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = SymmetricEigen::new(inner);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let mut tr_sqrt = 0.0;
    for &v in eig.eigenvalues.iter() {
        if v < -1e-8 * scale {
            return Err(Error::data(format!(
                "product covariance has eigenvalue {v:e}; traces are {:e} and {:e}",
                g1.sigma.trace(),
                g2.sigma.trace()
            )));
        }
        tr_sqrt += v.max(0.0).sqrt();
    }
    let d = diff.dot(&diff) + g1.sigma.trace() + g2.sigma.trace() - 2.0 * tr_sqrt;
    if !d.is_finite() {
        return Err(Error::Numerical {
            step: 0,
            detail: format!(
                "Fréchet distance is {d}; covariance traces {:e} and {:e}, mean gap {:e}",
                g1.sigma.trace(),
                g2.sigma.trace(),
                diff.norm()
            ),
        });
    }
    Ok(d)
}

/// A deterministic image-to-feature map.
pub trait FeatureExtractor {
    fn dim(&self) -> usize;
    /// `(N, 3, H, W)` images in `[-1, 1]` to an `(N, F)` matrix.
    fn features(&self, images: &Tensor<f32>) -> DMatrix<f64>;
}

/// Flattened pixels.
#[derive(Clone, Debug)]
pub struct PixelExtractor {
    pub resolution: usize,
}

impl FeatureExtractor for PixelExtractor {
    fn dim(&self) -> usize {
        3 * self.resolution * self.resolution
    }

    fn features(&self, images: &Tensor<f32>) -> DMatrix<f64> {
        let n = images.dim(0);
        let f = images.numel() / n.max(1);
        DMatrix::from_row_iterator(n, f, images.data().iter().map(|&v| v as f64))
    }
}

/// A frozen, randomly initialised convolutional network: three stages of
/// 3x3 conv, leaky ReLU and 2x2 average pooling, then a global average.
#[derive(Clone, Debug)]
pub struct RandomConvExtractor {
    weights: Vec<Tensor<f32>>,
    biases: Vec<Tensor<f32>>,
}

pub const RANDOM_CONV_WIDTHS: [usize; 4] = [3, 32, 64, 64];

impl RandomConvExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in RANDOM_CONV_WIDTHS.windows(2) {
            let (cin, cout) = (w[0], w[1]);
            let scale = (2.0 / (9 * cin) as f64).sqrt();
            weights.push(Tensor::from_fn(&[cout, cin, 3, 3], |_| {
                (rng.sample::<f64, _>(StandardNormal) * scale) as f32
            }));
            biases.push(Tensor::from_fn(&[1, cout, 1, 1], |_| (rng.sample::<f64, _>(StandardNormal) * 0.1) as f32));
        }
        RandomConvExtractor { weights, biases }
    }
}

impl FeatureExtractor for RandomConvExtractor {
    fn dim(&self) -> usize {
        RANDOM_CONV_WIDTHS[RANDOM_CONV_WIDTHS.len() - 1]
    }

    fn features(&self, images: &Tensor<f32>) -> DMatrix<f64> {
        let n = images.dim(0);
        let out = no_grad(|| {
            let mut h = Var::constant(images.clone());
            for (w, b) in self.weights.iter().zip(&self.biases) {
                let conv = h.conv2d(&Var::constant(w.clone()), ConvGeom::same(3, 1));
                h = lrelu(&conv.add(&Var::constant(b.clone()))).avg_pool2();
            }
            h.mean_keep(&[2, 3]).value().clone()
        });
        DMatrix::from_row_iterator(n, self.dim(), out.data().iter().map(|&v| v as f64))
    }
}

pub fn make_extractor(cfg: &EvalConfig, resolution: usize) -> Box<dyn FeatureExtractor> {
    match cfg.extractor {
        ExtractorKind::RandomConv => Box::new(RandomConvExtractor::new(cfg.extractor_seed)),
        ExtractorKind::Pixels => Box::new(PixelExtractor { resolution }),
    }
}

fn batched_features(extractor: &dyn FeatureExtractor, images: &Tensor<f32>, batch: usize) -> DMatrix<f64> {
    let n = images.dim(0);
    let mut rows = DMatrix::zeros(n, extractor.dim());
    let mut start = 0;
    while start < n {
        let len = batch.max(1).min(n - start);
        let f = extractor.features(&images.narrow(0, start, len));
        rows.rows_mut(start, len).copy_from(&f);
        start += len;
    }
    rows
}

/// Fréchet distance between the extractor features of two image sets.
pub fn compute_fid(real: &Tensor<f32>, fake: &Tensor<f32>, extractor: &dyn FeatureExtractor) -> Result<f64> {
    if real.ndim() != 4 || fake.ndim() != 4 || real.shape()[1..] != fake.shape()[1..] {
        return Err(Error::data(format!("image sets differ in shape: {:?} vs {:?}", real.shape(), fake.shape())));
    }
    let a = gaussian_fit(&batched_features(extractor, real, 64))?;
    let b = gaussian_fit(&batched_features(extractor, fake, 64))?;
    frechet_distance(&a, &b)
}

/// Nearest palette color per pixel, for one `(3, H, W)` image in `[-1, 1]`.
pub fn oracle_segment(image: &[f32], height: usize, width: usize, num_classes: usize) -> Vec<u8> {
    let hw = height * width;
    (0..hw)
        .map(|p| {
            let px: [f64; 3] = std::array::from_fn(|c| (image[c * hw + p] as f64 + 1.0) * 127.5);
            let dist = |k: usize| -> f64 { (0..3).map(|c| (px[c] - PALETTE[k][c] as f64).powi(2)).sum() };
            (0..num_classes).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap_or(0) as u8
        })
        .collect()
}

/// Per-class intersections and unions accumulated over many maps.
#[derive(Clone, Debug, PartialEq)]
pub struct IouAccumulator {
    pub intersection: Vec<u64>,
    pub union: Vec<u64>,
}

impl IouAccumulator {
    pub fn new(num_classes: usize) -> Self {
        IouAccumulator { intersection: vec![0; num_classes], union: vec![0; num_classes] }
    }

    pub fn add(&mut self, pred: &[u8], gt: &[u8]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::data(format!("prediction has {} pixels, ground truth {}", pred.len(), gt.len())));
        }
        let c = self.union.len();
        for (&p, &g) in pred.iter().zip(gt) {
            let (p, g) = (p as usize, g as usize);
            if p >= c || g >= c {
                return Err(Error::data(format!("label {} is not below {c}", p.max(g))));
            }
            if p == g {
                self.intersection[p] += 1;
                self.union[p] += 1;
            } else {
                self.union[p] += 1;
                self.union[g] += 1;
            }
        }
        Ok(())
    }

    /// IoU per class; `None` where the union is empty.
    pub fn per_class(&self) -> Vec<Option<f64>> {
        self.intersection
            .iter()
            .zip(&self.union)
            .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
            .collect()
    }

    pub fn mean(&self) -> f64 {
        let vals: Vec<f64> = self.per_class().into_iter().flatten().collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }
}

/// Dataset-wide mIoU over pairs of label maps.
pub fn miou(pred: &[&[u8]], gt: &[&[u8]], num_classes: usize) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::data(format!("{} predictions for {} ground-truth maps", pred.len(), gt.len())));
    }
    let mut acc = IouAccumulator::new(num_classes);
    for (p, g) in pred.iter().zip(gt) {
        acc.add(p, g)?;
    }
    Ok(acc.mean())
}

/// Mean and sample standard deviation over sample sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// `None` with a single set.
    pub std: Option<f64>,
    pub values: Vec<f64>,
}

impl Stat {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Stat { mean, std, values }
    }

    pub fn display(&self) -> String {
        match self.std {
            Some(s) => format!("{:.4} ± {:.4}", self.mean, s),
            None => format!("{:.4}", self.mean),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub step: u64,
    pub sets: usize,
    pub samples_per_set: usize,
    pub extractor: ExtractorKind,
    pub fid: Stat,
    pub cfid: Stat,
    pub miou: Stat,
    pub class_names: Vec<String>,
    /// Per-class IoU pooled over all sets; `None` for classes never seen.
    pub per_class_iou: Vec<Option<f64>>,
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "step = {}", self.step);
        let _ = writeln!(s, "sets = {}", self.sets);
        let _ = writeln!(s, "samples_per_set = {}", self.samples_per_set);
        let _ = writeln!(s, "extractor = {:?}", self.extractor);
        let _ = writeln!(s, "fid = {}", self.fid.display());
        let _ = writeln!(s, "cfid = {}", self.cfid.display());
        let _ = writeln!(s, "miou = {}", self.miou.display());
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<16} {:>8}", "class", "iou");
        for (name, iou) in self.class_names.iter().zip(&self.per_class_iou) {
            let v = iou.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(s, "{name:<16} {v:>8}");
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<stem>.txt` and `<stem>.json`; returns both paths.
    pub fn save(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).at(dir)?;
        }
        let txt = stem.with_extension("txt");
        let json = stem.with_extension("json");
        std::fs::write(&txt, self.to_text()).at(&txt)?;
        std::fs::write(&json, self.to_json()).at(&json)?;
        Ok((txt, json))
    }
}

fn val_tensor(dataset: &Dataset) -> Result<Tensor<f32>> {
    crate::trainer::stack_images(&dataset.val)
}

fn generate_batched(
    n: usize,
    batch: usize,
    mut gen: impl FnMut(usize, usize) -> Result<Tensor<f32>>,
) -> Result<Tensor<f32>> {
    let mut parts = Vec::new();
    let mut start = 0;
    while start < n {
        let len = batch.max(1).min(n - start);
        parts.push(gen(start, len)?);
        start += len;
    }
    let refs: Vec<&Tensor<f32>> = parts.iter().collect();
    Ok(Tensor::concat(&refs, 0))
}

/// FID, CFID and oracle mIoU of `generator` against the validation split,
/// each over `cfg.sets` sample sets with distinct seeds.
///
/// Conditional set `s` uses the validation maps in order, cycling when the
/// set is larger than the split.
pub fn evaluate(generator: &Generator<f32>, dataset: &Dataset, cfg: &EvalConfig, step: u64) -> Result<MetricsReport> {
    cfg.validate()?;
    if dataset.val.len() < 2 {
        return Err(Error::data("evaluation needs at least 2 validation samples"));
    }
    let n = cfg.samples_per_set.unwrap_or(dataset.val.len());
    if n < 2 {
        return Err(Error::config(format!("eval.samples_per_set must be at least 2, got {n}")));
    }
    let res = dataset.resolution;
    let c = dataset.num_classes;
    let extractor = make_extractor(cfg, res);
    let reference = gaussian_fit(&batched_features(extractor.as_ref(), &val_tensor(dataset)?, cfg.batch_size))?;
    let mut fids = Vec::new();
    let mut cfids = Vec::new();
    let mut mious = Vec::new();
    let mut pooled = IouAccumulator::new(c);
    for set in 0..cfg.sets as u64 {
        let seed = cfg.seed.wrapping_add(set.wrapping_mul(0x9E37_79B9));
        let uncond = generate_batched(n, cfg.batch_size, |start, len| {
            let z = sample_latent_seeded(seed ^ (start as u64) << 20, len, generator.model.z_dim)?;
            no_grad(|| Ok(generator.generate_uncond(&Var::constant(z), &mut StyleNoise::Eval)?.value().clone()))
        })?;
        let maps: Vec<&[u8]> = (0..n).map(|i| dataset.val[i % dataset.val.len()].labels.as_slice()).collect();
        let cond = generate_batched(n, cfg.batch_size, |start, len| {
            let seg = one_hot_batch(&maps[start..start + len], res, res, c)?;
            let z64 = sample_latent_seeded(!seed ^ (start as u64) << 20, len, generator.model.noise_dim)?;
            no_grad(|| {
                let x = generator.generate_cond(&Var::constant(z64), &Var::constant(seg), &mut StyleNoise::Eval)?;
                Ok(x.value().clone())
            })
        })?;
        let fu = gaussian_fit(&batched_features(extractor.as_ref(), &uncond, cfg.batch_size))?;
        let fc = gaussian_fit(&batched_features(extractor.as_ref(), &cond, cfg.batch_size))?;
        fids.push(frechet_distance(&reference, &fu)?);
        cfids.push(frechet_distance(&reference, &fc)?);
        let mut acc = IouAccumulator::new(c);
        let per = 3 * res * res;
        for (i, gt) in maps.iter().enumerate() {
            let pred = oracle_segment(&cond.data()[i * per..(i + 1) * per], res, res, c);
            acc.add(&pred, gt)?;
            pooled.add(&pred, gt)?;
        }
        mious.push(acc.mean());
    }
    Ok(MetricsReport {
        step,
        sets: cfg.sets,
        samples_per_set: n,
        extractor: cfg.extractor,
        fid: Stat::from_values(fids),
        cfid: Stat::from_values(cfids),
        miou: Stat::from_values(mious),
        class_names: dataset.class_names.clone(),
        per_class_iou: pooled.per_class(),
    })
}
