use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{from_u8, LabeledSample};
use crate::config::ShapesConfig;
use crate::error::Result;

/// Nominal color of each class; class 0 is the background.
pub const PALETTE: [[u8; 3]; 8] = [
    [40, 40, 48],
    [220, 60, 50],
    [60, 190, 80],
    [70, 100, 230],
    [230, 210, 60],
    [190, 70, 210],
    [60, 210, 210],
    [235, 235, 235],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Rectangle,
    Disk,
    Triangle,
}

impl ShapeKind {
    /// Foreground classes cycle through the three kinds.
    pub fn of_class(class: usize) -> ShapeKind {
        debug_assert!(class >= 1);
        match (class - 1) % 3 {
            0 => ShapeKind::Rectangle,
            1 => ShapeKind::Disk,
            _ => ShapeKind::Triangle,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ShapeKind::Rectangle => "rectangle",
            ShapeKind::Disk => "disk",
            ShapeKind::Triangle => "triangle",
        }
    }
}

pub fn class_names(num_classes: usize) -> Vec<String> {
    (0..num_classes)
        .map(|k| match k {
            0 => "background".to_string(),
            k if k <= 3 => ShapeKind::of_class(k).name().to_string(),
            k => format!("{}_{}", ShapeKind::of_class(k).name(), (k - 1) / 3 + 1),
        })
        .collect()
}

/// Seed of sample `index` in split `split` (0 = train, 1 = val).
pub fn sample_seed(base: u64, split: u64, index: u64) -> u64 {
    let mut z = base ^ split.wrapping_mul(0xA076_1D64_78BD_642F) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum Region {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
    Triangle([(f64, f64); 3]),
}

impl Region {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Region::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Region::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Region::Triangle(v) => {
                let edge = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
                let d = [edge(v[0], v[1]), edge(v[1], v[2]), edge(v[2], v[0])];
                d.iter().all(|&e| e >= 0.0) || d.iter().all(|&e| e <= 0.0)
            }
        }
    }

    fn sample<R: Rng>(kind: ShapeKind, res: f64, rng: &mut R) -> Region {
        let s = res / 32.0;
        match kind {
            ShapeKind::Rectangle => {
                let w = rng.gen_range(6.0 * s..16.0 * s);
                let h = rng.gen_range(6.0 * s..16.0 * s);
                let x0 = rng.gen_range(0.0..res - w);
                let y0 = rng.gen_range(0.0..res - h);
                Region::Rect { x0, y0, x1: x0 + w, y1: y0 + h }
            }
            ShapeKind::Disk => {
                let r = rng.gen_range(3.0 * s..8.0 * s);
                let cx = rng.gen_range(r..res - r);
                let cy = rng.gen_range(r..res - r);
                Region::Disk { cx, cy, r }
            }
            ShapeKind::Triangle => {
                let r = rng.gen_range(4.0 * s..10.0 * s);
                let cx = rng.gen_range(r..res - r);
                let cy = rng.gen_range(r..res - r);
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                let vertex = |k: f64| {
                    let a = theta + k * std::f64::consts::TAU / 3.0;
                    (cx + r * a.cos(), cy + r * a.sin())
                };
                Region::Triangle([vertex(0.0), vertex(1.0), vertex(2.0)])
            }
        }
    }
}

/// One procedural scene: a noisy background with up to `max_shapes`
/// overlapping shapes painted back to front. Labels are exact at pixel
/// centers.
pub fn generate_shapes_sample(seed: u64, cfg: &ShapesConfig) -> Result<LabeledSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let res = cfg.resolution;
    let hw = res * res;
    let jittered = |rng: &mut ChaCha8Rng, class: usize| -> [f64; 3] {
        let base = PALETTE[class];
        let mut c = [0.0; 3];
        for (ch, v) in c.iter_mut().enumerate() {
            let j = if cfg.color_jitter > 0.0 { rng.gen_range(-cfg.color_jitter..=cfg.color_jitter) } else { 0.0 };
            *v = base[ch] as f64 + j;
        }
        c
    };
    let background = jittered(&mut rng, 0);
    let mut labels = vec![0u8; hw];
    let mut color = vec![background; hw];
    let count = rng.gen_range(cfg.min_shapes..=cfg.max_shapes);
    for _ in 0..count {
        let class = rng.gen_range(1..cfg.num_classes);
        let region = Region::sample(ShapeKind::of_class(class), res as f64, &mut rng);
        let fill = jittered(&mut rng, class);
        for y in 0..res {
            for x in 0..res {
                if region.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    labels[y * res + x] = class as u8;
                    color[y * res + x] = fill;
                }
            }
        }
    }
    let noise = Normal::new(0.0, cfg.pixel_noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut image = vec![0.0f32; 3 * hw];
    for ch in 0..3 {
        for p in 0..hw {
            let n = if cfg.pixel_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let v = (color[p][ch] + n).round().clamp(0.0, 255.0) as u8;
            image[ch * hw + p] = from_u8(v);
        }
    }
    LabeledSample::new(res, res, image, labels)
}
