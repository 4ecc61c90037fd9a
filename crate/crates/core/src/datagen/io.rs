use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use super::{from_u8, Dataset, LabeledSample};
use crate::error::{Error, IoContext, Result};

/// Contents of `dataset.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub num_classes: usize,
    pub resolution: usize,
    pub class_names: Vec<String>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::data(format!("{}: {other}", path.display())),
    }
}

/// Writes a channel-major `3 x H x W` buffer as 8-bit RGB.
pub fn write_image_png(path: &Path, chw: &[u8], height: usize, width: usize) -> Result<()> {
    let hw = height * width;
    let img = RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let p = y as usize * width + x as usize;
        image::Rgb([chw[p], chw[hw + p], chw[2 * hw + p]])
    });
    img.save(path).map_err(|e| image_error(path, e))
}

pub fn write_label_png(path: &Path, labels: &[u8], height: usize, width: usize) -> Result<()> {
    let img = GrayImage::from_raw(width as u32, height as u32, labels.to_vec())
        .ok_or_else(|| Error::internal("label buffer does not match its dimensions"))?;
    img.save(path).map_err(|e| image_error(path, e))
}

/// Reads an RGB image, resampled to `size x size`, as channel-major bytes.
pub fn read_image_png(path: &Path, size: usize) -> Result<Vec<u8>> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.to_rgb8();
    let img = if img.dimensions() == (size as u32, size as u32) {
        img
    } else {
        imageops::resize(&img, size as u32, size as u32, FilterType::Triangle)
    };
    let hw = size * size;
    let mut out = vec![0u8; 3 * hw];
    for (p, px) in img.pixels().enumerate() {
        for ch in 0..3 {
            out[ch * hw + p] = px[ch];
        }
    }
    Ok(out)
}

/// Reads a single-channel label map, resampled with nearest neighbour.
pub fn read_label_png(path: &Path, size: usize) -> Result<Vec<u8>> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    if img.color().channel_count() != 1 {
        return Err(Error::data(format!("{}: label maps must be single-channel", path.display())));
    }
    let img = img.to_luma8();
    let img = if img.dimensions() == (size as u32, size as u32) {
        img
    } else {
        imageops::resize(&img, size as u32, size as u32, FilterType::Nearest)
    };
    Ok(img.into_raw())
}

fn pair_paths(dir: &Path, id: usize) -> (PathBuf, PathBuf) {
    (dir.join(format!("{id:04}_img.png")), dir.join(format!("{id:04}_lab.png")))
}

fn listed_ids(dir: &Path) -> Result<Vec<usize>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).at(dir)? {
        let name = entry.at(dir)?.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix("_img.png") {
            if let Ok(id) = stem.parse::<usize>() {
                ids.push(id);
            }
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

impl Dataset {
    /// Writes `train/` and `val/` PNG pairs plus `dataset.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for (name, samples) in [("train", &self.train), ("val", &self.val)] {
            let sub = dir.join(name);
            fs::create_dir_all(&sub).at(&sub)?;
            for (i, s) in samples.iter().enumerate() {
                let (img, lab) = pair_paths(&sub, i);
                write_image_png(&img, &s.image_u8(), s.height, s.width)?;
                write_label_png(&lab, &s.labels, s.height, s.width)?;
            }
        }
        let manifest = Manifest {
            num_classes: self.num_classes,
            resolution: self.resolution,
            class_names: self.class_names.clone(),
            train: (0..self.train.len()).collect(),
            val: (0..self.val.len()).collect(),
        };
        let path = dir.join("dataset.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").at(&path)
    }

    /// Loads a dataset directory. Without a manifest, pairs are discovered
    /// by file name and the class count is inferred from the labels.
    /// Images are resampled to `resolution` when given, otherwise to the
    /// manifest resolution.
    pub fn load(dir: &Path, resolution: Option<usize>) -> Result<Dataset> {
        let manifest_path = dir.join("dataset.json");
        let manifest: Option<Manifest> = if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).at(&manifest_path)?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| Error::data(format!("{}: {e}", manifest_path.display())))?,
            )
        } else {
            None
        };
        let size = resolution
            .or(manifest.as_ref().map(|m| m.resolution))
            .ok_or_else(|| Error::config("dataset has no manifest; a resolution must be given"))?;
        let load_split = |name: &str, ids: Option<&Vec<usize>>| -> Result<Vec<LabeledSample>> {
            let sub = dir.join(name);
            if !sub.is_dir() {
                return Err(Error::data(format!("missing split directory {}", sub.display())));
            }
            let ids = match ids {
                Some(ids) => ids.clone(),
                None => listed_ids(&sub)?,
            };
            ids.iter()
                .map(|&id| {
                    let (img, lab) = pair_paths(&sub, id);
                    let image = read_image_png(&img, size)?.into_iter().map(from_u8).collect();
                    let labels = read_label_png(&lab, size)?;
                    LabeledSample::new(size, size, image, labels)
                })
                .collect()
        };
        let train = load_split("train", manifest.as_ref().map(|m| &m.train))?;
        let val = load_split("val", manifest.as_ref().map(|m| &m.val))?;
        let num_classes = match &manifest {
            Some(m) => m.num_classes,
            None => train.iter().chain(&val).flat_map(|s| s.labels.iter()).max().map_or(1, |&m| m as usize + 1).max(2),
        };
        for (name, samples) in [("train", &train), ("val", &val)] {
            for (i, s) in samples.iter().enumerate() {
                s.check_labels(num_classes)
                    .map_err(|e| Error::data(format!("{name} sample {i}: {e}")))?;
            }
        }
        let class_names = match manifest {
            Some(m) => m.class_names,
            None => (0..num_classes).map(|k| format!("class_{k}")).collect(),
        };
        Ok(Dataset { resolution: size, num_classes, class_names, train, val })
    }
}
