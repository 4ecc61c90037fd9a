//! Sample grids and label-map visualisation.

use std::path::Path;

use ocogan_autograd::Tensor;

use crate::datagen::{to_u8, write_image_png, PALETTE};
use crate::error::{Error, Result};

/// Separator width between grid cells, in pixels.
pub const GRID_GAP: usize = 2;

/// Tiles an `(N, 3, H, W)` batch in `[-1, 1]` into rows of `cols` cells.
/// Returns channel-major 8-bit pixels with the grid height and width.
pub fn image_grid(images: &Tensor<f32>, cols: usize) -> Result<(Vec<u8>, usize, usize)> {
    if images.ndim() != 4 || images.dim(1) != 3 {
        return Err(Error::data(format!("image grid needs (N, 3, H, W), got {:?}", images.shape())));
    }
    let (n, _, h, w) = images.dims4();
    if n == 0 || cols == 0 {
        return Err(Error::data("image grid needs at least one image and one column"));
    }
    let cols = cols.min(n);
    let rows = n.div_ceil(cols);
    let gh = rows * h + (rows - 1) * GRID_GAP;
    let gw = cols * w + (cols - 1) * GRID_GAP;
    let mut out = vec![255u8; 3 * gh * gw];
    let d = images.data();
    for i in 0..n {
        let (oy, ox) = ((i / cols) * (h + GRID_GAP), (i % cols) * (w + GRID_GAP));
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    out[(c * gh + oy + y) * gw + ox + x] = to_u8(d[((i * 3 + c) * h + y) * w + x]);
                }
            }
        }
    }
    Ok((out, gh, gw))
}

pub fn save_grid(path: &Path, images: &Tensor<f32>, cols: usize) -> Result<()> {
    let (px, h, w) = image_grid(images, cols)?;
    write_image_png(path, &px, h, w)
}

/// Label maps painted with the nominal class colors, `(N, 3, H, W)` in `[-1, 1]`.
pub fn label_images(maps: &[&[u8]], height: usize, width: usize) -> Tensor<f32> {
    let hw = height * width;
    let mut out = Tensor::zeros(&[maps.len(), 3, height, width]);
    let d = out.data_mut();
    for (i, labels) in maps.iter().enumerate() {
        for (p, &l) in labels.iter().enumerate().take(hw) {
            let rgb = PALETTE[l as usize % PALETTE.len()];
            for c in 0..3 {
                d[(i * 3 + c) * hw + p] = rgb[c] as f32 / 127.5 - 1.0;
            }
        }
    }
    out
}

/// Number of columns for a roughly square grid of `n` cells.
pub fn square_cols(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(1)
}
