//! Convolution and resampling kernels on NCHW tensors.
//!
//! Convolutions go through im2col + GEMM over the whole batch, so the GEMM
//! sees `N * H_out * W_out` columns even when the spatial map is tiny.

use crate::element::{gemm_new, Element, MatLayout};
use crate::tensor::Tensor;

/// Stride, zero padding and dilation of a square 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvGeom {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Default for ConvGeom {
    fn default() -> Self {
        ConvGeom { stride: 1, padding: 0, dilation: 1 }
    }
}

impl ConvGeom {
    pub fn new(stride: usize, padding: usize, dilation: usize) -> Self {
        assert!(stride >= 1 && dilation >= 1);
        ConvGeom { stride, padding, dilation }
    }

    /// Same-size convolution for odd kernel `k` at stride 1.
    pub fn same(k: usize, dilation: usize) -> Self {
        ConvGeom { stride: 1, padding: dilation * (k - 1) / 2, dilation }
    }

    pub fn out_size(&self, input: usize, k: usize) -> usize {
        let span = self.dilation * (k - 1) + 1;
        assert!(
            input + 2 * self.padding >= span,
            "kernel span {span} exceeds padded input {}",
            input + 2 * self.padding
        );
        (input + 2 * self.padding - span) / self.stride + 1
    }
}

/// Swaps the two leading axes of an `(a, b, inner)` block layout.
fn swap_leading<T: Element>(src: &[T], a: usize, b: usize, inner: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for j in 0..b {
        for i in 0..a {
            let s = (i * b + j) * inner;
            out.extend_from_slice(&src[s..s + inner]);
        }
    }
    out
}

struct Patch {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    geom: ConvGeom,
}

impl Patch {
    fn new(x_shape: (usize, usize, usize, usize), kh: usize, kw: usize, geom: ConvGeom) -> Self {
        let (n, c, h, w) = x_shape;
        let oh = geom.out_size(h, kh);
        let ow = geom.out_size(w, kw);
        Patch { n, c, h, w, kh, kw, oh, ow, geom }
    }

    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.n * self.oh * self.ow
    }

    /// Output columns `[lo, hi)` whose input column `ow*s + off` is in range.
    fn valid_cols(&self, off: isize) -> (usize, usize) {
        let s = self.geom.stride as isize;
        let w = self.w as isize;
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi = if w - off <= 0 { 0 } else { ((w - off) + s - 1) / s };
        let lo = lo.clamp(0, self.ow as isize) as usize;
        let hi = hi.clamp(0, self.ow as isize) as usize;
        (lo, hi.max(lo))
    }

    /// Rows are `(c, ki, kj)`, columns `(n, oy, ox)`; written in order, so
    /// only the padding taps are ever zero-filled.
    fn im2col<T: Element>(&self, x: &[T]) -> Vec<T> {
        let mut cols = Vec::with_capacity(self.rows() * self.cols());
        let (s, p, d) = (self.geom.stride, self.geom.padding as isize, self.geom.dilation);
        let hw = self.h * self.w;
        for c in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let off_w = (kj * d) as isize - p;
                    let (lo, hi) = self.valid_cols(off_w);
                    for n in 0..self.n {
                        let src_plane = &x[(n * self.c + c) * hw..][..hw];
                        for oy in 0..self.oh {
                            let iy = (oy * s + ki * d) as isize - p;
                            if iy < 0 || iy >= self.h as isize {
                                cols.resize(cols.len() + self.ow, T::zero());
                                continue;
                            }
                            let src = &src_plane[iy as usize * self.w..][..self.w];
                            cols.resize(cols.len() + lo, T::zero());
                            if s == 1 {
                                let a = (lo as isize + off_w) as usize;
                                cols.extend_from_slice(&src[a..a + (hi - lo)]);
                            } else {
                                cols.extend((lo..hi).map(|ox| src[(ox as isize * s as isize + off_w) as usize]));
                            }
                            cols.resize(cols.len() + self.ow - hi, T::zero());
                        }
                    }
                }
            }
        }
        debug_assert_eq!(cols.len(), self.rows() * self.cols());
        cols
    }

    fn col2im<T: Element>(&self, cols: &[T]) -> Vec<T> {
        let ncols = self.cols();
        let plane = self.oh * self.ow;
        let mut x = vec![T::zero(); self.n * self.c * self.h * self.w];
        let (s, p, d) = (self.geom.stride, self.geom.padding as isize, self.geom.dilation);
        for c in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let off_w = (kj * d) as isize - p;
                    let (lo, hi) = self.valid_cols(off_w);
                    for n in 0..self.n {
                        let dst_plane =
                            &mut x[(n * self.c + c) * self.h * self.w..][..self.h * self.w];
                        let src_plane = &cols[row * ncols + n * plane..][..plane];
                        for oy in 0..self.oh {
                            let iy = (oy * s + ki * d) as isize - p;
                            if iy < 0 || iy >= self.h as isize {
                                continue;
                            }
                            let dst = &mut dst_plane[iy as usize * self.w..][..self.w];
                            let src = &src_plane[oy * self.ow..][..self.ow];
                            if s == 1 {
                                let a = (lo as isize + off_w) as usize;
                                for (o, &v) in dst[a..a + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                                    *o += v;
                                }
                            } else {
                                for (ox, &v) in src.iter().enumerate().take(hi).skip(lo) {
                                    dst[(ox as isize * s as isize + off_w) as usize] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

impl<T: Element> Tensor<T> {
    /// Cross-correlation of `self` `(N, Ci, H, W)` with `weight` `(Co, Ci, kh, kw)`.
    pub fn conv2d(&self, weight: &Tensor<T>, geom: ConvGeom) -> Tensor<T> {
        let (co, ci, kh, kw) = weight.dims4();
        let xs = self.dims4();
        assert_eq!(xs.1, ci, "conv2d: input has {} channels, weight expects {ci}", xs.1);
        let patch = Patch::new(xs, kh, kw, geom);
        let cols = patch.im2col(self.data());
        let k = patch.rows();
        let np = patch.cols();
        let out = gemm_new(weight.data(), MatLayout::row_major(co, k), &cols, MatLayout::row_major(k, np));
        let plane = patch.oh * patch.ow;
        let out = swap_leading(&out, co, patch.n, plane);
        Tensor::new(&[patch.n, co, patch.oh, patch.ow], out)
    }

    /// Gradient of `<self, conv2d(x, weight)>` with respect to `x`, where `self`
    /// is the output-shaped cotangent and `x` has spatial size `input_hw`.
    /// With stride > 1 this is the transposed convolution.
    pub fn conv2d_input_grad(
        &self,
        weight: &Tensor<T>,
        input_hw: (usize, usize),
        geom: ConvGeom,
    ) -> Tensor<T> {
        let (co, ci, kh, kw) = weight.dims4();
        let (n, gc, gh, gw) = self.dims4();
        assert_eq!(gc, co, "conv2d_input_grad: cotangent channels {gc} vs weight {co}");
        let patch = Patch::new((n, ci, input_hw.0, input_hw.1), kh, kw, geom);
        assert_eq!((gh, gw), (patch.oh, patch.ow), "conv2d_input_grad: cotangent size");
        let plane = gh * gw;
        let gmat = swap_leading(self.data(), n, co, plane);
        let k = patch.rows();
        let np = patch.cols();
        let cols = gemm_new(weight.data(), MatLayout::row_major(co, k).t(), &gmat, MatLayout::row_major(co, np));
        Tensor::new(&[n, ci, input_hw.0, input_hw.1], patch.col2im(&cols))
    }

    /// Gradient of `<grad, conv2d(self, w)>` with respect to `w` of spatial
    /// size `kernel_hw`.
    pub fn conv2d_weight_grad(
        &self,
        grad: &Tensor<T>,
        kernel_hw: (usize, usize),
        geom: ConvGeom,
    ) -> Tensor<T> {
        let xs = self.dims4();
        let (n, co, gh, gw) = grad.dims4();
        assert_eq!(n, xs.0, "conv2d_weight_grad: batch mismatch");
        let patch = Patch::new(xs, kernel_hw.0, kernel_hw.1, geom);
        assert_eq!((gh, gw), (patch.oh, patch.ow), "conv2d_weight_grad: cotangent size");
        let cols = patch.im2col(self.data());
        let gmat = swap_leading(grad.data(), n, co, gh * gw);
        let k = patch.rows();
        let np = patch.cols();
        let out = gemm_new(&gmat, MatLayout::row_major(co, np), &cols, MatLayout::row_major(k, np).t());
        Tensor::new(&[co, xs.1, kernel_hw.0, kernel_hw.1], out)
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&self) -> Tensor<T> {
        let (n, c, h, w) = self.dims4();
        let src = self.data();
        let mut out = Vec::with_capacity(n * c * h * w * 4);
        let mut row = Vec::with_capacity(2 * w);
        for plane in 0..n * c {
            for y in 0..h {
                row.clear();
                for &v in &src[(plane * h + y) * w..][..w] {
                    row.push(v);
                    row.push(v);
                }
                out.extend_from_slice(&row);
                out.extend_from_slice(&row);
            }
        }
        Tensor::new(&[n, c, 2 * h, 2 * w], out)
    }

    /// Sum over non-overlapping 2x2 windows (adjoint of [`Tensor::upsample2`]).
    pub fn pool2_sum(&self) -> Tensor<T> {
        let (n, c, h, w) = self.dims4();
        assert!(h % 2 == 0 && w % 2 == 0, "pool2 needs even spatial dims, got {h}x{w}");
        let (oh, ow) = (h / 2, w / 2);
        let src = self.data();
        let mut out = vec![T::zero(); n * c * oh * ow];
        for plane in 0..n * c {
            let s = &src[plane * h * w..][..h * w];
            let d = &mut out[plane * oh * ow..][..oh * ow];
            for y in 0..oh {
                let r0 = &s[2 * y * w..][..w];
                let r1 = &s[(2 * y + 1) * w..][..w];
                for x in 0..ow {
                    d[y * ow + x] = r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
                }
            }
        }
        Tensor::new(&[n, c, oh, ow], out)
    }
}
