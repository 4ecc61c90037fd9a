use std::fmt;

use crate::element::{gemm_new, Element, MatLayout};

/// Dense row-major array.
///
/// Shape errors in tensor kernels are programming errors and panic, in the
/// same way slice indexing does. Callers validating user input do so before
/// reaching this layer.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} [", self.shape)?;
        for (i, v) in self.data.iter().take(PREVIEW).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > PREVIEW {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for (s, &d) in strides.iter_mut().zip(shape).rev() {
        *s = acc;
        acc *= d;
    }
    strides
}

/// Numpy-style broadcast of two shapes.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0; nd];
    for i in 0..nd {
        let da = if i + a.len() >= nd { a[i + a.len() - nd] } else { 1 };
        let db = if i + b.len() >= nd { b[i + b.len() - nd] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides that read `shape` as if broadcast to `target`.
fn broadcast_strides(shape: &[usize], target: &[usize]) -> Vec<usize> {
    assert!(shape.len() <= target.len(), "cannot broadcast {shape:?} to {target:?}");
    let own = contiguous_strides(shape);
    let lead = target.len() - shape.len();
    (0..target.len())
        .map(|i| {
            if i < lead {
                0
            } else {
                let d = shape[i - lead];
                assert!(
                    d == target[i] || d == 1,
                    "cannot broadcast {shape:?} to {target:?}"
                );
                if d == 1 {
                    0
                } else {
                    own[i - lead]
                }
            }
        })
        .collect()
}

/// Visits `shape` in row-major order, handing out runs along the innermost
/// (coalesced) dimension: `f(base_offsets, run_len, run_strides)`.
fn walk<const K: usize>(
    shape: &[usize],
    strides: [&[usize]; K],
    mut f: impl FnMut([usize; K], usize, [usize; K]),
) {
    if shape.contains(&0) {
        return;
    }
    let mut dims: Vec<usize> = Vec::with_capacity(shape.len());
    let mut st: Vec<[usize; K]> = Vec::with_capacity(shape.len());
    for (i, &d) in shape.iter().enumerate() {
        if d == 1 {
            continue;
        }
        let s: [usize; K] = std::array::from_fn(|k| strides[k][i]);
        if let (Some(last_d), Some(last_s)) = (dims.last_mut(), st.last_mut()) {
            if (0..K).all(|k| last_s[k] == s[k] * d) {
                *last_d *= d;
                *last_s = s;
                continue;
            }
        }
        dims.push(d);
        st.push(s);
    }
    if dims.is_empty() {
        f([0; K], 1, [0; K]);
        return;
    }
    let nd = dims.len();
    let inner = dims[nd - 1];
    let inner_st = st[nd - 1];
    let outer = &dims[..nd - 1];
    let mut idx = vec![0usize; outer.len()];
    let mut off = [0usize; K];
    loop {
        f(off, inner, inner_st);
        // odometer increment over the outer dims
        let mut axis = outer.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            for k in 0..K {
                off[k] += st[axis][k];
            }
            if idx[axis] < outer[axis] {
                break;
            }
            for k in 0..K {
                off[k] -= st[axis][k] * outer[axis];
            }
            idx[axis] = 0;
        }
    }
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            numel(shape),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; numel(shape)] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![], data: vec![value] }
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> T) -> Self {
        Tensor { shape: shape.to_vec(), data: (0..numel(shape)).map(f).collect() }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Self {
        Self::new(shape, data.iter().map(|&x| T::from_f64_lossy(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// `(n, c, h, w)` of a rank-4 tensor.
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.ndim(), 4, "expected NCHW tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    pub fn reshape(&self, shape: &[usize]) -> Self {
        self.clone().into_reshape(shape)
    }

    pub fn into_reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(numel(shape), self.data.len(), "reshape {:?} -> {shape:?}", self.shape);
        self.shape = shape.to_vec();
        self
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64_lossy(x.to_f64_lossy())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64_lossy()).collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn map_inplace(&mut self, f: impl Fn(T) -> T) {
        for x in &mut self.data {
            *x = f(*x);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Elementwise binary op with numpy broadcasting.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        if self.shape == other.shape {
            let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
            return Tensor { shape: self.shape.clone(), data };
        }
        let out_shape = broadcast_shapes(&self.shape, &other.shape).unwrap_or_else(|| {
            panic!("shapes {:?} and {:?} do not broadcast", self.shape, other.shape)
        });
        let sa = broadcast_strides(&self.shape, &out_shape);
        let sb = broadcast_strides(&other.shape, &out_shape);
        let a = &self.data;
        let b = &other.data;
        let mut out = Vec::with_capacity(numel(&out_shape));
        walk(&out_shape, [&sa, &sb], |[oa, ob], len, [ia, ib]| match (ia, ib) {
            (1, 1) => out.extend(a[oa..oa + len].iter().zip(&b[ob..ob + len]).map(|(&x, &y)| f(x, y))),
            (1, 0) => {
                let y = b[ob];
                out.extend(a[oa..oa + len].iter().map(|&x| f(x, y)));
            }
            (0, 1) => {
                let x = a[oa];
                out.extend(b[ob..ob + len].iter().map(|&y| f(x, y)));
            }
            _ => out.extend((0..len).map(|j| f(a[oa + j * ia], b[ob + j * ib]))),
        });
        Tensor { shape: out_shape, data: out }
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Self {
        if self.shape == shape {
            return self.clone();
        }
        let src = broadcast_strides(&self.shape, shape);
        let unit = vec![0; shape.len()];
        let a = &self.data;
        let mut out = Vec::with_capacity(numel(shape));
        walk(shape, [&src, &unit], |[o, _], len, [s, _]| {
            if s == 0 {
                out.extend(std::iter::repeat(a[o]).take(len));
            } else {
                out.extend((0..len).map(|j| a[o + j * s]));
            }
        });
        Tensor { shape: shape.to_vec(), data: out }
    }

    /// Sums over broadcast dimensions so the result has shape `target`.
    /// Inverse of [`Tensor::broadcast_to`].
    pub fn sum_to(&self, target: &[usize]) -> Self {
        if self.shape == target {
            return self.clone();
        }
        let dst = broadcast_strides(target, &self.shape);
        let src = contiguous_strides(&self.shape);
        let a = &self.data;
        let mut out = vec![T::zero(); numel(target)];
        walk(&self.shape, [&src, &dst], |[oi, oo], len, [si, so]| {
            if so == 0 {
                let mut acc = T::zero();
                if si == 1 {
                    for &x in &a[oi..oi + len] {
                        acc += x;
                    }
                } else {
                    for j in 0..len {
                        acc += a[oi + j * si];
                    }
                }
                out[oo] += acc;
            } else {
                for j in 0..len {
                    out[oo + j * so] += a[oi + j * si];
                }
            }
        });
        Tensor { shape: target.to_vec(), data: out }
    }

    pub fn sum_all(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean_all(&self) -> T {
        self.sum_all() / T::from_usize(self.numel().max(1)).unwrap()
    }

    /// 2-D matrix product with optional transposition of either operand.
    pub fn matmul(&self, trans_a: bool, other: &Self, trans_b: bool) -> Self {
        assert!(self.ndim() == 2 && other.ndim() == 2, "matmul needs 2-D operands");
        let mut la = MatLayout::row_major(self.shape[0], self.shape[1]);
        let mut lb = MatLayout::row_major(other.shape[0], other.shape[1]);
        if trans_a {
            la = la.t();
        }
        if trans_b {
            lb = lb.t();
        }
        assert_eq!(la.cols, lb.rows, "matmul {:?} x {:?}", self.shape, other.shape);
        let out = gemm_new(&self.data, la, &other.data, lb);
        Tensor { shape: vec![la.rows, lb.cols], data: out }
    }

    pub fn transpose2d(&self) -> Self {
        assert_eq!(self.ndim(), 2);
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = Vec::with_capacity(r * c);
        for j in 0..c {
            out.extend((0..r).map(|i| self.data[i * c + j]));
        }
        Tensor { shape: vec![c, r], data: out }
    }

    fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
        (numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..]))
    }

    pub fn concat(parts: &[&Self], axis: usize) -> Self {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = parts[0].shape();
        let mut shape = first.to_vec();
        shape[axis] = 0;
        for p in parts {
            assert_eq!(p.ndim(), first.len());
            for (i, (&a, &b)) in p.shape().iter().zip(first).enumerate() {
                assert!(i == axis || a == b, "concat shape mismatch {:?} vs {first:?}", p.shape());
            }
            shape[axis] += p.shape()[axis];
        }
        let (outer, _, inner) = Self::split_at_axis(&shape, axis);
        let mut out = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape()[axis] * inner;
                out.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        Tensor { shape, data: out }
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Self {
        let (outer, d, inner) = Self::split_at_axis(&self.shape, axis);
        assert!(start + len <= d, "narrow {start}+{len} out of {d}");
        let mut shape = self.shape.clone();
        shape[axis] = len;
        let mut out = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            let base = o * d * inner + start * inner;
            out.extend_from_slice(&self.data[base..base + len * inner]);
        }
        Tensor { shape, data: out }
    }

    /// Embeds `self` into zeros of `full_shape` at `start` along `axis`.
    pub fn unnarrow(&self, full_shape: &[usize], axis: usize, start: usize) -> Self {
        let (outer, d, inner) = Self::split_at_axis(full_shape, axis);
        let len = self.shape[axis];
        assert!(start + len <= d);
        let mut out = vec![T::zero(); numel(full_shape)];
        for o in 0..outer {
            let dst = o * d * inner + start * inner;
            let src = o * len * inner;
            out[dst..dst + len * inner].copy_from_slice(&self.data[src..src + len * inner]);
        }
        Tensor { shape: full_shape.to_vec(), data: out }
    }

    /// Numerically stable log-softmax along `axis`.
    pub fn log_softmax(&self, axis: usize) -> Self {
        let (outer, c, inner) = Self::split_at_axis(&self.shape, axis);
        let mut out = vec![T::zero(); self.data.len()];
        let mut max = vec![T::zero(); inner];
        let mut sum = vec![T::zero(); inner];
        for o in 0..outer {
            let x = &self.data[o * c * inner..(o + 1) * c * inner];
            let y = &mut out[o * c * inner..(o + 1) * c * inner];
            max.fill(T::neg_infinity());
            for k in 0..c {
                for (m, &v) in max.iter_mut().zip(&x[k * inner..(k + 1) * inner]) {
                    *m = m.max(v);
                }
            }
            sum.fill(T::zero());
            for k in 0..c {
                for ((s, &v), &m) in sum.iter_mut().zip(&x[k * inner..(k + 1) * inner]).zip(&max) {
                    *s += (v - m).exp();
                }
            }
            for s in sum.iter_mut() {
                *s = s.ln();
            }
            for k in 0..c {
                for i in 0..inner {
                    y[k * inner + i] = x[k * inner + i] - max[i] - sum[i];
                }
            }
        }
        Tensor { shape: self.shape.clone(), data: out }
    }

    /// Index of the largest entry along axis 1 of an `(N, C, ...)` tensor.
    pub fn argmax_axis1(&self) -> Vec<usize> {
        let (outer, c, inner) = Self::split_at_axis(&self.shape, 1);
        let mut out = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = 0;
                let mut best_v = T::neg_infinity();
                for k in 0..c {
                    let v = self.data[o * c * inner + k * inner + i];
                    if v > best_v {
                        best_v = v;
                        best = k;
                    }
                }
                out[o * inner + i] = best;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_add_matches_manual() {
        let a = Tensor::<f64>::from_fn(&[2, 3, 4], |i| i as f64);
        let b = Tensor::<f64>::from_fn(&[3, 1], |i| 100.0 * i as f64);
        let c = a.zip_with(&b, |x, y| x + y);
        assert_eq!(c.shape(), &[2, 3, 4]);
        for n in 0..2 {
            for i in 0..3 {
                for j in 0..4 {
                    let idx = n * 12 + i * 4 + j;
                    assert_eq!(c.data()[idx], idx as f64 + 100.0 * i as f64);
                }
            }
        }
    }

    #[test]
    fn sum_to_inverts_broadcast_counts() {
        let ones = Tensor::<f32>::ones(&[1, 3, 1, 1]);
        let big = ones.broadcast_to(&[2, 3, 4, 5]);
        let back = big.sum_to(&[1, 3, 1, 1]);
        assert!(back.data().iter().all(|&x| x == 40.0));
        assert_eq!(big.sum_to(&[]).item(), 120.0);
        assert_eq!(big.sum_to(&[5]).data(), &[24.0; 5]);
    }

    #[test]
    fn narrow_unnarrow_concat() {
        let a = Tensor::<f32>::from_fn(&[2, 5, 3], |i| i as f32);
        let parts = [a.narrow(1, 0, 2), a.narrow(1, 2, 3)];
        let joined = Tensor::concat(&[&parts[0], &parts[1]], 1);
        assert_eq!(joined, a);
        let padded = parts[1].unnarrow(&[2, 5, 3], 1, 2);
        assert_eq!(padded.narrow(1, 2, 3), parts[1]);
        assert_eq!(padded.narrow(1, 0, 2).sum_all(), 0.0);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let x = Tensor::<f64>::from_fn(&[2, 4, 3], |i| (i as f64 * 0.37).sin() * 5.0);
        let y = x.log_softmax(1);
        for o in 0..2 {
            for i in 0..3 {
                let s: f64 = (0..4).map(|k| y.data()[o * 12 + k * 3 + i].exp()).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_transposes() {
        let a = Tensor::<f64>::from_fn(&[2, 3], |i| i as f64);
        let b = Tensor::<f64>::from_fn(&[3, 2], |i| 1.0 + i as f64);
        let ab = a.matmul(false, &b, false);
        assert_eq!(ab.data(), &[13.0, 16.0, 40.0, 52.0]);
        let abt = a.transpose2d().matmul(true, &b.transpose2d(), true);
        assert_eq!(abt, ab);
    }
}
