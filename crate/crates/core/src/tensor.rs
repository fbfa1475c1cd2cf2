//! Dense row-major `f32` tensors and the raw kernels the tape is built on.
//!
//! Every kernel runs a fixed loop order so forward results are bitwise
//! reproducible. Reductions (sums, norms, softmax normalizers) accumulate
//! in `f64`; the inner products of convolution and dense layers accumulate
//! in `f32` in a fixed order.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?}{:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?}[{} values]", self.shape, self.data.len())
        }
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {shape:?} holds {expected} values, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f32) -> Self {
        Tensor { shape: vec![], data: vec![value] }
    }

    pub fn from_vec(data: Vec<f32>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "zip_map",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    pub fn linf_norm(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Slice `index` along the leading axis, dropping that axis.
    pub fn select(&self, index: usize) -> Tensor {
        let inner: usize = self.shape[1..].iter().product();
        Tensor {
            shape: self.shape[1..].to_vec(),
            data: self.data[index * inner..(index + 1) * inner].to_vec(),
        }
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("stack", "no tensors to stack"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape(
                    "stack",
                    format!("{:?} vs {:?}", t.shape, first.shape),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }
}

/// Output extent of a convolution along one axis, or `None` if non-positive.
pub(crate) fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfold one C×H×W image into a (C·kh·kw) × (oh·ow) column matrix.
pub(crate) fn im2col(image: &[f32], g: &ConvGeom, cols: &mut [f32]) {
    let n_cols = g.col_cols();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * n_cols..(row + 1) * n_cols];
                for oi in 0..g.oh {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    let out_row = &mut dst[oi * g.ow..(oi + 1) * g.ow];
                    if ii < 0 || ii >= g.h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &image[(c * g.h + ii as usize) * g.w..][..g.w];
                    for (oj, v) in out_row.iter_mut().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        *v = if jj < 0 || jj >= g.w as isize { 0.0 } else { src[jj as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back onto the image gradient.
pub(crate) fn col2im(cols: &[f32], g: &ConvGeom, image: &mut [f32]) {
    let n_cols = g.col_cols();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * n_cols..(row + 1) * n_cols];
                for oi in 0..g.oh {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst = &mut image[(c * g.h + ii as usize) * g.w..][..g.w];
                    for oj in 0..g.ow {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && (jj as usize) < g.w {
                            dst[jj as usize] += src[oi * g.ow + oj];
                        }
                    }
                }
            }
        }
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`, i-k-j order.
pub(crate) fn matmul_acc(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ` (row-by-row dot products).
pub(crate) fn matmul_bt_acc(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            out[i * n + j] += dot(a_row, b_row);
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`.
pub(crate) fn matmul_at_acc(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// Dot product with eight fixed interleaved lanes, summed in a fixed order.
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        let xb = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            lanes[l] += xa[l] * xb[l];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7])) + tail
}

/// Truncated sampled 1-D Gaussian of the given radius, renormalized to sum 1.
pub fn gaussian_kernel(sigma: f32, radius: usize) -> Vec<f32> {
    let s = sigma as f64;
    let raw: Vec<f64> = (-(radius as i64)..=radius as i64)
        .map(|i| (-((i * i) as f64) / (2.0 * s * s)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / total) as f32).collect()
}

/// Separable blur of one H×W plane with edge-replicating borders.
pub(crate) fn blur_plane(src: &[f32], h: usize, w: usize, kernel: &[f32], dst: &mut [f32]) {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0f32; h * w];
    for i in 0..h {
        let row = &src[i * w..(i + 1) * w];
        for j in 0..w {
            let mut acc = 0.0f64;
            for (t, &k) in kernel.iter().enumerate() {
                let jj = (j as isize + t as isize - r).clamp(0, w as isize - 1) as usize;
                acc += (k * row[jj]) as f64;
            }
            tmp[i * w + j] = acc as f32;
        }
    }
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0f64;
            for (t, &k) in kernel.iter().enumerate() {
                let ii = (i as isize + t as isize - r).clamp(0, h as isize - 1) as usize;
                acc += (k * tmp[ii * w + j]) as f64;
            }
            dst[i * w + j] = acc as f32;
        }
    }
}

/// Adjoint of [`blur_plane`].
pub(crate) fn blur_plane_adjoint(grad: &[f32], h: usize, w: usize, kernel: &[f32], dst: &mut [f32]) {
    let r = (kernel.len() / 2) as isize;
    // Transpose of the vertical pass.
    let mut tmp = vec![0.0f32; h * w];
    for i in 0..h {
        for j in 0..w {
            let g = grad[i * w + j];
            for (t, &k) in kernel.iter().enumerate() {
                let ii = (i as isize + t as isize - r).clamp(0, h as isize - 1) as usize;
                tmp[ii * w + j] += k * g;
            }
        }
    }
    // Transpose of the horizontal pass.
    for i in 0..h {
        for j in 0..w {
            let g = tmp[i * w + j];
            for (t, &k) in kernel.iter().enumerate() {
                let jj = (j as isize + t as isize - r).clamp(0, w as isize - 1) as usize;
                dst[i * w + jj] += k * g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert_eq!(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap().len(), 6);
    }

    #[test]
    fn gaussian_kernel_sums_to_one() {
        for &(s, r) in &[(1.0, 2), (4.0, 12), (0.5, 1)] {
            let k = gaussian_kernel(s, r);
            assert_eq!(k.len(), 2 * r + 1);
            let total: f64 = k.iter().map(|&v| v as f64).sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn blur_adjoint_matches_inner_product() {
        let (h, w) = (5, 7);
        let k = gaussian_kernel(1.3, 3);
        let x: Vec<f32> = (0..h * w).map(|i| ((i * 37 % 11) as f32) / 11.0).collect();
        let y: Vec<f32> = (0..h * w).map(|i| ((i * 13 % 7) as f32) / 7.0 - 0.5).collect();
        let mut bx = vec![0.0; h * w];
        blur_plane(&x, h, w, &k, &mut bx);
        let mut aty = vec![0.0; h * w];
        blur_plane_adjoint(&y, h, w, &k, &mut aty);
        let lhs: f64 = bx.iter().zip(&y).map(|(&a, &b)| (a * b) as f64).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(&a, &b)| (a * b) as f64).sum();
        assert!((lhs - rhs).abs() < 1e-4, "{lhs} vs {rhs}");
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f32> = (0..19).map(|i| i as f32).collect();
        let expected: f32 = a.iter().map(|v| v * v).sum();
        assert_eq!(dot(&a, &a), expected);
    }
}
