//! Differentiable salience density, foreground score, and foreground/background
//! partitions.
//!
//! The default density is a difference-of-Gaussians contrast energy,
//! `e = Σ_c (blur(x, 1) − blur(x, 4))²`, normalized with a small floor so it
//! stays strictly positive: `s = (e + κ) / Σ(e + κ)`. A tiny learned fixation
//! network can be trained on ground-truth masks and used in its place; its
//! output passes through the same normalization.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{dpt, Dataset};
use crate::error::{Error, Result};
use crate::model::{adam_step, OptimizerState};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const SIGMA_FINE: f32 = 1.0;
pub const SIGMA_COARSE: f32 = 4.0;
pub const DENSITY_FLOOR: f32 = 1e-8;

/// Blur radius used for a given σ: three standard deviations, at least 1.
pub fn blur_radius(sigma: f32) -> usize {
    ((3.0 * sigma).ceil() as usize).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SalienceKind {
    Dog,
    Learned,
}

impl std::str::FromStr for SalienceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dog" => Ok(SalienceKind::Dog),
            "learned" => Ok(SalienceKind::Learned),
            other => Err(Error::Config(format!("unknown salience method {other:?} (expected dog|learned)"))),
        }
    }
}

/// Per-pixel density over an H×W grid, summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SalienceMap {
    pub height: usize,
    pub width: usize,
    pub density: Vec<f32>,
}

impl SalienceMap {
    pub fn min(&self) -> f32 {
        self.density.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.density.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn total(&self) -> f64 {
        self.density.iter().map(|&v| v as f64).sum()
    }
}

/// Complementary binary foreground and background masks over H×W.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPair {
    pub foreground: Tensor,
    pub background: Tensor,
}

impl MaskPair {
    /// Binarize with `> 0.5 → foreground`.
    pub fn from_foreground(values: &Tensor) -> Result<Self> {
        if values.ndim() != 2 {
            return Err(Error::shape("MaskPair", format!("expected H×W, got {:?}", values.shape())));
        }
        let foreground = values.map(|v| if v > 0.5 { 1.0 } else { 0.0 });
        let background = foreground.map(|v| 1.0 - v);
        Ok(MaskPair { foreground, background })
    }

    pub fn all_foreground(height: usize, width: usize) -> Self {
        MaskPair {
            foreground: Tensor::full(&[height, width], 1.0),
            background: Tensor::zeros(&[height, width]),
        }
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.foreground.shape()[0], self.foreground.shape()[1])
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.foreground.sum() / self.foreground.len() as f64
    }

    /// Masks repeated over `channels`, shaped 1×C×H×W.
    pub fn broadcast(&self, channels: usize) -> (Tensor, Tensor) {
        let (h, w) = self.extents();
        let rep = |m: &Tensor| {
            let mut data = Vec::with_capacity(channels * h * w);
            for _ in 0..channels {
                data.extend_from_slice(m.data());
            }
            Tensor::new(vec![1, channels, h, w], data).unwrap()
        };
        (rep(&self.foreground), rep(&self.background))
    }

    pub fn check_partition(&self) -> bool {
        self.foreground
            .data()
            .iter()
            .zip(self.background.data())
            .all(|(&f, &b)| f * b == 0.0 && f + b == 1.0 && (f == 0.0 || f == 1.0))
    }

    pub fn intersection_over_union(&self, other: &MaskPair) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.foreground.data().iter().zip(other.foreground.data()) {
            let (a, b) = (a > 0.5, b > 0.5);
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Tiny two-layer fixation predictor trained against foreground masks.
#[derive(Clone, Debug, PartialEq)]
pub struct FixationNet {
    /// conv1 kernel, conv1 bias, conv2 kernel, conv2 bias.
    pub params: Vec<Tensor>,
}

impl FixationNet {
    const HIDDEN: usize = 8;

    pub fn init(channels: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |shape: &[usize], fan_in: usize| {
            let b = (6.0 / fan_in as f64).sqrt() as f32;
            let n = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-b..b)).collect()).unwrap()
        };
        let k1 = uniform(&[Self::HIDDEN, channels, 5, 5], channels * 25);
        let k2 = uniform(&[1, Self::HIDDEN, 5, 5], Self::HIDDEN * 25);
        FixationNet {
            params: vec![k1, Tensor::zeros(&[Self::HIDDEN]), k2, Tensor::zeros(&[1])],
        }
    }

    fn energy(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let h1 = tape.conv2d(x, p[0], 1, 2)?;
        let h1 = tape.channel_bias(h1, p[1])?;
        let h1 = tape.relu(h1)?;
        let o = tape.conv2d(h1, p[2], 1, 2)?;
        let o = tape.channel_bias(o, p[3])?;
        let sq = tape.square(o)?;
        tape.sum_channels(sq)
    }

    /// Fit to ground-truth masks by minimizing the cross-entropy between the
    /// normalized mask and the predicted density. Returns per-epoch mean losses.
    pub fn train(&mut self, data: &Dataset, epochs: usize, batch: usize, lr: f32, seed: u64) -> Result<Vec<f32>> {
        let masks = data
            .masks
            .as_ref()
            .ok_or_else(|| Error::Dataset("learned salience needs ground-truth masks".into()))?;
        if data.is_empty() || batch == 0 {
            return Err(Error::Dataset("empty dataset or batch".into()));
        }
        let [_, h, w] = data.image_shape();
        let mut state = OptimizerState::for_shapes(self.params.iter().map(|t| t.shape()), lr);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0f64;
            for chunk in order.chunks(batch) {
                let (images, _) = data.batch(chunk);
                let mut target = Vec::with_capacity(chunk.len() * h * w);
                for &i in chunk {
                    let m = &masks.data()[i * h * w..(i + 1) * h * w];
                    let area: f64 = m.iter().map(|&v| v as f64).sum::<f64>().max(1.0);
                    target.extend(m.iter().map(|&v| (v as f64 / area) as f32));
                }
                let mut tape = Tape::new();
                let p: Vec<Var> = self.params.iter().map(|t| tape.leaf(t.clone())).collect();
                let x = tape.constant(images);
                let e = self.energy(&mut tape, &p, x)?;
                let s = tape.density(e, DENSITY_FLOOR)?;
                let log_s = tape.ln(s)?;
                let t = tape.constant(Tensor::new(vec![chunk.len(), h, w], target)?);
                let weighted = tape.mul(log_s, t)?;
                let sum = tape.reduce_sum(weighted)?;
                let loss = tape.scale(sum, -1.0 / chunk.len() as f32)?;
                total += tape.value(loss).item() as f64 * chunk.len() as f64;
                let grads = tape.backward(loss)?;
                let g: Vec<Tensor> = p.iter().map(|&v| grads.get(v).unwrap().clone()).collect();
                adam_step(&mut self.params, &g, &mut state)?;
            }
            history.push((total / data.len() as f64) as f32);
        }
        Ok(history)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        for t in &self.params {
            bytes.extend(dpt::encode(t));
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut rest = &bytes[..];
        let mut params = Vec::with_capacity(4);
        for _ in 0..4 {
            let (t, used) = dpt::decode_prefix(rest)
                .map_err(|source| Error::Format { path: path.to_path_buf(), source })?;
            params.push(t);
            rest = &rest[used..];
        }
        Ok(FixationNet { params })
    }
}

/// A salience model ready to evaluate.
#[derive(Clone, Debug, PartialEq)]
pub enum SalienceModel {
    Dog,
    Learned(FixationNet),
}

impl SalienceModel {
    pub fn kind(&self) -> SalienceKind {
        match self {
            SalienceModel::Dog => SalienceKind::Dog,
            SalienceModel::Learned(_) => SalienceKind::Learned,
        }
    }

    /// Record the density of an N×C×H×W batch; output is N×H×W.
    /// No pixel-range check, so noisy or perturbed inputs are accepted.
    pub fn record(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let energy = match self {
            SalienceModel::Dog => {
                let fine = tape.gaussian_blur(x, SIGMA_FINE, blur_radius(SIGMA_FINE))?;
                let coarse = tape.gaussian_blur(x, SIGMA_COARSE, blur_radius(SIGMA_COARSE))?;
                let band = tape.sub(fine, coarse)?;
                let sq = tape.square(band)?;
                tape.sum_channels(sq)?
            }
            SalienceModel::Learned(net) => {
                let p: Vec<Var> = net.params.iter().map(|t| tape.constant(t.clone())).collect();
                net.energy(tape, &p, x)?
            }
        };
        tape.density(energy, DENSITY_FLOOR)
    }

    /// Record `S = Σ_{i∈F} s_i` for a batch sharing one mask; output has one
    /// entry per sample.
    pub fn record_foreground_score(&self, tape: &mut Tape, x: Var, mask: &MaskPair) -> Result<Var> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 4 || (shape[2], shape[3]) != mask.extents() {
            return Err(Error::shape(
                "foreground_score",
                format!("image {:?} vs mask {:?}", shape, mask.extents()),
            ));
        }
        let s = self.record(tape, x)?;
        let (n, h, w) = (shape[0], shape[2], shape[3]);
        let mut fg = Vec::with_capacity(n * h * w);
        for _ in 0..n {
            fg.extend_from_slice(mask.foreground.data());
        }
        let fg = tape.constant(Tensor::new(vec![n, h, w], fg)?);
        let masked = tape.mul(s, fg)?;
        tape.reduce_sum(masked)
    }

    /// Density map of one C×H×W (or 1×C×H×W) image with values in [0,1].
    pub fn salience_map(&self, x: &Tensor) -> Result<SalienceMap> {
        let batch = as_batch(x)?;
        check_pixel_range(&batch)?;
        let mut tape = Tape::new();
        let v = tape.constant(batch);
        let s = self.record(&mut tape, v)?;
        let t = tape.value(s);
        Ok(SalienceMap { height: t.shape()[1], width: t.shape()[2], density: t.data().to_vec() })
    }

    /// Sum of salience density over the foreground mask.
    pub fn foreground_score(&self, x: &Tensor, mask: &MaskPair) -> Result<f32> {
        let batch = as_batch(x)?;
        check_pixel_range(&batch)?;
        let mut tape = Tape::new();
        let v = tape.constant(batch);
        let score = self.record_foreground_score(&mut tape, v, mask)?;
        Ok(tape.value(score).item())
    }

    /// Foreground score and its gradient with respect to the image.
    pub fn foreground_score_grad(&self, x: &Tensor, mask: &MaskPair) -> Result<(f32, Tensor)> {
        let batch = as_batch(x)?;
        let mut tape = Tape::new();
        let v = tape.leaf(batch);
        let score = self.record_foreground_score(&mut tape, v, mask)?;
        let mut g = tape.backward(score)?;
        Ok((tape.value(score).item(), g.take(v).unwrap()))
    }

    /// Threshold the density at `t = ½(s_min + s_max)`; pixels strictly
    /// above `t` form the foreground.
    pub fn fixation_masks(&self, x: &Tensor) -> Result<MaskPair> {
        let map = self.salience_map(x)?;
        Ok(threshold_masks(&map))
    }
}

/// Strict-threshold partition of a density map. A map with no pixel above
/// the threshold (a constant map) falls back to all-foreground.
pub fn threshold_masks(map: &SalienceMap) -> MaskPair {
    let t = fixation_threshold(map.min(), map.max());
    let fg: Vec<f32> = map.density.iter().map(|&s| if s > t { 1.0 } else { 0.0 }).collect();
    if fg.iter().all(|&v| v == 0.0) {
        log::warn!("salience map is constant; using an all-foreground mask");
        return MaskPair::all_foreground(map.height, map.width);
    }
    let fg = Tensor::new(vec![map.height, map.width], fg).unwrap();
    MaskPair::from_foreground(&fg).unwrap()
}

pub fn fixation_threshold(s_min: f32, s_max: f32) -> f32 {
    0.5 * (s_min + s_max)
}

/// Load a binary H×W mask tensor from a DPT file (`> 0.5 → foreground`).
pub fn masks_from_segmentation(path: &Path, height: usize, width: usize) -> Result<MaskPair> {
    let t = dpt::load_tensor(path)?;
    let t = match t.shape() {
        [h, w] => Tensor::new(vec![*h, *w], t.into_data())?,
        [1, h, w] => Tensor::new(vec![*h, *w], t.into_data())?,
        other => {
            return Err(Error::shape(
                "masks_from_segmentation",
                format!("{} holds {other:?}, expected H×W", path.display()),
            ))
        }
    };
    if t.shape() != [height, width] {
        return Err(Error::shape(
            "masks_from_segmentation",
            format!("mask extents {:?} do not match images {height}×{width}", t.shape()),
        ));
    }
    MaskPair::from_foreground(&t)
}

pub fn save_mask(path: &Path, mask: &MaskPair) -> Result<()> {
    dpt::save_tensor(path, &mask.foreground)
}

fn as_batch(x: &Tensor) -> Result<Tensor> {
    match x.ndim() {
        3 => {
            let mut shape = vec![1];
            shape.extend_from_slice(x.shape());
            x.clone().reshape(&shape)
        }
        4 if x.shape()[0] == 1 => Ok(x.clone()),
        _ => Err(Error::shape("salience_map", format!("expected one C×H×W image, got {:?}", x.shape()))),
    }
}

fn check_pixel_range(x: &Tensor) -> Result<()> {
    if let Some(v) = x.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid("salience_map", format!("pixel value {v} outside [0,1]")));
    }
    Ok(())
}
