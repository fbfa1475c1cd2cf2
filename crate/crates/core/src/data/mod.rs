//! Labeled image datasets, their on-disk layout, and stratified splitting.

pub mod dpt;
pub mod synth;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kv;
use crate::tensor::Tensor;

pub use synth::{gen_synthetic, ShapeKind, SynthConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// N×C×H×W, values in [0,1].
    pub images: Tensor,
    pub labels: Vec<usize>,
    /// Optional N×H×W binary foreground masks.
    pub masks: Option<Tensor>,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Image extents as channels, height, width.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    /// The `i`-th image as a 1×C×H×W batch.
    pub fn image(&self, i: usize) -> Tensor {
        let [c, h, w] = self.image_shape();
        let per = c * h * w;
        Tensor::new(vec![1, c, h, w], self.images.data()[i * per..(i + 1) * per].to_vec()).unwrap()
    }

    /// The `i`-th ground-truth mask as H×W, if masks are present.
    pub fn mask(&self, i: usize) -> Option<Tensor> {
        self.masks.as_ref().map(|m| m.select(i))
    }

    /// Gather a batch of images and labels by index.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let [c, h, w] = self.image_shape();
        let per = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (Tensor::new(vec![indices.len(), c, h, w], data).unwrap(), labels)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let (images, labels) = self.batch(indices);
        let masks = self.masks.as_ref().map(|m| {
            let plane = m.shape()[1] * m.shape()[2];
            let mut data = Vec::with_capacity(indices.len() * plane);
            for &i in indices {
                data.extend_from_slice(&m.data()[i * plane..(i + 1) * plane]);
            }
            Tensor::new(vec![indices.len(), m.shape()[1], m.shape()[2]], data).unwrap()
        });
        Dataset { images, labels, masks, classes: self.classes }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.images.shape();
        if s.len() != 4 {
            return Err(Error::Dataset(format!("images must be N×C×H×W, got {s:?}")));
        }
        if s[0] != self.labels.len() {
            return Err(Error::Dataset(format!(
                "inconsistent sample count: {} images, {} labels",
                s[0],
                self.labels.len()
            )));
        }
        if self.images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Dataset("pixel values outside [0,1]".into()));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::Dataset(format!("label {bad} out of range for {} classes", self.classes)));
        }
        if let Some(m) = &self.masks {
            if m.shape() != [s[0], s[2], s[3]] {
                return Err(Error::Dataset(format!(
                    "inconsistent mask extents {:?} for images {s:?}",
                    m.shape()
                )));
            }
        }
        Ok(())
    }

    /// Write `images.dpt`, `labels.dpt`, optional `masks.dpt` and `meta.txt`.
    pub fn save(&self, dir: &Path, extra_meta: &[(&str, String)]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        dpt::save_tensor(&dir.join("images.dpt"), &self.images)?;
        let labels = Tensor::from_vec(self.labels.iter().map(|&l| l as f32).collect());
        dpt::save_tensor(&dir.join("labels.dpt"), &labels)?;
        let masks_path = dir.join("masks.dpt");
        match &self.masks {
            Some(m) => dpt::save_tensor(&masks_path, m)?,
            None if masks_path.exists() => std::fs::remove_file(&masks_path).map_err(|e| Error::io(&masks_path, e))?,
            None => {}
        }
        let mut meta = String::new();
        writeln!(meta, "classes={}", self.classes).unwrap();
        writeln!(meta, "samples={}", self.len()).unwrap();
        for (k, v) in extra_meta {
            writeln!(meta, "{k}={v}").unwrap();
        }
        let meta_path = dir.join("meta.txt");
        std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let meta_path = dir.join("meta.txt");
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta = kv::parse(&text)?;
        let classes: usize = kv::lookup(&meta, "classes")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Dataset(format!("{} lacks a valid classes= entry", meta_path.display())))?;
        let images = dpt::load_tensor(&dir.join("images.dpt"))?;
        let raw_labels = dpt::load_tensor(&dir.join("labels.dpt"))?;
        let labels = raw_labels
            .data()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Dataset(format!("label {v} is not a class index")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let masks_path = dir.join("masks.dpt");
        let masks = if masks_path.exists() { Some(dpt::load_tensor(&masks_path)?) } else { None };
        let ds = Dataset { images, labels, masks, classes };
        ds.validate()?;
        if let Some(n) = kv::lookup(&meta, "samples").and_then(|v| v.parse::<usize>().ok()) {
            if n != ds.len() {
                return Err(Error::Dataset(format!("meta says {n} samples, files hold {}", ds.len())));
            }
        }
        Ok(ds)
    }
}

/// Stratified split: per class, a seeded shuffle then the first
/// `round(fraction·count)` samples (clamped to keep one on each side) go to train.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction must be in (0,1), got {train_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..ds.classes {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        if members.len() < 2 {
            return Err(Error::Dataset(format!("class {class} has {} samples, need ≥ 2 to split", members.len())));
        }
        members.shuffle(&mut rng);
        let n_train = ((members.len() as f64 * train_fraction).round() as usize).clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}
