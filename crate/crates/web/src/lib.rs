//! WebAssembly bindings for the interactive demo in `www/`.
//!
//! A [`Lab`] owns a small synthetic dataset and a classifier trained in the
//! page. The page can browse images with their salience maps and masks,
//! train the classifier a few minibatches at a time, and run the
//! dual-perturbation attack on the selected image. Image buffers come back
//! as RGBA bytes ready for `ImageData`.

use dualpert::attack::{masked_norm, AttackConfig, Attacker, Norm};
use dualpert::data::synth::{gen_synthetic, ShapeKind, SynthConfig};
use dualpert::data::{split, Dataset};
use dualpert::model::{adam_step, Architecture, ClassifierParams, OptimizerState};
use dualpert::salience::{MaskPair, SalienceModel};
use dualpert::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

const BATCH: usize = 32;

fn js(e: dualpert::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// RGBA bytes of a 1×3×H×W image in `[0,1]`.
pub fn image_rgba(x: &Tensor) -> Vec<u8> {
    let s = x.shape();
    let plane = s[2] * s[3];
    let d = x.data();
    let mut out = Vec::with_capacity(4 * plane);
    for p in 0..plane {
        for c in 0..3 {
            out.push((d[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}

/// Heat map (black, red, yellow, white) of nonnegative values scaled by their max.
pub fn heat_rgba(values: &[f32]) -> Vec<u8> {
    let max = values.iter().copied().fold(0.0f32, f32::max);
    let mut out = Vec::with_capacity(4 * values.len());
    for &v in values {
        let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
        let r = (3.0 * t).min(1.0);
        let g = (3.0 * t - 1.0).clamp(0.0, 1.0);
        let b = (3.0 * t - 2.0).clamp(0.0, 1.0);
        out.extend([r, g, b].map(|c| (c * 255.0).round() as u8));
        out.push(255);
    }
    out
}

/// Ground truth in green, fixation mask in magenta, overlap in white.
pub fn mask_rgba(truth: &MaskPair, fixation: &MaskPair) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * truth.foreground.len());
    for (&t, &f) in truth.foreground.data().iter().zip(fixation.foreground.data()) {
        let (t, f) = (t > 0.5, f > 0.5);
        let px = match (t, f) {
            (true, true) => [255, 255, 255],
            (true, false) => [40, 200, 80],
            (false, true) => [220, 60, 200],
            (false, false) => [20, 20, 28],
        };
        out.extend(px);
        out.push(255);
    }
    out
}

/// Perturbation magnitude per pixel, `Σ_c |δ_c|`, as a heat map.
pub fn perturbation_rgba(delta: &Tensor) -> Vec<u8> {
    let s = delta.shape();
    let plane = s[2] * s[3];
    let mut mag = vec![0.0f32; plane];
    for chunk in delta.data().chunks(plane) {
        for (m, &d) in mag.iter_mut().zip(chunk) {
            *m += d.abs();
        }
    }
    heat_rgba(&mag)
}

/// Summary of one attack on the selected image.
#[wasm_bindgen]
#[derive(Clone, Copy, Debug)]
pub struct AttackReport {
    pub label: u32,
    pub clean_prediction: u32,
    pub adversarial_prediction: u32,
    pub clean_fs: f32,
    pub adversarial_fs: f32,
    pub foreground_norm: f64,
    pub background_norm: f64,
}

#[wasm_bindgen]
pub struct Lab {
    train: Dataset,
    test: Dataset,
    selected: usize,
    params: ClassifierParams,
    optimizer: OptimizerState,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    batches_done: usize,
    salience: SalienceModel,
    adversarial: Option<Tensor>,
}

#[wasm_bindgen]
impl Lab {
    /// Generate `samples` synthetic images (three quarters for training)
    /// and an untrained classifier.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, samples: u32) -> Result<Lab, JsError> {
        let seed = seed as u64;
        let cfg = SynthConfig { samples: samples as usize, seed, ..SynthConfig::default() };
        let data = gen_synthetic(&cfg).map_err(js)?;
        let (train, test) = split(&data, 0.75, seed).map_err(js)?;
        let params = ClassifierParams::init(&Architecture::reference(cfg.classes), seed).map_err(js)?;
        let optimizer = OptimizerState::new(&params, 2e-3);
        let order = (0..train.len()).collect();
        Ok(Lab {
            train,
            test,
            selected: 0,
            params,
            optimizer,
            rng: ChaCha8Rng::seed_from_u64(seed),
            order,
            cursor: usize::MAX,
            batches_done: 0,
            salience: SalienceModel::Dog,
            adversarial: None,
        })
    }

    pub fn size(&self) -> u32 {
        self.test.image_shape()[2] as u32
    }

    pub fn test_len(&self) -> u32 {
        self.test.len() as u32
    }

    pub fn class_name(&self, k: u32) -> String {
        ShapeKind::ALL.get(k as usize).map_or_else(|| format!("class {k}"), |s| format!("{s:?}").to_lowercase())
    }

    /// Select a test image; clears the last adversarial example.
    pub fn select(&mut self, index: u32) {
        self.selected = (index as usize).min(self.test.len() - 1);
        self.adversarial = None;
    }

    pub fn selected(&self) -> u32 {
        self.selected as u32
    }

    pub fn label(&self) -> u32 {
        self.test.labels[self.selected] as u32
    }

    fn image(&self) -> Tensor {
        self.test.image(self.selected)
    }

    fn truth(&self) -> Result<MaskPair, JsError> {
        let m = self.test.mask(self.selected).ok_or_else(|| JsError::new("dataset has no masks"))?;
        MaskPair::from_foreground(&m).map_err(js)
    }

    pub fn image_rgba(&self) -> Vec<u8> {
        image_rgba(&self.image())
    }

    pub fn salience_rgba(&self) -> Result<Vec<u8>, JsError> {
        let map = self.salience.salience_map(&self.image()).map_err(js)?;
        Ok(heat_rgba(&map.density))
    }

    pub fn masks_rgba(&self) -> Result<Vec<u8>, JsError> {
        let fix = self.salience.fixation_masks(&self.image()).map_err(js)?;
        Ok(mask_rgba(&self.truth()?, &fix))
    }

    /// IoU between the fixation mask and the object mask of the selected image.
    pub fn mask_iou(&self) -> Result<f64, JsError> {
        let fix = self.salience.fixation_masks(&self.image()).map_err(js)?;
        Ok(self.truth()?.intersection_over_union(&fix))
    }

    /// Run `count` Adam minibatches; returns the mean loss.
    pub fn train_batches(&mut self, count: u32) -> Result<f32, JsError> {
        let mut total = 0.0f64;
        for _ in 0..count {
            if self.cursor >= self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let end = (self.cursor + BATCH).min(self.order.len());
            let (x, y) = self.train.batch(&self.order[self.cursor..end]);
            self.cursor = end;
            let (loss, grads) = self.params.loss_and_grads(&x, &y).map_err(js)?;
            adam_step(&mut self.params.tensors, &grads, &mut self.optimizer).map_err(js)?;
            total += loss as f64;
            self.batches_done += 1;
        }
        Ok((total / count.max(1) as f64) as f32)
    }

    pub fn epochs_done(&self) -> f64 {
        self.batches_done as f64 * BATCH as f64 / self.train.len() as f64
    }

    /// Accuracy on the held-out images.
    pub fn test_accuracy(&self) -> Result<f64, JsError> {
        let pred = self.params.predict_class(&self.test.images).map_err(js)?;
        let hits = pred.iter().zip(&self.test.labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / self.test.len() as f64)
    }

    pub fn predict(&self) -> Result<u32, JsError> {
        Ok(self.params.predict_class(&self.image()).map_err(js)?[0] as u32)
    }

    /// Dual-perturbation attack on the selected image using its object mask
    /// (or the fixation mask when `use_fixation`).
    #[allow(clippy::too_many_arguments)]
    pub fn attack(
        &mut self,
        eps_fg: f32,
        eps_bg: f32,
        lambda: f32,
        steps: u32,
        linf: bool,
        use_fixation: bool,
        seed: u32,
    ) -> Result<AttackReport, JsError> {
        let x = self.image();
        let y = self.test.labels[self.selected];
        let masks = if use_fixation {
            self.salience.fixation_masks(&x).map_err(js)?
        } else {
            self.truth()?
        };
        let norm = if linf { Norm::Linf } else { Norm::L2 };
        let cfg = AttackConfig::dual(norm, eps_fg, eps_bg, lambda, steps as usize).with_seed(seed as u64);
        let atk = Attacker::new(&self.params, &self.salience);
        let adv = atk.dual_attack(&x, y, &masks, &cfg).map_err(js)?;
        let delta = adv.zip_map(&x, |a, b| a - b).map_err(js)?;
        let report = AttackReport {
            label: y as u32,
            clean_prediction: self.predict()?,
            adversarial_prediction: self.params.predict_class(&adv).map_err(js)?[0] as u32,
            clean_fs: self.salience.foreground_score(&x, &masks).map_err(js)?,
            adversarial_fs: self.salience.foreground_score(&adv, &masks).map_err(js)?,
            foreground_norm: masked_norm(&delta, &masks.foreground, norm),
            background_norm: masked_norm(&delta, &masks.background, norm),
        };
        self.adversarial = Some(adv);
        Ok(report)
    }

    /// RGBA of the last adversarial image (the clean image if none).
    pub fn adversarial_rgba(&self) -> Vec<u8> {
        image_rgba(self.adversarial.as_ref().unwrap_or(&self.image()))
    }

    pub fn perturbation_rgba(&self) -> Result<Vec<u8>, JsError> {
        let x = self.image();
        let adv = self.adversarial.clone().unwrap_or_else(|| x.clone());
        let delta = adv.zip_map(&x, |a, b| a - b).map_err(js)?;
        Ok(perturbation_rgba(&delta))
    }
}
