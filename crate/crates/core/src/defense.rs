//! Training procedures (clean, adversarial with PGD or dual-perturbation
//! inner attacks, Gaussian augmentation) and smoothed prediction with
//! abstention.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::attack::{mix_seed, AttackConfig, Attacker};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{adam_step, argmax, Architecture, ClassifierParams, OptimizerState};
use crate::salience::{MaskPair, SalienceModel};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    None,
    Pgd,
    Dual,
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "clean" => Ok(AttackKind::None),
            "pgd" => Ok(AttackKind::Pgd),
            "dual" => Ok(AttackKind::Dual),
            other => Err(Error::Config(format!("unknown attack kind {other:?} (expected none|pgd|dual)"))),
        }
    }
}

/// Where training-time foreground masks come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskSource {
    GroundTruth,
    Fixation,
}

impl std::str::FromStr for MaskSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" | "ground-truth" | "segmentation" => Ok(MaskSource::GroundTruth),
            "fixation" => Ok(MaskSource::Fixation),
            other => Err(Error::Config(format!("unknown mask source {other:?} (expected gt|fixation)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Multiplier applied at each epoch listed in `decay_epochs`.
    pub lr_decay: f32,
    pub decay_epochs: Vec<usize>,
    pub attack: AttackKind,
    pub attack_cfg: AttackConfig,
    pub mask_source: MaskSource,
    /// Attack budgets grow linearly from zero over this many epochs; zero
    /// trains at full strength from the first batch.
    pub ramp_epochs: usize,
    /// Std of Gaussian augmentation noise; zero disables it.
    pub noise_sigma: f32,
    pub seed: u64,
}

impl TrainConfig {
    pub fn clean(epochs: usize, batch_size: usize, lr: f32, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            lr,
            lr_decay: 0.1,
            decay_epochs: Vec::new(),
            attack: AttackKind::None,
            attack_cfg: AttackConfig::pgd(crate::attack::Norm::L2, 0.0, 1),
            mask_source: MaskSource::GroundTruth,
            ramp_epochs: 0,
            noise_sigma: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("decay epochs must be strictly increasing".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise σ must be nonnegative".into()));
        }
        if self.attack != AttackKind::None {
            self.attack_cfg.validate()?;
        }
        Ok(())
    }

    /// Fraction of the attack budget used for batch `step` (counted from zero
    /// across epochs).
    pub fn budget_at(&self, step: usize, batches_per_epoch: usize) -> f32 {
        let total = self.ramp_epochs * batches_per_epoch;
        if step >= total {
            1.0
        } else {
            (step + 1) as f32 / total as f32
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f32 {
        let drops = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.lr * self.lr_decay.powi(drops as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f32,
    pub clean_acc: f32,
}

/// Trained parameters plus one log row per epoch.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ClassifierParams,
    pub log: Vec<EpochLog>,
}

/// Foreground masks for every image of a dataset.
pub fn dataset_masks(data: &Dataset, source: MaskSource, salience: &SalienceModel) -> Result<Vec<MaskPair>> {
    (0..data.len())
        .map(|i| match source {
            MaskSource::GroundTruth => {
                let m = data
                    .mask(i)
                    .ok_or_else(|| Error::Dataset("ground-truth masks requested but dataset has none".into()))?;
                MaskPair::from_foreground(&m)
            }
            MaskSource::Fixation => salience.fixation_masks(&data.image(i)),
        })
        .collect()
}

const LOG_SUBSET: usize = 256;

/// Minibatch Adam training; `cfg.attack` selects the inner maximization and
/// `cfg.noise_sigma` the Gaussian augmentation.
pub fn train(data: &Dataset, arch: &Architecture, cfg: &TrainConfig, salience: &SalienceModel) -> Result<TrainOutcome> {
    cfg.validate()?;
    train_from(data, ClassifierParams::init(arch, cfg.seed)?, cfg, salience)
}

/// As [`train`], but starting from existing parameters (for example a clean
/// model that adversarial training then fine-tunes).
pub fn train_from(
    data: &Dataset,
    start: ClassifierParams,
    cfg: &TrainConfig,
    salience: &SalienceModel,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let arch = &start.arch;
    if data.is_empty() {
        return Err(Error::Dataset("cannot train on an empty dataset".into()));
    }
    if data.image_shape() != arch.input {
        return Err(Error::Shape {
            op: "train",
            detail: format!("dataset images {:?} vs architecture input {:?}", data.image_shape(), arch.input),
        });
    }
    let masks = match cfg.attack {
        AttackKind::Dual => Some(dataset_masks(data, cfg.mask_source, salience)?),
        _ => None,
    };
    let mut params = start;
    let mut state = OptimizerState::new(&params, cfg.lr);
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 1));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let log_idx: Vec<usize> = (0..data.len().min(LOG_SUBSET)).collect();
    let (log_x, log_y) = data.batch(&log_idx);
    let mut log = Vec::with_capacity(cfg.epochs);
    let batches = data.len().div_ceil(cfg.batch_size);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        state.lr = cfg.lr_at(epoch);
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let frac = cfg.budget_at(step, batches);
            step += 1;
            let (mut batch, labels) = match cfg.attack {
                AttackKind::None => data.batch(chunk),
                kind => {
                    let sal = salience;
                    let atk = Attacker::new(&params, sal);
                    let mut images = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        let x = data.image(i);
                        let mut acfg = cfg.attack_cfg.for_sample(epoch * data.len() + i);
                        if frac < 1.0 {
                            acfg = acfg.scaled(frac);
                        }
                        let adv = match kind {
                            AttackKind::Pgd => atk.pgd_attack(&x, data.labels[i], &acfg)?,
                            _ => atk.dual_attack(&x, data.labels[i], &masks.as_ref().unwrap()[i], &acfg)?,
                        };
                        images.push(adv.select(0));
                    }
                    (Tensor::stack(&images)?, chunk.iter().map(|&i| data.labels[i]).collect())
                }
            };
            if cfg.noise_sigma > 0.0 {
                let s = cfg.noise_sigma;
                for v in batch.data_mut() {
                    *v = (*v + s * noise_rng.sample::<f32, _>(StandardNormal)).clamp(0.0, 1.0);
                }
            }
            let (loss, grads) = params.loss_and_grads(&batch, &labels)?;
            loss_sum += loss as f64 * chunk.len() as f64;
            adam_step(&mut params.tensors, &grads, &mut state)?;
        }
        let pred = params.predict_class(&log_x)?;
        let correct = pred.iter().zip(&log_y).filter(|(a, b)| a == b).count();
        let row = EpochLog {
            epoch,
            loss: (loss_sum / data.len() as f64) as f32,
            clean_acc: correct as f32 / log_y.len() as f32,
        };
        log::info!("epoch {} loss {:.4} clean-acc {:.3}", row.epoch, row.loss, row.clean_acc);
        log.push(row);
    }
    Ok(TrainOutcome { params, log })
}

pub fn clean_train(data: &Dataset, arch: &Architecture, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let cfg = TrainConfig { attack: AttackKind::None, noise_sigma: 0.0, ..cfg.clone() };
    train(data, arch, &cfg, &SalienceModel::Dog)
}

pub fn adv_train(data: &Dataset, arch: &Architecture, cfg: &TrainConfig, salience: &SalienceModel) -> Result<TrainOutcome> {
    if cfg.attack == AttackKind::None {
        return Err(Error::Config("adversarial training needs attack kind pgd or dual".into()));
    }
    train(data, arch, cfg, salience)
}

pub fn rs_train(data: &Dataset, arch: &Architecture, cfg: &TrainConfig, sigma: f32) -> Result<TrainOutcome> {
    let cfg = TrainConfig { attack: AttackKind::None, noise_sigma: sigma, ..cfg.clone() };
    train(data, arch, &cfg, &SalienceModel::Dog)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prediction {
    Class(usize),
    Abstain,
}

impl Prediction {
    pub fn is(&self, label: usize) -> bool {
        *self == Prediction::Class(label)
    }
}

/// Two-sided exact binomial test p-value for `k` successes in `n` trials
/// under success probability ½.
pub fn binomial_two_sided_p(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let hi = k.max(n - k);
    if 2 * hi == n {
        return 1.0;
    }
    // ln C(n, i) accumulated incrementally from i = n downward.
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_c = 0.0f64;
    let mut tail = 0.0f64;
    for i in (hi..=n).rev() {
        tail += (ln_c + ln_half_n).exp();
        // C(n, i-1) = C(n, i) · i / (n - i + 1)
        if i > 0 {
            ln_c += (i as f64).ln() - ((n - i + 1) as f64).ln();
        }
    }
    (2.0 * tail).min(1.0)
}

/// A base classifier wrapped with Gaussian-noise majority voting.
#[derive(Clone, Debug)]
pub struct SmoothedClassifier {
    pub base: ClassifierParams,
    pub sigma: f32,
    pub copies: usize,
    pub abstain_alpha: f64,
}

impl SmoothedClassifier {
    pub fn new(base: ClassifierParams, sigma: f32, copies: usize) -> Self {
        SmoothedClassifier { base, sigma, copies, abstain_alpha: 0.001 }
    }

    /// Class counts over `copies` noisy versions of one 1×C×H×W image.
    pub fn vote_counts(&self, x: &Tensor, seed: u64) -> Result<Vec<usize>> {
        if self.copies == 0 {
            return Err(Error::invalid("rs_predict", "need at least one copy"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per = x.len();
        let mut data = Vec::with_capacity(per * self.copies);
        for _ in 0..self.copies {
            data.extend(x.data().iter().map(|&v| v + self.sigma * rng.sample::<f32, _>(StandardNormal)));
        }
        let mut shape = x.shape().to_vec();
        shape[0] = self.copies;
        let logits = self.base.predict_logits(&Tensor::new(shape, data)?)?;
        let mut counts = vec![0usize; self.base.classes()];
        for row in logits.data().chunks(self.base.classes()) {
            counts[argmax(row)] += 1;
        }
        Ok(counts)
    }

    pub fn predict(&self, x: &Tensor, seed: u64) -> Result<Prediction> {
        let counts = self.vote_counts(x, seed)?;
        Ok(decide(&counts, self.copies, self.abstain_alpha))
    }
}

/// Majority class if the top-two counts differ significantly; a single
/// copy never abstains.
pub fn decide(counts: &[usize], copies: usize, alpha: f64) -> Prediction {
    let top = argmax_usize(counts);
    if copies == 1 {
        return Prediction::Class(top);
    }
    let m1 = counts[top];
    let m2 = counts
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &c)| c)
        .max()
        .unwrap_or(0);
    if binomial_two_sided_p(m1 as u64, (m1 + m2) as u64) <= alpha {
        Prediction::Class(top)
    } else {
        Prediction::Abstain
    }
}

fn argmax_usize(v: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in v.iter().enumerate() {
        if c > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layer;

    fn two_point() -> (Dataset, Architecture) {
        let images = Tensor::new(vec![2, 1, 2, 2], vec![0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.9, 0.9]).unwrap();
        let d = Dataset { images, labels: vec![0, 1], masks: None, classes: 2 };
        let arch = Architecture { input: [1, 2, 2], layers: vec![Layer::Dense { out: 2 }], classes: 2 };
        (d, arch)
    }

    #[test]
    fn loss_decreases_on_separable_toy() {
        let (d, arch) = two_point();
        let out = clean_train(&d, &arch, &TrainConfig::clean(20, 2, 0.05, 3)).unwrap();
        assert!(out.log.windows(2).all(|w| w[1].loss < w[0].loss), "{:?}", out.log);
        assert_eq!(out.log.last().unwrap().clean_acc, 1.0);
    }

    #[test]
    fn deterministic_training() {
        let (d, arch) = two_point();
        let cfg = TrainConfig::clean(3, 1, 0.01, 8);
        assert_eq!(clean_train(&d, &arch, &cfg).unwrap().params, clean_train(&d, &arch, &cfg).unwrap().params);
    }

    #[test]
    fn empty_dataset_rejected() {
        let (d, arch) = two_point();
        let empty = d.subset(&[]);
        assert!(matches!(
            clean_train(&empty, &arch, &TrainConfig::clean(1, 1, 0.01, 0)),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn schedule_decays() {
        let cfg = TrainConfig { decay_epochs: vec![2, 4], ..TrainConfig::clean(6, 1, 1.0, 0) };
        assert_eq!(cfg.lr_at(0), 1.0);
        assert!((cfg.lr_at(2) - 0.1).abs() < 1e-7);
        assert!((cfg.lr_at(5) - 0.01).abs() < 1e-8);
        let bad = TrainConfig { decay_epochs: vec![4, 4], ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn binomial_p_values() {
        assert_eq!(binomial_two_sided_p(50, 100), 1.0);
        // All-agree: 2·2⁻¹⁰⁰.
        let p = binomial_two_sided_p(100, 100);
        assert!((p / (2.0 * 0.5f64.powi(100)) - 1.0).abs() < 1e-9);
        // n = 3, k = 3: P = 2·(1/8).
        assert!((binomial_two_sided_p(3, 3) - 0.25).abs() < 1e-12);
        assert!((binomial_two_sided_p(0, 3) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn decision_rules() {
        assert_eq!(decide(&[0, 1, 0], 1, 0.001), Prediction::Class(1));
        assert_eq!(decide(&[100, 0], 100, 0.001), Prediction::Class(0));
        assert_eq!(decide(&[50, 50], 100, 0.001), Prediction::Abstain);
        assert_eq!(decide(&[0, 50, 50], 100, 0.001), Prediction::Abstain);
    }

    #[test]
    fn single_copy_never_abstains() {
        let (d, arch) = two_point();
        let base = ClassifierParams::init(&arch, 1).unwrap();
        let smooth = SmoothedClassifier::new(base, 0.5, 1);
        for s in 0..50 {
            assert!(matches!(smooth.predict(&d.image(0), s).unwrap(), Prediction::Class(_)));
        }
    }
}
