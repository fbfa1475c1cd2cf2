mod common;

use common::*;
use dualpert::attack::{AttackConfig, Norm};
use dualpert::data::Dataset;
use dualpert::defense::*;
use dualpert::model::{Architecture, ClassifierParams, Layer};
use dualpert::salience::SalienceModel;
use dualpert::Tensor;
use rand::Rng;

fn toy_data(seed: u64, n: usize) -> Dataset {
    let mut r = rng(seed);
    let (c, h) = (3, 8);
    let mut images = Vec::with_capacity(n * c * h * h);
    let mut masks = Vec::with_capacity(n * h * h);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 3;
        let bright = 0.3 + 0.3 * label as f32;
        for _ in 0..c {
            for y in 0..h {
                for x in 0..h {
                    let inside = (2..6).contains(&y) && (2..6).contains(&x);
                    let base = if inside { bright } else { 0.1 };
                    images.push(base + r.random_range(-0.05..0.05));
                }
            }
        }
        for y in 0..h {
            for x in 0..h {
                masks.push(if (2..6).contains(&y) && (2..6).contains(&x) { 1.0 } else { 0.0 });
            }
        }
        labels.push(label);
    }
    Dataset {
        images: Tensor::new(vec![n, c, h, h], images).unwrap(),
        labels,
        masks: Some(Tensor::new(vec![n, h, h], masks).unwrap()),
        classes: 3,
    }
}

fn toy_arch() -> Architecture {
    Architecture {
        input: [3, 8, 8],
        layers: vec![
            Layer::Conv { out_channels: 4, kernel: 3, pad: 1 },
            Layer::Relu,
            Layer::AvgPool2,
            Layer::Dense { out: 3 },
        ],
        classes: 3,
    }
}

fn same_params(a: &ClassifierParams, b: &ClassifierParams) -> bool {
    a.tensors.iter().zip(&b.tensors).all(|(x, y)| x.data() == y.data())
}

#[test]
fn zero_noise_and_zero_budget_reduce_to_clean_training() {
    let data = toy_data(1, 60);
    let cfg = TrainConfig::clean(2, 8, 1e-2, 3);
    let clean = clean_train(&data, &toy_arch(), &cfg).unwrap();
    let rs = rs_train(&data, &toy_arch(), &cfg, 0.0).unwrap();
    assert!(same_params(&clean.params, &rs.params));
    for kind in [AttackKind::Pgd, AttackKind::Dual] {
        let adv_cfg = TrainConfig {
            attack: kind,
            attack_cfg: AttackConfig::dual(Norm::L2, 0.0, 0.0, 0.0, 3),
            ..cfg.clone()
        };
        let adv = adv_train(&data, &toy_arch(), &adv_cfg, &SalienceModel::Dog).unwrap();
        assert!(same_params(&clean.params, &adv.params), "{kind:?}");
    }
    let noisy = rs_train(&data, &toy_arch(), &cfg, 0.25).unwrap();
    assert!(!same_params(&clean.params, &noisy.params));
    let again = rs_train(&data, &toy_arch(), &cfg, 0.25).unwrap();
    assert!(same_params(&noisy.params, &again.params));
}

#[test]
fn adversarial_training_is_reproducible() {
    let data = toy_data(2, 30);
    let cfg = TrainConfig {
        attack: AttackKind::Dual,
        attack_cfg: AttackConfig::dual(Norm::L2, 0.2, 0.8, 0.5, 2),
        ramp_epochs: 1,
        ..TrainConfig::clean(2, 10, 1e-2, 7)
    };
    let a = adv_train(&data, &toy_arch(), &cfg, &SalienceModel::Dog).unwrap();
    let b = adv_train(&data, &toy_arch(), &cfg, &SalienceModel::Dog).unwrap();
    assert!(same_params(&a.params, &b.params));
    assert_eq!(a.log, b.log);
    let clean = clean_train(&data, &toy_arch(), &cfg).unwrap();
    assert!(!same_params(&a.params, &clean.params));
}

#[test]
fn budget_ramp_is_linear_then_full() {
    let cfg = TrainConfig { ramp_epochs: 2, ..TrainConfig::clean(5, 4, 1e-3, 0) };
    let f: Vec<f32> = (0..8).map(|s| cfg.budget_at(s, 3)).collect();
    for (s, v) in f.iter().enumerate().take(6) {
        assert!((v - (s + 1) as f32 / 6.0).abs() < 1e-7);
    }
    assert_eq!(&f[5..], &[1.0, 1.0, 1.0]);
    assert_eq!(TrainConfig::clean(5, 4, 1e-3, 0).budget_at(0, 3), 1.0);
}

#[test]
fn warm_start_continues_from_given_parameters() {
    let data = toy_data(3, 30);
    let two = clean_train(&data, &toy_arch(), &TrainConfig::clean(2, 10, 1e-2, 5)).unwrap();
    let one = clean_train(&data, &toy_arch(), &TrainConfig::clean(1, 10, 1e-2, 5)).unwrap();
    let cont = train_from(&data, one.params.clone(), &TrainConfig::clean(1, 10, 1e-2, 5), &SalienceModel::Dog).unwrap();
    // A fresh optimizer state and shuffle stream make this differ from two
    // uninterrupted epochs, but it must still move away from the start.
    assert!(!same_params(&cont.params, &one.params));
    assert!(!same_params(&cont.params, &two.params));
}

#[test]
fn serialization_preserves_accuracy() {
    let data = toy_data(4, 60);
    let out = clean_train(&data, &toy_arch(), &TrainConfig::clean(3, 8, 1e-2, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.dpt");
    out.params.save(&path).unwrap();
    let back = ClassifierParams::load(&path, &toy_arch()).unwrap();
    let (x, _) = data.batch(&(0..data.len()).collect::<Vec<_>>());
    assert_eq!(out.params.predict_class(&x).unwrap(), back.predict_class(&x).unwrap());
    assert!(ClassifierParams::load(&path, &Architecture::reference(3)).is_err());
}

/// Exact two-sided binomial p-value with integer arithmetic (n ≤ 120).
fn exact_p(k: u64, n: u64) -> f64 {
    let mut c = vec![1u128; n as usize + 1];
    for i in 1..=n as usize {
        c[i] = c[i - 1] * (n as u128 - i as u128 + 1) / i as u128;
    }
    let hi = k.max(n - k) as usize;
    if 2 * hi == n as usize {
        return 1.0;
    }
    let tail: u128 = c[hi..].iter().sum();
    (2.0 * tail as f64 / 2f64.powi(n as i32)).min(1.0)
}

#[test]
fn binomial_test_matches_exact_oracle() {
    for n in 0..=100u64 {
        for k in 0..=n {
            let got = binomial_two_sided_p(k, n);
            let want = if n == 0 { 1.0 } else { exact_p(k, n) };
            assert!((got - want).abs() <= 1e-12 + 1e-9 * want, "k={k} n={n}: {got} vs {want}");
        }
    }
}

#[test]
fn abstention_rules() {
    assert_eq!(decide(&[50, 50, 0], 100, 0.001), Prediction::Abstain);
    assert_eq!(decide(&[0, 100, 0], 100, 0.001), Prediction::Class(1));
    assert_eq!(decide(&[0, 0, 1], 1, 0.001), Prediction::Class(2));
    // Smallest top count that rejects equality at α=0.001 over 100 votes.
    let threshold = (50..=100).find(|&m| exact_p(m, 100) <= 0.001).unwrap() as usize;
    assert_eq!(decide(&[threshold, 100 - threshold], 100, 0.001), Prediction::Class(0));
    assert_eq!(decide(&[threshold - 1, 101 - threshold], 100, 0.001), Prediction::Abstain);
}

#[test]
fn single_copy_smoothing_never_abstains() {
    let model = ClassifierParams::init(&toy_arch(), 9).unwrap();
    let smoothed = SmoothedClassifier::new(model, 0.5, 1);
    let mut r = rng(9);
    for seed in 0..200 {
        let x = Tensor::new(vec![1, 3, 8, 8], uniform(&mut r, 192, 0.0, 1.0)).unwrap();
        assert!(matches!(smoothed.predict(&x, seed).unwrap(), Prediction::Class(_)));
    }
}

#[test]
fn vote_counts_sum_to_copies_and_repeat() {
    let model = ClassifierParams::init(&toy_arch(), 10).unwrap();
    let smoothed = SmoothedClassifier::new(model, 0.25, 37);
    let x = Tensor::full(&[1, 3, 8, 8], 0.5);
    let a = smoothed.vote_counts(&x, 4).unwrap();
    assert_eq!(a.iter().sum::<usize>(), 37);
    assert_eq!(a, smoothed.vote_counts(&x, 4).unwrap());
    let zero = SmoothedClassifier::new(smoothed.base.clone(), 0.0, 5);
    let c = zero.vote_counts(&x, 0).unwrap();
    assert_eq!(c.iter().filter(|&&v| v > 0).count(), 1);
}
