mod common;

use common::*;
use dualpert::attack::*;
use dualpert::model::{Architecture, ClassifierParams, Layer};
use dualpert::salience::{MaskPair, SalienceModel};
use dualpert::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: usize = 8;

fn small_model(seed: u64) -> ClassifierParams {
    let arch = Architecture {
        input: [3, H, H],
        layers: vec![
            Layer::Conv { out_channels: 4, kernel: 3, pad: 1 },
            Layer::Relu,
            Layer::AvgPool2,
            Layer::Dense { out: 4 },
        ],
        classes: 4,
    };
    ClassifierParams::init(&arch, seed).unwrap()
}

fn image(r: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![1, 3, H, H], uniform(r, 3 * H * H, 0.0, 1.0)).unwrap()
}

fn mask(r: &mut ChaCha8Rng) -> MaskPair {
    let p = r.random_range(0.1..0.9);
    let fg = (0..H * H).map(|_| if r.random_bool(p) { 1.0 } else { 0.0 }).collect();
    MaskPair::from_foreground(&Tensor::new(vec![H, H], fg).unwrap()).unwrap()
}

fn norm_of(v: &[f32], norm: Norm) -> f64 {
    match norm {
        Norm::L2 => v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt(),
        Norm::Linf => v.iter().fold(0.0, |m, &x| m.max((x as f64).abs())),
    }
}

fn pick_norm(r: &mut ChaCha8Rng) -> Norm {
    if r.random_bool(0.5) {
        Norm::L2
    } else {
        Norm::Linf
    }
}

#[test]
fn projection_is_feasible_and_idempotent() {
    let mut r = rng(2);
    for _ in 0..2000 {
        let n = r.random_range(1..200);
        let scale = r.random_range(0.01..10.0);
        let v = Tensor::new(vec![n], uniform(&mut r, n, -scale, scale)).unwrap();
        let eps = r.random_range(0.0..3.0f32);
        let norm = pick_norm(&mut r);
        let p = project(&v, eps, norm).unwrap();
        assert!(norm_of(p.data(), norm) <= eps as f64 + 1e-5);
        let q = project(&p, eps, norm).unwrap();
        assert_eq!(p.data(), q.data());
        if norm_of(v.data(), norm) <= eps as f64 {
            assert_eq!(p.data(), v.data());
        }
    }
    assert!(project(&Tensor::zeros(&[3]), -1.0, Norm::L2).is_err());
}

#[test]
fn random_starts_respect_both_balls() {
    let model = small_model(0);
    let sal = SalienceModel::Dog;
    let atk = Attacker::new(&model, &sal);
    let mut r = rng(5);
    for i in 0..500 {
        let (x, m) = (image(&mut r), mask(&mut r));
        let norm = pick_norm(&mut r);
        let cfg = AttackConfig::dual(norm, r.random_range(0.0..1.0), r.random_range(0.0..4.0), 0.0, 1);
        let mut seed_rng = ChaCha8Rng::seed_from_u64(i);
        let d = atk.init_dual(&x, &m, &cfg, &mut seed_rng).unwrap();
        assert!(masked_norm(&d, &m.foreground, norm) <= cfg.eps_fg as f64 + 1e-5);
        assert!(masked_norm(&d, &m.background, norm) <= cfg.eps_bg as f64 + 1e-5);
        let again = atk.init_dual(&x, &m, &cfg, &mut ChaCha8Rng::seed_from_u64(i)).unwrap();
        assert_eq!(d.data(), again.data());
    }
}

#[test]
fn attack_outputs_are_feasible() {
    let sal = SalienceModel::Dog;
    let mut r = rng(7);
    for case in 0..300 {
        let model = small_model(case);
        let atk = Attacker::new(&model, &sal);
        let (x, m) = (image(&mut r), mask(&mut r));
        let norm = pick_norm(&mut r);
        let (ef, eb) = match norm {
            Norm::L2 => (r.random_range(0.0..1.0), r.random_range(0.0..5.0)),
            Norm::Linf => (r.random_range(0.0..0.1), r.random_range(0.0..0.5)),
        };
        let lambda = if r.random_bool(0.5) { 0.0 } else { r.random_range(0.0..5.0) };
        let cfg = AttackConfig::dual(norm, ef, eb, lambda, r.random_range(1..6)).with_seed(case);
        let label = r.random_range(0..4);
        let adv = atk.dual_attack(&x, label, &m, &cfg).unwrap();
        assert!(adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let d = adv.zip_map(&x, |a, b| a - b).unwrap();
        assert!(masked_norm(&d, &m.foreground, norm) <= ef as f64 + 1e-5, "case {case}");
        assert!(masked_norm(&d, &m.background, norm) <= eb as f64 + 1e-5, "case {case}");
        let pgd = atk.pgd_attack(&x, label, &cfg).unwrap();
        let d = pgd.zip_map(&x, |a, b| a - b).unwrap();
        assert!(norm_of(d.data(), norm) <= ef as f64 + 1e-5);
    }
}

#[test]
fn degenerate_partition_reduces_to_pgd() {
    let sal = SalienceModel::Dog;
    let model = small_model(9);
    let atk = Attacker::new(&model, &sal);
    let whole = MaskPair::all_foreground(H, H);
    let mut r = rng(9);
    for seed in 0..20u64 {
        let x = image(&mut r);
        let norm = pick_norm(&mut r);
        let cfg = AttackConfig::dual(norm, 0.3, 0.0, 0.0, 5).with_seed(seed);
        let a = atk.dual_attack(&x, 1, &whole, &cfg).unwrap();
        let b = atk.pgd_attack(&x, 1, &cfg).unwrap();
        assert_eq!(a.data(), b.data(), "seed {seed}");
    }
}

#[test]
fn attacks_are_deterministic() {
    let sal = SalienceModel::Dog;
    let model = small_model(3);
    let atk = Attacker::new(&model, &sal);
    let mut r = rng(3);
    let (x, m) = (image(&mut r), mask(&mut r));
    let cfg = AttackConfig::dual(Norm::L2, 0.5, 2.0, 1.0, 4).with_seed(17);
    let a = atk.dual_attack(&x, 0, &m, &cfg).unwrap();
    assert_eq!(a.data(), atk.dual_attack(&x, 0, &m, &cfg).unwrap().data());
    let b = atk.dual_attack(&x, 0, &m, &cfg.clone().with_seed(18)).unwrap();
    assert_ne!(a.data(), b.data());
    let c = atk.rs_dual_attack(&x, 0, &m, &cfg, 0.25, 4).unwrap();
    assert_eq!(c.data(), atk.rs_dual_attack(&x, 0, &m, &cfg, 0.25, 4).unwrap().data());
    // Without noise the smoothing variant is the plain attack.
    assert_eq!(a.data(), atk.rs_dual_attack(&x, 0, &m, &cfg, 0.0, 3).unwrap().data());
}

#[test]
fn zero_budget_is_identity() {
    let sal = SalienceModel::Dog;
    let model = small_model(4);
    let atk = Attacker::new(&model, &sal);
    let mut r = rng(4);
    let (x, m) = (image(&mut r), mask(&mut r));
    for norm in [Norm::L2, Norm::Linf] {
        let cfg = AttackConfig::dual(norm, 0.0, 0.0, 2.0, 3);
        assert_eq!(atk.dual_attack(&x, 2, &m, &cfg).unwrap().data(), x.data());
        assert_eq!(atk.pgd_attack(&x, 2, &cfg).unwrap().data(), x.data());
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    dot / (norm_of(a, Norm::L2) * norm_of(b, Norm::L2))
}

#[test]
fn noise_averaged_gradient_converges() {
    let sal = SalienceModel::Dog;
    let model = small_model(21);
    let atk = Attacker::new(&model, &sal);
    let mut r = rng(21);
    let (x, m) = (image(&mut r), mask(&mut r));
    let mut noise = ChaCha8Rng::seed_from_u64(1);
    let reference = atk.expected_grad(&x, 0, &m, 1.0, 0.25, 4096, &mut noise).unwrap();
    for seed in 2..5 {
        let mut noise = ChaCha8Rng::seed_from_u64(seed);
        let small = atk.expected_grad(&x, 0, &m, 1.0, 0.25, 64, &mut noise).unwrap();
        let c = cosine(small.data(), reference.data());
        assert!(c >= 0.9, "cosine {c}");
    }
    // One sample is the plain gradient at one noisy input.
    let mut a = ChaCha8Rng::seed_from_u64(8);
    let one = atk.expected_grad(&x, 0, &m, 0.0, 0.25, 1, &mut a).unwrap();
    let mut b = ChaCha8Rng::seed_from_u64(8);
    let noisy: Vec<f32> = x.data().iter().map(|&v| v + 0.25 * b.sample::<f32, _>(rand_distr::StandardNormal)).collect();
    let shifted = Tensor::new(x.shape().to_vec(), noisy).unwrap();
    let plain = atk.expected_grad(&shifted, 0, &m, 0.0, 0.0, 1, &mut b).unwrap();
    assert_eq!(one.data(), plain.data());
}

#[test]
fn larger_background_budget_raises_objective() {
    let sal = SalienceModel::Dog;
    let model = small_model(30);
    let atk = Attacker::new(&model, &sal);
    let mut r = rng(30);
    let cases: Vec<_> = (0..100).map(|_| (image(&mut r), mask(&mut r), r.random_range(0..4))).collect();
    let mut prev = f64::NEG_INFINITY;
    for eb in [0.0f32, 0.5, 1.0, 2.0] {
        let mut total = 0.0;
        for (i, (x, m, y)) in cases.iter().enumerate() {
            let cfg = AttackConfig::dual(Norm::L2, 0.2, eb, 0.5, 5).for_sample(i);
            let adv = atk.dual_attack(x, *y, m, &cfg).unwrap();
            total += atk.objective(&adv, *y, m, 0.5).unwrap() as f64;
        }
        let mean = total / cases.len() as f64;
        assert!(mean >= prev, "ε_B {eb}: {mean} < {prev}");
        prev = mean;
    }
}

#[test]
fn jsma_respects_pixel_budget() {
    let sal = SalienceModel::Dog;
    let mut r = rng(40);
    for case in 0..30 {
        let model = small_model(case);
        let atk = Attacker::new(&model, &sal);
        let x = image(&mut r);
        let budget = r.random_range(1..6);
        let (adv, count) = atk.jsma_attack(&x, r.random_range(0..4), budget, 0.5).unwrap();
        let changed = (0..H * H)
            .filter(|&p| (0..3).any(|c| adv.data()[c * H * H + p] != x.data()[c * H * H + p]))
            .count();
        assert!(changed <= budget && changed <= count);
        assert!(adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let model = small_model(0);
    let atk = Attacker::new(&model, &sal);
    assert!(atk.jsma_attack(&image(&mut r), 0, 0, 0.5).is_err());
    assert!(atk.jsma_attack(&image(&mut r), 0, 3, 0.0).is_err());
}
