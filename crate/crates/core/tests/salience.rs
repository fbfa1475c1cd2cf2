mod common;

use common::*;
use dualpert::data::synth::{gen_synthetic, SynthConfig};
use dualpert::salience::{fixation_threshold, MaskPair, SalienceModel};
use dualpert::Tensor;
use rand::Rng;

fn random_mask(r: &mut rand_chacha::ChaCha8Rng, h: usize, w: usize) -> MaskPair {
    let fg: Vec<f32> = (0..h * w).map(|_| if r.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
    MaskPair::from_foreground(&Tensor::new(vec![h, w], fg).unwrap()).unwrap()
}

#[test]
fn density_matches_independent_dog() {
    let mut r = rng(1);
    for (c, h, w) in [(3, 8, 8), (1, 12, 7), (3, 32, 32)] {
        let x = Tensor::new(vec![1, c, h, w], uniform(&mut r, c * h * w, 0.0, 1.0)).unwrap();
        let map = SalienceModel::Dog.salience_map(&x).unwrap();
        let want = dog_density(&to_f64(x.data()), c, h, w);
        for (a, b) in map.density.iter().zip(&want) {
            assert!((*a as f64 - b).abs() <= 1e-5 * b.max(1e-3), "{a} vs {b}");
        }
        assert!((map.total() - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn bright_square_on_dark_ground() {
    let (h, w) = (16, 16);
    let mut img = vec![0.1f32; 3 * h * w];
    let inside = |i: usize, j: usize| (5..11).contains(&i) && (5..11).contains(&j);
    for c in 0..3 {
        for i in 0..h {
            for j in 0..w {
                if inside(i, j) {
                    img[c * h * w + i * w + j] = 0.9;
                }
            }
        }
    }
    let s = dog_density(&to_f64(&img), 3, h, w);
    let (mut si, mut ni, mut so, mut no) = (0.0, 0, 0.0, 0);
    for i in 0..h {
        for j in 0..w {
            if inside(i, j) {
                si += s[i * w + j];
                ni += 1;
            } else {
                so += s[i * w + j];
                no += 1;
            }
        }
    }
    assert!(si / ni as f64 > so / no as f64);
    let x = Tensor::new(vec![1, 3, h, w], img).unwrap();
    let map = SalienceModel::Dog.salience_map(&x).unwrap();
    for (a, b) in map.density.iter().zip(&s) {
        assert!((*a as f64 - b).abs() <= 1e-7);
    }
}

#[test]
fn foreground_score_gradient_matches_finite_differences() {
    let mut r = rng(250);
    for trial in 0..50 {
        let x = Tensor::new(vec![1, 3, 8, 8], uniform(&mut r, 192, 0.05, 0.95)).unwrap();
        let mask = random_mask(&mut r, 8, 8);
        let (fs, g) = SalienceModel::Dog.foreground_score_grad(&x, &mask).unwrap();
        let fg = mask.foreground.data().to_vec();
        let mut xf = to_f64(x.data());
        let want = foreground_score(&xf, 3, 8, 8, &fg);
        assert!((fs as f64 - want).abs() <= 1e-6);
        let mut f = |v: &[f64]| foreground_score(v, 3, 8, 8, &fg);
        let numeric: Vec<f64> = (0..xf.len()).map(|i| central_diff(&mut xf, i, 1e-3, &mut f)).collect();
        let floor = 1e-3 * numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, &num) in numeric.iter().enumerate() {
            let e = rel_err_floor(g.data()[i] as f64, num, floor);
            assert!(e <= 1e-3, "trial {trial} coordinate {i}: {} vs {num} ({e:.2e})", g.data()[i]);
        }
    }
}

#[test]
fn scores_stay_in_unit_interval() {
    let mut r = rng(3);
    for _ in 0..200 {
        let x = Tensor::new(vec![1, 3, 10, 10], uniform(&mut r, 300, 0.0, 1.0)).unwrap();
        let fs = SalienceModel::Dog.foreground_score(&x, &random_mask(&mut r, 10, 10)).unwrap();
        assert!((0.0..=1.0).contains(&fs));
    }
}

#[test]
fn constant_images_are_uniform() {
    for v in [0.0f32, 0.37, 1.0] {
        let x = Tensor::full(&[1, 3, 9, 11], v);
        let map = SalienceModel::Dog.salience_map(&x).unwrap();
        let first = map.density[0];
        assert!(map.density.iter().all(|&d| d == first));
        assert_eq!(map.min(), map.max());
    }
}

#[test]
fn threshold_is_midrange() {
    assert_eq!(fixation_threshold(0.0, 1.0), 0.5);
    assert_eq!(fixation_threshold(0.2, 0.4), 0.5 * (0.2 + 0.4));
}

/// Brute-force IoU over pixel sets.
fn iou(a: &[f32], b: &[f32]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x > 0.5, y > 0.5);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[test]
fn fixation_masks_track_objects() {
    let data = gen_synthetic(&SynthConfig { samples: 600, seed: 11, ..SynthConfig::default() }).unwrap();
    let mut good = 0;
    for i in 0..data.len() {
        let truth = data.mask(i).unwrap();
        let fix = SalienceModel::Dog.fixation_masks(&data.image(i)).unwrap();
        assert!(fix.check_partition());
        let v = iou(truth.data(), fix.foreground.data());
        let lib = MaskPair::from_foreground(&truth).unwrap().intersection_over_union(&fix);
        assert!((v - lib).abs() < 1e-12);
        if v >= 0.5 {
            good += 1;
        }
    }
    let frac = good as f64 / data.len() as f64;
    assert!(frac >= 0.8, "IoU ≥ 0.5 on only {:.1}% of images", 100.0 * frac);
}
