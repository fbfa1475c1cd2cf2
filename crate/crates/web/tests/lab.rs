use dualpert::salience::MaskPair;
use dualpert::Tensor;
use dualpert_web::{heat_rgba, image_rgba, mask_rgba, perturbation_rgba, Lab};

#[test]
fn buffers_have_rgba_extents() {
    let mut lab = Lab::new(3, 120).unwrap();
    let n = (lab.size() * lab.size() * 4) as usize;
    lab.select(5);
    assert_eq!(lab.image_rgba().len(), n);
    assert_eq!(lab.salience_rgba().unwrap().len(), n);
    assert_eq!(lab.masks_rgba().unwrap().len(), n);
    assert_eq!(lab.adversarial_rgba(), lab.image_rgba());
    let iou = lab.mask_iou().unwrap();
    assert!((0.0..=1.0).contains(&iou));
}

#[test]
fn training_reduces_loss_and_attack_respects_budgets() {
    let mut lab = Lab::new(1, 240).unwrap();
    let first = lab.train_batches(2).unwrap();
    for _ in 0..6 {
        lab.train_batches(6).unwrap();
    }
    let last = lab.train_batches(6).unwrap();
    assert!(last < first, "loss {first} -> {last}");
    assert!(lab.epochs_done() > 1.0);
    let acc = lab.test_accuracy().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    lab.select(0);
    let r = lab.attack(0.3, 1.5, 0.0, 10, false, false, 9).unwrap();
    assert!(r.foreground_norm <= 0.3 + 1e-5);
    assert!(r.background_norm <= 1.5 + 1e-5);
    assert!((0.0..=1.0).contains(&r.adversarial_fs));
    assert_ne!(lab.adversarial_rgba(), lab.image_rgba());

    let r = lab.attack(0.0, 0.0, 0.0, 5, true, true, 9).unwrap();
    assert_eq!(r.foreground_norm, 0.0);
    assert_eq!(r.background_norm, 0.0);
    assert_eq!(r.adversarial_prediction, r.clean_prediction);
}

#[test]
fn color_maps() {
    assert_eq!(heat_rgba(&[0.0, 1.0]), vec![0, 0, 0, 255, 255, 255, 255, 255]);
    assert_eq!(heat_rgba(&[0.0, 0.0]), vec![0, 0, 0, 255, 0, 0, 0, 255]);
    let x = Tensor::new(vec![1, 3, 1, 1], vec![1.0, 0.5, 0.0]).unwrap();
    assert_eq!(image_rgba(&x), vec![255, 128, 0, 255]);
    let d = Tensor::new(vec![1, 3, 1, 2], vec![0.1, 0.0, -0.1, 0.0, 0.1, 0.0]).unwrap();
    let p = perturbation_rgba(&d);
    assert_eq!(&p[..4], &[255, 255, 255, 255]);
    let t = MaskPair::from_foreground(&Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap()).unwrap();
    let f = MaskPair::from_foreground(&Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap()).unwrap();
    assert_eq!(mask_rgba(&t, &f), vec![255, 255, 255, 255, 220, 60, 200, 255]);
}
