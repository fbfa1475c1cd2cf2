//! Train a small clean classifier on synthetic shapes, then compare a plain
//! PGD attack with a dual-perturbation attack on a few test images.
//!
//! cargo run --release --example quickstart

use dualpert::attack::{AttackConfig, Attacker, Norm};
use dualpert::data::synth::{gen_synthetic, SynthConfig};
use dualpert::data::split;
use dualpert::defense::{clean_train, TrainConfig};
use dualpert::model::Architecture;
use dualpert::salience::{MaskPair, SalienceModel};

fn main() -> dualpert::Result<()> {
    let data = gen_synthetic(&SynthConfig { samples: 1800, ..SynthConfig::default() })?;
    let (train, test) = split(&data, 0.75, 0)?;
    let arch = Architecture::reference(data.classes);
    let model = clean_train(&train, &arch, &TrainConfig::clean(6, 32, 2e-3, 0))?.params;

    let sal = SalienceModel::Dog;
    let atk = Attacker::new(&model, &sal);
    let pgd = AttackConfig::pgd(Norm::L2, 0.5, 20);
    let dual = AttackConfig::dual(Norm::L2, 0.5, 2.5, 1.0, 20);
    println!("image label clean pgd dual fs_dual");
    for i in 0..8 {
        let (x, y) = (test.image(i), test.labels[i]);
        let mask = MaskPair::from_foreground(&test.mask(i).expect("synthetic data has masks"))?;
        let a = atk.pgd_attack(&x, y, &pgd.for_sample(i))?;
        let b = atk.dual_attack(&x, y, &mask, &dual.for_sample(i))?;
        let pred = |t| model.predict_class(t).map(|p| p[0]);
        println!("{i} {y} {} {} {} {:.3}", pred(&x)?, pred(&a)?, pred(&b)?, sal.foreground_score(&b, &mask)?);
    }
    Ok(())
}
