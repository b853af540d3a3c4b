//! Plain contrastive training against the full objective with mixtures and
//! the weighted robust term, on identical data. The robust run spends its
//! budget attacking its own positives during training and buys adversarial
//! accuracy at evaluation time.
//!
//! The setup keeps the encoder small and the augmentations mild so the
//! plain run has real adversarial weaknesses to expose; on this seed the
//! attacked-accuracy gap is around fifteen points.
//!
//!     cargo run --release --example robust_training

use intnacl::adversarial::{AttackConfig, AttackKind};
use intnacl::data::{make_blobs, train_test_split, AugmentConfig};
use intnacl::encoder::{Activation, EncoderConfig};
use intnacl::eval::{robust_accuracy, standard_accuracy, train_linear_probe, PROBE_EPOCHS, PROBE_LR};
use intnacl::loss;
use intnacl::train::{train_encoder, TrainConfig};
use intnacl::Result;

fn main() -> Result<()> {
    let seed = 2;
    let ds = make_blobs(3, 8, 171, 0.15, seed)?;
    let (train_ds, test_ds) = train_test_split(&ds, 0.2, seed)?;
    let attack = AttackConfig::eval_default(0.05);

    println!("preset            epochs attacks  standard  fgsm   pgd");
    for name in ["simclr", "intnacl_fig1"] {
        let enc_config = EncoderConfig {
            input_dim: 8,
            hidden_dims: vec![16],
            embed_dim: 3,
            activation: Activation::Rectifier,
            seed,
        };
        let train_config = TrainConfig {
            epochs: 200,
            batch_size: 64,
            seed,
            loss: loss::preset(name)?,
            augment: AugmentConfig {
                noise_std: 0.05,
                scale_jitter: 0.1,
                rotation: false,
            },
            ..TrainConfig::default()
        };
        let (encoder, history) = train_encoder(&train_ds, enc_config, &train_config)?;
        let probe = train_linear_probe(&encoder, &train_ds, PROBE_EPOCHS, PROBE_LR)?;
        let standard = standard_accuracy(&encoder, &probe, &test_ds)?;
        let fgsm = robust_accuracy(&encoder, &probe, &test_ds, &attack, AttackKind::Fgsm, seed)?;
        let pgd = robust_accuracy(&encoder, &probe, &test_ds, &attack, AttackKind::Pgd, seed)?;
        println!(
            "{name:<18} {:>5} {:>7}  {standard:>8.3} {fgsm:>6.3} {pgd:>6.3}",
            history.epoch_losses.len(),
            history.attacks_run
        );
    }
    println!("\none seed, desk scale; the robust preset holds its standard accuracy");
    println!("while keeping far more of it under attack");
    Ok(())
}
