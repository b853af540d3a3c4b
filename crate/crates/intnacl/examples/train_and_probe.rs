//! The full self-supervised pipeline by hand: blobs in, contrastive encoder
//! training, linear-probe evaluation, transfer to a second blob set. This
//! is what the `run` subcommand does, spelled out through the library.
//!
//!     cargo run --release --example train_and_probe

use intnacl::adversarial::{AttackConfig, AttackKind};
use intnacl::data::{make_blobs, train_test_split};
use intnacl::encoder::{Activation, EncoderConfig};
use intnacl::eval::{
    robust_accuracy, standard_accuracy, train_linear_probe, transfer_eval, PROBE_EPOCHS, PROBE_LR,
};
use intnacl::loss;
use intnacl::train::{train_encoder, TrainConfig};
use intnacl::Result;

fn main() -> Result<()> {
    let seed = 0;
    let ds = make_blobs(3, 8, 60, 0.15, seed)?;
    let (train_ds, test_ds) = train_test_split(&ds, 0.2, seed)?;
    println!(
        "{} training points, {} held out, {} classes, dim {}",
        train_ds.len(),
        test_ds.len(),
        ds.class_count,
        ds.dim()
    );

    let enc_config = EncoderConfig {
        input_dim: 8,
        hidden_dims: vec![64, 64],
        embed_dim: 16,
        activation: Activation::Rectifier,
        seed,
    };
    let train_config = TrainConfig {
        epochs: 60,
        batch_size: 48,
        seed,
        loss: loss::preset("simclr")?,
        ..TrainConfig::default()
    };

    let (encoder, history) = train_encoder(&train_ds, enc_config, &train_config)?;
    println!("\ncontrastive loss by epoch:");
    for (epoch, loss) in history.epoch_losses.iter().enumerate() {
        if epoch % 10 == 0 || epoch + 1 == history.epoch_losses.len() {
            println!("  epoch {epoch:>3}: {loss:.4}");
        }
    }
    println!(
        "trained in {:.2}s, {} adversarial batches",
        history.wall_clock_seconds, history.attacks_run
    );

    // The probe never updates the encoder; it reads frozen embeddings.
    let probe = train_linear_probe(&encoder, &train_ds, PROBE_EPOCHS, PROBE_LR)?;
    let standard = standard_accuracy(&encoder, &probe, &test_ds)?;
    let attack = AttackConfig::eval_default(0.05);
    let fgsm = robust_accuracy(&encoder, &probe, &test_ds, &attack, AttackKind::Fgsm, seed)?;
    let pgd = robust_accuracy(&encoder, &probe, &test_ds, &attack, AttackKind::Pgd, seed)?;
    println!("\nheld-out accuracy: standard {standard:.3}, fgsm {fgsm:.3}, pgd {pgd:.3}");

    // Transfer: same frozen encoder, new labels, new probe.
    let other = make_blobs(2, 8, 50, 0.15, seed + 77)?;
    let (t_acc, t_rob) = transfer_eval(&encoder, &other, &attack, AttackKind::Fgsm, seed)?;
    println!("transfer to fresh 2-class blobs: standard {t_acc:.3}, fgsm {t_rob:.3}");
    Ok(())
}
