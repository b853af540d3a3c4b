//! Every named loss preset evaluated on the same data, plus the reduction
//! identities that tie the family together: with one positive view the NCA
//! and mixture losses collapse to the plain contrastive loss bit for bit,
//! and a zero robust weight leaves exactly the base objective.
//!
//!     cargo run --example loss_tour

use intnacl::data::{make_blobs, sample_contrastive_batch, AugmentConfig};
use intnacl::encoder::{Activation, Encoder, EncoderConfig};
use intnacl::loss::{self, loss_value};
use intnacl::Result;

fn main() -> Result<()> {
    let ds = make_blobs(3, 6, 24, 0.2, 42)?;
    let enc = Encoder::init(EncoderConfig {
        input_dim: 6,
        hidden_dims: vec![32],
        embed_dim: 12,
        activation: Activation::Rectifier,
        seed: 7,
    })?;
    let aug = AugmentConfig::default();

    println!("loss of each preset on a 16-anchor batch:");
    for name in loss::PRESET_NAMES {
        let cfg = loss::preset(name)?;
        // Batch shape follows the preset: m positive views per anchor,
        // fresh negative pools only when the mixture terms need them.
        let batch = sample_contrastive_batch(&ds, 16, cfg.m, cfg.m > 1, &aug, 99)?;
        let value = loss_value(&enc, &batch, &cfg, 5)?;
        println!("  {name:<18} {value:.6}");
    }

    // Reduction identity 1: every estimator agrees that M = 1 NCA is the
    // contrastive loss. Same tape construction, so equality is exact.
    let batch = sample_contrastive_batch(&ds, 16, 1, false, &aug, 123)?;
    for name in ["simclr", "debiased", "debiased_hardneg"] {
        let cfg = loss::preset(name)?;
        let via_preset = loss_value(&enc, &batch, &cfg, 0)?;
        let mut as_mixture = cfg.clone();
        as_mixture.family = loss::LossFamily::MixNca;
        let via_mixture = loss_value(&enc, &batch, &as_mixture, 0)?;
        assert!(via_preset == via_mixture);
        println!("{name}: nca {via_preset:.12} == mixnca {via_mixture:.12}");
    }

    // Reduction identity 2: alpha = 0 disables the robust term entirely;
    // no attack runs and the value equals the bare family loss.
    let robust = loss::preset("intnacl_fig1")?;
    let mut plain = robust.clone();
    plain.alpha = 0.0;
    let batch = sample_contrastive_batch(&ds, 12, robust.m, true, &aug, 321)?;
    let with_term = loss_value(&enc, &batch, &robust, 8)?;
    let without = loss_value(&enc, &batch, &plain, 8)?;
    println!("\nintnacl_fig1 with robust term: {with_term:.6}");
    println!("same batch, alpha = 0:         {without:.6}");
    assert!(with_term > without);
    Ok(())
}
