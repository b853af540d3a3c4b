//! The l-infinity attack machinery on a transparent objective first, then
//! on a real classifier. Shows the FGSM step geometry, the exact agreement
//! between FGSM and single-step PGD, ball projection, and what an attack
//! does to probe accuracy.
//!
//!     cargo run --example attack_playground

use intnacl::adversarial::{fgsm, pgd, within_ball, AttackConfig, AttackKind};
use intnacl::data::make_blobs;
use intnacl::encoder::{Activation, Encoder, EncoderConfig};
use intnacl::eval::{attack_dataset, robust_accuracy, standard_accuracy, train_linear_probe};
use intnacl::{Result, Tensor};

fn main() -> Result<()> {
    // Objective: each row wants to flee its own center, loss 0.5 ||x-c||^2.
    // The gradient is x - c, so FGSM moves eps in the sign direction away
    // from the center, coordinate by coordinate.
    let centers = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0]])?;
    let centers_for_closure = centers.clone();
    let mut flee = move |x: &Tensor| -> Result<(Vec<f64>, Tensor)> {
        let mut losses = Vec::with_capacity(x.rows());
        let mut grad = x.clone();
        for r in 0..x.rows() {
            let c = centers_for_closure.row(r);
            let row = x.row(r);
            losses.push(row.iter().zip(c).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum());
        }
        for (g, c) in grad.data_mut().iter_mut().zip(centers_for_closure.data()) {
            *g -= c;
        }
        Ok((losses, grad))
    };

    let x = Tensor::from_rows(&[vec![0.3, -0.2], vec![0.9, -0.8]])?;
    let eps = 0.25;
    let one_step = fgsm(&mut flee, &x, eps, None)?;
    println!("start rows:  {:?} {:?}", x.row(0), x.row(1));
    println!("after fgsm:  {:?} {:?}", one_step.row(0), one_step.row(1));
    assert!(within_ball(&one_step, &x, eps, None));

    // PGD with one iteration, one restart, and step = eps retraces FGSM
    // exactly: same sign step, same projection.
    let single = AttackConfig {
        epsilon: eps,
        step_size: eps,
        iterations: 1,
        restarts: 1,
        domain_bounds: None,
    };
    let pgd_once = pgd(&mut flee, &x, None, &single, 0)?;
    assert_eq!(one_step.data(), pgd_once.data());
    println!("pgd(1 step, step = eps) reproduces fgsm exactly");

    // More iterations with a smaller step walk to the ball's corner.
    let schedule = AttackConfig {
        epsilon: eps,
        step_size: 0.05,
        iterations: 10,
        restarts: 2,
        domain_bounds: None,
    };
    let refined = pgd(&mut flee, &x, Some(&one_step), &schedule, 0)?;
    let (short_losses, _) = flee(&one_step)?;
    let (long_losses, _) = flee(&refined)?;
    println!("per-row loss, fgsm:     {short_losses:?}");
    println!("per-row loss, warm pgd: {long_losses:?}");
    for (s, l) in short_losses.iter().zip(&long_losses) {
        assert!(l >= s, "warm-started pgd never loses to its start");
    }

    // Now the real thing: attack a linear probe on a trained-free encoder.
    // Even random features separate blobs somewhat; the attack erases a
    // chunk of that.
    let ds = make_blobs(3, 6, 30, 0.12, 5)?;
    let enc = Encoder::init(EncoderConfig {
        input_dim: 6,
        hidden_dims: vec![32],
        embed_dim: 12,
        activation: Activation::Rectifier,
        seed: 1,
    })?;
    let probe = train_linear_probe(&enc, &ds, 200, 1e-2)?;
    let clean = standard_accuracy(&enc, &probe, &ds)?;
    let attack = AttackConfig::eval_default(0.08);
    let fgsm_acc = robust_accuracy(&enc, &probe, &ds, &attack, AttackKind::Fgsm, 0)?;
    let pgd_acc = robust_accuracy(&enc, &probe, &ds, &attack, AttackKind::Pgd, 0)?;
    println!("\nprobe on random encoder: clean {clean:.3}, fgsm {fgsm_acc:.3}, pgd {pgd_acc:.3}");

    let candidates = attack_dataset(&enc, &probe, &ds.features, &ds.labels, &attack, AttackKind::Pgd, 0)?;
    for cand in &candidates {
        assert!(within_ball(cand, &ds.features, attack.epsilon, None));
    }
    println!("all {} candidate sets stayed inside the eps-ball", candidates.len());
    Ok(())
}
