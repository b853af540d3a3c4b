//! The three negative-term estimators side by side: the plain average g0,
//! the debiased g1 with its clamp, and the hardness-reweighted g2.
//!
//!     cargo run --example estimator_tour

use intnacl::estimators::{estimate, EstimatorConfig};
use intnacl::{Result, Tensor};

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn main() -> Result<()> {
    // One anchor, four sampled negatives, one extra positive view for the
    // debiasing correction. Everything lives on the unit sphere.
    let anchor = unit(vec![1.0, 0.5, 0.0]);
    let negatives = Tensor::from_rows(&[
        unit(vec![0.9, 0.6, 0.1]),
        unit(vec![-0.3, 1.0, 0.2]),
        unit(vec![0.0, -1.0, 0.4]),
        unit(vec![-0.8, -0.2, 0.6]),
    ])?;
    let positive_views = Tensor::from_rows(&[unit(vec![1.0, 0.45, 0.05])])?;

    println!("estimates of the negative mean e^(s/t):");
    for cfg in [
        EstimatorConfig::g0(),
        EstimatorConfig::g1(),
        EstimatorConfig::g2(),
    ] {
        let g = estimate(&cfg, &anchor, &negatives, &positive_views)?;
        println!("  {:?}: {:.6}", cfg.kind, g);
    }

    // The debiased estimator subtracts tau_plus times the positive-view
    // mean, then clamps at the theoretical floor e^(-1/t). Slide a single
    // negative away from the anchor and watch the correction dip under the
    // floor while the raw average is still above it.
    let floor = (-1.0f64).exp();
    let perp = unit(vec![-0.447, 0.894, 0.0]);
    println!("\none negative at angle theta from the anchor (floor {floor:.6}):");
    println!("  cos(theta)   g0        g1");
    let mut clamp_seen = false;
    for cos in [0.0f64, -0.5, -0.9, -0.97] {
        let sin = (1.0 - cos * cos).sqrt();
        let neg: Vec<f64> = anchor
            .iter()
            .zip(&perp)
            .map(|(a, p)| cos * a + sin * p)
            .collect();
        let neg = Tensor::from_rows(&[neg])?;
        let raw = estimate(&EstimatorConfig::g0(), &anchor, &neg, &positive_views)?;
        let debiased = estimate(&EstimatorConfig::g1(), &anchor, &neg, &positive_views)?;
        let note = if debiased == floor {
            clamp_seen = true;
            "  <- clamped"
        } else {
            ""
        };
        println!("  {cos:>10}   {raw:.6}  {debiased:.6}{note}");
    }
    assert!(clamp_seen);

    // Hard-negative reweighting: beta shifts mass toward negatives close
    // to the anchor, so the estimate grows monotonically in beta (with
    // tau_plus = 0 the clamp never interferes).
    println!("\ng2 as beta grows (tau_plus = 0):");
    let mut last = 0.0;
    for beta in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let cfg = EstimatorConfig {
            beta,
            tau_plus: 0.0,
            ..EstimatorConfig::g2()
        };
        let g = estimate(&cfg, &anchor, &negatives, &positive_views)?;
        println!("  beta {beta:>3}: {g:.6}");
        assert!(g >= last);
        last = g;
    }
    Ok(())
}
