//! Supervised neighborhood component analysis on a four-point instance
//! where raw nearest neighbor gets everything wrong. Gradient descent on a
//! 2x2 metric fixes it. Also runs the two equivalent softmax forms, squared
//! distance against inner product, on unit-norm embeddings.
//!
//!     cargo run --example supervised_nca

use intnacl::nca::{equivalence_check, leave_one_out_1nn, nca_metric_loss, LabeledSet};
use intnacl::{Result, Tape, Tensor};

fn main() -> Result<()> {
    // x separates the classes; y interleaves them and dominates the raw
    // distances.
    let points = Tensor::from_rows(&[
        vec![0.0, 0.0],
        vec![0.3, 1.0],
        vec![0.8, 0.1],
        vec![1.1, 1.1],
    ])?;
    let labels = vec![0, 0, 1, 1];
    let set = LabeledSet::new(points.clone(), labels.clone())?;
    println!(
        "leave-one-out 1-NN before learning: {:.2}",
        leave_one_out_1nn(&points, &labels)?
    );

    let mut metric = Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0])?;
    for step in 0..=300 {
        let mut tape = Tape::new();
        let m = tape.leaf(metric.clone());
        let loss = nca_metric_loss(&mut tape, &set, m)?;
        if step % 60 == 0 {
            println!("  step {step:>3}: loss {:.5}", tape.value(loss).item());
        }
        if step == 300 {
            break;
        }
        tape.backward(loss)?;
        let grad = tape.grad(m).expect("metric gradient");
        for (w, g) in metric.data_mut().iter_mut().zip(grad.data()) {
            *w -= 0.05 * g;
        }
    }

    let mut tape = Tape::new();
    let x = tape.constant(points);
    let m = tape.constant(metric.clone());
    let z = tape.matmul(x, m)?;
    let embedded = tape.value(z).clone();
    println!(
        "leave-one-out 1-NN after learning:  {:.2}",
        leave_one_out_1nn(&embedded, &labels)?
    );
    println!("learned metric rows: {:?} {:?}", metric.row(0), metric.row(1));

    // On the unit sphere, exp(-0.5 ||zi - zj||^2) and exp(zi . zj) differ
    // by a constant factor per row that cancels in the softmax, so both
    // forms give the same loss.
    let embeddings = Tensor::from_rows(&[
        vec![1.0, 0.0],
        vec![0.6, 0.8],
        vec![0.0, 1.0],
        vec![-0.8, 0.6],
    ])?;
    let positives = vec![vec![1], vec![0]];
    let negatives = vec![vec![2, 3], vec![2, 3]];
    let (by_distance, by_dot) = equivalence_check(&embeddings, &positives, &negatives)?;
    println!("\ndistance form: {by_distance:.12}");
    println!("dot form:      {by_dot:.12}");
    println!("difference:    {:.3e}", (by_distance - by_dot).abs());
    Ok(())
}
