//! The reverse-mode tape from the ground up: build a small computation,
//! pull gradients out of it, and cross-check them against central finite
//! differences.
//!
//!     cargo run --example autodiff_basics

use intnacl::{finite_diff_grad, relative_error, Result, Tape, Tensor};

fn main() -> Result<()> {
    // f(W) = mean(relu(X W + b)) for a fixed input batch. W is the only
    // leaf; X and b enter as constants, so no gradient accumulates there.
    let x = Tensor::from_rows(&[
        vec![0.5, -1.0, 2.0],
        vec![1.5, 0.25, -0.5],
        vec![-2.0, 1.0, 0.75],
    ])?;
    let w0 = Tensor::from_rows(&[vec![0.2, -0.4], vec![0.7, 0.1], vec![-0.3, 0.5]])?;
    let b0 = Tensor::from_vec(vec![2], vec![0.05, -0.05])?;

    let mut tape = Tape::new();
    let xc = tape.constant(x.clone());
    let w = tape.leaf(w0.clone());
    let b = tape.constant(b0.clone());
    let h = tape.matmul(xc, w)?;
    let h = tape.add_bias(h, b)?;
    let h = tape.relu(h);
    let loss = tape.mean(h);

    println!("loss = {:.6}", tape.value(loss).item());

    tape.backward(loss)?;
    let grad = tape.grad(w).expect("W is a leaf");
    println!("dloss/dW =");
    for i in 0..grad.rows() {
        println!("  {:?}", grad.row(i));
    }

    // Central differences replay the same forward pass at W +/- h per
    // coordinate. Agreement to ~1e-9 is what f64 allows at h = 1e-5.
    let fd = finite_diff_grad(
        |cand: &Tensor| {
            let mut t = Tape::new();
            let xc = t.constant(x.clone());
            let w = t.leaf(cand.clone());
            let b = t.constant(b0.clone());
            let h = t.matmul(xc, w)?;
            let h = t.add_bias(h, b)?;
            let h = t.relu(h);
            let loss = t.mean(h);
            Ok(t.value(loss).item())
        },
        &w0,
        1e-5,
    )?;
    println!(
        "relative error vs finite differences: {:.3e}",
        relative_error(&grad, &fd)
    );

    // Gradients flow through row normalization as well; this is the piece
    // encoders end with, and the usual source of subtle mistakes.
    let mut tape = Tape::new();
    let p = tape.leaf(Tensor::from_rows(&[vec![3.0, 4.0], vec![-1.0, 1.0]])?);
    let z = tape.normalize_rows(p)?;
    let s = tape.sum(z);
    tape.backward(s)?;
    println!(
        "normalize_rows gradient rows: {:?} and {:?}",
        tape.grad(p).unwrap().row(0),
        tape.grad(p).unwrap().row(1)
    );
    Ok(())
}
