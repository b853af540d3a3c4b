//! Linear-probe evaluation of a frozen encoder.
//!
//! The protocol: embed a labeled dataset with the trained encoder, fit a
//! single linear layer by softmax cross-entropy on the embeddings, then
//! report accuracy on clean inputs, on adversarially perturbed inputs, and
//! on a second dataset the encoder never saw. The encoder is never updated
//! on any of these paths; every function here takes it by shared reference
//! and lifts it frozen onto whatever tape it builds.
//!
//! Robust accuracy attacks the composed map `probe(encode(x))` with the
//! cross-entropy of the true label. For the PGD variant the FGSM point is
//! kept as a second candidate and a sample counts as robust only when every
//! candidate is classified correctly, so the PGD number can never exceed
//! the FGSM number on the same model.

use serde::{Deserialize, Serialize};

use crate::adversarial::{self, AttackConfig, AttackKind};
use crate::data::{train_test_split, Dataset};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::train::{adam_step, AdamState};

/// Probe training schedule: full-batch Adam.
pub const PROBE_EPOCHS: usize = 200;
pub const PROBE_LR: f64 = 1e-2;
const PROBE_BETAS: (f64, f64) = (0.9, 0.999);
const PROBE_EPS: f64 = 1e-8;

/// A single linear layer mapping embeddings to class logits.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    /// Shape `[embed_dim, classes]`.
    pub weights: Tensor,
    /// Shape `[classes]`.
    pub bias: Tensor,
}

impl LinearProbe {
    /// Zero-initialized probe. The zero point is symmetric across classes,
    /// so training from it is invariant to class relabeling.
    pub fn zeros(embed_dim: usize, classes: usize) -> Result<Self> {
        if embed_dim == 0 {
            return Err(Error::InvalidConfig {
                field: "probe.embed_dim".into(),
                message: "must be positive".into(),
            });
        }
        if classes < 2 {
            return Err(Error::InvalidConfig {
                field: "probe.classes".into(),
                message: format!("need at least 2 classes, got {classes}"),
            });
        }
        Ok(Self {
            weights: Tensor::zeros(vec![embed_dim, classes]),
            bias: Tensor::zeros(vec![classes]),
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// Per-row softmax cross-entropy of `logits` against integer labels.
/// Returns the `[n]` vector of losses. The row-max shift is detached, which
/// leaves gradients unchanged: they reduce to softmax minus one-hot either
/// way.
fn cross_entropy_rows(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let lv = tape.value(logits);
    let n = lv.rows();
    let k = lv.cols();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            what: "cross-entropy labels",
            expected: n,
            got: labels.len(),
        });
    }
    let mut shift = vec![0.0; n * k];
    let mut onehot = vec![0.0; n * k];
    for i in 0..n {
        let label = labels[i];
        if label >= k {
            return Err(Error::DimensionMismatch {
                what: "class label",
                expected: k,
                got: label,
            });
        }
        let m = lv.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for s in &mut shift[i * k..(i + 1) * k] {
            *s = m;
        }
        onehot[i * k + label] = 1.0;
    }
    let shift_c = tape.constant(Tensor::from_vec(vec![n, k], shift)?);
    let onehot_c = tape.constant(Tensor::from_vec(vec![n, k], onehot)?);
    let shifted = tape.sub(logits, shift_c)?;
    let expw = tape.exp(shifted);
    let den = tape.row_sum(expw)?;
    let log_den = tape.log(den);
    let picked = tape.mul(shifted, onehot_c)?;
    let true_shifted = tape.row_sum(picked)?;
    tape.sub(log_den, true_shifted)
}

/// Class logits for a batch of raw inputs: `encode(x) . W + b`, value level.
pub fn probe_logits(enc: &Encoder, probe: &LinearProbe, features: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = enc.lift_frozen(&mut tape);
    let x = tape.constant(features.clone());
    let z = enc.encode_on(&mut tape, &vars, x)?;
    let w = tape.constant(probe.weights.clone());
    let b = tape.constant(probe.bias.clone());
    let zw = tape.matmul(z, w)?;
    let logits = tape.add_bias(zw, b)?;
    Ok(tape.value(logits).clone())
}

/// Predicted class per row: argmax over logits, ties to the lowest index.
pub fn predict(enc: &Encoder, probe: &LinearProbe, features: &Tensor) -> Result<Vec<usize>> {
    let logits = probe_logits(enc, probe, features)?;
    let preds = (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok(preds)
}

/// Fit a linear probe on the frozen encoder's embeddings of `ds`.
///
/// Embeddings are computed once up front; the optimization never touches
/// the encoder again, so its weights cannot change. Zero initialization
/// plus a fixed schedule make the result fully deterministic.
pub fn train_linear_probe(
    enc: &Encoder,
    ds: &Dataset,
    epochs: usize,
    lr: f64,
) -> Result<LinearProbe> {
    if epochs == 0 {
        return Err(Error::InvalidConfig {
            field: "probe.epochs".into(),
            message: "must run at least one epoch".into(),
        });
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidConfig {
            field: "probe.learning_rate".into(),
            message: format!("must be positive and finite, got {lr}"),
        });
    }
    let embeddings = enc.encode(&ds.features)?;
    let mut probe = LinearProbe::zeros(enc.config().embed_dim, ds.class_count)?;
    let mut state = AdamState::new(&[&mut probe.weights, &mut probe.bias]);
    for _ in 0..epochs {
        let mut tape = Tape::new();
        let z = tape.constant(embeddings.clone());
        let w = tape.leaf(probe.weights.clone());
        let b = tape.leaf(probe.bias.clone());
        let zw = tape.matmul(z, w)?;
        let logits = tape.add_bias(zw, b)?;
        let per = cross_entropy_rows(&mut tape, logits, &ds.labels)?;
        let loss = tape.mean(per);
        tape.backward(loss)?;
        let gw = tape.grad(w).expect("probe weight gradient");
        let gb = tape.grad(b).expect("probe bias gradient");
        adam_step(
            &mut [&mut probe.weights, &mut probe.bias],
            &[gw, gb],
            &mut state,
            lr,
            PROBE_BETAS,
            PROBE_EPS,
        )?;
    }
    Ok(probe)
}

/// Fraction of rows whose predicted class matches the label.
pub fn standard_accuracy(enc: &Encoder, probe: &LinearProbe, ds: &Dataset) -> Result<f64> {
    let preds = predict(enc, probe, &ds.features)?;
    let hits = preds.iter().zip(&ds.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / ds.len() as f64)
}

/// Build the attack objective for a classifier: per-row cross-entropy of
/// the true label through `probe(encode(x))`, plus the gradient of their
/// sum with respect to the inputs. Rows are independent, so the summed
/// gradient restricted to one row is that row's own gradient.
fn classifier_attack_fn<'a>(
    enc: &'a Encoder,
    probe: &'a LinearProbe,
    labels: &'a [usize],
) -> impl FnMut(&Tensor) -> Result<(Vec<f64>, Tensor)> + 'a {
    move |x: &Tensor| {
        let mut tape = Tape::new();
        let vars = enc.lift_frozen(&mut tape);
        let xv = tape.leaf(x.clone());
        let z = enc.encode_on(&mut tape, &vars, xv)?;
        let w = tape.constant(probe.weights.clone());
        let b = tape.constant(probe.bias.clone());
        let zw = tape.matmul(z, w)?;
        let logits = tape.add_bias(zw, b)?;
        let per = cross_entropy_rows(&mut tape, logits, labels)?;
        let total = tape.sum(per);
        tape.backward(total)?;
        let losses = tape.value(per).data().to_vec();
        let grad = tape.grad(xv).expect("attack input gradient");
        Ok((losses, grad))
    }
}

/// Adversarial candidates for every row of `features`, one tensor per
/// candidate set. FGSM yields a single set. PGD yields two: the FGSM point
/// and the PGD refinement warm-started from it.
pub fn attack_dataset(
    enc: &Encoder,
    probe: &LinearProbe,
    features: &Tensor,
    labels: &[usize],
    attack: &AttackConfig,
    kind: AttackKind,
    seed: u64,
) -> Result<Vec<Tensor>> {
    attack.validate()?;
    let mut objective = classifier_attack_fn(enc, probe, labels);
    let first = adversarial::fgsm(
        &mut objective,
        features,
        attack.epsilon,
        attack.domain_bounds.as_ref(),
    )?;
    match kind {
        AttackKind::Fgsm => Ok(vec![first]),
        AttackKind::Pgd => {
            let refined = adversarial::pgd(&mut objective, features, Some(&first), attack, seed)?;
            Ok(vec![first, refined])
        }
    }
}

/// Accuracy on attacked inputs. A sample counts as robust only when every
/// candidate produced by `attack_dataset` is classified correctly. Zero
/// budget short-circuits to `standard_accuracy`, exactly.
pub fn robust_accuracy(
    enc: &Encoder,
    probe: &LinearProbe,
    ds: &Dataset,
    attack: &AttackConfig,
    kind: AttackKind,
    seed: u64,
) -> Result<f64> {
    if attack.epsilon == 0.0 {
        return standard_accuracy(enc, probe, ds);
    }
    let candidates = attack_dataset(enc, probe, &ds.features, &ds.labels, attack, kind, seed)?;
    let mut robust = vec![true; ds.len()];
    for cand in &candidates {
        let preds = predict(enc, probe, cand)?;
        for (i, (p, y)) in preds.iter().zip(&ds.labels).enumerate() {
            if p != y {
                robust[i] = false;
            }
        }
    }
    Ok(robust.iter().filter(|&&r| r).count() as f64 / ds.len() as f64)
}

/// Evaluate a frozen encoder on a dataset it was not trained on: split
/// `ds_b` 80/20, fit a fresh probe on the train side, report clean and
/// attacked accuracy on the test side.
pub fn transfer_eval(
    enc: &Encoder,
    ds_b: &Dataset,
    attack: &AttackConfig,
    kind: AttackKind,
    seed: u64,
) -> Result<(f64, f64)> {
    if enc.config().input_dim != ds_b.dim() {
        return Err(Error::DimensionMismatch {
            what: "transfer dataset feature dimension",
            expected: enc.config().input_dim,
            got: ds_b.dim(),
        });
    }
    let (train, test) = train_test_split(ds_b, 0.2, seed)?;
    let probe = train_linear_probe(enc, &train, PROBE_EPOCHS, PROBE_LR)?;
    let acc = standard_accuracy(enc, &probe, &test)?;
    let robust = robust_accuracy(enc, &probe, &test, attack, kind, seed)?;
    Ok((acc, robust))
}

/// The five headline numbers of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub standard_acc: f64,
    pub fgsm_acc: f64,
    pub pgd_acc: f64,
    pub transfer_acc: f64,
    pub transfer_fgsm_acc: f64,
}

impl EvalMetrics {
    /// Every field must be a fraction. Robust below standard is reported,
    /// never enforced.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("standard_acc", self.standard_acc),
            ("fgsm_acc", self.fgsm_acc),
            ("pgd_acc", self.pgd_acc),
            ("transfer_acc", self.transfer_acc),
            ("transfer_fgsm_acc", self.transfer_fgsm_acc),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidConfig {
                    field: format!("metrics.{name}"),
                    message: format!("accuracy must lie in [0, 1], got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Full evaluation pipeline. In-domain: 80/20 split of `ds`, probe on the
/// train side, clean plus FGSM plus PGD accuracy on the test side. Transfer:
/// fresh probe on `transfer_ds` with FGSM robustness. The same attack config
/// drives every attacked number; FGSM reads only its budget.
pub fn evaluate_encoder(
    enc: &Encoder,
    ds: &Dataset,
    transfer_ds: &Dataset,
    attack: &AttackConfig,
    seed: u64,
) -> Result<EvalMetrics> {
    let (train, test) = train_test_split(ds, 0.2, seed)?;
    let probe = train_linear_probe(enc, &train, PROBE_EPOCHS, PROBE_LR)?;
    let standard_acc = standard_accuracy(enc, &probe, &test)?;
    let fgsm_acc = robust_accuracy(enc, &probe, &test, attack, AttackKind::Fgsm, seed)?;
    let pgd_acc = robust_accuracy(enc, &probe, &test, attack, AttackKind::Pgd, seed)?;
    let (transfer_acc, transfer_fgsm_acc) =
        transfer_eval(enc, transfer_ds, attack, AttackKind::Fgsm, seed)?;
    let metrics = EvalMetrics {
        standard_acc,
        fgsm_acc,
        pgd_acc,
        transfer_acc,
        transfer_fgsm_acc,
    };
    metrics.validate()?;
    Ok(metrics)
}
