//! Desk-scale laboratory for the IntNaCl family of contrastive losses:
//! a reverse-mode tape, a small MLP encoder, the g0/g1/g2 negative-term
//! estimators, the NCA and mixture loss variants with an optional weighted
//! robust term, l-infinity attacks, and the synthetic-blob train/eval
//! pipeline that ties them together.
//!
//! The examples are the front door; each one is a runnable walkthrough of
//! one layer of the stack:
//!
//! | example | what it shows |
//! |---|---|
//! | `autodiff_basics` | the tape, gradients checked against finite differences |
//! | `estimator_tour` | g0 vs g1 vs g2, the clamp floor, hardness reweighting |
//! | `loss_tour` | every preset on one batch, the reduction identities |
//! | `supervised_nca` | metric learning on a tiny instance, both softmax forms |
//! | `attack_playground` | FGSM and PGD geometry, ball projection, probe damage |
//! | `train_and_probe` | the full pipeline the `run` subcommand wraps |
//! | `robust_training` | plain vs robust training, attacked-accuracy gap |
//! | `sweep_and_frontier` | grid sweeps and the frontier table via the library |
//!
//! Run any of them with `cargo run --example <name>`. The thin `intnacl`
//! binary exposes the same pipeline as subcommands (`run`, `sweep`, `eval`,
//! `export-frontier`, `presets`) for scripted use.

pub mod adversarial;
pub mod encoder;
pub mod error;
pub mod data;
pub mod estimators;
pub mod eval;
pub mod experiment;
pub mod loss;
pub mod nca;
pub mod tape;
pub mod train;
pub mod tensor;

pub use error::{Error, Result};
pub use tape::{finite_diff_grad, relative_error, Tape, Var};
pub use tensor::Tensor;
