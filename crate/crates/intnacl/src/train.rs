//! Optimizers and the encoder training loop.

use crate::data::{build_contrastive_batch, AugmentConfig, Dataset};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::loss::{intnacl_loss, LossConfig, LossFamily};
use crate::tape::Tape;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub betas: (f64, f64),
    pub eps: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 3e-4,
            optimizer: Optimizer::Adam,
            betas: (0.9, 0.999),
            eps: 1e-8,
            seed: 0,
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig {
                field: "train.epochs".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig {
                field: "train.batch_size".into(),
                message: "need at least 2 anchors per batch for nonempty negative sets".into(),
            });
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "train.learning_rate".into(),
                message: format!("must be finite and positive, got {}", self.learning_rate),
            });
        }
        for (name, beta) in [("beta1", self.betas.0), ("beta2", self.betas.1)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::InvalidConfig {
                    field: format!("train.{name}"),
                    message: format!("must lie in [0, 1), got {beta}"),
                });
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "train.eps".into(),
                message: format!("must be finite and positive, got {}", self.eps),
            });
        }
        self.loss.validate()?;
        self.augment.validate()
    }
}

/// Per-epoch record of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean batch loss per epoch; length equals the configured epochs.
    pub epoch_losses: Vec<f64>,
    pub wall_clock_seconds: f64,
    pub seed: u64,
    /// Batches for which adversarial views were generated; zero whenever
    /// the robust weight is zero.
    pub attacks_run: usize,
}

impl TrainHistory {
    /// Write per-epoch losses as CSV with columns `epoch,mean_loss`.
    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["epoch", "mean_loss"])?;
        for (epoch, loss) in self.epoch_losses.iter().enumerate() {
            writer.write_record([epoch.to_string(), format!("{loss}")])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// First and second moment estimates, one per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[&mut Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

fn check_param_grads(params: &[&mut Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::DimensionMismatch {
            what: "gradient list",
            expected: params.len(),
            got: grads.len(),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "optimizer step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// One bias-corrected Adam update across all parameter tensors.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) -> Result<()> {
    check_param_grads(params, grads)?;
    let (b1, b2) = betas;
    state.step += 1;
    let bias1 = 1.0 - b1.powi(state.step as i32);
    let bias2 = 1.0 - b2.powi(state.step as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, (&gk, pk)) in g.data().iter().zip(p.data_mut()).enumerate() {
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            *pk -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Plain gradient step.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
    check_param_grads(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pk, &gk) in p.data_mut().iter_mut().zip(g.data()) {
            *pk -= lr * gk;
        }
    }
    Ok(())
}

/// Train an encoder from scratch on contrastive batches of `ds`.
///
/// Each epoch reshuffles the whole dataset and walks it in fixed-size
/// chunks, dropping the last partial chunk so negative counts stay
/// constant. Batch assembly, attack generation, and the optimizer all draw
/// from one seeded stream, and the stream advances identically whether or
/// not attacks run, so runs differing only in the robust weight see the
/// same batches.
pub fn train_encoder(
    ds: &Dataset,
    enc_config: EncoderConfig,
    cfg: &TrainConfig,
) -> Result<(Encoder, TrainHistory)> {
    cfg.validate()?;
    if cfg.batch_size > ds.len() {
        return Err(Error::InvalidConfig {
            field: "train.batch_size".into(),
            message: format!("{} anchors requested from {} samples", cfg.batch_size, ds.len()),
        });
    }
    if enc_config.input_dim != ds.dim() {
        return Err(Error::DimensionMismatch {
            what: "encoder input",
            expected: ds.dim(),
            got: enc_config.input_dim,
        });
    }
    let need_fresh = cfg.loss.family == LossFamily::MixNca && cfg.loss.m > 1;
    let mut enc = Encoder::init(enc_config)?;
    let mut state = AdamState::new(&enc.params_mut());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut attacks_run = 0usize;
    let started = Instant::now();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..ds.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks_exact(cfg.batch_size).enumerate() {
            let batch_seed: u64 = rng.gen();
            let attack_seed: u64 = rng.gen();
            let batch = build_contrastive_batch(
                ds,
                chunk,
                cfg.loss.m,
                need_fresh,
                &cfg.augment,
                batch_seed,
            )?;
            let mut tape = Tape::new();
            let vars = enc.lift(&mut tape);
            let (loss, frozen) = intnacl_loss(&mut tape, &enc, &vars, &batch, &cfg.loss, attack_seed)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    value,
                });
            }
            if frozen.x_adv.is_some() {
                attacks_run += 1;
            }
            tape.backward(loss)?;
            let grads: Vec<Tensor> = vars
                .params()
                .iter()
                .map(|&v| tape.grad(v).expect("tracked parameter"))
                .collect();
            let mut params = enc.params_mut();
            match cfg.optimizer {
                Optimizer::Adam => adam_step(
                    &mut params,
                    &grads,
                    &mut state,
                    cfg.learning_rate,
                    cfg.betas,
                    cfg.eps,
                )?,
                Optimizer::Sgd => sgd_step(&mut params, &grads, cfg.learning_rate)?,
            }
            epoch_loss += value;
            batches += 1;
        }
        epoch_losses.push(epoch_loss / batches as f64);
    }

    Ok((
        enc,
        TrainHistory {
            epoch_losses,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            seed: cfg.seed,
            attacks_run,
        },
    ))
}
