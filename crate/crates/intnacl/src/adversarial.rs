//! FGSM and PGD perturbations under an l-infinity budget.
//!
//! The same machinery serves two roles: crafting adversarial positive views
//! during contrastive training, and attacking a trained probe at evaluation
//! time. Attacks are batched: the loss callback reports one loss per row
//! plus the gradient for the whole batch, and every row tracks its own best
//! candidate.
//!
//! Candidate retention rules, which the reduction and dominance identities
//! rely on:
//!
//! * Only post-step iterates are retained, so PGD with one iteration, one
//!   restart, and `step_size = epsilon` returns exactly the FGSM corner.
//! * A warm start counts as already retained, so a longer warm-started run
//!   can never end worse than the run that produced the warm start.
//! * Restart 0 begins at the center (or the warm start); later restarts
//!   begin uniformly inside the ball.

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-coordinate feature bounds, applied after the ball projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBounds {
    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() {
            return Err(Error::InvalidConfig {
                field: "attack.domain_bounds".into(),
                message: format!(
                    "lo has {} coordinates, hi has {}",
                    self.lo.len(),
                    self.hi.len()
                ),
            });
        }
        for (i, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(Error::InvalidConfig {
                    field: "attack.domain_bounds".into(),
                    message: format!("coordinate {i} has invalid interval [{l}, {h}]"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fgsm,
    Pgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// l-infinity budget. Zero short-circuits every attack to the identity.
    pub epsilon: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub domain_bounds: Option<DomainBounds>,
}

impl AttackConfig {
    /// One full-budget step: FGSM expressed in PGD terms.
    pub fn fgsm(epsilon: f64) -> Self {
        Self {
            epsilon,
            step_size: epsilon,
            iterations: 1,
            restarts: 1,
            domain_bounds: None,
        }
    }

    /// The evaluation-time schedule: step 1e-2, 10 iterations, 2 restarts.
    pub fn eval_default(epsilon: f64) -> Self {
        Self {
            epsilon,
            step_size: 1e-2,
            iterations: 10,
            restarts: 2,
            domain_bounds: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "attack.epsilon".into(),
                message: format!("budget must be finite and nonnegative, got {}", self.epsilon),
            });
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "attack.step_size".into(),
                message: format!("step size must be positive, got {}", self.step_size),
            });
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig {
                field: "attack.iterations".into(),
                message: "must run at least one iteration".into(),
            });
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig {
                field: "attack.restarts".into(),
                message: "must run at least one restart".into(),
            });
        }
        if let Some(b) = &self.domain_bounds {
            b.validate()?;
        }
        Ok(())
    }
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self::fgsm(0.05)
    }
}

/// True when every coordinate of `adv` lies inside the projected box
/// `[x - eps, x + eps]`, intersected with `bounds` when present. Uses the
/// same float arithmetic as the projection, so containment is exact.
pub fn within_ball(adv: &Tensor, x: &Tensor, eps: f64, bounds: Option<&DomainBounds>) -> bool {
    if adv.shape() != x.shape() {
        return false;
    }
    let cols = x.cols();
    adv.data().iter().zip(x.data()).enumerate().all(|(i, (&a, &c))| {
        let (mut lo, mut hi) = (c - eps, c + eps);
        if let Some(b) = bounds {
            lo = lo.max(b.lo[i % cols]);
            hi = hi.min(b.hi[i % cols]);
        }
        lo <= a && a <= hi
    })
}

fn project(candidate: &mut Tensor, center: &Tensor, eps: f64, bounds: Option<&DomainBounds>) {
    let cols = center.cols();
    let center_data = center.data().to_vec();
    for (i, v) in candidate.data_mut().iter_mut().enumerate() {
        let c = center_data[i];
        *v = v.clamp(c - eps, c + eps);
        if let Some(b) = bounds {
            *v = v.clamp(b.lo[i % cols], b.hi[i % cols]);
        }
    }
}

fn check_callback_shapes(x: &Tensor, losses: &[f64], grad: &Tensor) -> Result<()> {
    if losses.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            what: "attack loss vector".into(),
            expected: x.rows(),
            got: losses.len(),
        });
    }
    if grad.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            op: "attack gradient",
            left: grad.shape().to_vec(),
            right: x.shape().to_vec(),
        });
    }
    Ok(())
}

/// Single full-budget ascent step: `x + eps * sign(grad)`, projected.
/// Coordinates with zero gradient stay put.
pub fn fgsm<F>(
    loss_fn: &mut F,
    x: &Tensor,
    epsilon: f64,
    bounds: Option<&DomainBounds>,
) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<(Vec<f64>, Tensor)>,
{
    if epsilon == 0.0 {
        return Ok(x.clone());
    }
    let (losses, grad) = loss_fn(x)?;
    check_callback_shapes(x, &losses, &grad)?;
    let sign = grad.sign();
    let mut adv = x.clone();
    for (v, s) in adv.data_mut().iter_mut().zip(sign.data()) {
        *v += epsilon * s;
    }
    project(&mut adv, x, epsilon, bounds);
    Ok(adv)
}

/// Projected gradient ascent with restarts, returning each row's best
/// retained candidate. `warm_start` seeds restart 0 and is itself retained;
/// without it restart 0 begins at `x`.
pub fn pgd<F>(
    loss_fn: &mut F,
    x: &Tensor,
    warm_start: Option<&Tensor>,
    config: &AttackConfig,
    seed: u64,
) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<(Vec<f64>, Tensor)>,
{
    config.validate()?;
    if config.epsilon == 0.0 {
        return Ok(x.clone());
    }
    if let Some(w) = warm_start {
        if w.shape() != x.shape() {
            return Err(Error::ShapeMismatch {
                op: "pgd warm start",
                left: w.shape().to_vec(),
                right: x.shape().to_vec(),
            });
        }
    }
    let bounds = config.domain_bounds.as_ref();
    let rows = x.rows();
    let cols = x.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut best = x.clone();
    let mut best_loss = vec![f64::NEG_INFINITY; rows];
    let retain = |cand: &Tensor, losses: &[f64], best: &mut Tensor, best_loss: &mut [f64]| {
        for r in 0..rows {
            if losses[r] > best_loss[r] {
                best_loss[r] = losses[r];
                let src = cand.row(r).to_vec();
                best.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(&src);
            }
        }
    };

    for restart in 0..config.restarts {
        let warm_restart = restart == 0 && warm_start.is_some();
        let mut cur = if warm_restart {
            warm_start.unwrap().clone()
        } else if restart == 0 {
            x.clone()
        } else {
            let mut c = x.clone();
            for v in c.data_mut().iter_mut() {
                *v += rng.gen_range(-config.epsilon..config.epsilon);
            }
            project(&mut c, x, config.epsilon, bounds);
            c
        };

        for iter in 0..config.iterations {
            let (losses, grad) = loss_fn(&cur)?;
            check_callback_shapes(&cur, &losses, &grad)?;
            if iter > 0 || warm_restart {
                retain(&cur, &losses, &mut best, &mut best_loss);
            }
            let sign = grad.sign();
            for (v, s) in cur.data_mut().iter_mut().zip(sign.data()) {
                *v += config.step_size * s;
            }
            project(&mut cur, x, config.epsilon, bounds);
        }
        let (losses, _) = loss_fn(&cur)?;
        if losses.len() != rows {
            return Err(Error::DimensionMismatch {
                what: "attack loss vector".into(),
                expected: rows,
                got: losses.len(),
            });
        }
        retain(&cur, &losses, &mut best, &mut best_loss);
    }
    Ok(best)
}

/// Craft adversarial positive views for contrastive training: perturb each
/// row of `x_pos` to maximize its anchor's contrastive loss, holding the
/// anchor embeddings and the reduced negative terms fixed.
///
/// The negative term of the loss does not involve the perturbed views, so
/// callers pass it already reduced: `k_times_g[r]` is `K * G` for anchor
/// `r`. The returned tensor is a plain value with no tape attached; the
/// attack gradient never flows into encoder updates.
pub fn contrastive_adv_positive(
    enc: &Encoder,
    x_pos: &Tensor,
    anchor_embeddings: &Tensor,
    k_times_g: &[f64],
    t: f64,
    kind: AttackKind,
    config: &AttackConfig,
    seed: u64,
) -> Result<Tensor> {
    config.validate()?;
    if config.epsilon == 0.0 {
        return Ok(x_pos.clone());
    }
    if anchor_embeddings.rows() != x_pos.rows() || k_times_g.len() != x_pos.rows() {
        return Err(Error::DimensionMismatch {
            what: "adversarial positive batch".into(),
            expected: x_pos.rows(),
            got: anchor_embeddings.rows().min(k_times_g.len()),
        });
    }
    let mut loss_fn = |x: &Tensor| -> Result<(Vec<f64>, Tensor)> {
        let mut tape = Tape::new();
        let vars = enc.lift_frozen(&mut tape);
        let xv = tape.leaf(x.clone());
        let z = enc.encode_on(&mut tape, &vars, xv)?;
        let anchors = tape.constant(anchor_embeddings.clone());
        let s = tape.row_dot(z, anchors)?;
        let s = tape.scale(s, 1.0 / t);
        let es = tape.exp(s);
        let kg = tape.constant(Tensor::from_vec(vec![x.rows()], k_times_g.to_vec())?);
        let den = tape.add(es, kg)?;
        let log_den = tape.log(den);
        let per_row = tape.sub(log_den, s)?;
        let losses = tape.value(per_row).data().to_vec();
        let total = tape.sum(per_row);
        tape.backward(total)?;
        Ok((losses, tape.grad(xv).expect("input is tracked")))
    };
    match kind {
        AttackKind::Fgsm => fgsm(
            &mut loss_fn,
            x_pos,
            config.epsilon,
            config.domain_bounds.as_ref(),
        ),
        AttackKind::Pgd => pgd(&mut loss_fn, x_pos, None, config, seed),
    }
}
