//! The contrastive loss family, from plain SimCLR form to the full
//! IntNaCl objective.
//!
//! Every loss shares one skeleton: per anchor, `-log(numerator /
//! (numerator + K * G))`, averaged over the batch. The pieces vary:
//!
//! * numerator: `exp(s+)` for the M=1 form, a sum over M positive views
//!   for the NCA form, and for MIXNCA a slot-0 base term plus M-1 mixture
//!   terms with their own fresh negative sets;
//! * `G`: any estimator from the estimators module;
//! * an optional robust term on adversarial positives, weighted either by
//!   1 or by the detached per-anchor standard loss value.
//!
//! Batches store one shared view pool plus row indices, so the pool is
//! encoded once per loss evaluation no matter how many anchors share
//! views. Per-anchor negative selection happens through 0/1 masks applied
//! after exponentiation, which adds exact zeros and keeps reduction
//! identities bitwise.

use crate::adversarial::{self, AttackConfig, AttackKind};
use crate::encoder::{Encoder, EncoderVars};
use crate::error::{Error, Result};
use crate::estimators::{debias_mean_on_tape, k_times_g_on_tape, EstimatorConfig, EstimatorKind};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// A fresh negative set for one mixture slot: its own view pool plus
/// per-anchor negative rows into that pool.
#[derive(Debug, Clone, PartialEq)]
pub struct FreshSet {
    pub pool: Tensor,
    pub negative_rows: Vec<Vec<usize>>,
}

/// One contrastive batch over a shared view pool.
///
/// `views` holds every encodable input row once. Anchors, positive views,
/// negatives, and mixture partners are row indices into it; per-anchor
/// structure lives in the index lists, not in duplicated data.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    views: Tensor,
    anchor_rows: Vec<usize>,
    /// Flattened `[anchor][slot]`, `n * m_views` entries.
    positive_rows: Vec<usize>,
    /// Per anchor, each the same length `k`.
    negative_rows: Vec<Vec<usize>>,
    /// Flattened `[anchor][view]`, `n * m_debias` entries.
    debias_rows: Vec<usize>,
    /// Empty, or one set per mixture slot (`m_views - 1` of them).
    fresh: Vec<FreshSet>,
    /// Flattened `[anchor][mixture slot]`; each entry must be one of that
    /// anchor's negative rows.
    mix_partner_rows: Vec<usize>,
}

impl ContrastiveBatch {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        views: Tensor,
        anchor_rows: Vec<usize>,
        positive_rows: Vec<usize>,
        negative_rows: Vec<Vec<usize>>,
        debias_rows: Vec<usize>,
        fresh: Vec<FreshSet>,
        mix_partner_rows: Vec<usize>,
    ) -> Result<Self> {
        let n = anchor_rows.len();
        let p = views.rows();
        let invalid = |message: String| Error::InvalidConfig {
            field: "batch".into(),
            message,
        };
        if n == 0 {
            return Err(invalid("batch needs at least one anchor".into()));
        }
        if positive_rows.is_empty() || positive_rows.len() % n != 0 {
            return Err(invalid(format!(
                "{} positive rows do not divide into {} anchors",
                positive_rows.len(),
                n
            )));
        }
        let m = positive_rows.len() / n;
        if negative_rows.len() != n {
            return Err(invalid(format!(
                "{} negative lists for {} anchors",
                negative_rows.len(),
                n
            )));
        }
        let k = negative_rows[0].len();
        if k == 0 {
            return Err(Error::EmptySet { what: "negatives" });
        }
        if negative_rows.iter().any(|r| r.len() != k) {
            return Err(invalid("anchors must share one negative count".into()));
        }
        if debias_rows.is_empty() || debias_rows.len() % n != 0 {
            return Err(invalid(format!(
                "{} debias rows do not divide into {} anchors",
                debias_rows.len(),
                n
            )));
        }
        let all_rows = anchor_rows
            .iter()
            .chain(&positive_rows)
            .chain(negative_rows.iter().flatten())
            .chain(&debias_rows)
            .chain(&mix_partner_rows);
        if all_rows.into_iter().any(|&r| r >= p) {
            return Err(invalid(format!(
                "row index out of range (pool has {p} rows)"
            )));
        }
        if !fresh.is_empty() {
            if fresh.len() != m - 1 {
                return Err(invalid(format!(
                    "{} fresh sets for {} mixture slots",
                    fresh.len(),
                    m - 1
                )));
            }
            if mix_partner_rows.len() != n * (m - 1) {
                return Err(invalid(format!(
                    "{} mix partners, expected {}",
                    mix_partner_rows.len(),
                    n * (m - 1)
                )));
            }
            for (i, &partner) in mix_partner_rows.iter().enumerate() {
                let anchor = i / (m - 1);
                if !negative_rows[anchor].contains(&partner) {
                    return Err(invalid(format!(
                        "mix partner row {partner} is not a negative of anchor {anchor}"
                    )));
                }
            }
            for (j, set) in fresh.iter().enumerate() {
                if set.negative_rows.len() != n {
                    return Err(invalid(format!(
                        "fresh set {j} has {} negative lists for {} anchors",
                        set.negative_rows.len(),
                        n
                    )));
                }
                let q = set.pool.rows();
                for rows in &set.negative_rows {
                    if rows.len() != k {
                        return Err(invalid(format!(
                            "fresh set {j} negative count {} differs from batch count {k}",
                            rows.len()
                        )));
                    }
                    if rows.iter().any(|&r| r >= q) {
                        return Err(invalid(format!(
                            "fresh set {j} row index out of range (pool has {q} rows)"
                        )));
                    }
                }
                if set.pool.cols() != views.cols() {
                    return Err(invalid(format!(
                        "fresh set {j} input width {} differs from batch width {}",
                        set.pool.cols(),
                        views.cols()
                    )));
                }
            }
        } else if !mix_partner_rows.is_empty() {
            return Err(invalid("mix partners given without fresh sets".into()));
        }
        Ok(Self {
            views,
            anchor_rows,
            positive_rows,
            negative_rows,
            debias_rows,
            fresh,
            mix_partner_rows,
        })
    }

    pub fn n(&self) -> usize {
        self.anchor_rows.len()
    }

    pub fn m_views(&self) -> usize {
        self.positive_rows.len() / self.n()
    }

    pub fn m_debias(&self) -> usize {
        self.debias_rows.len() / self.n()
    }

    pub fn k_negatives(&self) -> usize {
        self.negative_rows[0].len()
    }

    pub fn input_dim(&self) -> usize {
        self.views.cols()
    }

    pub fn has_fresh(&self) -> bool {
        !self.fresh.is_empty()
    }

    pub fn views(&self) -> &Tensor {
        &self.views
    }

    /// Same index structure over a replacement view pool of identical
    /// shape. Lets callers probe the loss as a function of the inputs.
    pub fn with_views(&self, views: Tensor) -> Result<Self> {
        if views.shape() != self.views.shape() {
            return Err(Error::DimensionMismatch {
                what: "replacement views",
                expected: self.views.numel(),
                got: views.numel(),
            });
        }
        Self::new(
            views,
            self.anchor_rows.clone(),
            self.positive_rows.clone(),
            self.negative_rows.clone(),
            self.debias_rows.clone(),
            self.fresh.clone(),
            self.mix_partner_rows.clone(),
        )
    }

    /// Anchor inputs as an `[n, d]` tensor.
    pub fn anchors(&self) -> Tensor {
        self.views.gather_rows(&self.anchor_rows)
    }

    /// Positive view `slot` of every anchor as an `[n, d]` tensor.
    pub fn positive_view(&self, slot: usize) -> Tensor {
        self.views.gather_rows(&self.positive_slot_rows(slot))
    }

    /// Negative inputs of one anchor as a `[k, d]` tensor.
    pub fn negatives_of(&self, anchor: usize) -> Tensor {
        self.views.gather_rows(&self.negative_rows[anchor])
    }

    /// Row indices of one anchor's negatives within the shared pool.
    pub fn negative_row_indices(&self, anchor: usize) -> &[usize] {
        &self.negative_rows[anchor]
    }

    /// Debias views of one anchor as an `[m_debias, d]` tensor.
    pub fn debias_of(&self, anchor: usize) -> Tensor {
        let m = self.m_debias();
        self.views
            .gather_rows(&self.debias_rows[anchor * m..(anchor + 1) * m])
    }

    fn positive_slot_rows(&self, slot: usize) -> Vec<usize> {
        let m = self.m_views();
        (0..self.n())
            .map(|i| self.positive_rows[i * m + slot])
            .collect()
    }

    fn partner_slot_rows(&self, slot: usize) -> Vec<usize> {
        let m = self.m_views() - 1;
        (0..self.n())
            .map(|i| self.mix_partner_rows[i * m + slot])
            .collect()
    }

    /// 0/1 mask `[n, pool]` selecting each anchor's negatives.
    fn negative_mask(&self) -> Tensor {
        let (n, p) = (self.n(), self.views.rows());
        let mut data = vec![0.0; n * p];
        for (i, rows) in self.negative_rows.iter().enumerate() {
            for &r in rows {
                data[i * p + r] = 1.0;
            }
        }
        Tensor::from_vec(vec![n, p], data).expect("mask shape")
    }

    /// 0/1 mask `[n, n * m_debias]` selecting each anchor's own rows in the
    /// gathered debias grid.
    fn debias_mask(&self) -> Tensor {
        let (n, m) = (self.n(), self.m_debias());
        let mut data = vec![0.0; n * n * m];
        for i in 0..n {
            for j in 0..m {
                data[i * n * m + i * m + j] = 1.0;
            }
        }
        Tensor::from_vec(vec![n, n * m], data).expect("mask shape")
    }

    fn fresh_mask(&self, slot: usize) -> Tensor {
        let n = self.n();
        let q = self.fresh[slot].pool.rows();
        let mut data = vec![0.0; n * q];
        for (i, rows) in self.fresh[slot].negative_rows.iter().enumerate() {
            for &r in rows {
                data[i * q + r] = 1.0;
            }
        }
        Tensor::from_vec(vec![n, q], data).expect("mask shape")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Nca,
    MixNca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    ConstantOne,
    AdversarialHat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub family: LossFamily,
    /// Estimator for the base/NCA/mixture terms.
    pub g1: EstimatorConfig,
    /// Positive views per anchor (real ones for NCA; slot 0 plus mixtures
    /// for MIXNCA).
    pub m: usize,
    /// Mixture coefficient, in (0, 1]. Read only when family is MIXNCA
    /// with m > 1.
    pub lambda: f64,
    /// Weight of the robust term; 0 disables attacks entirely.
    pub alpha: f64,
    /// Estimator for the robust term and the adversarial weight.
    pub g2: EstimatorConfig,
    pub weighting: Weighting,
    pub attack: AttackConfig,
    pub attack_kind: AttackKind,
    /// Perturb the raw anchor instead of its positive view.
    pub attack_anchor: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            family: LossFamily::Nca,
            g1: EstimatorConfig::g0(),
            m: 1,
            lambda: 0.5,
            alpha: 0.0,
            g2: EstimatorConfig::g0(),
            weighting: Weighting::ConstantOne,
            attack: AttackConfig::default(),
            attack_kind: AttackKind::Fgsm,
            attack_anchor: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        self.g1.validate()?;
        if self.m == 0 {
            return Err(Error::InvalidConfig {
                field: "loss.m".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.family == LossFamily::MixNca && self.m > 1 {
            check_lambda(self.lambda)?;
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "loss.alpha".into(),
                message: format!("must be finite and nonnegative, got {}", self.alpha),
            });
        }
        if self.alpha > 0.0 {
            self.g2.validate()?;
            self.attack.validate()?;
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidConfig {
            field: "loss.lambda".into(),
            message: format!("must lie in (0, 1], got {lambda}"),
        });
    }
    Ok(())
}

pub const PRESET_NAMES: [&str; 6] = [
    "simclr",
    "debiased",
    "debiased_hardneg",
    "adv",
    "intcl_fig1",
    "intnacl_fig1",
];

/// Named configurations matching the published comparison grid.
pub fn preset(name: &str) -> Result<LossConfig> {
    let base = LossConfig::default();
    let cfg = match name {
        "simclr" => base,
        "debiased" => LossConfig {
            g1: EstimatorConfig::g1(),
            ..base
        },
        "debiased_hardneg" => LossConfig {
            g1: EstimatorConfig::g2(),
            ..base
        },
        "adv" => LossConfig {
            alpha: 1.0,
            g2: EstimatorConfig::g0(),
            weighting: Weighting::ConstantOne,
            ..base
        },
        "intcl_fig1" => LossConfig {
            g1: EstimatorConfig::g2(),
            alpha: 1.0,
            g2: EstimatorConfig::g2(),
            weighting: Weighting::AdversarialHat,
            ..base
        },
        "intnacl_fig1" => LossConfig {
            family: LossFamily::MixNca,
            g1: EstimatorConfig::g2(),
            m: 5,
            lambda: 0.5,
            alpha: 1.0,
            g2: EstimatorConfig::g2(),
            weighting: Weighting::AdversarialHat,
            ..base
        },
        other => {
            return Err(Error::UnknownPreset {
                name: other.into(),
                valid: &PRESET_NAMES,
            })
        }
    };
    Ok(cfg)
}

/// Detached inputs regenerated per step during training but replayed
/// verbatim by gradient checks: the adversarial views and the per-anchor
/// loss weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrozenParts {
    pub x_adv: Option<Tensor>,
    pub weights: Option<Vec<f64>>,
}

/// Shared per-tape plumbing: the tracked input pool, its embeddings, the
/// anchor embeddings, the raw score grid against the pool, and the raw
/// debias grid when any estimator needs it.
struct BatchGraph {
    x_pool: Var,
    z_pool: Var,
    z_anchor: Var,
    scores: Var,
    neg_mask: Tensor,
    v_grid: Option<(Var, Tensor)>,
}

fn needs_debias(cfg: &EstimatorConfig) -> bool {
    cfg.kind != EstimatorKind::G0
}

fn embed_batch(
    tape: &mut Tape,
    enc: &Encoder,
    vars: &EncoderVars,
    batch: &ContrastiveBatch,
    with_debias: bool,
) -> Result<BatchGraph> {
    let x_pool = tape.leaf(batch.views.clone());
    let z_pool = enc.encode_on(tape, vars, x_pool)?;
    let z_anchor = tape.gather(z_pool, batch.anchor_rows.clone())?;
    let scores = tape.matmul_bt(z_anchor, z_pool)?;
    let v_grid = if with_debias {
        let z_debias = tape.gather(z_pool, batch.debias_rows.clone())?;
        let grid = tape.matmul_bt(z_anchor, z_debias)?;
        Some((grid, batch.debias_mask()))
    } else {
        None
    };
    Ok(BatchGraph {
        x_pool,
        z_pool,
        z_anchor,
        scores,
        neg_mask: batch.negative_mask(),
        v_grid,
    })
}

/// `K * G` per anchor for one estimator config, building the debias mean at
/// that config's temperature.
fn kg_for(
    tape: &mut Tape,
    bg: &BatchGraph,
    batch: &ContrastiveBatch,
    cfg: &EstimatorConfig,
) -> Result<Var> {
    cfg.validate()?;
    let mean_v = if needs_debias(cfg) {
        let (grid, mask) = bg.v_grid.as_ref().ok_or(Error::EmptySet {
            what: "debias_views",
        })?;
        Some(debias_mean_on_tape(
            tape,
            cfg.t,
            *grid,
            Some(mask),
            batch.m_debias(),
        )?)
    } else {
        None
    };
    k_times_g_on_tape(
        tape,
        cfg,
        bg.scores,
        &bg.neg_mask,
        batch.k_negatives(),
        mean_v,
    )
}

/// `exp(s_slot / t)` per anchor for one positive slot.
fn exp_positive_score(
    tape: &mut Tape,
    bg: &BatchGraph,
    batch: &ContrastiveBatch,
    slot: usize,
    t: f64,
) -> Result<Var> {
    let z_pos = tape.gather(bg.z_pool, batch.positive_slot_rows(slot))?;
    let s = tape.row_dot(bg.z_anchor, z_pos)?;
    let s = tape.scale(s, 1.0 / t);
    Ok(tape.exp(s))
}

/// Per-anchor NCA loss `[n]`: `log(num + KG) - log(num)` with the numerator
/// summed over all positive slots.
fn nca_per_anchor_on(
    tape: &mut Tape,
    batch: &ContrastiveBatch,
    bg: &BatchGraph,
    g: &EstimatorConfig,
) -> Result<Var> {
    let kg = kg_for(tape, bg, batch, g)?;
    let mut num = exp_positive_score(tape, bg, batch, 0, g.t)?;
    for slot in 1..batch.m_views() {
        let e = exp_positive_score(tape, bg, batch, slot, g.t)?;
        num = tape.add(num, e)?;
    }
    let den = tape.add(num, kg)?;
    let log_den = tape.log(den);
    let log_num = tape.log(num);
    tape.sub(log_den, log_num)
}

/// Per-anchor MIXNCA loss `[n]`: slot-0 base term plus mixture terms, each
/// mixture blended in raw input space, encoded, and scored against its own
/// fresh negative set.
fn mixnca_per_anchor_on(
    tape: &mut Tape,
    enc: &Encoder,
    vars: &EncoderVars,
    batch: &ContrastiveBatch,
    bg: &BatchGraph,
    g: &EstimatorConfig,
    lambda: f64,
) -> Result<Var> {
    let m = batch.m_views();
    check_lambda(lambda)?;
    if m > 1 && !batch.has_fresh() {
        return Err(Error::EmptySet {
            what: "fresh_negatives",
        });
    }
    let kg = kg_for(tape, bg, batch, g)?;
    let num = exp_positive_score(tape, bg, batch, 0, g.t)?;
    let den = tape.add(num, kg)?;
    let log_den = tape.log(den);
    let log_num = tape.log(num);
    let mut per_anchor = tape.sub(log_den, log_num)?;
    if m == 1 {
        return Ok(per_anchor);
    }

    let pos0 = tape.gather(bg.x_pool, batch.positive_slot_rows(0))?;
    let pos0_scaled = tape.scale(pos0, lambda);
    let coeff = 1.0 / (m - 1) as f64;
    for slot in 0..m - 1 {
        let partner = tape.gather(bg.x_pool, batch.partner_slot_rows(slot))?;
        let partner_scaled = tape.scale(partner, 1.0 - lambda);
        let mix = tape.add(pos0_scaled, partner_scaled)?;
        let z_mix = enc.encode_on(tape, vars, mix)?;
        let s_mix = tape.row_dot(bg.z_anchor, z_mix)?;
        let s_mix = tape.scale(s_mix, 1.0 / g.t);
        let e_mix = tape.exp(s_mix);

        let fresh_leaf = tape.leaf(batch.fresh[slot].pool.clone());
        let z_fresh = enc.encode_on(tape, vars, fresh_leaf)?;
        let fresh_scores = tape.matmul_bt(bg.z_anchor, z_fresh)?;
        let fresh_bg = BatchGraph {
            x_pool: fresh_leaf,
            z_pool: z_fresh,
            z_anchor: bg.z_anchor,
            scores: fresh_scores,
            neg_mask: batch.fresh_mask(slot),
            v_grid: bg.v_grid.clone(),
        };
        let kg_fresh = kg_for(tape, &fresh_bg, batch, g)?;

        // -log(Omega) = log(den) - s_mix; -log(1 - Omega) = log(den) - log(KG),
        // both finite since numerator and KG are strictly positive.
        let mix_den = tape.add(e_mix, kg_fresh)?;
        let log_mix_den = tape.log(mix_den);
        let neg_log_omega = tape.sub(log_mix_den, s_mix)?;
        let log_kg_fresh = tape.log(kg_fresh);
        let neg_log_one_minus = tape.sub(log_mix_den, log_kg_fresh)?;
        let wa = tape.scale(neg_log_omega, lambda * coeff);
        let wb = tape.scale(neg_log_one_minus, (1.0 - lambda) * coeff);
        let term = tape.add(wa, wb)?;
        per_anchor = tape.add(per_anchor, term)?;
    }
    Ok(per_anchor)
}

/// Per-anchor robust term `[n]`: each anchor against its detached
/// adversarial view over the batch negatives, times the detached weight.
#[allow(clippy::too_many_arguments)]
fn robust_per_anchor_on(
    tape: &mut Tape,
    enc: &Encoder,
    vars: &EncoderVars,
    batch: &ContrastiveBatch,
    bg: &BatchGraph,
    kg2: Var,
    x_adv: &Tensor,
    t: f64,
    weights: &[f64],
    against_positive: bool,
) -> Result<Var> {
    let n = batch.n();
    if x_adv.rows() != n || x_adv.cols() != batch.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "adversarial views".into(),
            expected: n * batch.input_dim(),
            got: x_adv.numel(),
        });
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            what: "per-anchor weights".into(),
            expected: n,
            got: weights.len(),
        });
    }
    let x_adv_var = tape.constant(x_adv.clone());
    let z_adv = enc.encode_on(tape, vars, x_adv_var)?;
    let reference = if against_positive {
        tape.gather(bg.z_pool, batch.positive_slot_rows(0))?
    } else {
        bg.z_anchor
    };
    let s_adv = tape.row_dot(reference, z_adv)?;
    let s_adv = tape.scale(s_adv, 1.0 / t);
    let e_adv = tape.exp(s_adv);
    let den = tape.add(e_adv, kg2)?;
    let log_den = tape.log(den);
    let per = tape.sub(log_den, s_adv)?;
    let w = tape.constant(Tensor::from_vec(vec![n], weights.to_vec())?);
    tape.mul(per, w)
}

/// SimCLR-form loss: the M=1 contrastive loss with estimator `g`, averaged
/// over anchors.
pub fn contrastive_loss(
    tape: &mut Tape,
    enc: &Encoder,
    vars: &EncoderVars,
    batch: &ContrastiveBatch,
    g: &EstimatorConfig,
) -> Result<Var> {
    if batch.m_views() != 1 {
        return Err(Error::InvalidConfig {
            field: "batch.m_views".into(),
            message: format!(
                "contrastive_loss requires exactly one positive view, got {}; use nca_loss",
                batch.m_views()
            ),
        });
    }
    nca_loss(tape, enc, vars, batch, g)
}

/// NCA loss: all M positive views in the numerator, averaged over anchors.
pub fn nca_loss(
    tape: &mut Tape,
    enc: &Encoder,
    vars: &EncoderVars,
    batch: &ContrastiveBatch,
    g: &EstimatorConfig,
) -> Result<Var> {
    let bg = embed_batch(tape, enc, vars, batch, needs_debias(g))?;
    let per = nca_per_anchor_on(tape, batch, &bg, g)?;
    Ok(tape.mean(per))
}

/// MIXNCA loss: slot-0 base term plus input-space mixture terms against
/// fresh negative sets, averaged over anchors.
pub fn mixnca_loss(
    tape: &mut Tape,
    enc: &Encoder,
    vars: &EncoderVars,
    batch: &ContrastiveBatch,
    g: &EstimatorConfig,
    lambda: f64,
) -> Result<Var> {
    let bg = embed_batch(tape, enc, vars, batch, needs_debias(g))?;
    let per = mixnca_per_anchor_on(tape, enc, vars, batch, &bg, g, lambda)?;
    Ok(tape.mean(per))
}

/// Per-anchor standard contrastive loss values, gradient-detached: the
/// adversarial weighting function. Uses positive slot 0.
pub fn adversarial_weight(
    enc: &Encoder,
    batch: &ContrastiveBatch,
    g: &EstimatorConfig,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = enc.lift_frozen(&mut tape);
    let bg = embed_batch(&mut tape, enc, &vars, batch, needs_debias(g))?;
    let kg = kg_for(&mut tape, &bg, batch, g)?;
    let z_pos = tape.gather(bg.z_pool, batch.positive_slot_rows(0))?;
    let s = tape.row_dot(bg.z_anchor, z_pos)?;
    let s = tape.scale(s, 1.0 / g.t);
    let s_vals = tape.value(s).data().to_vec();
    let kg_vals = tape.value(kg).data().to_vec();
    Ok(s_vals
        .iter()
        .zip(&kg_vals)
        .map(|(&s, &kg)| (s.exp() + kg).ln() - s)
        .collect())
}

/// Robust term as a standalone loss: each anchor against its adversarial
/// view, weighted per anchor and averaged. `x_adv` enters as a detached
/// constant; gradient flows through the encoder weights and the estimator
/// only.
pub fn robust_loss(
    tape: &mut Tape,
    enc: &Encoder,
    vars: &EncoderVars,
    batch: &ContrastiveBatch,
    x_adv: &Tensor,
    g2: &EstimatorConfig,
    weights: &[f64],
) -> Result<Var> {
    let bg = embed_batch(tape, enc, vars, batch, needs_debias(g2))?;
    let kg2 = kg_for(tape, &bg, batch, g2)?;
    let per = robust_per_anchor_on(
        tape, enc, vars, batch, &bg, kg2, x_adv, g2.t, weights, false,
    )?;
    Ok(tape.mean(per))
}

/// The full objective: the NaCl term plus `alpha` times the robust term.
///
/// When `alpha > 0` the adversarial views and (for the hat weighting) the
/// per-anchor weights are generated here from the current encoder values,
/// then treated as constants. The returned [`FrozenParts`] lets callers
/// replay the identical loss, which finite-difference checks require.
pub fn intnacl_loss(
    tape: &mut Tape,
    enc: &Encoder,
    vars: &EncoderVars,
    batch: &ContrastiveBatch,
    cfg: &LossConfig,
    seed: u64,
) -> Result<(Var, FrozenParts)> {
    build_intnacl(tape, enc, vars, batch, cfg, seed, None).map(|(loss, _, frozen)| (loss, frozen))
}

/// Like [`intnacl_loss`], additionally returning the lifted view pool so
/// callers can read `d loss / d views` off the tape after backward. The
/// fresh mixture pools stay internal leaves and are not covered.
pub fn intnacl_loss_with_input(
    tape: &mut Tape,
    enc: &Encoder,
    vars: &EncoderVars,
    batch: &ContrastiveBatch,
    cfg: &LossConfig,
    seed: u64,
) -> Result<(Var, Var, FrozenParts)> {
    build_intnacl(tape, enc, vars, batch, cfg, seed, None)
}

/// Rebuild the objective with previously generated adversarial views and
/// weights instead of fresh ones.
pub fn intnacl_loss_frozen(
    tape: &mut Tape,
    enc: &Encoder,
    vars: &EncoderVars,
    batch: &ContrastiveBatch,
    cfg: &LossConfig,
    frozen: &FrozenParts,
) -> Result<Var> {
    build_intnacl(tape, enc, vars, batch, cfg, 0, Some(frozen)).map(|(loss, _, _)| loss)
}

fn build_intnacl(
    tape: &mut Tape,
    enc: &Encoder,
    vars: &EncoderVars,
    batch: &ContrastiveBatch,
    cfg: &LossConfig,
    seed: u64,
    frozen: Option<&FrozenParts>,
) -> Result<(Var, Var, FrozenParts)> {
    cfg.validate()?;
    if cfg.m != batch.m_views() {
        return Err(Error::InvalidConfig {
            field: "loss.m".into(),
            message: format!(
                "config expects {} positive views, batch has {}",
                cfg.m,
                batch.m_views()
            ),
        });
    }
    let with_debias = needs_debias(&cfg.g1) || (cfg.alpha > 0.0 && needs_debias(&cfg.g2));
    let bg = embed_batch(tape, enc, vars, batch, with_debias)?;
    let family_per = match cfg.family {
        LossFamily::Nca => nca_per_anchor_on(tape, batch, &bg, &cfg.g1)?,
        LossFamily::MixNca => {
            mixnca_per_anchor_on(tape, enc, vars, batch, &bg, &cfg.g1, cfg.lambda)?
        }
    };
    let family_mean = tape.mean(family_per);
    if cfg.alpha == 0.0 {
        return Ok((family_mean, bg.x_pool, FrozenParts::default()));
    }

    let kg2 = kg_for(tape, &bg, batch, &cfg.g2)?;
    let weights = match frozen.and_then(|f| f.weights.clone()) {
        Some(w) => w,
        None => match cfg.weighting {
            Weighting::ConstantOne => vec![1.0; batch.n()],
            Weighting::AdversarialHat => {
                // The hat weight is the per-anchor standard loss value at
                // slot 0 with the robust estimator, read off the live tape.
                let z_pos = tape.gather(bg.z_pool, batch.positive_slot_rows(0))?;
                let s = tape.row_dot(bg.z_anchor, z_pos)?;
                let s = tape.scale(s, 1.0 / cfg.g2.t);
                let s_vals = tape.value(s).data().to_vec();
                let kg_vals = tape.value(kg2).data().to_vec();
                s_vals
                    .iter()
                    .zip(&kg_vals)
                    .map(|(&s, &kg)| (s.exp() + kg).ln() - s)
                    .collect()
            }
        },
    };
    let x_adv = match frozen.and_then(|f| f.x_adv.clone()) {
        Some(adv) => adv,
        None => {
            let target_inputs = if cfg.attack_anchor {
                batch.anchors()
            } else {
                batch.positive_view(0)
            };
            let reference = if cfg.attack_anchor {
                tape.gather(bg.z_pool, batch.positive_slot_rows(0))?
            } else {
                bg.z_anchor
            };
            let reference_vals = tape.value(reference).clone();
            let kg2_vals = tape.value(kg2).data().to_vec();
            adversarial::contrastive_adv_positive(
                enc,
                &target_inputs,
                &reference_vals,
                &kg2_vals,
                cfg.g2.t,
                cfg.attack_kind,
                &cfg.attack,
                seed,
            )?
        }
    };

    let robust_per = robust_per_anchor_on(
        tape,
        enc,
        vars,
        batch,
        &bg,
        kg2,
        &x_adv,
        cfg.g2.t,
        &weights,
        cfg.attack_anchor,
    )?;
    let robust_mean = tape.mean(robust_per);
    let scaled = tape.scale(robust_mean, cfg.alpha);
    let total = tape.add(family_mean, scaled)?;
    Ok((
        total,
        bg.x_pool,
        FrozenParts {
            x_adv: Some(x_adv),
            weights: Some(weights),
        },
    ))
}

/// Convenience: evaluate the full objective as a plain number with frozen
/// encoder parameters.
pub fn loss_value(
    enc: &Encoder,
    batch: &ContrastiveBatch,
    cfg: &LossConfig,
    seed: u64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = enc.lift_frozen(&mut tape);
    let (loss, _) = intnacl_loss(&mut tape, enc, &vars, batch, cfg, seed)?;
    Ok(tape.value(loss).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{finite_diff_grad, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    /// One anchor with explicit single-slot structure: pool rows are
    /// anchor, positives, then negatives; debias view is the first
    /// positive.
    fn single_anchor_batch(
        anchor: Vec<f64>,
        positives: Vec<Vec<f64>>,
        negatives: Vec<Vec<f64>>,
    ) -> ContrastiveBatch {
        let m = positives.len();
        let k = negatives.len();
        let mut rows = vec![anchor];
        rows.extend(positives);
        rows.extend(negatives);
        ContrastiveBatch::new(
            Tensor::from_rows(&rows).unwrap(),
            vec![0],
            (1..=m).collect(),
            vec![(m + 1..m + 1 + k).collect()],
            vec![1],
            vec![],
            vec![],
        )
        .unwrap()
    }

    fn eval_on_pass_through<F>(build: F) -> f64
    where
        F: FnOnce(&mut Tape, &Encoder, &EncoderVars) -> Result<Var>,
    {
        let enc = Encoder::pass_through(2).unwrap();
        let mut tape = Tape::new();
        let vars = enc.lift_frozen(&mut tape);
        let v = build(&mut tape, &enc, &vars).unwrap();
        tape.value(v).item()
    }

    /// Random batch in the standard block layout: per anchor one block of
    /// m+1 main rows, one debias row at the tail, negatives = all other
    /// anchors' main rows.
    fn random_batch(seed: u64, n: usize, m: usize, with_fresh: bool) -> ContrastiveBatch {
        let d = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand_rows = |rows: usize| -> Tensor {
            Tensor::from_vec(
                vec![rows, d],
                (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        };
        let main_rows = n * (m + 1);
        let views = Tensor::concat_rows(&[&rand_rows(main_rows), &rand_rows(n)]).unwrap();
        let anchor_rows: Vec<usize> = (0..n).map(|i| i * (m + 1)).collect();
        let positive_rows: Vec<usize> = (0..n)
            .flat_map(|i| (1..=m).map(move |j| i * (m + 1) + j))
            .collect();
        let negative_rows: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                (0..main_rows)
                    .filter(|r| r / (m + 1) != i)
                    .collect::<Vec<_>>()
            })
            .collect();
        let debias_rows: Vec<usize> = (0..n).map(|i| main_rows + i).collect();
        let (fresh, partners) = if with_fresh && m > 1 {
            let fresh: Vec<FreshSet> = (0..m - 1)
                .map(|_| FreshSet {
                    pool: rand_rows(main_rows),
                    negative_rows: negative_rows.clone(),
                })
                .collect();
            let mut partners = Vec::with_capacity(n * (m - 1));
            for negs in &negative_rows {
                for _ in 0..m - 1 {
                    partners.push(negs[rng.gen_range(0..negs.len())]);
                }
            }
            (fresh, partners)
        } else {
            (vec![], vec![])
        };
        ContrastiveBatch::new(
            views,
            anchor_rows,
            positive_rows,
            negative_rows,
            debias_rows,
            fresh,
            partners,
        )
        .unwrap()
    }

    #[test]
    fn contrastive_frozen_single_negative() {
        let batch = single_anchor_batch(
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0]],
            vec![vec![0.0, 1.0]],
        );
        let v = eval_on_pass_through(|t, e, vars| {
            contrastive_loss(t, e, vars, &batch, &EstimatorConfig::g0())
        });
        assert_close(v, (1.0 + (-1.0f64).exp()).ln(), 1e-12);
        assert_close(v, 0.313262, 1e-6);
    }

    #[test]
    fn contrastive_symmetric_case_is_log_two() {
        let batch = single_anchor_batch(
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0]],
            vec![vec![1.0, 0.0]],
        );
        let v = eval_on_pass_through(|t, e, vars| {
            contrastive_loss(t, e, vars, &batch, &EstimatorConfig::g0())
        });
        assert_close(v, 2.0f64.ln(), 1e-12);
        assert_close(v, 0.693147, 1e-6);
    }

    #[test]
    fn contrastive_invariant_under_negative_permutation() {
        let a = single_anchor_batch(
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0]],
            vec![vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.6, 0.8]],
        );
        let b = single_anchor_batch(
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0]],
            vec![vec![0.6, 0.8], vec![-1.0, 0.0], vec![0.0, 1.0]],
        );
        let va = eval_on_pass_through(|t, e, vars| {
            contrastive_loss(t, e, vars, &a, &EstimatorConfig::g0())
        });
        let vb = eval_on_pass_through(|t, e, vars| {
            contrastive_loss(t, e, vars, &b, &EstimatorConfig::g0())
        });
        assert_close(va, vb, 1e-12);
    }

    #[test]
    fn contrastive_rejects_multi_view_batches() {
        let batch = single_anchor_batch(
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0]],
        );
        let enc = Encoder::pass_through(2).unwrap();
        let mut tape = Tape::new();
        let vars = enc.lift_frozen(&mut tape);
        assert!(contrastive_loss(&mut tape, &enc, &vars, &batch, &EstimatorConfig::g0()).is_err());
    }

    #[test]
    fn nca_single_view_equals_contrastive_bitwise() {
        let enc = Encoder::init(crate::encoder::EncoderConfig {
            input_dim: 3,
            hidden_dims: vec![5],
            embed_dim: 4,
            activation: crate::encoder::Activation::Tanh,
            seed: 2,
        })
        .unwrap();
        for seed in 0..5 {
            let batch = random_batch(seed, 3, 1, false);
            for g in [
                EstimatorConfig::g0(),
                EstimatorConfig::g1(),
                EstimatorConfig::g2(),
            ] {
                let mut t1 = Tape::new();
                let v1 = enc.lift_frozen(&mut t1);
                let a = contrastive_loss(&mut t1, &enc, &v1, &batch, &g).unwrap();
                let mut t2 = Tape::new();
                let v2 = enc.lift_frozen(&mut t2);
                let b = nca_loss(&mut t2, &enc, &v2, &batch, &g).unwrap();
                let mut t3 = Tape::new();
                let v3 = enc.lift_frozen(&mut t3);
                let c = mixnca_loss(&mut t3, &enc, &v3, &batch, &g, 0.5).unwrap();
                assert_eq!(t1.value(a).item().to_bits(), t2.value(b).item().to_bits());
                assert_eq!(t1.value(a).item().to_bits(), t3.value(c).item().to_bits());
            }
        }
    }

    #[test]
    fn nca_two_views_frozen_value() {
        let batch = single_anchor_batch(
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0]],
        );
        let v = eval_on_pass_through(|t, e, vars| {
            nca_loss(t, e, vars, &batch, &EstimatorConfig::g0())
        });
        assert_close(v, 1.5f64.ln(), 1e-12);
        assert_close(v, 0.405465, 1e-6);
    }

    #[test]
    fn duplicate_positive_strictly_decreases_loss() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 40);
            let anchor: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let pos: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let negs: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let one = single_anchor_batch(anchor.clone(), vec![pos.clone()], negs.clone());
            let two = single_anchor_batch(anchor, vec![pos.clone(), pos], negs);
            let g = EstimatorConfig::g0();
            let va = eval_on_pass_through(|t, e, vars| nca_loss(t, e, vars, &one, &g));
            let vb = eval_on_pass_through(|t, e, vars| nca_loss(t, e, vars, &two, &g));
            assert!(vb < va, "duplicate positive did not decrease loss: {vb} >= {va}");
        }
    }

    fn mix_oracle_batch() -> ContrastiveBatch {
        // Anchor [1,0], slot-0 positive [1,0], one main negative [0,1]
        // (also the mix partner), fresh set = one row [0,1]. The unused
        // slot-1 positive duplicates the slot-0 row.
        ContrastiveBatch::new(
            Tensor::from_rows(&[
                vec![1.0, 0.0],
                vec![1.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
            ])
            .unwrap(),
            vec![0],
            vec![1, 2],
            vec![vec![3]],
            vec![1],
            vec![FreshSet {
                pool: Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap(),
                negative_rows: vec![vec![0]],
            }],
            vec![3],
        )
        .unwrap()
    }

    #[test]
    fn mixnca_frozen_hand_value() {
        let v = eval_on_pass_through(|t, e, vars| {
            mixnca_loss(t, e, vars, &mix_oracle_batch(), &EstimatorConfig::g0(), 0.5)
        });
        // Mixture [0.5, 0.5] normalizes to slope one: s = 1/sqrt(2).
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = (1.0 + (-1.0f64).exp()).ln()
            + 0.5 * ((s.exp() + 1.0).ln() - s)
            + 0.5 * (s.exp() + 1.0).ln();
        assert_close(v, expected, 1e-12);
        assert_close(v, 1.067649, 1e-6);
    }

    #[test]
    fn mixnca_full_lambda_collapses_to_positive_view() {
        let v = eval_on_pass_through(|t, e, vars| {
            mixnca_loss(t, e, vars, &mix_oracle_batch(), &EstimatorConfig::g0(), 1.0)
        });
        // Mixture equals the positive view exactly, so the Omega term is a
        // standard contrastive term of x+ against the fresh negative.
        let expected = 2.0 * (1.0 + (-1.0f64).exp()).ln();
        assert_close(v, expected, 1e-12);
    }

    #[test]
    fn mixnca_rejects_bad_lambda_and_missing_fresh() {
        let enc = Encoder::pass_through(2).unwrap();
        let batch = mix_oracle_batch();
        for bad in [0.0, -0.5, 1.5] {
            let mut tape = Tape::new();
            let vars = enc.lift_frozen(&mut tape);
            assert!(
                mixnca_loss(&mut tape, &enc, &vars, &batch, &EstimatorConfig::g0(), bad).is_err()
            );
        }
        let no_fresh = single_anchor_batch(
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0]],
        );
        let mut tape = Tape::new();
        let vars = enc.lift_frozen(&mut tape);
        assert!(matches!(
            mixnca_loss(&mut tape, &enc, &vars, &no_fresh, &EstimatorConfig::g0(), 0.5),
            Err(Error::EmptySet {
                what: "fresh_negatives"
            })
        ));
    }

    #[test]
    fn adversarial_weight_matches_standard_loss_values() {
        let cases = [
            (vec![0.0, 1.0], (1.0 + (-1.0f64).exp()).ln(), 0.313262),
            (vec![1.0, 0.0], 2.0f64.ln(), 0.693147),
            (vec![-1.0, 0.0], (1.0 + (-2.0f64).exp()).ln(), 0.126928),
        ];
        let enc = Encoder::pass_through(2).unwrap();
        for (neg, exact, frozen) in cases {
            let batch =
                single_anchor_batch(vec![1.0, 0.0], vec![vec![1.0, 0.0]], vec![neg]);
            let w = adversarial_weight(&enc, &batch, &EstimatorConfig::g0()).unwrap();
            assert_eq!(w.len(), 1);
            assert_close(w[0], exact, 1e-12);
            assert_close(w[0], frozen, 1e-6);
        }
    }

    #[test]
    fn adversarial_weight_mean_equals_contrastive_loss() {
        let enc = Encoder::init(crate::encoder::EncoderConfig {
            input_dim: 3,
            hidden_dims: vec![4],
            embed_dim: 3,
            activation: crate::encoder::Activation::Tanh,
            seed: 9,
        })
        .unwrap();
        for seed in 0..5 {
            let batch = random_batch(seed + 60, 3, 1, false);
            let g = EstimatorConfig::g2();
            let w = adversarial_weight(&enc, &batch, &g).unwrap();
            let mean_w = w.iter().sum::<f64>() / w.len() as f64;
            let mut tape = Tape::new();
            let vars = enc.lift_frozen(&mut tape);
            let loss = contrastive_loss(&mut tape, &enc, &vars, &batch, &g).unwrap();
            assert_close(mean_w, tape.value(loss).item(), 1e-12);
        }
    }

    #[test]
    fn robust_loss_with_true_positive_equals_contrastive() {
        let enc = Encoder::init(crate::encoder::EncoderConfig {
            input_dim: 3,
            hidden_dims: vec![4],
            embed_dim: 3,
            activation: crate::encoder::Activation::Tanh,
            seed: 14,
        })
        .unwrap();
        let batch = random_batch(70, 3, 1, false);
        let g = EstimatorConfig::g0();
        let x_adv = batch.positive_view(0);
        let mut t1 = Tape::new();
        let v1 = enc.lift_frozen(&mut t1);
        let r = robust_loss(&mut t1, &enc, &v1, &batch, &x_adv, &g, &[1.0; 3]).unwrap();
        let mut t2 = Tape::new();
        let v2 = enc.lift_frozen(&mut t2);
        let c = contrastive_loss(&mut t2, &enc, &v2, &batch, &g).unwrap();
        assert_close(t1.value(r).item(), t2.value(c).item(), 1e-12);
    }

    #[test]
    fn robust_frozen_product_value() {
        // Standard loss value 0.313262 (negative orthogonal to anchor),
        // adversarial view orthogonal too: robust term ln 2, weight hat.
        let batch = single_anchor_batch(
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0]],
            vec![vec![0.0, 1.0]],
        );
        let enc = Encoder::pass_through(2).unwrap();
        let g = EstimatorConfig::g0();
        let w = adversarial_weight(&enc, &batch, &g).unwrap();
        let x_adv = Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let mut tape = Tape::new();
        let vars = enc.lift_frozen(&mut tape);
        let r = robust_loss(&mut tape, &enc, &vars, &batch, &x_adv, &g, &w).unwrap();
        let v = tape.value(r).item();
        assert_close(v, 2.0f64.ln() * (1.0 + (-1.0f64).exp()).ln(), 1e-12);
        assert_close(v, 0.217136, 1e-6);
    }

    #[test]
    fn intnacl_frozen_sum_of_component_oracles() {
        let batch = mix_oracle_batch();
        let enc = Encoder::pass_through(2).unwrap();
        let cfg = LossConfig {
            family: LossFamily::MixNca,
            m: 2,
            lambda: 0.5,
            alpha: 1.0,
            weighting: Weighting::AdversarialHat,
            ..LossConfig::default()
        };
        let frozen = FrozenParts {
            x_adv: Some(Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap()),
            weights: Some(vec![(1.0 + (-1.0f64).exp()).ln()]),
        };
        let mut tape = Tape::new();
        let vars = enc.lift_frozen(&mut tape);
        let loss = intnacl_loss_frozen(&mut tape, &enc, &vars, &batch, &cfg, &frozen).unwrap();
        let v = tape.value(loss).item();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mix_part = (1.0 + (-1.0f64).exp()).ln()
            + 0.5 * ((s.exp() + 1.0).ln() - s)
            + 0.5 * (s.exp() + 1.0).ln();
        let robust_part = 2.0f64.ln() * (1.0 + (-1.0f64).exp()).ln();
        assert_close(v, mix_part + robust_part, 1e-12);
        assert_close(v, 1.284785, 1e-6);
    }

    #[test]
    fn intnacl_without_robust_term_equals_family_loss_bitwise() {
        let enc = Encoder::init(crate::encoder::EncoderConfig {
            input_dim: 3,
            hidden_dims: vec![4],
            embed_dim: 3,
            activation: crate::encoder::Activation::Rectifier,
            seed: 25,
        })
        .unwrap();
        for seed in 0..3 {
            let batch = random_batch(seed + 80, 2, 3, true);
            let cfg = LossConfig {
                family: LossFamily::MixNca,
                g1: EstimatorConfig::g2(),
                m: 3,
                lambda: 0.3,
                alpha: 0.0,
                ..LossConfig::default()
            };
            let a = loss_value(&enc, &batch, &cfg, 0).unwrap();
            let mut tape = Tape::new();
            let vars = enc.lift_frozen(&mut tape);
            let b = mixnca_loss(&mut tape, &enc, &vars, &batch, &EstimatorConfig::g2(), 0.3)
                .unwrap();
            assert_eq!(a.to_bits(), tape.value(b).item().to_bits());
        }
    }

    #[test]
    fn losses_are_strictly_positive_and_finite() {
        let enc = Encoder::init(crate::encoder::EncoderConfig {
            input_dim: 3,
            hidden_dims: vec![5],
            embed_dim: 4,
            activation: crate::encoder::Activation::Tanh,
            seed: 31,
        })
        .unwrap();
        for seed in 0..5 {
            for (m, fam) in [(1, LossFamily::Nca), (3, LossFamily::Nca), (3, LossFamily::MixNca)] {
                let batch = random_batch(seed + 200, 2, m, fam == LossFamily::MixNca);
                let cfg = LossConfig {
                    family: fam,
                    g1: EstimatorConfig::g2(),
                    m,
                    lambda: 0.5,
                    alpha: 1.0,
                    g2: EstimatorConfig::g1(),
                    weighting: Weighting::AdversarialHat,
                    ..LossConfig::default()
                };
                let v = loss_value(&enc, &batch, &cfg, seed).unwrap();
                assert!(v.is_finite() && v > 0.0, "loss {v} not strictly positive");
            }
        }
    }

    #[test]
    fn presets_match_published_grid() {
        let p = preset("simclr").unwrap();
        assert_eq!(p.g1.kind, EstimatorKind::G0);
        assert_eq!((p.m, p.alpha), (1, 0.0));
        let p = preset("debiased").unwrap();
        assert_eq!(p.g1.kind, EstimatorKind::G1);
        let p = preset("debiased_hardneg").unwrap();
        assert_eq!(p.g1.kind, EstimatorKind::G2);
        let p = preset("adv").unwrap();
        assert_eq!((p.alpha, p.weighting), (1.0, Weighting::ConstantOne));
        assert_eq!(p.g2.kind, EstimatorKind::G0);
        let p = preset("intcl_fig1").unwrap();
        assert_eq!((p.m, p.alpha, p.weighting), (1, 1.0, Weighting::AdversarialHat));
        assert_eq!((p.g1.kind, p.g2.kind), (EstimatorKind::G2, EstimatorKind::G2));
        let p = preset("intnacl_fig1").unwrap();
        assert_eq!(p.family, LossFamily::MixNca);
        assert_eq!((p.m, p.lambda, p.alpha), (5, 0.5, 1.0));
        match preset("no_such_loss") {
            Err(Error::UnknownPreset { name, valid }) => {
                assert_eq!(name, "no_such_loss");
                assert!(valid.contains(&"simclr") && valid.contains(&"intnacl_fig1"));
            }
            other => panic!("expected unknown-preset error, got {other:?}"),
        }
    }

    #[test]
    fn simclr_preset_reproduces_plain_contrastive_loss() {
        let enc = Encoder::init(crate::encoder::EncoderConfig {
            input_dim: 3,
            hidden_dims: vec![4],
            embed_dim: 3,
            activation: crate::encoder::Activation::Tanh,
            seed: 3,
        })
        .unwrap();
        let batch = random_batch(300, 3, 1, false);
        let cfg = preset("simclr").unwrap();
        let a = loss_value(&enc, &batch, &cfg, 0).unwrap();
        let mut tape = Tape::new();
        let vars = enc.lift_frozen(&mut tape);
        let b = contrastive_loss(&mut tape, &enc, &vars, &batch, &EstimatorConfig::g0()).unwrap();
        assert_eq!(a.to_bits(), tape.value(b).item().to_bits());
    }

    #[test]
    fn full_objective_gradient_matches_replayed_finite_differences() {
        let enc_cfg = crate::encoder::EncoderConfig {
            input_dim: 3,
            hidden_dims: vec![4],
            embed_dim: 3,
            activation: crate::encoder::Activation::Tanh,
            seed: 77,
        };
        let enc = Encoder::init(enc_cfg).unwrap();
        let batch = random_batch(500, 2, 2, true);
        let cfg = LossConfig {
            family: LossFamily::MixNca,
            g1: EstimatorConfig::g2(),
            m: 2,
            lambda: 0.5,
            alpha: 1.0,
            g2: EstimatorConfig::g2(),
            weighting: Weighting::AdversarialHat,
            attack: AttackConfig::fgsm(0.05),
            ..LossConfig::default()
        };

        let mut tape = Tape::new();
        let vars = enc.lift(&mut tape);
        let (loss, frozen) = intnacl_loss(&mut tape, &enc, &vars, &batch, &cfg, 11).unwrap();
        tape.backward(loss).unwrap();

        let params = vars.params();
        for (pi, &pvar) in params.iter().enumerate() {
            let analytic = tape.grad(pvar).unwrap();
            let base = enc.params()[pi].clone();
            let fd = finite_diff_grad(
                |p| {
                    let mut e = enc.clone();
                    *e.params_mut()[pi] = p.clone();
                    let mut t = Tape::new();
                    let v = e.lift_frozen(&mut t);
                    let l = intnacl_loss_frozen(&mut t, &e, &v, &batch, &cfg, &frozen)?;
                    Ok(t.value(l).item())
                },
                &base,
                1e-5,
            )
            .unwrap();
            let err = relative_error(&analytic, &fd);
            assert!(err <= 1e-5, "param {pi}: relative error {err}");
        }
    }
}
