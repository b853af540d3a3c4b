//! Negative-term estimators.
//!
//! Every loss in this crate writes its denominator as `numerator + K * G`
//! where `G` estimates the mean exponentiated anchor-negative similarity
//! over `K` negatives. Three estimators are provided:
//!
//! * `g0`: plain mean of `exp(s_i / t)`.
//! * `g1`: debiased, subtracting the expected contribution of false
//!   negatives using the class prior `tau_plus` and a small set `v` of
//!   extra positive views, clamped from below at `exp(-1/t)`.
//! * `g2`: debiased with hard-negative weighting, where the mean is replaced by
//!   the ratio of consecutive power sums `sum(k_i^{beta+1}) / sum(k_i^beta)`
//!   with `k_i = exp(s_i / t)`, which shifts weight toward negatives most
//!   similar to the anchor. `beta = 0` recovers `g1` and `tau_plus = 0`
//!   recovers `g0`, exactly.
//!
//! All inner products are divided by the same temperature `t`, and the
//! clamp floor is `exp(-1/t)`, the smallest value any single term can take
//! for unit-norm inputs.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    G0,
    G1,
    G2,
}

/// Which estimator to use and its hyperparameters. `g0` ignores `tau_plus`
/// and `beta`; `g1` ignores `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Temperature dividing every inner product. Must be positive.
    pub t: f64,
    /// Class prior for debiasing, in `[0, 1)`.
    pub tau_plus: f64,
    /// Hard-negative weighting exponent, `>= 0`.
    pub beta: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::G0,
            t: 1.0,
            tau_plus: 0.01,
            beta: 1.0,
        }
    }
}

impl EstimatorConfig {
    pub fn g0() -> Self {
        Self {
            kind: EstimatorKind::G0,
            ..Self::default()
        }
    }

    pub fn g1() -> Self {
        Self {
            kind: EstimatorKind::G1,
            ..Self::default()
        }
    }

    pub fn g2() -> Self {
        Self {
            kind: EstimatorKind::G2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(Error::InvalidConfig {
                field: "estimator.t".into(),
                message: format!("temperature must be positive, got {}", self.t),
            });
        }
        if !(0.0..1.0).contains(&self.tau_plus) {
            return Err(Error::InvalidConfig {
                field: "estimator.tau_plus".into(),
                message: format!("class prior must be in [0, 1), got {}", self.tau_plus),
            });
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidConfig {
                field: "estimator.beta".into(),
                message: format!("beta must be nonnegative, got {}", self.beta),
            });
        }
        Ok(())
    }

    /// The clamp floor `exp(-1/t)`.
    pub fn floor(&self) -> f64 {
        (-1.0 / self.t).exp()
    }
}

fn check_unit_rows(t: &Tensor, what: &'static str) -> Result<()> {
    let _ = what;
    for i in 0..t.rows() {
        let norm = t.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NotUnitNorm { row: i, norm });
        }
    }
    Ok(())
}

fn dots(anchor: &[f64], rows: &Tensor) -> Vec<f64> {
    (0..rows.rows())
        .map(|i| {
            rows.row(i)
                .iter()
                .zip(anchor)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .collect()
}

/// Plain negative-term estimator: mean of `exp(s_i / t)` over the negatives.
pub fn g0(anchor: &[f64], negatives: &Tensor, t: f64) -> Result<f64> {
    if negatives.rows() == 0 || negatives.numel() == 0 {
        return Err(Error::EmptySet { what: "negatives" });
    }
    check_unit_rows(negatives, "negatives")?;
    let sum: f64 = dots(anchor, negatives)
        .iter()
        .map(|s| (s / t).exp())
        .sum();
    Ok(sum / negatives.rows() as f64)
}

/// Debiased estimator over negatives `u` and extra positive views `v`.
pub fn g1(anchor: &[f64], u: &Tensor, v: &Tensor, tau_plus: f64, t: f64) -> Result<f64> {
    if u.rows() == 0 || u.numel() == 0 {
        return Err(Error::EmptySet { what: "u" });
    }
    if v.rows() == 0 || v.numel() == 0 {
        return Err(Error::EmptySet { what: "v" });
    }
    check_unit_rows(u, "u")?;
    check_unit_rows(v, "v")?;
    let mean_u = dots(anchor, u).iter().map(|s| (s / t).exp()).sum::<f64>() / u.rows() as f64;
    let mean_v = dots(anchor, v).iter().map(|s| (s / t).exp()).sum::<f64>() / v.rows() as f64;
    let raw = (mean_u - tau_plus * mean_v) / (1.0 - tau_plus);
    Ok(raw.max((-1.0 / t).exp()))
}

/// Debiased hard-negative estimator: the mean over `u` is replaced by a
/// ratio of consecutive power sums, which weighs each negative by
/// `exp(s_i / t)^beta`.
pub fn g2(
    anchor: &[f64],
    u: &Tensor,
    v: &Tensor,
    tau_plus: f64,
    beta: f64,
    t: f64,
) -> Result<f64> {
    if u.rows() == 0 || u.numel() == 0 {
        return Err(Error::EmptySet { what: "u" });
    }
    if v.rows() == 0 || v.numel() == 0 {
        return Err(Error::EmptySet { what: "v" });
    }
    check_unit_rows(u, "u")?;
    check_unit_rows(v, "v")?;
    let s = dots(anchor, u);
    let num: f64 = s.iter().map(|s| ((beta + 1.0) * s / t).exp()).sum();
    let den: f64 = s.iter().map(|s| (beta * s / t).exp()).sum();
    let weighted = num / den;
    let mean_v = dots(anchor, v).iter().map(|s| (s / t).exp()).sum::<f64>() / v.rows() as f64;
    let raw = (weighted - tau_plus * mean_v) / (1.0 - tau_plus);
    Ok(raw.max((-1.0 / t).exp()))
}

/// Config-dispatched estimator value. `v` may be empty for `g0`, which never
/// reads it.
pub fn estimate(cfg: &EstimatorConfig, anchor: &[f64], u: &Tensor, v: &Tensor) -> Result<f64> {
    cfg.validate()?;
    match cfg.kind {
        EstimatorKind::G0 => g0(anchor, u, cfg.t),
        EstimatorKind::G1 => g1(anchor, u, v, cfg.tau_plus, cfg.t),
        EstimatorKind::G2 => g2(anchor, u, v, cfg.tau_plus, cfg.beta, cfg.t),
    }
}

/// Mean exponentiated similarity against the debias views: builds
/// `(1/m) * sum_j exp(v_grid / t)` per row. `v_mask` restricts a wide grid
/// to each anchor's own `m` views; masking happens after exponentiation so
/// excluded columns contribute exact zeros.
pub fn debias_mean_on_tape(
    tape: &mut Tape,
    t: f64,
    v_grid: Var,
    v_mask: Option<&Tensor>,
    m: usize,
) -> Result<Var> {
    if m == 0 {
        return Err(Error::EmptySet { what: "v" });
    }
    let scaled = tape.scale(v_grid, 1.0 / t);
    let mut ev = tape.exp(scaled);
    if let Some(mask) = v_mask {
        let mv = tape.constant(mask.clone());
        ev = tape.mul(ev, mv)?;
    }
    let sums = tape.row_sum(ev)?;
    Ok(tape.scale(sums, 1.0 / m as f64))
}

/// Tape-side estimator, batched over anchors and scaled by the negative
/// count: returns `K * G` per anchor as an `[N]` vector.
///
/// `scores` is the raw inner-product grid `[N, P]` of anchors against a
/// shared view pool; `mask` selects each anchor's own negatives (exactly `k`
/// ones per row). Masking happens after exponentiation, so excluded columns
/// contribute exact zeros to the sums. `mean_v` is the per-anchor debias
/// mean from [`debias_mean_on_tape`], required for `g1`/`g2`.
pub fn k_times_g_on_tape(
    tape: &mut Tape,
    cfg: &EstimatorConfig,
    scores: Var,
    mask: &Tensor,
    k: usize,
    mean_v: Option<Var>,
) -> Result<Var> {
    if k == 0 {
        return Err(Error::EmptySet { what: "negatives" });
    }
    let t = cfg.t;
    let mask_var = tape.constant(mask.clone());

    match cfg.kind {
        EstimatorKind::G0 => {
            let scaled = tape.scale(scores, 1.0 / t);
            let es = tape.exp(scaled);
            let masked = tape.mul(es, mask_var)?;
            tape.row_sum(masked)
        }
        EstimatorKind::G1 => {
            let scaled = tape.scale(scores, 1.0 / t);
            let es = tape.exp(scaled);
            let masked = tape.mul(es, mask_var)?;
            let sums = tape.row_sum(masked)?;
            let mean_u = tape.scale(sums, 1.0 / k as f64);
            let mv = mean_v.ok_or(Error::EmptySet { what: "v" })?;
            let sub = tape.scale(mv, cfg.tau_plus);
            let raw = tape.sub(mean_u, sub)?;
            let raw = tape.scale(raw, 1.0 / (1.0 - cfg.tau_plus));
            let g = tape.max_const(raw, cfg.floor());
            Ok(tape.scale(g, k as f64))
        }
        EstimatorKind::G2 => {
            let hi = tape.scale(scores, (cfg.beta + 1.0) / t);
            let ehi = tape.exp(hi);
            let num = tape.mul(ehi, mask_var)?;
            let num = tape.row_sum(num)?;
            let lo = tape.scale(scores, cfg.beta / t);
            let elo = tape.exp(lo);
            let den = tape.mul(elo, mask_var)?;
            let den = tape.row_sum(den)?;
            let weighted = tape.div(num, den)?;
            let mv = mean_v.ok_or(Error::EmptySet { what: "v" })?;
            let sub = tape.scale(mv, cfg.tau_plus);
            let raw = tape.sub(weighted, sub)?;
            let raw = tape.scale(raw, 1.0 / (1.0 - cfg.tau_plus));
            let g = tape.max_const(raw, cfg.floor());
            Ok(tape.scale(g, k as f64))
        }
    }
}
