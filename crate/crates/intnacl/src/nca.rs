//! Supervised stochastic-nearest-neighbor objectives, plus the executable
//! equivalence between their squared-distance and inner-product forms.
//!
//! The soft assignment `p_ij = exp(-d2_ij) / sum_{k != i} exp(-d2_ik)` is
//! the probability that point j is picked as i's neighbor. The supervised
//! loss sums `-log` of the same-class assignment mass per point. For
//! unit-norm embeddings the `exp(-d2/2)` weights and the `exp(dot)` weights
//! differ by a factor `exp(-1)` per term, which cancels inside every ratio;
//! [`equivalence_check`] evaluates both forms and returns them side by side.

use crate::encoder::{Encoder, EncoderVars};
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Points with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub points: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(points: Tensor, labels: Vec<usize>) -> Result<Self> {
        let n = points.rows();
        if n < 2 {
            return Err(Error::InvalidConfig {
                field: "labeled_set".into(),
                message: format!("need at least 2 points, got {n}"),
            });
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: n,
                got: labels.len(),
            });
        }
        let some_pair_shares = (0..n).any(|i| (0..i).any(|j| labels[i] == labels[j]));
        if !some_pair_shares {
            return Err(Error::InvalidConfig {
                field: "labeled_set".into(),
                message: "no two points share a class".into(),
            });
        }
        Ok(Self { points, labels })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Soft neighbor-assignment matrix `[n x n]` over squared distances:
/// `p_ij = exp(-d2_ij) / sum_{k != i} exp(-d2_ik)`, `p_ii = 0`.
///
/// Each row is shifted by its smallest off-diagonal distance before
/// exponentiation, so widely separated points stay finite.
pub fn nca_pij(embedded: &Tensor) -> Result<Tensor> {
    let n = embedded.rows();
    if n < 2 {
        return Err(Error::InvalidConfig {
            field: "embedded".into(),
            message: format!("need at least 2 points, got {n}"),
        });
    }
    let mut p = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        let mut d2 = vec![0.0; n];
        let mut nearest = f64::INFINITY;
        for j in 0..n {
            if j == i {
                continue;
            }
            d2[j] = squared_distance(embedded.row(i), embedded.row(j));
            nearest = nearest.min(d2[j]);
        }
        let mut den = 0.0;
        for j in 0..n {
            if j != i {
                let w = (nearest - d2[j]).exp();
                p.data_mut()[i * n + j] = w;
                den += w;
            }
        }
        for j in 0..n {
            p.data_mut()[i * n + j] /= den;
        }
    }
    Ok(p)
}

/// The supervised loss for a prebuilt on-tape embedding of the set's
/// points: `sum_i -log sum_{j: c_j = c_i} p_ij`.
///
/// The assignment weights use `exp(2 z_i.z_j - |z_j|^2)`; the omitted
/// `|z_i|^2` factor is constant per row and cancels in the ratio. Each row
/// is shifted by its detached off-diagonal maximum (the diagonal entry is
/// shifted to negative infinity, which removes self-assignment before the
/// reductions), so the graph stays finite for any embedding scale.
pub fn nca_supervised_loss(tape: &mut Tape, set: &LabeledSet, embedded: Var) -> Result<Var> {
    let n = set.n();
    for i in 0..n {
        let has_peer = (0..n).any(|j| j != i && set.labels[j] == set.labels[i]);
        if !has_peer {
            return Err(Error::NoSameClassPeer { index: i });
        }
    }
    if tape.value(embedded).rows() != n {
        return Err(Error::DimensionMismatch {
            what: "embedded rows",
            expected: n,
            got: tape.value(embedded).rows(),
        });
    }

    let g = tape.matmul_bt(embedded, embedded)?;
    let two_g = tape.scale(g, 2.0);
    let zz = tape.mul(embedded, embedded)?;
    let sq = tape.row_sum(zz)?;
    let neg_sq = tape.scale(sq, -1.0);
    let affinity = tape.add_bias(two_g, neg_sq)?;

    let affinity_vals = tape.value(affinity).clone();
    let mut shift = vec![0.0; n * n];
    let mut peer_mask = vec![0.0; n * n];
    for i in 0..n {
        let mut row_max = f64::NEG_INFINITY;
        for j in 0..n {
            if j != i {
                row_max = row_max.max(affinity_vals.data()[i * n + j]);
            }
        }
        for j in 0..n {
            shift[i * n + j] = if j == i { f64::INFINITY } else { row_max };
            if j != i && set.labels[j] == set.labels[i] {
                peer_mask[i * n + j] = 1.0;
            }
        }
    }
    let shift = tape.constant(Tensor::from_vec(vec![n, n], shift)?);
    let peer_mask = tape.constant(Tensor::from_vec(vec![n, n], peer_mask)?);

    let shifted = tape.sub(affinity, shift)?;
    let weights = tape.exp(shifted);
    let den = tape.row_sum(weights)?;
    let peer_weights = tape.mul(weights, peer_mask)?;
    let num = tape.row_sum(peer_weights)?;
    let log_den = tape.log(den);
    let log_num = tape.log(num);
    let per_point = tape.sub(log_den, log_num)?;
    Ok(tape.sum(per_point))
}

/// Supervised loss under a learned linear map: `z = points * metric`, no
/// normalization.
pub fn nca_metric_loss(tape: &mut Tape, set: &LabeledSet, metric: Var) -> Result<Var> {
    let x = tape.constant(set.points.clone());
    let z = tape.matmul(x, metric)?;
    nca_supervised_loss(tape, set, z)
}

/// Supervised loss under an encoder; embeddings land on the unit sphere,
/// so this variant is the one comparable to [`equivalence_check`].
pub fn nca_encoder_loss(
    tape: &mut Tape,
    set: &LabeledSet,
    enc: &Encoder,
    vars: &EncoderVars,
) -> Result<Var> {
    let x = tape.constant(set.points.clone());
    let z = enc.encode_on(tape, vars, x)?;
    nca_supervised_loss(tape, set, z)
}

/// Leave-one-out 1-nearest-neighbor accuracy in embedding space. Ties pick
/// the lowest index.
pub fn leave_one_out_1nn(embedded: &Tensor, labels: &[usize]) -> Result<f64> {
    let n = embedded.rows();
    if n < 2 {
        return Err(Error::InvalidConfig {
            field: "embedded".into(),
            message: format!("need at least 2 points, got {n}"),
        });
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: n,
            got: labels.len(),
        });
    }
    let mut correct = 0usize;
    for i in 0..n {
        let mut best = usize::MAX;
        let mut best_d2 = f64::INFINITY;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d2 = squared_distance(embedded.row(i), embedded.row(j));
            if d2 < best_d2 {
                best_d2 = d2;
                best = j;
            }
        }
        if labels[best] == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

/// Evaluate the contrastive ratio loss in both its forms over unit-norm
/// embeddings and return `(distance_form, dot_form)`.
///
/// Anchors are rows `0..positives.len()`; `positives[i]` and
/// `negatives[i]` index other rows and must be disjoint. Per anchor the
/// term is `-log(num / (num + neg))` with weights `exp(-|z_i - z_j|^2 / 2)`
/// in the first form and `exp(z_i . z_j)` in the second; the two must agree
/// because every row has unit norm.
pub fn equivalence_check(
    embeddings: &Tensor,
    positives: &[Vec<usize>],
    negatives: &[Vec<usize>],
) -> Result<(f64, f64)> {
    let n = embeddings.rows();
    for i in 0..n {
        let norm = embeddings.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NotUnitNorm { row: i, norm });
        }
    }
    if positives.len() != negatives.len() {
        return Err(Error::DimensionMismatch {
            what: "negative index sets",
            expected: positives.len(),
            got: negatives.len(),
        });
    }
    if positives.len() > n {
        return Err(Error::DimensionMismatch {
            what: "anchor rows",
            expected: n,
            got: positives.len(),
        });
    }
    for (i, (pos, neg)) in positives.iter().zip(negatives).enumerate() {
        if pos.is_empty() {
            return Err(Error::EmptySet { what: "positives" });
        }
        for &j in pos.iter().chain(neg) {
            if j >= n || j == i {
                return Err(Error::InvalidConfig {
                    field: "equivalence indices".into(),
                    message: format!("index {j} invalid for anchor {i} over {n} rows"),
                });
            }
        }
        if pos.iter().any(|j| neg.contains(j)) {
            return Err(Error::InvalidConfig {
                field: "equivalence indices".into(),
                message: format!("anchor {i} lists an index as both positive and negative"),
            });
        }
    }

    let mut distance_form = 0.0;
    let mut dot_form = 0.0;
    for (i, (pos, neg)) in positives.iter().zip(negatives).enumerate() {
        let zi = embeddings.row(i);
        let by_distance = |j: &usize| (-0.5 * squared_distance(zi, embeddings.row(*j))).exp();
        let by_dot = |j: &usize| {
            zi.iter()
                .zip(embeddings.row(*j))
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .exp()
        };
        let num_d: f64 = pos.iter().map(by_distance).sum();
        let neg_d: f64 = neg.iter().map(by_distance).sum();
        distance_form += ((num_d + neg_d) / num_d).ln();
        let num_s: f64 = pos.iter().map(by_dot).sum();
        let neg_s: f64 = neg.iter().map(by_dot).sum();
        dot_form += ((num_s + neg_s) / num_s).ln();
    }
    Ok((distance_form, dot_form))
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

    fn line_points(coords: &[f64]) -> Tensor {
        Tensor::from_rows(&coords.iter().map(|&c| vec![c]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn pij_two_points_is_certain() {
        let p = nca_pij(&line_points(&[0.0, 5.0])).unwrap();
        assert_eq!(p.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn pij_equidistant_triangle_splits_evenly() {
        let points = Tensor::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.5, 0.75f64.sqrt()],
        ])
        .unwrap();
        let p = nca_pij(&points).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 0.5 };
                assert_close(p.data()[i * 3 + j], expected, 1e-12);
            }
        }
    }

    #[test]
    fn pij_line_points_frozen() {
        let p = nca_pij(&line_points(&[0.0, 1.0, 3.0])).unwrap();
        let exact_near = 1.0 / (1.0 + (-8.0f64).exp());
        assert_close(p.data()[1], exact_near, 1e-12);
        assert_close(p.data()[2], 1.0 - exact_near, 1e-12);
        assert_close(p.data()[1], 0.999665, 1e-6);
        assert_close(p.data()[2], 0.000335, 1e-6);
    }

    #[test]
    fn pij_rows_sum_to_one_with_zero_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 7;
        let points = Tensor::from_vec(
            vec![n, 3],
            (0..n * 3).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let p = nca_pij(&points).unwrap();
        for i in 0..n {
            assert_eq!(p.data()[i * n + i], 0.0);
            let row_sum: f64 = p.row(i).iter().sum();
            assert_close(row_sum, 1.0, 1e-12);
        }
    }

    #[test]
    fn pij_survives_widely_separated_points() {
        let p = nca_pij(&line_points(&[0.0, 100.0])).unwrap();
        assert_eq!(p.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn pij_rejects_single_point() {
        assert!(nca_pij(&line_points(&[0.0])).is_err());
    }

    fn identity_metric(tape: &mut Tape, d: usize) -> Var {
        let mut eye = Tensor::zeros(vec![d, d]);
        for i in 0..d {
            eye.data_mut()[i * d + i] = 1.0;
        }
        tape.leaf(eye)
    }

    #[test]
    fn loss_is_exactly_zero_for_single_class() {
        for points in [
            line_points(&[0.0, 1.0, 3.0]),
            line_points(&[2.0, 2.0, 2.0, 2.0]),
        ] {
            let n = points.rows();
            let set = LabeledSet::new(points, vec![0; n]).unwrap();
            let mut tape = Tape::new();
            let metric = identity_metric(&mut tape, 1);
            let loss = nca_metric_loss(&mut tape, &set, metric).unwrap();
            assert_eq!(tape.value(loss).item(), 0.0);
        }
    }

    #[test]
    fn loss_names_the_point_without_a_peer() {
        let set = LabeledSet::new(line_points(&[0.0, 1.0, 3.0]), vec![0, 0, 1]).unwrap();
        let mut tape = Tape::new();
        let metric = identity_metric(&mut tape, 1);
        match nca_metric_loss(&mut tape, &set, metric) {
            Err(Error::NoSameClassPeer { index }) => assert_eq!(index, 2),
            other => panic!("expected no-peer error, got {other:?}"),
        }
    }

    fn brute_force_loss(embedded: &Tensor, labels: &[usize]) -> f64 {
        let p = nca_pij(embedded).unwrap();
        let n = embedded.rows();
        let mut total = 0.0;
        for i in 0..n {
            let peer_mass: f64 = (0..n)
                .filter(|&j| j != i && labels[j] == labels[i])
                .map(|j| p.data()[i * n + j])
                .sum();
            total -= peer_mass.ln();
        }
        total
    }

    #[test]
    fn loss_matches_brute_force_assignment_matrix() {
        let set = LabeledSet::new(line_points(&[0.0, 1.0, 10.0, 11.0]), vec![0, 0, 1, 1]).unwrap();
        let mut tape = Tape::new();
        let metric = identity_metric(&mut tape, 1);
        let loss = nca_metric_loss(&mut tape, &set, metric).unwrap();
        assert_close(
            tape.value(loss).item(),
            brute_force_loss(&set.points, &set.labels),
            1e-12,
        );

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let n = 6;
            let points = Tensor::from_vec(
                vec![n, 2],
                (0..n * 2).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            )
            .unwrap();
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let set = LabeledSet::new(points, labels).unwrap();
            let mut tape = Tape::new();
            let metric = identity_metric(&mut tape, 2);
            let loss = nca_metric_loss(&mut tape, &set, metric).unwrap();
            assert_close(
                tape.value(loss).item(),
                brute_force_loss(&set.points, &set.labels),
                1e-12,
            );
        }
    }

    #[test]
    fn metric_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 5;
        let points = Tensor::from_vec(
            vec![n, 2],
            (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let set = LabeledSet::new(points, vec![0, 1, 0, 1, 0]).unwrap();
        let a0 = Tensor::from_vec(
            vec![2, 2],
            (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();

        let mut tape = Tape::new();
        let metric = tape.leaf(a0.clone());
        let loss = nca_metric_loss(&mut tape, &set, metric).unwrap();
        tape.backward(loss).unwrap();
        let analytic = tape.grad(metric).unwrap();

        let fd = finite_diff_grad(
            |a| {
                let mut t = Tape::new();
                let m = t.leaf(a.clone());
                let l = nca_metric_loss(&mut t, &set, m)?;
                Ok(t.value(l).item())
            },
            &a0,
            1e-5,
        )
        .unwrap();
        let err = relative_error(&analytic, &fd);
        assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn gradient_descent_on_metric_fixes_nearest_neighbors() {
        // Classes separate along the first coordinate; the second
        // interleaves them, so raw 1-NN gets every point wrong until the
        // metric learns to mute it.
        let points = Tensor::from_rows(&[
            vec![0.0, 0.0],
            vec![0.3, 1.0],
            vec![0.8, 0.1],
            vec![1.1, 1.1],
        ])
        .unwrap();
        let labels = vec![0, 0, 1, 1];
        let set = LabeledSet::new(points.clone(), labels.clone()).unwrap();
        assert_eq!(leave_one_out_1nn(&points, &labels).unwrap(), 0.0);

        let mut a = Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut first_loss = None;
        let mut last_loss = f64::INFINITY;
        for _ in 0..300 {
            let mut tape = Tape::new();
            let metric = tape.leaf(a.clone());
            let loss = nca_metric_loss(&mut tape, &set, metric).unwrap();
            last_loss = tape.value(loss).item();
            first_loss.get_or_insert(last_loss);
            tape.backward(loss).unwrap();
            let grad = tape.grad(metric).unwrap();
            for (w, g) in a.data_mut().iter_mut().zip(grad.data()) {
                *w -= 0.05 * g;
            }
        }
        assert!(last_loss < first_loss.unwrap());

        let mut tape = Tape::new();
        let x = tape.constant(set.points.clone());
        let metric = tape.constant(a);
        let z = tape.matmul(x, metric).unwrap();
        let embedded = tape.value(z).clone();
        assert_close(leave_one_out_1nn(&embedded, &labels).unwrap(), 1.0, 0.0);
    }

    #[test]
    fn labeled_set_rejects_degenerate_inputs() {
        assert!(LabeledSet::new(line_points(&[0.0]), vec![0]).is_err());
        assert!(LabeledSet::new(line_points(&[0.0, 1.0]), vec![0]).is_err());
        assert!(LabeledSet::new(line_points(&[0.0, 1.0]), vec![0, 1]).is_err());
        assert!(LabeledSet::new(line_points(&[0.0, 1.0]), vec![0, 0]).is_ok());
    }

    #[test]
    fn leave_one_out_matches_hand_counts() {
        let points = line_points(&[0.0, 1.0, 10.0, 11.0]);
        assert_eq!(leave_one_out_1nn(&points, &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(leave_one_out_1nn(&points, &[0, 1, 0, 1]).unwrap(), 0.0);
        let three = line_points(&[0.0, 1.0, 2.0]);
        assert_close(leave_one_out_1nn(&three, &[0, 0, 1]).unwrap(), 2.0 / 3.0, 1e-15);
    }

    #[test]
    fn equivalence_antipodal_frozen_value() {
        let embeddings = Tensor::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let (dist, dot) = equivalence_check(&embeddings, &[vec![1]], &[vec![2]]).unwrap();
        let exact = (1.0 + std::f64::consts::E).ln();
        assert_close(dist, exact, 1e-12);
        assert_close(dot, exact, 1e-12);
        assert_close(dist, 1.313262, 1e-6);
        assert!((dist - dot).abs() <= 1e-12);
    }

    #[test]
    fn equivalence_forms_agree_on_random_unit_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..10 {
            let n = 6;
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                rows.push(raw.iter().map(|v| v / norm).collect::<Vec<_>>());
            }
            let embeddings = Tensor::from_rows(&rows).unwrap();
            let mut positives = Vec::with_capacity(n);
            let mut negatives = Vec::with_capacity(n);
            for i in 0..n {
                let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let split = rng.gen_range(1..others.len());
                positives.push(others[..split].to_vec());
                negatives.push(others[split..].to_vec());
            }
            let (dist, dot) = equivalence_check(&embeddings, &positives, &negatives).unwrap();
            assert!(
                (dist - dot).abs() <= 1e-12,
                "forms disagree: {dist} vs {dot}"
            );
        }
    }

    #[test]
    fn equivalence_rejects_rows_off_the_sphere() {
        let embeddings = Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        match equivalence_check(&embeddings, &[vec![1]], &[vec![]]) {
            Err(Error::NotUnitNorm { row, norm }) => {
                assert_eq!(row, 0);
                assert_close(norm, 2.0, 1e-15);
            }
            other => panic!("expected unit-norm error, got {other:?}"),
        }
    }
}
