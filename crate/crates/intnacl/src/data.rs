//! Synthetic labeled datasets, stochastic augmentation, and contrastive
//! batch assembly.
//!
//! Negatives follow the pooled convention: each anchor's negative set is
//! the raw view plus all M positive views of every *other* anchor, so a
//! size-N batch gives (N-1)(M+1) negatives per anchor. Fresh negative sets
//! for the mixture terms mirror that layout with independent augmentation
//! draws.

use crate::error::{Error, Result};
use crate::loss::{ContrastiveBatch, FreshSet};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Labeled points. Labels are used by evaluation probes only; contrastive
/// training never reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, class_count: usize, seed: u64) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: n,
                got: labels.len(),
            });
        }
        if !features.all_finite() {
            return Err(Error::InvalidConfig {
                field: "dataset.features".into(),
                message: "contains non-finite values".into(),
            });
        }
        if class_count == 0 {
            return Err(Error::InvalidConfig {
                field: "dataset.class_count".into(),
                message: "must be at least 1".into(),
            });
        }
        let mut seen = vec![false; class_count];
        for &c in &labels {
            if c >= class_count {
                return Err(Error::InvalidConfig {
                    field: "dataset.labels".into(),
                    message: format!("label {c} out of range for {class_count} classes"),
                });
            }
            seen[c] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidConfig {
                field: "dataset.labels".into(),
                message: format!("class {missing} has no samples"),
            });
        }
        Ok(Self {
            features,
            labels,
            class_count,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Write as CSV with columns `f0..f{d-1},label`. Feature values print
    /// in shortest-round-trip form, so a reload is bitwise faithful.
    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        writer.write_record(&header)?;
        for i in 0..self.len() {
            let mut record: Vec<String> =
                self.features.row(i).iter().map(|v| format!("{v}")).collect();
            record.push(self.labels[i].to_string());
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Read a CSV written by [`save_csv`](Self::save_csv). The class count
    /// is taken as `max label + 1`; the seed field of the result is 0
    /// because the generating seed is not part of the file.
    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let d = reader.headers()?.len().saturating_sub(1);
        if d == 0 {
            return Err(Error::InvalidConfig {
                field: "dataset.csv".into(),
                message: "need at least one feature column and a label column".into(),
            });
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != d + 1 {
                return Err(Error::InvalidConfig {
                    field: "dataset.csv".into(),
                    message: format!("row has {} fields, expected {}", record.len(), d + 1),
                });
            }
            for field in record.iter().take(d) {
                let value: f64 = field.parse().map_err(|_| Error::InvalidConfig {
                    field: "dataset.csv".into(),
                    message: format!("bad feature value {field:?}"),
                })?;
                data.push(value);
            }
            let label: usize = record[d].parse().map_err(|_| Error::InvalidConfig {
                field: "dataset.csv".into(),
                message: format!("bad label {:?}", &record[d]),
            })?;
            labels.push(label);
        }
        let n = labels.len();
        let class_count = labels.iter().max().map_or(0, |&c| c + 1);
        Dataset::new(Tensor::from_vec(vec![n, d], data)?, labels, class_count, 0)
    }
}

/// Stochastic view generation: additive Gaussian noise, multiplicative
/// scale jitter, and an optional rotation in a random coordinate plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub noise_std: f64,
    pub scale_jitter: f64,
    pub rotation: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_std: 0.1,
            scale_jitter: 0.1,
            rotation: true,
        }
    }
}

impl AugmentConfig {
    /// The identity augmentation.
    pub fn none() -> Self {
        Self {
            noise_std: 0.0,
            scale_jitter: 0.0,
            rotation: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "augment.noise_std".into(),
                message: format!("must be finite and nonnegative, got {}", self.noise_std),
            });
        }
        if !(self.scale_jitter >= 0.0 && self.scale_jitter.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "augment.scale_jitter".into(),
                message: format!("must be finite and nonnegative, got {}", self.scale_jitter),
            });
        }
        Ok(())
    }
}

/// Augment every row of `x` independently. Draw order per row: rotation
/// plane and angle, scale factor, then noise; a zero-strength component
/// consumes no randomness, so the all-zero config returns the input
/// unchanged.
pub fn augment(x: &Tensor, config: &AugmentConfig, seed: u64) -> Result<Tensor> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = x.rows();
    let cols = x.cols();
    let mut out = x.clone();
    let noise = Normal::new(0.0, config.noise_std).expect("validated std");
    for r in 0..rows {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        if config.rotation && cols >= 2 {
            let i = rng.gen_range(0..cols);
            let j = (i + rng.gen_range(1..cols)) % cols;
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let (sin, cos) = theta.sin_cos();
            let (a, b) = (row[i], row[j]);
            row[i] = cos * a - sin * b;
            row[j] = sin * a + cos * b;
        }
        if config.scale_jitter > 0.0 {
            let s = 1.0 + rng.gen_range(-config.scale_jitter..config.scale_jitter);
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        if config.noise_std > 0.0 {
            for v in row.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
    }
    Ok(out)
}

/// Isotropic Gaussian blobs: class means drawn uniformly on the unit
/// sphere, points spread around them with the given standard deviation.
/// Rows are class-major.
pub fn make_blobs(
    class_count: usize,
    dim: usize,
    n_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if class_count < 2 {
        return Err(Error::InvalidConfig {
            field: "blobs.class_count".into(),
            message: format!("need at least 2 classes, got {class_count}"),
        });
    }
    if dim < 2 {
        return Err(Error::InvalidConfig {
            field: "blobs.dim".into(),
            message: format!("need at least 2 dimensions, got {dim}"),
        });
    }
    if n_per_class == 0 {
        return Err(Error::InvalidConfig {
            field: "blobs.n_per_class".into(),
            message: "must be at least 1".into(),
        });
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidConfig {
            field: "blobs.spread".into(),
            message: format!("must be finite and nonnegative, got {spread}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                means.push(v.iter().map(|x| x / norm).collect::<Vec<f64>>());
                break;
            }
        }
    }
    let n = class_count * n_per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            for &m in mean {
                let offset: f64 = if spread > 0.0 {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    spread * g
                } else {
                    0.0
                };
                data.push(m + offset);
            }
            labels.push(c);
        }
    }
    Dataset::new(
        Tensor::from_vec(vec![n, dim], data)?,
        labels,
        class_count,
        seed,
    )
}

/// Split by seeded permutation into `(train, test)` with the given test
/// fraction. Both halves must keep every class populated.
pub fn train_test_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig {
            field: "split.test_fraction".into(),
            message: format!("must lie in (0, 1), got {test_fraction}"),
        });
    }
    let n = ds.len();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidConfig {
            field: "split.test_fraction".into(),
            message: format!("fraction {test_fraction} leaves an empty side for {n} samples"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let take = |idx: &[usize]| -> Result<Dataset> {
        let labels = idx.iter().map(|&i| ds.labels[i]).collect();
        Dataset::new(
            ds.features.gather_rows(idx),
            labels,
            ds.class_count,
            ds.seed,
        )
    };
    let test = take(&order[..n_test])?;
    let train = take(&order[n_test..])?;
    Ok((train, test))
}

/// Assemble a pooled contrastive batch for the given anchor rows of `ds`.
///
/// Pool layout: per anchor one block of `m + 1` rows (the raw anchor view
/// followed by its m augmented positives), then one extra augmented view
/// per anchor at the tail for the debiasing means. Negatives of anchor i
/// are the main rows of every other block. With `need_fresh` and m > 1,
/// each of the m - 1 mixture slots gets its own pool in the same block
/// layout with independent augmentation draws, plus a mix partner drawn
/// uniformly from the anchor's negatives.
pub fn build_contrastive_batch(
    ds: &Dataset,
    anchor_indices: &[usize],
    m: usize,
    need_fresh: bool,
    aug: &AugmentConfig,
    seed: u64,
) -> Result<ContrastiveBatch> {
    let n = anchor_indices.len();
    if n < 2 {
        return Err(Error::InvalidConfig {
            field: "batch.anchors".into(),
            message: format!("need at least 2 anchors for nonempty negative sets, got {n}"),
        });
    }
    if m == 0 {
        return Err(Error::InvalidConfig {
            field: "batch.m".into(),
            message: "need at least 1 positive view".into(),
        });
    }
    let mut seen = vec![false; ds.len()];
    for &i in anchor_indices {
        if i >= ds.len() {
            return Err(Error::InvalidConfig {
                field: "batch.anchors".into(),
                message: format!("index {i} out of range for {} samples", ds.len()),
            });
        }
        if seen[i] {
            return Err(Error::InvalidConfig {
                field: "batch.anchors".into(),
                message: format!("index {i} repeated; anchors are drawn without replacement"),
            });
        }
        seen[i] = true;
    }

    let d = ds.dim();
    let block = m + 1;
    let main_rows = n * block;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchors_raw = ds.features.gather_rows(anchor_indices);

    let fill_pool = |pool: &mut Tensor, views: &[Tensor]| {
        for i in 0..n {
            for (slot, view) in views.iter().enumerate() {
                let dst = (i * block + slot) * d;
                pool.data_mut()[dst..dst + d].copy_from_slice(view.row(i));
            }
        }
    };
    let augmented_views = |rng: &mut ChaCha8Rng| -> Result<Vec<Tensor>> {
        let mut views = vec![anchors_raw.clone()];
        for _ in 0..m {
            views.push(augment(&anchors_raw, aug, rng.gen())?);
        }
        Ok(views)
    };

    let mut pool = Tensor::zeros(vec![main_rows + n, d]);
    let main_views = augmented_views(&mut rng)?;
    fill_pool(&mut pool, &main_views);
    let debias = augment(&anchors_raw, aug, rng.gen())?;
    for i in 0..n {
        let dst = (main_rows + i) * d;
        pool.data_mut()[dst..dst + d].copy_from_slice(debias.row(i));
    }

    let anchor_rows: Vec<usize> = (0..n).map(|i| i * block).collect();
    let positive_rows: Vec<usize> = (0..n)
        .flat_map(|i| (1..block).map(move |s| i * block + s))
        .collect();
    let negative_rows: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..main_rows).filter(|r| r / block != i).collect())
        .collect();
    let debias_rows: Vec<usize> = (0..n).map(|i| main_rows + i).collect();

    let mut fresh = Vec::new();
    let mut mix_partner_rows = Vec::new();
    if need_fresh && m > 1 {
        for _ in 0..m - 1 {
            let mut fresh_pool = Tensor::zeros(vec![main_rows, d]);
            let views = augmented_views(&mut rng)?;
            fill_pool(&mut fresh_pool, &views);
            fresh.push(FreshSet {
                pool: fresh_pool,
                negative_rows: negative_rows.clone(),
            });
        }
        for negs in &negative_rows {
            for _ in 0..m - 1 {
                mix_partner_rows.push(negs[rng.gen_range(0..negs.len())]);
            }
        }
    }

    ContrastiveBatch::new(
        pool,
        anchor_rows,
        positive_rows,
        negative_rows,
        debias_rows,
        fresh,
        mix_partner_rows,
    )
}

/// Draw `n_anchors` dataset rows without replacement and build their
/// batch.
pub fn sample_contrastive_batch(
    ds: &Dataset,
    n_anchors: usize,
    m: usize,
    need_fresh: bool,
    aug: &AugmentConfig,
    seed: u64,
) -> Result<ContrastiveBatch> {
    if n_anchors > ds.len() {
        return Err(Error::InvalidConfig {
            field: "batch.n_anchors".into(),
            message: format!("{n_anchors} anchors requested from {} samples", ds.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    order.truncate(n_anchors);
    build_contrastive_batch(ds, &order, m, need_fresh, aug, rng.gen())
}
