//! The representation function `f(x) = h(x) / ‖h(x)‖`.
//!
//! `h` is a small MLP: activated hidden layers followed by a linear
//! projection head. Outputs are L2-normalized row-wise, so every similarity
//! downstream is an inner product of unit vectors. A pass-through mode
//! (single layer frozen to the identity) lets tests stipulate embeddings
//! exactly.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Rectifier,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    /// Hidden widths. Must be non-empty for trained encoders; only the
    /// pass-through constructor builds without hidden layers.
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 8,
            hidden_dims: vec![64, 64],
            embed_dim: 16,
            activation: Activation::Rectifier,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig {
                field: "encoder.input_dim".into(),
                message: "must be positive".into(),
            });
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::InvalidConfig {
                field: "encoder.hidden_dims".into(),
                message: "must list at least one hidden width".into(),
            });
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig {
                field: "encoder.hidden_dims".into(),
                message: "widths must be positive".into(),
            });
        }
        if self.embed_dim < 2 {
            return Err(Error::InvalidConfig {
                field: "encoder.embed_dim".into(),
                message: format!("must be at least 2, got {}", self.embed_dim),
            });
        }
        Ok(())
    }

    /// Layer extents from input to embedding.
    fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_dims.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden_dims);
        d.push(self.embed_dim);
        d
    }
}

/// A lifted encoder: one tape variable per parameter tensor, in the same
/// order as [`Encoder::params`].
pub struct EncoderVars {
    weights: Vec<Var>,
    biases: Vec<Var>,
}

impl EncoderVars {
    /// Parameter variables interleaved as `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<Var> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(&w, &b)| [w, b])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
    config: EncoderConfig,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: EncoderConfig,
    weights: Vec<TensorRecord>,
    biases: Vec<TensorRecord>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

impl Encoder {
    /// Seeded initialization: weights uniform in `±1/√fan_in`, drawn layer
    /// by layer in row-major order; biases constant 0.01 so `h(x)` cannot
    /// be zero at the start.
    pub fn init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dims = config.dims();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            weights.push(Tensor::from_vec(vec![fan_in, fan_out], data)?);
            biases.push(Tensor::from_vec(vec![fan_out], vec![0.01; fan_out])?);
        }
        Ok(Self {
            weights,
            biases,
            config,
        })
    }

    /// Test-mode encoder: a single layer frozen to the identity, so
    /// `encode` is pure row normalization. `dim` must be at least 2.
    pub fn pass_through(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig {
                field: "encoder.embed_dim".into(),
                message: format!("must be at least 2, got {dim}"),
            });
        }
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        Ok(Self {
            weights: vec![Tensor::from_vec(vec![dim, dim], eye)?],
            biases: vec![Tensor::from_vec(vec![dim], vec![0.0; dim])?],
            config: EncoderConfig {
                input_dim: dim,
                hidden_dims: vec![],
                embed_dim: dim,
                activation: Activation::Rectifier,
                seed: 0,
            },
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Parameter tensors interleaved as `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Tensor::numel).sum::<usize>()
            + self.biases.iter().map(Tensor::numel).sum::<usize>()
    }

    /// Lift parameters onto a tape as tracked leaves (for training).
    pub fn lift(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            weights: self.weights.iter().map(|w| tape.leaf(w.clone())).collect(),
            biases: self.biases.iter().map(|b| tape.leaf(b.clone())).collect(),
        }
    }

    /// Lift parameters as untracked constants (for evaluation and attacks,
    /// where only the input needs gradients).
    pub fn lift_frozen(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            weights: self
                .weights
                .iter()
                .map(|w| tape.constant(w.clone()))
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| tape.constant(b.clone()))
                .collect(),
        }
    }

    /// Forward pass on an existing tape. Activation follows every hidden
    /// layer; the final projection is linear, then rows are normalized.
    pub fn encode_on(&self, tape: &mut Tape, vars: &EncoderVars, x: Var) -> Result<Var> {
        let layers = vars.weights.len();
        let mut h = x;
        for i in 0..layers {
            let z = tape.matmul(h, vars.weights[i])?;
            h = tape.add_bias(z, vars.biases[i])?;
            if i + 1 < layers {
                h = match self.config.activation {
                    Activation::Rectifier => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        tape.normalize_rows(h)
    }

    /// Value-level forward pass. Runs the same tape ops on a scratch tape,
    /// so results match the lifted path bitwise.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.lift_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.encode_on(&mut tape, &vars, xv)?;
        Ok(tape.value(out).clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            weights: self.weights.iter().map(record).collect(),
            biases: self.biases.iter().map(record).collect(),
        };
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let corrupt = |detail: String| Error::CheckpointCorrupt {
            path: path.display().to_string(),
            detail,
        };
        let text = std::fs::read_to_string(path)?;
        let probe: VersionProbe =
            serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if probe.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: probe.version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        let dims = file.config.dims();
        if file.weights.len() + 1 != dims.len() || file.biases.len() + 1 != dims.len() {
            return Err(corrupt(format!(
                "expected {} layers, found {} weight and {} bias arrays",
                dims.len() - 1,
                file.weights.len(),
                file.biases.len()
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (i, pair) in dims.windows(2).enumerate() {
            let w = Tensor::from_vec(file.weights[i].shape.clone(), file.weights[i].data.clone())
                .map_err(|e| corrupt(e.to_string()))?;
            if w.shape() != [pair[0], pair[1]] {
                return Err(corrupt(format!(
                    "layer {i} weight shape {:?} does not match config dims {:?}",
                    w.shape(),
                    [pair[0], pair[1]]
                )));
            }
            let b = Tensor::from_vec(file.biases[i].shape.clone(), file.biases[i].data.clone())
                .map_err(|e| corrupt(e.to_string()))?;
            if b.shape() != [pair[1]] {
                return Err(corrupt(format!(
                    "layer {i} bias shape {:?} does not match config width {}",
                    b.shape(),
                    pair[1]
                )));
            }
            weights.push(w);
            biases.push(b);
        }
        Ok(Self {
            weights,
            biases,
            config: file.config,
        })
    }
}

fn record(t: &Tensor) -> TensorRecord {
    TensorRecord {
        shape: t.shape().to_vec(),
        data: t.data().to_vec(),
    }
}
