//! Experiment driver: a config file in, run directories and ledgers out.
//!
//! One experiment is blobs -> 80/20 split -> self-supervised encoder on the
//! train side -> linear probe -> clean, FGSM, and PGD accuracy on the test
//! side -> transfer evaluation on a second blob set the encoder never saw.
//! Every random choice descends from the run seed, so a config plus a seed
//! pins the entire result.
//!
//! File conventions: configs are TOML (JSON accepted as an alternative
//! encoding), each run writes its own directory, and all runs append to a
//! shared `ledger.csv` that is never rewritten.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adversarial::{AttackConfig, AttackKind};
use crate::data::{make_blobs, train_test_split, AugmentConfig, Dataset};
use crate::encoder::{Activation, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::eval::{
    robust_accuracy, standard_accuracy, train_linear_probe, transfer_eval, EvalMetrics,
    PROBE_EPOCHS, PROBE_LR,
};
use crate::loss::{self, LossConfig};
use crate::train::{train_encoder, Optimizer, TrainConfig, TrainHistory};

/// Fixed offset between the training-set seed and the transfer-set seed so
/// the two blob draws never coincide.
const TRANSFER_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub spread: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            dim: 8,
            per_class: 64,
            spread: 0.15,
        }
    }
}

impl DatasetSpec {
    fn validate(&self, section: &str) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig {
                field: format!("{section}.classes"),
                message: format!("need at least 2 classes, got {}", self.classes),
            });
        }
        if self.per_class == 0 {
            return Err(Error::InvalidConfig {
                field: format!("{section}.per_class"),
                message: "must be positive".into(),
            });
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::InvalidConfig {
                field: format!("{section}.spread"),
                message: format!("must be finite and nonnegative, got {}", self.spread),
            });
        }
        Ok(())
    }
}

/// Transfer blobs share the feature dimension with the primary dataset;
/// only class structure and noise differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub classes: usize,
    pub per_class: usize,
    pub spread: f64,
}

impl Default for TransferSpec {
    fn default() -> Self {
        Self {
            classes: 2,
            per_class: 64,
            spread: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub activation: Activation,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            hidden_dims: vec![64, 64],
            embed_dim: 16,
            activation: Activation::Rectifier,
        }
    }
}

impl EncoderSpec {
    fn to_config(&self, input_dim: usize, seed: u64) -> EncoderConfig {
        EncoderConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            embed_dim: self.embed_dim,
            activation: self.activation,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub augment: AugmentConfig,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 3e-4,
            optimizer: Optimizer::Adam,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainSpec {
    fn to_config(&self, loss: LossConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed,
            loss,
            augment: self.augment.clone(),
            ..TrainConfig::default()
        }
    }
}

/// Evaluation schedule. Both attack kinds run at every budget in
/// `epsilons`; the first budget supplies the headline numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub epsilons: Vec<f64>,
    pub attack_step: f64,
    pub attack_iterations: usize,
    pub attack_restarts: usize,
    pub transfer: TransferSpec,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            epsilons: vec![0.05],
            attack_step: 1e-2,
            attack_iterations: 10,
            attack_restarts: 2,
            transfer: TransferSpec::default(),
        }
    }
}

impl EvalSpec {
    pub fn attack(&self, epsilon: f64) -> AttackConfig {
        AttackConfig {
            epsilon,
            step_size: self.attack_step,
            iterations: self.attack_iterations,
            restarts: self.attack_restarts,
            domain_bounds: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::EmptySet {
                what: "eval.epsilons",
            });
        }
        for &e in &self.epsilons {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidConfig {
                    field: "eval.epsilons".into(),
                    message: format!("budgets must be positive and finite, got {e}"),
                });
            }
        }
        self.attack(self.epsilons[0]).validate()?;
        self.transfer.validate()
    }
}

impl TransferSpec {
    fn validate(&self) -> Result<()> {
        DatasetSpec {
            classes: self.classes,
            dim: 2,
            per_class: self.per_class,
            spread: self.spread,
        }
        .validate("eval.transfer")
    }
}

/// Everything one experiment needs. Choose the loss either by `preset`
/// (one of the named rows) or by spelling out a full `loss` table; exactly
/// one of the two must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub out_dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub seeds: Vec<u64>,
    pub dataset: DatasetSpec,
    pub encoder: EncoderSpec,
    pub train: TrainSpec,
    pub eval: EvalSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "blobs".into(),
            out_dir: "runs".into(),
            preset: Some("simclr".into()),
            seeds: vec![0],
            dataset: DatasetSpec::default(),
            encoder: EncoderSpec::default(),
            train: TrainSpec::default(),
            eval: EvalSpec::default(),
            loss: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::InvalidConfig {
                field: "name".into(),
                message: format!(
                    "run names become directory names; use [A-Za-z0-9_-], got {:?}",
                    self.name
                ),
            });
        }
        if self.out_dir.is_empty() {
            return Err(Error::InvalidConfig {
                field: "out_dir".into(),
                message: "must not be empty".into(),
            });
        }
        if self.seeds.is_empty() {
            return Err(Error::EmptySet { what: "seeds" });
        }
        self.dataset.validate("dataset")?;
        self.encoder
            .to_config(self.dataset.dim, 0)
            .validate()?;
        self.eval.validate()?;
        match (&self.preset, &self.loss) {
            (Some(_), Some(_)) => Err(Error::InvalidConfig {
                field: "preset".into(),
                message: "preset and an explicit loss table are mutually exclusive".into(),
            }),
            (None, None) => Err(Error::InvalidConfig {
                field: "loss".into(),
                message: "choose a preset or spell out a loss table".into(),
            }),
            _ => Ok(()),
        }?;
        let resolved = self.resolved_loss()?;
        self.train.to_config(resolved, 0).validate()
    }

    /// The loss actually trained: the named preset, or the explicit table.
    pub fn resolved_loss(&self) -> Result<LossConfig> {
        match (&self.preset, &self.loss) {
            (Some(name), None) => loss::preset(name),
            (None, Some(cfg)) => {
                cfg.validate()?;
                Ok(cfg.clone())
            }
            _ => Err(Error::InvalidConfig {
                field: "loss".into(),
                message: "exactly one of preset/loss must be set".into(),
            }),
        }
    }

    /// Copy with the loss table spelled out, suitable for echoing next to
    /// results: re-running the echo reproduces the run even if preset
    /// definitions drift later.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut resolved = self.clone();
        resolved.loss = Some(self.resolved_loss()?);
        resolved.preset = None;
        Ok(resolved)
    }

    /// Label used in ledgers and summary tables.
    pub fn method_label(&self) -> String {
        self.preset.clone().unwrap_or_else(|| "custom".into())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig {
            field: "config".into(),
            message: e.to_string(),
        })
    }
}

/// Parse a config file and validate it. TOML unless the content opens a
/// JSON object.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let config: ExperimentConfig = if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig {
            field: "config".into(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(&text)?
    };
    config.validate()?;
    Ok(config)
}

/// Accuracy at one attack budget, both attack kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrengthRow {
    pub epsilon: f64,
    pub fgsm_acc: f64,
    pub pgd_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub final_loss: f64,
    pub epochs: usize,
    pub attacks_run: usize,
    pub train_seconds: f64,
}

/// One run's complete record: resolved config, seed, headline metrics, the
/// per-budget attack table, and training diagnostics (absent when an
/// existing checkpoint was re-evaluated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub metrics: EvalMetrics,
    pub strength: Vec<StrengthRow>,
    pub training: Option<TrainSummary>,
    pub wall_clock_seconds: f64,
}

impl ExperimentResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Copy with wall-clock fields zeroed. Two runs of the same config and
    /// seed agree on everything else.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.wall_clock_seconds = 0.0;
        if let Some(t) = r.training.as_mut() {
            t.train_seconds = 0.0;
        }
        r
    }
}

pub struct RunOutput {
    pub result: ExperimentResult,
    pub history: TrainHistory,
    pub encoder: Encoder,
}

fn evaluate_trained(
    enc: &Encoder,
    train_ds: &Dataset,
    test_ds: &Dataset,
    transfer_ds: &Dataset,
    spec: &EvalSpec,
    seed: u64,
) -> Result<(EvalMetrics, Vec<StrengthRow>)> {
    let probe = train_linear_probe(enc, train_ds, PROBE_EPOCHS, PROBE_LR)?;
    let standard_acc = standard_accuracy(enc, &probe, test_ds)?;
    let mut strength = Vec::with_capacity(spec.epsilons.len());
    for &epsilon in &spec.epsilons {
        let attack = spec.attack(epsilon);
        let fgsm_acc = robust_accuracy(enc, &probe, test_ds, &attack, AttackKind::Fgsm, seed)?;
        let pgd_acc = robust_accuracy(enc, &probe, test_ds, &attack, AttackKind::Pgd, seed)?;
        strength.push(StrengthRow {
            epsilon,
            fgsm_acc,
            pgd_acc,
        });
    }
    let headline = spec.attack(spec.epsilons[0]);
    let (transfer_acc, transfer_fgsm_acc) =
        transfer_eval(enc, transfer_ds, &headline, AttackKind::Fgsm, seed)?;
    let metrics = EvalMetrics {
        standard_acc,
        fgsm_acc: strength[0].fgsm_acc,
        pgd_acc: strength[0].pgd_acc,
        transfer_acc,
        transfer_fgsm_acc,
    };
    metrics.validate()?;
    Ok((metrics, strength))
}

/// The `(train, test, transfer)` datasets a config describes at one seed,
/// exactly as the run pipeline constructs them.
pub fn build_datasets(config: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let ds = make_blobs(
        config.dataset.classes,
        config.dataset.dim,
        config.dataset.per_class,
        config.dataset.spread,
        seed,
    )?;
    let (train_ds, test_ds) = train_test_split(&ds, 0.2, seed)?;
    let t = &config.eval.transfer;
    let transfer_ds = make_blobs(
        t.classes,
        config.dataset.dim,
        t.per_class,
        t.spread,
        seed ^ TRANSFER_SEED_SALT,
    )?;
    Ok((train_ds, test_ds, transfer_ds))
}

/// Train and evaluate one seed of `config`. Pure compute: writes nothing.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    let loss_cfg = config.resolved_loss()?;
    let (train_ds, test_ds, transfer_ds) = build_datasets(config, seed)?;
    let enc_cfg = config.encoder.to_config(config.dataset.dim, seed);
    let train_cfg = config.train.to_config(loss_cfg, seed);
    let (encoder, history) = train_encoder(&train_ds, enc_cfg, &train_cfg)?;
    let (metrics, strength) =
        evaluate_trained(&encoder, &train_ds, &test_ds, &transfer_ds, &config.eval, seed)?;
    let result = ExperimentResult {
        config: config.resolve()?,
        seed,
        metrics,
        strength,
        training: Some(TrainSummary {
            final_loss: *history.epoch_losses.last().expect("at least one epoch"),
            epochs: history.epoch_losses.len(),
            attacks_run: history.attacks_run,
            train_seconds: history.wall_clock_seconds,
        }),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        result,
        history,
        encoder,
    })
}

/// Re-evaluate a saved encoder against freshly built datasets. No training;
/// the result carries no training summary.
pub fn eval_checkpoint(
    checkpoint: &Path,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<ExperimentResult> {
    config.validate()?;
    let started = Instant::now();
    let encoder = Encoder::load(checkpoint)?;
    if encoder.config().input_dim != config.dataset.dim {
        return Err(Error::DimensionMismatch {
            what: "checkpoint input dimension",
            expected: config.dataset.dim,
            got: encoder.config().input_dim,
        });
    }
    let (train_ds, test_ds, transfer_ds) = build_datasets(config, seed)?;
    let (metrics, strength) =
        evaluate_trained(&encoder, &train_ds, &test_ds, &transfer_ds, &config.eval, seed)?;
    Ok(ExperimentResult {
        config: config.resolve()?,
        seed,
        metrics,
        strength,
        training: None,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

/// One line of the shared results ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub method: String,
    pub seed: u64,
    pub epsilon: f64,
    pub standard_acc: f64,
    pub fgsm_acc: f64,
    pub pgd_acc: f64,
    pub transfer_acc: f64,
    pub transfer_fgsm_acc: f64,
    pub final_loss: f64,
    pub wall_clock_seconds: f64,
}

impl LedgerRow {
    pub fn from_result(method: &str, result: &ExperimentResult) -> Self {
        let m = &result.metrics;
        Self {
            method: method.into(),
            seed: result.seed,
            epsilon: result.config.eval.epsilons[0],
            standard_acc: m.standard_acc,
            fgsm_acc: m.fgsm_acc,
            pgd_acc: m.pgd_acc,
            transfer_acc: m.transfer_acc,
            transfer_fgsm_acc: m.transfer_fgsm_acc,
            final_loss: result
                .training
                .as_ref()
                .map_or(f64::NAN, |t| t.final_loss),
            wall_clock_seconds: result.wall_clock_seconds,
        }
    }
}

/// Append one row, creating the file with a header first when needed.
/// Existing content is never touched.
pub fn append_ledger(path: &Path, row: &LedgerRow) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(file);
    writer.serialize(row)?;
    writer.flush()?;
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

/// Run one seed of `config` and write its run directory under `out_dir`:
/// config echo, result JSON, loss history CSV, encoder checkpoint. Appends
/// to the shared ledger and returns the directory path.
pub fn write_run(config: &ExperimentConfig, seed: u64) -> Result<PathBuf> {
    let output = run_experiment(config, seed)?;
    let dir = PathBuf::from(&config.out_dir).join(format!("{}_seed{}", config.name, seed));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), output.result.config.to_toml()?)?;
    fs::write(dir.join("result.json"), output.result.to_json()?)?;
    output.history.save_csv(dir.join("history.csv"))?;
    output.encoder.save(&dir.join("checkpoint.json"))?;
    let row = LedgerRow::from_result(&config.method_label(), &output.result);
    append_ledger(&PathBuf::from(&config.out_dir).join("ledger.csv"), &row)?;
    Ok(dir)
}

/// All seeds of `config`, one run directory each.
pub fn execute_run(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let mut dirs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        dirs.push(write_run(config, seed)?);
    }
    Ok(dirs)
}

/// Grid over the loss knobs. Empty dimensions keep the base value; `preset`
/// entries swap the whole loss table before the scalar overrides apply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default)]
    pub m: Vec<usize>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub preset: Vec<String>,
}

impl SweepGrid {
    pub fn is_empty(&self) -> bool {
        self.m.is_empty() && self.lambda.is_empty() && self.alpha.is_empty() && self.preset.is_empty()
    }

    /// Every cell as a label plus a loss table. Cells that fail validation
    /// are returned too; the sweep records them as failures.
    fn cells(&self, base: &ExperimentConfig) -> Result<Vec<(String, Result<LossConfig>)>> {
        fn axis<T: Clone>(values: &[T]) -> Vec<Option<T>> {
            if values.is_empty() {
                vec![None]
            } else {
                values.iter().cloned().map(Some).collect()
            }
        }
        let mut cells = Vec::new();
        for preset in axis(&self.preset) {
            for m in axis(&self.m) {
                for lambda in axis(&self.lambda) {
                    for alpha in axis(&self.alpha) {
                        let mut label = preset.clone().unwrap_or_else(|| base.method_label());
                        let seed_loss = match &preset {
                            Some(name) => loss::preset(name),
                            None => base.resolved_loss(),
                        };
                        let cell = seed_loss.and_then(|mut cfg| {
                            if let Some(m) = m {
                                cfg.m = m;
                            }
                            if let Some(l) = lambda {
                                cfg.lambda = l;
                            }
                            if let Some(a) = alpha {
                                cfg.alpha = a;
                            }
                            cfg.validate()?;
                            Ok(cfg)
                        });
                        if let Some(m) = m {
                            label.push_str(&format!(" m={m}"));
                        }
                        if let Some(l) = lambda {
                            label.push_str(&format!(" lambda={l}"));
                        }
                        if let Some(a) = alpha {
                            label.push_str(&format!(" alpha={a}"));
                        }
                        cells.push((label, cell));
                    }
                }
            }
        }
        Ok(cells)
    }
}

/// Per-cell aggregate over the seeds that completed. Standard deviations
/// use the n-1 form; a single completed seed reports 0 and sets the flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub seeds_completed: usize,
    pub degenerate_std: bool,
    pub mean: EvalMetrics,
    pub std_dev: EvalMetrics,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: Vec<CellSummary>,
    pub ledger_rows: usize,
}

fn metrics_fields(m: &EvalMetrics) -> [f64; 5] {
    [
        m.standard_acc,
        m.fgsm_acc,
        m.pgd_acc,
        m.transfer_acc,
        m.transfer_fgsm_acc,
    ]
}

fn metrics_from_fields(f: [f64; 5]) -> EvalMetrics {
    EvalMetrics {
        standard_acc: f[0],
        fgsm_acc: f[1],
        pgd_acc: f[2],
        transfer_acc: f[3],
        transfer_fgsm_acc: f[4],
    }
}

fn mean_and_std(samples: &[EvalMetrics]) -> (EvalMetrics, EvalMetrics, bool) {
    let n = samples.len();
    if n == 0 {
        let nan = metrics_from_fields([f64::NAN; 5]);
        return (nan, nan, true);
    }
    let mut mean = [0.0; 5];
    for s in samples {
        for (acc, v) in mean.iter_mut().zip(metrics_fields(s)) {
            *acc += v;
        }
    }
    for v in mean.iter_mut() {
        *v /= n as f64;
    }
    if n == 1 {
        return (metrics_from_fields(mean), metrics_from_fields([0.0; 5]), true);
    }
    let mut var = [0.0; 5];
    for s in samples {
        for ((acc, v), m) in var.iter_mut().zip(metrics_fields(s)).zip(mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let std = var.map(|v| (v / (n - 1) as f64).sqrt());
    (metrics_from_fields(mean), metrics_from_fields(std), false)
}

impl SweepSummary {
    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        writer.write_record([
            "method",
            "seeds",
            "degenerate_std",
            "standard_acc_mean",
            "standard_acc_std",
            "fgsm_acc_mean",
            "fgsm_acc_std",
            "pgd_acc_mean",
            "pgd_acc_std",
            "transfer_acc_mean",
            "transfer_acc_std",
            "transfer_fgsm_acc_mean",
            "transfer_fgsm_acc_std",
        ])?;
        for cell in &self.cells {
            let mean = metrics_fields(&cell.mean);
            let std = metrics_fields(&cell.std_dev);
            let mut record = vec![
                cell.method.clone(),
                cell.seeds_completed.to_string(),
                cell.degenerate_std.to_string(),
            ];
            for i in 0..5 {
                record.push(format!("{}", mean[i]));
                record.push(format!("{}", std[i]));
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Run the grid: every cell at every seed in `base.seeds`, one ledger row
/// per completed (cell, seed). A failing cell or seed is recorded in its
/// summary entry and the sweep moves on. Writes `ledger.csv` and
/// `sweep_summary.csv` under `base.out_dir`.
pub fn sweep(base: &ExperimentConfig, grid: &SweepGrid) -> Result<SweepSummary> {
    base.validate()?;
    if grid.is_empty() {
        return Err(Error::EmptySet { what: "sweep grid" });
    }
    let ledger_path = PathBuf::from(&base.out_dir).join("ledger.csv");
    let mut cells_out = Vec::new();
    let mut ledger_rows = 0;
    for (label, cell) in grid.cells(base)? {
        let mut completed = Vec::new();
        let mut failures = Vec::new();
        match cell {
            Err(e) => failures.push(format!("config: {e}")),
            Ok(loss_cfg) => {
                let mut cfg = base.clone();
                cfg.preset = None;
                cfg.loss = Some(loss_cfg);
                for &seed in &base.seeds {
                    match run_experiment(&cfg, seed) {
                        Ok(output) => {
                            let row = LedgerRow::from_result(&label, &output.result);
                            append_ledger(&ledger_path, &row)?;
                            ledger_rows += 1;
                            completed.push(output.result.metrics);
                        }
                        Err(e) => failures.push(format!("seed {seed}: {e}")),
                    }
                }
            }
        }
        let (mean, std_dev, degenerate_std) = mean_and_std(&completed);
        cells_out.push(CellSummary {
            method: label,
            seeds_completed: completed.len(),
            degenerate_std,
            mean,
            std_dev,
            failures,
        });
    }
    let summary = SweepSummary {
        cells: cells_out,
        ledger_rows,
    };
    fs::create_dir_all(&base.out_dir)?;
    summary.save_csv(PathBuf::from(&base.out_dir).join("sweep_summary.csv"))?;
    Ok(summary)
}

pub const FRONTIER_HEADER: [&str; 6] = [
    "method",
    "seed",
    "std_acc",
    "robust_acc",
    "transfer_std",
    "transfer_robust",
];

/// One point of the standard-vs-robust scatter. `seed` is a number for
/// point rows and the literal string `mean` for per-method averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub method: String,
    pub seed: String,
    pub std_acc: f64,
    pub robust_acc: f64,
    pub transfer_std: f64,
    pub transfer_robust: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierTable {
    pub points: Vec<FrontierRow>,
    pub means: Vec<FrontierRow>,
}

/// Reshape the ledger into plot-ready scatter data: one row per ledger
/// entry, then one mean row per method, in first-appearance order.
pub fn export_frontier(ledger_path: &Path, out_path: &Path) -> Result<FrontierTable> {
    let rows = read_ledger(ledger_path)?;
    if rows.is_empty() {
        return Err(Error::EmptySet {
            what: "results ledger",
        });
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut methods: Vec<(String, Vec<&LedgerRow>)> = Vec::new();
    for row in &rows {
        points.push(FrontierRow {
            method: row.method.clone(),
            seed: row.seed.to_string(),
            std_acc: row.standard_acc,
            robust_acc: row.fgsm_acc,
            transfer_std: row.transfer_acc,
            transfer_robust: row.transfer_fgsm_acc,
        });
        match methods.iter_mut().find(|(name, _)| *name == row.method) {
            Some((_, group)) => group.push(row),
            None => methods.push((row.method.clone(), vec![row])),
        }
    }
    let means = methods
        .iter()
        .map(|(name, group)| {
            let n = group.len() as f64;
            let sum = |f: fn(&LedgerRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            FrontierRow {
                method: name.clone(),
                seed: "mean".into(),
                std_acc: sum(|r| r.standard_acc),
                robust_acc: sum(|r| r.fgsm_acc),
                transfer_std: sum(|r| r.transfer_acc),
                transfer_robust: sum(|r| r.transfer_fgsm_acc),
            }
        })
        .collect::<Vec<_>>();
    let mut writer = csv::Writer::from_path(out_path)?;
    writer.write_record(FRONTIER_HEADER)?;
    for row in points.iter().chain(&means) {
        writer.write_record([
            row.method.clone(),
            row.seed.clone(),
            format!("{}", row.std_acc),
            format!("{}", row.robust_acc),
            format!("{}", row.transfer_std),
            format!("{}", row.transfer_robust),
        ])?;
    }
    writer.flush()?;
    Ok(FrontierTable { points, means })
}
