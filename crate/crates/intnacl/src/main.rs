//! Thin command-line front end over the experiment driver. All real work
//! lives in the library; this file parses arguments, forwards to it, and
//! maps errors onto exit codes: 0 success, 2 config problems, 3 numerical
//! failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use intnacl::estimators::EstimatorKind;
use intnacl::experiment::{
    eval_checkpoint, execute_run, export_frontier, load_config, sweep, ExperimentConfig,
    SweepGrid,
};
use intnacl::loss::{self, LossFamily, Weighting};

#[derive(Parser)]
#[command(
    name = "intnacl",
    version,
    about = "Contrastive-loss laboratory: train encoders on synthetic blobs, probe them, attack them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every seed of a config, one run directory each.
    Run {
        /// Config file, TOML or JSON
        config: PathBuf,
        /// Replace the config's seed list with this single seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output root
        #[arg(long)]
        out: Option<String>,
        /// Override the loss preset
        #[arg(long)]
        preset: Option<String>,
    },
    /// Sweep a grid over the loss knobs, appending the shared ledger.
    Sweep {
        config: PathBuf,
        /// Positive-view counts, comma separated
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        /// Mixture coefficients, comma separated
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        /// Robust-term weights, comma separated
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        /// Presets to swap in as whole loss tables, comma separated
        #[arg(long, value_delimiter = ',')]
        presets: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Re-evaluate a saved encoder checkpoint under a config.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        /// Seed for dataset rebuild and attacks; defaults to the config's first
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the result JSON here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reshape a results ledger into the standard-vs-robust scatter table.
    ExportFrontier {
        ledger: PathBuf,
        #[arg(long, default_value = "frontier.csv")]
        out: PathBuf,
    },
    /// List the named loss presets and their knobs.
    Presets,
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    out: Option<String>,
    preset: Option<String>,
) {
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    if let Some(p) = preset {
        cfg.preset = Some(p);
        cfg.loss = None;
    }
}

fn family_label(f: LossFamily) -> &'static str {
    match f {
        LossFamily::Nca => "nca",
        LossFamily::MixNca => "mixnca",
    }
}

fn kind_label(k: EstimatorKind) -> &'static str {
    match k {
        EstimatorKind::G0 => "g0",
        EstimatorKind::G1 => "g1",
        EstimatorKind::G2 => "g2",
    }
}

fn weighting_label(w: Weighting) -> &'static str {
    match w {
        Weighting::ConstantOne => "constant_one",
        Weighting::AdversarialHat => "adversarial_hat",
    }
}

fn execute(cli: Cli) -> intnacl::Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            preset,
        } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, seed, out, preset);
            cfg.validate()?;
            let dirs = execute_run(&cfg)?;
            for (seed, dir) in cfg.seeds.iter().zip(&dirs) {
                let result: intnacl::experiment::ExperimentResult = serde_json::from_str(
                    &std::fs::read_to_string(dir.join("result.json"))?,
                )?;
                let m = result.metrics;
                println!(
                    "seed {seed}: standard {:.4}  fgsm {:.4}  pgd {:.4}  transfer {:.4}/{:.4}  -> {}",
                    m.standard_acc,
                    m.fgsm_acc,
                    m.pgd_acc,
                    m.transfer_acc,
                    m.transfer_fgsm_acc,
                    dir.display()
                );
            }
            Ok(())
        }
        Command::Sweep {
            config,
            m,
            lambda,
            alpha,
            presets,
            seed,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, seed, out, None);
            cfg.validate()?;
            let grid = SweepGrid {
                m,
                lambda,
                alpha,
                preset: presets,
            };
            let summary = sweep(&cfg, &grid)?;
            for cell in &summary.cells {
                println!(
                    "{}: seeds {}, standard {:.4} +/- {:.4}, fgsm {:.4} +/- {:.4}{}",
                    cell.method,
                    cell.seeds_completed,
                    cell.mean.standard_acc,
                    cell.std_dev.standard_acc,
                    cell.mean.fgsm_acc,
                    cell.std_dev.fgsm_acc,
                    if cell.degenerate_std { "  [single seed]" } else { "" }
                );
                for failure in &cell.failures {
                    eprintln!("  failed {failure}");
                }
            }
            println!(
                "appended {} ledger rows under {}",
                summary.ledger_rows, cfg.out_dir
            );
            Ok(())
        }
        Command::Eval {
            checkpoint,
            config,
            seed,
            out,
        } => {
            let cfg = load_config(&config)?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let result = eval_checkpoint(&checkpoint, &cfg, seed)?;
            let json = result.to_json()?;
            if let Some(path) = out {
                std::fs::write(&path, &json)?;
            }
            println!("{json}");
            Ok(())
        }
        Command::ExportFrontier { ledger, out } => {
            let table = export_frontier(&ledger, &out)?;
            println!(
                "wrote {} point rows and {} mean rows to {}",
                table.points.len(),
                table.means.len(),
                out.display()
            );
            Ok(())
        }
        Command::Presets => {
            println!(
                "{:<18} {:<7} {:<5} {:<7} {:<2} {:<6} {:<5} {}",
                "name", "family", "base", "robust", "m", "lambda", "alpha", "weighting"
            );
            for name in loss::PRESET_NAMES {
                let p = loss::preset(name)?;
                println!(
                    "{:<18} {:<7} {:<5} {:<7} {:<2} {:<6} {:<5} {}",
                    name,
                    family_label(p.family),
                    kind_label(p.g1.kind),
                    kind_label(p.g2.kind),
                    p.m,
                    p.lambda,
                    p.alpha,
                    weighting_label(p.weighting)
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
