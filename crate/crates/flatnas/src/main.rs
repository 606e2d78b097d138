//! Thin command-line front end: `search` runs the full loop from a JSON
//! config, `eval` measures one gene, `corrupt` materializes corrupted
//! validation sets, and `report` renders the comparison table and curves.

use clap::{Parser, Subcommand};
use flatnas::corruption::{self, CorruptionType, ALL_TYPES};
use flatnas::engine::{self, report, Archive, Engine, EngineConfig};
use flatnas::error::{Error, Result};
use flatnas::nn_core::eval_error;
use flatnas::search_space::ArchGene;
use flatnas::seed;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "flatnas",
    about = "architecture search balancing accuracy against flat-minimum robustness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the search loop and render its report.
    Search {
        /// JSON file mirroring the engine config; omitted, the built-in
        /// desk-scale setup runs.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue an interrupted run from its archive.
        #[arg(long)]
        resume: bool,
        /// Training optimizer: sgd or asam.
        #[arg(long)]
        optimizer: Option<String>,
        /// Accuracy weight in [0, 1]; 1 ignores robustness.
        #[arg(long)]
        alpha: Option<f64>,
        /// Weight-noise intensity of the robustness metric.
        #[arg(long)]
        sigma: Option<f64>,
        /// Parameter budget in millions.
        #[arg(long)]
        param_limit: Option<f64>,
        /// Penalty slope on budget violations.
        #[arg(long)]
        penalty: Option<f64>,
    },
    /// Evaluate one architecture gene and print its record as JSON.
    Eval {
        /// Comma-separated gene indices, e.g. "2,1,0,1,0,2".
        #[arg(long)]
        gene: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Evaluation seed; defaults to the seed the search loop would use.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write corrupted copies of the validation set to a directory.
    Corrupt {
        /// Comma-separated corruption types; omitted, all of them.
        #[arg(long)]
        types: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Render resolution; defaults to the space's largest.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render the comparison table and corruption curves for an archive.
    Report {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also retrain the selected models and benchmark them on
        /// corrupted validation sets (fills the mCE column).
        #[arg(long)]
        corruptions: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        None => Ok(EngineConfig::toy()),
        Some(p) => {
            let cfg: EngineConfig = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            Ok(cfg)
        }
    }
}

fn parse_gene(text: &str) -> Result<ArchGene> {
    let genes = text
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidGene(format!("cannot parse index {part:?}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(ArchGene { genes })
}

fn parse_types(text: Option<&str>) -> Result<Vec<CorruptionType>> {
    match text {
        None => Ok(ALL_TYPES.to_vec()),
        Some(list) => list.split(',').map(|t| t.trim().parse()).collect(),
    }
}

fn corruption_master_seed(cfg: &EngineConfig) -> u64 {
    seed::mix(cfg.master_seed, &[0xC0])
}

fn main() {
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Search {
            config,
            seed,
            resume,
            optimizer,
            alpha,
            sigma,
            param_limit,
            penalty,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(o) = optimizer {
                cfg.train.optimizer = o.parse()?;
            }
            if let Some(a) = alpha {
                cfg.fom.alpha = a;
            }
            if let Some(s) = sigma {
                cfg.fom.sigma = s;
            }
            if let Some(p) = param_limit {
                cfg.fom.param_limit = p;
            }
            if let Some(p) = penalty {
                cfg.fom.penalty = p;
            }
            let mut eng = Engine::new(cfg.clone())?;
            let outcome = eng.run(resume)?;
            println!(
                "archive: {} records ({} new, {} duplicates skipped)",
                outcome.archive.len(),
                outcome.new_evaluations,
                outcome.skipped_duplicates
            );
            println!("archive file: {}", cfg.archive_path.display());
            println!("run log:      {}", cfg.log_path.display());
            let table = report::write_report(
                &outcome.archive.records,
                &[],
                &cfg.space,
                &cfg.fom,
                &cfg.report_dir,
            )?;
            println!("\n{table}");
            Ok(())
        }
        Command::Eval { gene, config, seed: seed_arg } => {
            let cfg = load_config(config.as_deref())?;
            let gene = parse_gene(&gene)?;
            let eval_seed =
                seed_arg.unwrap_or_else(|| seed::mix_gene(cfg.master_seed, &gene.genes));
            let record = engine::evaluate_candidate(&gene, &cfg, eval_seed)?;
            println!("{}", serde_json::to_string(&record)?);
            Ok(())
        }
        Command::Corrupt { types, out, config, resolution, seed: seed_arg } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed_arg {
                cfg.master_seed = s;
            }
            let resolution = resolution
                .unwrap_or_else(|| *cfg.space.resolution_choices.last().expect("validated"));
            let types = parse_types(types.as_deref())?;
            let mut eng = Engine::new(cfg.clone())?;
            let validation = eng.validation_at(resolution)?;
            let sets =
                corruption::build_corrupted_sets(&validation, &types, corruption_master_seed(&cfg))?;
            corruption::cache_corrupted_sets(&sets, &out)?;
            println!(
                "wrote {} corrupted sets ({} samples each) to {}",
                sets.len(),
                validation.len(),
                out.display()
            );
            Ok(())
        }
        Command::Report { archive, out, config, corruptions } => {
            let cfg = load_config(config.as_deref())?;
            let archive = Archive::load(&archive)?;
            let mut benchmarks = Vec::new();
            if corruptions {
                let mut eng = Engine::new(cfg.clone())?;
                let front = engine::front_indices(&archive.records, &cfg.fom)?;
                for &i in front.iter().take(cfg.top_k) {
                    let record = &archive.records[i];
                    if record.failed {
                        continue;
                    }
                    let (net, w) = eng.retrain_record(record)?;
                    let validation = eng.validation_at(net.input_resolution)?;
                    let sets = corruption::build_corrupted_sets(
                        &validation,
                        &ALL_TYPES,
                        corruption_master_seed(&cfg),
                    )?;
                    let clean = eval_error(&w, &net, &validation)?;
                    benchmarks.push(corruption::corruption_report(
                        &w,
                        &net,
                        &sets,
                        clean,
                        &report::model_name(i),
                        "validation",
                    )?);
                }
            }
            let table = report::write_report(
                &archive.records,
                &benchmarks,
                &cfg.space,
                &cfg.fom,
                &out,
            )?;
            print!("{table}");
            println!("\nfiles written to {}", out.display());
            Ok(())
        }
    }
}
