//! End-to-end architecture search at a reduced budget: seeds an archive
//! with uniform samples, then alternates surrogate fitting, genetic search
//! over predicted objectives, and true evaluation of the proposed infill
//! candidates. Finishes in a couple of minutes on one core and prints the
//! iteration log events plus the final comparison table.
//!
//! Run with `cargo run --release --example full_search`.

use flatnas::engine::{report, DatasetSpec, Engine, EngineConfig};
use flatnas::nn_core::TrainConfig;
use flatnas::objectives::FomConfig;

fn main() -> flatnas::Result<()> {
    let dir = std::env::temp_dir().join("flatnas_full_search_example");
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;

    let cfg = EngineConfig {
        dataset: DatasetSpec::SyntheticRings { train: 128, validation: 64, noise_std: 0.4 },
        fom: FomConfig { eval_cap: 64, param_limit: 0.05, ..FomConfig::default() },
        train: TrainConfig {
            batch_size: 32,
            epochs: 10,
            learning_rate: 0.05,
            rho: 0.2,
            ..TrainConfig::default()
        },
        n_start: 10,
        iterations: 2,
        infill_per_iter: 3,
        top_k: 3,
        master_seed: 7,
        archive_path: dir.join("archive.jsonl"),
        log_path: dir.join("run_log.jsonl"),
        report_dir: dir.join("report"),
        ..EngineConfig::toy()
    };

    println!(
        "searching: {} seed evaluations, then {} iterations x {} infill",
        cfg.n_start, cfg.iterations, cfg.infill_per_iter
    );
    let mut engine = Engine::new(cfg.clone())?;
    let outcome = engine.run(false)?;
    println!(
        "archive holds {} records ({} trained fresh, {} proposals were duplicates)\n",
        outcome.archive.len(),
        outcome.new_evaluations,
        outcome.skipped_duplicates
    );

    println!("iteration events from {}:", cfg.log_path.display());
    for line in std::fs::read_to_string(&cfg.log_path)?.lines() {
        let event: serde_json::Value = serde_json::from_str(line).expect("engine writes JSON");
        if event["event"] == "iteration" {
            println!(
                "  iter {}: gamma {:.2}, surrogate {}, front sizes {}",
                event["index"], event["gamma"].as_f64().unwrap(), event["surrogate"], event["front_sizes"]
            );
        }
    }

    println!("\nselected front (best combined objective first):");
    let table = report::write_report(
        &outcome.archive.records,
        &[],
        &cfg.space,
        &cfg.fom,
        &cfg.report_dir,
    )?;
    println!("{table}");
    println!("full table and curves written to {}", cfg.report_dir.display());
    Ok(())
}
