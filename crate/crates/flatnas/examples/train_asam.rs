//! Trains the same architecture twice, once with plain SGD and once with
//! the adaptive sharpness-aware wrapper, and compares validation error
//! against robustness to multiplicative weight noise. The sharpness-aware
//! run descends the gradient taken at an adaptively perturbed point, which
//! steers it toward flatter minima at some cost in raw fit.
//!
//! Run with `cargo run --release --example train_asam`.

use flatnas::nn_core::{self, data, Optimizer, TrainConfig};
use flatnas::objectives;
use flatnas::search_space::{self, SearchSpaceDef};
use flatnas::seed;

fn main() -> flatnas::Result<()> {
    let space = SearchSpaceDef::toy_default();
    let gene = search_space::sample_uniform(&space, 9);
    let config = search_space::decode(&space, &gene)?;
    println!(
        "architecture {:?}: resolution {}, {} params",
        gene.genes,
        config.input_resolution,
        nn_core::param_count(&config)?
    );

    let train = data::synthetic_rings(256, config.input_resolution, 1, 0.4, 11, data::Split::Train);
    let validation =
        data::synthetic_rings(128, config.input_resolution, 1, 0.4, 12, data::Split::Validation);
    let probe = train.subsample(128, 13);

    let w0 = nn_core::build_network(&config, 21)?;
    let base = TrainConfig {
        batch_size: 32,
        epochs: 16,
        learning_rate: 0.05,
        rho: 0.2,
        rng_seed: 22,
        ..TrainConfig::default()
    };

    println!("\n{:<10} {:>10} {:>12}", "optimizer", "val error", "robustness");
    for optimizer in [Optimizer::Sgd, Optimizer::Asam] {
        let tc = TrainConfig { optimizer, ..base.clone() };
        let w = nn_core::train(&w0, &config, &train, &tc)?;
        let err = nn_core::eval_error(&w, &config, &validation)?;
        // Robustness: mean training-error increase under 20 draws of
        // multiplicative Gaussian weight noise at sigma = 0.05.
        let r = objectives::robustness(&w, &config, &probe, 0.05, 20, seed::mix(31, &[1]))?;
        println!("{:<10} {:>10.4} {:>12.5}", optimizer.to_string(), err, r);
    }
    println!("\nlower robustness means the training error moves less when");
    println!("every weight is jittered, i.e. the minimum is flatter.");
    Ok(())
}
