//! Traces the weight-noise robustness metric across noise intensities for
//! one trained network: R(x, sigma) is the mean increase in training error
//! when every weight is scaled by (1 + sigma * z) with standard normal z,
//! averaged over 20 draws. At sigma = 0 the metric is exactly zero by
//! construction; it generally grows with sigma, and the growth rate is the
//! flatness signal the search minimizes.
//!
//! Run with `cargo run --release --example robustness_curve`.

use flatnas::nn_core::{self, data, TrainConfig};
use flatnas::objectives;
use flatnas::search_space::{self, SearchSpaceDef};
use flatnas::seed;

fn main() -> flatnas::Result<()> {
    let space = SearchSpaceDef::toy_default();
    let gene = search_space::sample_uniform(&space, 16);
    let config = search_space::decode(&space, &gene)?;
    println!(
        "architecture {:?}: resolution {}, {} params",
        gene.genes,
        config.input_resolution,
        nn_core::param_count(&config)?
    );

    let train = data::synthetic_rings(256, config.input_resolution, 1, 0.4, 11, data::Split::Train);
    let probe = train.subsample(128, 13);
    let tc = TrainConfig {
        batch_size: 32,
        epochs: 16,
        learning_rate: 0.05,
        rng_seed: 22,
        ..TrainConfig::default()
    };
    let w0 = nn_core::build_network(&config, 21)?;
    let w = nn_core::train(&w0, &config, &train, &tc)?;
    let clean = nn_core::eval_error(&w, &config, &probe)?;
    println!("training-probe error of the trained net: {clean:.4}\n");

    println!("{:>6} {:>12}", "sigma", "R(x, sigma)");
    for &sigma in &[0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5] {
        let r = objectives::robustness(&w, &config, &probe, sigma, 20, seed::mix(31, &[1]))?;
        let bar = "#".repeat((r.max(0.0) * 120.0).round() as usize);
        println!("{sigma:>6.2} {r:>12.5}  {bar}");
    }
    println!("\neach value averages 20 noise draws on a {}-sample probe,", probe.len());
    println!("so the resolution of a single curve point is 1/{}.", 20 * probe.len());
    Ok(())
}
