//! Tour of the architecture encoding: sample genes, decode them into
//! network configurations, count their parameters and multiply-accumulates,
//! and show what mutation and crossover do to an encoding.
//!
//! Run with `cargo run --release --example search_space_tour`.

use flatnas::nn_core;
use flatnas::search_space::{self, SearchSpaceDef};

fn main() -> flatnas::Result<()> {
    let space = SearchSpaceDef::toy_default();
    println!("toy space");
    println!("  resolutions: {:?}", space.resolution_choices);
    println!("  stage widths: {:?}", space.base_channels);
    println!("  blocks per stage: {:?}", space.depth_choices);
    println!("  kernels: {:?}  expansions: {:?}", space.kernel_choices, space.expansion_choices);
    println!("  gene length: {} positions, domains {:?}", space.gene_len(), space.domain_sizes());

    println!("\nfive uniform samples:");
    println!("{:<34} {:>4} {:>7} {:>9} {:>10}", "gene", "res", "blocks", "params", "macs");
    for seed in 0..5 {
        let gene = search_space::sample_uniform(&space, seed);
        let config = search_space::decode(&space, &gene)?;
        let blocks: usize = config.stages.iter().map(|s| s.blocks.len()).sum();
        println!(
            "{:<34} {:>4} {:>7} {:>9} {:>10}",
            format!("{:?}", gene.genes),
            config.input_resolution,
            blocks,
            nn_core::param_count(&config)?,
            nn_core::macs(&config)?,
        );
    }

    // Encoding and decoding are inverse up to inert positions: slots beyond
    // a stage's chosen depth are ignored by decode and canonicalized to 0
    // by encode.
    let gene = search_space::sample_uniform(&space, 42);
    let config = search_space::decode(&space, &gene)?;
    let back = search_space::encode(&space, &config)?;
    println!("\nround trip");
    println!("  sampled:  {:?}", gene.genes);
    println!("  re-coded: {:?}  (inert slots canonicalized)", back.genes);

    let mutated = search_space::mutate(&space, &gene, 4.0 / space.gene_len() as f64, 7);
    let changed: Vec<usize> = (0..gene.genes.len())
        .filter(|&i| gene.genes[i] != mutated.genes[i])
        .collect();
    println!("\nmutation at rate 4/len flipped positions {changed:?}");
    println!("  before: {:?}", gene.genes);
    println!("  after:  {:?}", mutated.genes);

    let other = search_space::sample_uniform(&space, 43);
    let (c1, c2) = search_space::crossover(&gene, &other, 11)?;
    println!("\nuniform crossover");
    println!("  parent a: {:?}", gene.genes);
    println!("  parent b: {:?}", other.genes);
    println!("  child 1:  {:?}", c1.genes);
    println!("  child 2:  {:?}", c2.genes);
    Ok(())
}
