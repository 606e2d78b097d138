//! Multi-objective genetic search over architecture genes without any
//! training: the two minimized objectives are an analytic capacity proxy
//! (larger networks score better) and the soft-penalized parameter count.
//! They pull in opposite directions, so the population spreads along a
//! tradeoff front instead of collapsing to one winner.
//!
//! Run with `cargo run --release --example nsga2_demo`.

use flatnas::nn_core;
use flatnas::nsga2;
use flatnas::objectives;
use flatnas::search_space::{self, ArchGene, SearchSpaceDef};

fn main() -> flatnas::Result<()> {
    let space = SearchSpaceDef::toy_default();
    let param_limit = 0.05;
    let penalty = 10.0;

    let mut evaluator = |gene: &ArchGene| -> [f64; 2] {
        let config = search_space::decode(&space, gene).expect("search stays inside the space");
        let params = nn_core::param_count(&config).expect("decoded configs count") as f64 / 1e6;
        // Capacity proxy: more multiply-accumulates, lower first objective.
        let macs = nn_core::macs(&config).expect("decoded configs count") as f64 / 1e6;
        [1.0 / (1.0 + macs), objectives::f_cp(params, param_limit, penalty)]
    };

    let pop_size = 24;
    let mut pop = {
        // Seed population, then evolve generation by generation so the
        // front sizes are visible.
        let mut individuals = Vec::new();
        for i in 0..pop_size {
            let gene = search_space::sample_uniform(&space, 1000 + i as u64);
            let objectives = evaluator(&gene);
            individuals.push(nsga2::Individual { gene, objectives, rank: 0, crowding: 0.0 });
        }
        let mut p = nsga2::Population { individuals, generation: 0 };
        nsga2::rank_and_crowd(&mut p);
        p
    };

    println!("{:>10} {:>12} {:>16}", "generation", "front sizes", "best (f1, f2)");
    for gen in 0..10 {
        let mut sizes: Vec<usize> = Vec::new();
        for ind in &pop.individuals {
            if ind.rank >= sizes.len() {
                sizes.resize(ind.rank + 1, 0);
            }
            sizes[ind.rank] += 1;
        }
        let best = pop
            .individuals
            .iter()
            .map(|i| i.objectives)
            .min_by(|a, b| a[0].total_cmp(&b[0]))
            .unwrap();
        println!("{:>10} {:>12} ({:.4}, {:.4})", gen, format!("{sizes:?}"), best[0], best[1]);
        pop = nsga2::evolve(&pop, &space, pop_size, 1.0 / space.gene_len() as f64, 77, &mut evaluator)?;
    }

    println!("\nfinal nondominated set (rank 0), by capacity objective:");
    println!("{:>10} {:>11} {:>9} {:>8}  gene", "1/(1+MACs)", "penalized", "params", "crowding");
    let mut front: Vec<&nsga2::Individual> =
        pop.individuals.iter().filter(|i| i.rank == 0).collect();
    front.sort_by(|a, b| a.objectives[0].total_cmp(&b.objectives[0]));
    front.dedup_by(|a, b| a.gene == b.gene);
    for ind in front {
        let config = search_space::decode(&space, &ind.gene)?;
        println!(
            "{:>10.4} {:>11.4} {:>9} {:>8.3}  {:?}",
            ind.objectives[0],
            ind.objectives[1],
            nn_core::param_count(&config)?,
            ind.crowding,
            ind.gene.genes
        );
    }
    println!("\nthe infinite-crowding rows are the front's endpoints; the");
    println!("penalized objective jumps once parameters cross {param_limit} million.");
    Ok(())
}
