//! Shows the per-iteration surrogate model switch: four regressor families
//! are cross-validated against an archive and the one whose held-out
//! predictions rank the true objective best (highest mean Kendall tau over
//! five folds) is refitted and used. Two constructed archives make
//! different families win: targets affine in the gene features hand the
//! win to ridge regression, while targets synthesized from radial basis
//! bumps hand it to the RBF interpolator.
//!
//! Run with `cargo run --release --example surrogate_switch`.

use flatnas::nn_core::Optimizer;
use flatnas::objectives::{EvalRecord, FomConfig};
use flatnas::search_space::{self, ArchGene, SearchSpaceDef};
use flatnas::surrogate;

/// Archive whose combined objective is exactly `acc(features)`; robustness
/// is zero so the switch target reduces to alpha * (1 - accuracy).
fn archive_with_accuracy(
    space: &SearchSpaceDef,
    genes: &[ArchGene],
    acc: impl Fn(&[f64]) -> f64,
) -> Vec<EvalRecord> {
    genes
        .iter()
        .map(|gene| {
            let f = surrogate::features(space, gene).expect("sampled gene");
            EvalRecord {
                gene: gene.clone(),
                top1_accuracy: acc(&f),
                robustness: 0.0,
                param_count: 1000,
                sigma: 0.05,
                optimizer: Optimizer::Sgd,
                seed: 0,
                wall_clock_seconds: 0.0,
                failed: false,
            }
        })
        .collect()
}

fn main() -> flatnas::Result<()> {
    let space = SearchSpaceDef::toy_default();
    let fom = FomConfig::default();
    let genes: Vec<ArchGene> =
        (0..40).map(|i| search_space::sample_uniform(&space, 500 + i)).collect();

    // Case 1: accuracy affine in the features. A linear model extrapolates
    // this exactly, so ridge should post tau = 1.0 on every fold.
    let linear = archive_with_accuracy(&space, &genes, |f| {
        let s: f64 = f.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v).sum();
        0.5 + 0.4 * (s / 40.0)
    });

    // Case 2: accuracy sampled from a radial-basis interpolant itself. Fit
    // an RBF through a handful of anchor genes with arbitrary values; its
    // prediction surface becomes the target function, so the RBF family can
    // represent the data exactly while a global linear fit cannot.
    let anchors: Vec<Vec<f64>> = genes
        .iter()
        .step_by(5)
        .map(|g| surrogate::features(&space, g).expect("sampled gene"))
        .collect();
    let anchor_values: Vec<f64> =
        (0..anchors.len()).map(|k| 0.5 + 0.3 * ((k as f64 * 2.399).sin())).collect();
    let generator = surrogate::fit(surrogate::SurrogateKind::Rbf, &anchors, &anchor_values)?;
    let bumpy = archive_with_accuracy(&space, &genes, |f| {
        generator.predict(f).expect("matching feature width").clamp(0.0, 1.0)
    });

    for (name, archive) in [("affine targets", linear), ("radial-basis targets", bumpy)] {
        let outcome = surrogate::adaptive_switch(&space, &archive, &fom, 1.0, 9)?;
        println!("{name}: selected {}", outcome.model.kind);
        for (kind, tau) in &outcome.scores {
            let marker = if *kind == outcome.model.kind { "  <- winner" } else { "" };
            println!("  {kind:<20} mean fold tau {tau:+.4}{marker}");
        }
        println!();
    }

    // The refitted winner predicts unseen genes; compare a few predictions
    // against the generating function for the affine case.
    let affine_archive = archive_with_accuracy(&space, &genes, |f| {
        let s: f64 = f.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v).sum();
        0.5 + 0.4 * (s / 40.0)
    });
    let outcome = surrogate::adaptive_switch(&space, &affine_archive, &fom, 1.0, 9)?;
    println!("held-out predictions of the {} model (affine case):", outcome.model.kind);
    println!("{:>12} {:>12}", "predicted", "true");
    for i in 0..5 {
        let gene = search_space::sample_uniform(&space, 9000 + i);
        let f = surrogate::features(&space, &gene)?;
        let s: f64 = f.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v).sum();
        let truth = fom.alpha * (1.0 - (0.5 + 0.4 * (s / 40.0)));
        println!("{:>12.6} {:>12.6}", outcome.model.predict(&f)?, truth);
    }
    Ok(())
}
