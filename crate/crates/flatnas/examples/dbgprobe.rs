//! Scratch diagnostic: minibatch descent on one architecture.

use flatnas::nn_core::data::{synthetic_rings, Split};
use flatnas::nn_core;
use flatnas::search_space::{self, ArchGene, SearchSpaceDef};
use rand::seq::SliceRandom;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let gene_str = args.get(1).map(String::as_str).unwrap_or("2,2,0,1,0,0,0,0,1,1,1,1,1,1,1,0,0,2,0,0,2,1");
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);
    let noise: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.25);

    let space = SearchSpaceDef::toy_default();
    let gene = ArchGene {
        genes: gene_str.split(',').map(|t| t.trim().parse().unwrap()).collect(),
    };
    let config = search_space::decode(&space, &gene).unwrap();
    let depths: Vec<usize> = config.stages.iter().map(|s| s.blocks.len()).collect();
    println!(
        "res {} depths {:?} params {}",
        config.input_resolution,
        depths,
        nn_core::param_count(&config).unwrap()
    );

    let train = synthetic_rings(192, config.input_resolution, 1, noise, 12345, Split::Train);
    let val = synthetic_rings(96, config.input_resolution, 1, noise, 54321, Split::Validation);

    let w0 = nn_core::build_network(&config, 7).unwrap();
    let mut w = w0.clone();
    let mut vel = vec![0.0; w.values.len()];
    let (mom, wd, bs) = (0.9, 0.0005, 32usize);
    let mut rng = flatnas::seed::rng(99);
    let steps_per_epoch = train.len().div_ceil(bs);
    let total = (epochs * steps_per_epoch).max(1);
    let mut step = 0usize;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut ep_loss = 0.0;
        for chunk in order.chunks(bs) {
            let batch = flatnas::nn_core::data::LabeledDataset {
                channels: train.channels,
                resolution: train.resolution,
                images: chunk.iter().map(|&i| train.images[i].clone()).collect(),
                labels: chunk.iter().map(|&i| train.labels[i]).collect(),
                split: Split::Train,
            };
            let (loss, grad) = nn_core::loss_and_grad(&w, &config, &batch).unwrap();
            ep_loss += loss * batch.len() as f64;
            let cur_lr =
                lr * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos());
            for i in 0..w.values.len() {
                vel[i] = mom * vel[i] + grad.values[i] + wd * w.values[i];
                w.values[i] -= cur_lr * vel[i];
            }
            step += 1;
        }
        let terr = nn_core::eval_error(&w, &config, &train).unwrap();
        let verr = nn_core::eval_error(&w, &config, &val).unwrap();
        let wn: f64 = w.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!(
            "epoch {epoch:2} loss {:.5} train_err {terr:.4} val_err {verr:.4} |w| {wn:.3}",
            ep_loss / train.len() as f64
        );
    }
}
