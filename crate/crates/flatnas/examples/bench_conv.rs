use flatnas::nn_core::data::synthetic_rings;
use flatnas::nn_core::{self, Split, TrainConfig};
use flatnas::search_space::{decode, ArchGene, SearchSpaceDef};
use std::time::Instant;

fn main() {
    let space = SearchSpaceDef::toy_default();
    let worst = ArchGene { genes: vec![2, 2, 2, 2, 1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 2] };
    let mid = ArchGene { genes: vec![1, 1, 0, 1, 1, 0, 1, 0, 1, 0, 1, 0, 1, 1, 0, 2, 1, 0, 1, 2, 0, 1] };
    for (name, gene) in [("mid", &mid), ("worst", &worst)] {
        let cfg = decode(&space, gene).unwrap();
        let ds = synthetic_rings(48, cfg.input_resolution, cfg.input_channels, 0.4, 77, Split::Train);
        let w0 = nn_core::build_network(&cfg, 5).unwrap();
        let tc = TrainConfig { epochs: 2, batch_size: 16, learning_rate: 0.05, ..TrainConfig::default() };
        let t = Instant::now();
        let w = nn_core::train(&w0, &cfg, &ds, &tc).unwrap();
        let dt = t.elapsed().as_secs_f64();
        let err = nn_core::eval_error(&w, &cfg, &ds).unwrap();
        println!("{name}: params={} res={} 2ep x 48 = {dt:.2}s ({:.2}s/epoch) err={err:.3}",
            nn_core::param_count(&cfg).unwrap(), cfg.input_resolution, dt / 2.0);
    }
}
