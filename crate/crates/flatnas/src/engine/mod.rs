//! Search orchestration: seeds an archive of uniformly sampled
//! architectures, then alternates frozen-balance objective computation,
//! surrogate selection, surrogate-guided genetic search, and true
//! evaluation of the infill picks. Archives persist as JSON lines and any
//! interrupted run resumes by deterministic replay.

pub mod report;

use crate::error::{Error, Result};
use crate::nn_core::{self, data, LabeledDataset, Split, TrainConfig};
use crate::nsga2;
use crate::objectives::{self, EvalRecord, FomConfig};
use crate::search_space::{self, ArchGene, SearchSpaceDef};
use crate::seed;
use crate::surrogate::{self, SwitchOutcome};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Where training and validation data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Two concentric-ring classes rendered on demand at any resolution.
    /// A sample's label and ring radius depend only on the seed and its
    /// index, so every resolution sees the same underlying population.
    SyntheticRings { train: usize, validation: usize, noise_std: f64 },
    /// Binary image batches (one label byte then channels x 32 x 32 pixel
    /// bytes per record), resampled by pixel-area averaging to each
    /// candidate's input resolution. A limit of 0 keeps every record.
    BinaryBatches {
        train_files: Vec<PathBuf>,
        validation_file: PathBuf,
        train_limit: usize,
        validation_limit: usize,
    },
}

/// Everything a search run needs: the space, the data source, objective
/// weights, training hyperparameters, loop sizes, seed, and output paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub space: SearchSpaceDef,
    pub dataset: DatasetSpec,
    pub fom: FomConfig,
    pub train: TrainConfig,
    /// Architectures evaluated up front to seed the archive.
    pub n_start: usize,
    /// Search iterations after seeding.
    pub iterations: usize,
    /// New candidates evaluated per iteration.
    pub infill_per_iter: usize,
    /// How many head-of-front records a finished run returns.
    pub top_k: usize,
    /// Population size and generation count of the internal genetic search.
    pub nsga_pop: usize,
    pub nsga_generations: usize,
    pub master_seed: u64,
    pub archive_path: PathBuf,
    pub log_path: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            space: SearchSpaceDef::mobilenet_like(),
            dataset: DatasetSpec::SyntheticRings { train: 4096, validation: 1024, noise_std: 0.05 },
            fom: FomConfig::default(),
            train: TrainConfig::default(),
            n_start: 100,
            iterations: 30,
            infill_per_iter: 8,
            top_k: 5,
            nsga_pop: 40,
            nsga_generations: 20,
            master_seed: 0,
            archive_path: PathBuf::from("archive.jsonl"),
            log_path: PathBuf::from("run_log.jsonl"),
            report_dir: PathBuf::from("report"),
        }
    }
}

impl EngineConfig {
    /// Desk-scale configuration: the small space on the synthetic ring
    /// task, sized so a full search takes minutes on one core. The training
    /// overrides are calibrated to that scale: at a quarter peak rate with
    /// 24 epochs, sampled candidates reliably memorize the small noisy
    /// training split through the warmup-plus-cosine schedule. Heavy ring
    /// noise makes that memorization tight-margined, so weight-noise
    /// robustness stays strictly positive with real spread instead of
    /// saturating at zero; the robustness probe covers the whole training
    /// split. The gentler ascent radius keeps the sharpness-aware optimizer
    /// from drowning tiny networks in perturbation.
    pub fn toy() -> Self {
        EngineConfig {
            space: SearchSpaceDef::toy_default(),
            dataset: DatasetSpec::SyntheticRings { train: 128, validation: 128, noise_std: 0.4 },
            fom: FomConfig { eval_cap: 128, param_limit: 0.05, ..FomConfig::default() },
            train: TrainConfig {
                batch_size: 32,
                epochs: 24,
                learning_rate: 0.05,
                rho: 0.2,
                ..TrainConfig::default()
            },
            n_start: 16,
            iterations: 5,
            infill_per_iter: 4,
            top_k: 3,
            master_seed: 0,
            ..EngineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.fom.validate()?;
        self.train.validate()?;
        if self.n_start < 8 {
            return Err(Error::Config(format!(
                "n_start {} is below the minimum of 8 needed for surrogate selection",
                self.n_start
            )));
        }
        if self.infill_per_iter < 1 {
            return Err(Error::Config("infill_per_iter must be >= 1".into()));
        }
        if self.top_k < 1 {
            return Err(Error::Config("top_k must be >= 1".into()));
        }
        if self.nsga_pop < 2 || self.nsga_generations == 0 {
            return Err(Error::Config("genetic search needs pop >= 2 and generations >= 1".into()));
        }
        match &self.dataset {
            DatasetSpec::SyntheticRings { train, validation, noise_std } => {
                if *train == 0 || *validation == 0 {
                    return Err(Error::Config("dataset splits must be non-empty".into()));
                }
                if *noise_std < 0.0 {
                    return Err(Error::Config("noise_std must be >= 0".into()));
                }
            }
            DatasetSpec::BinaryBatches { train_files, .. } => {
                if train_files.is_empty() {
                    return Err(Error::Config("at least one training batch file required".into()));
                }
            }
        }
        Ok(())
    }
}

/// Append-only store of evaluated architectures: the ground truth the
/// surrogates are fitted to and the unit of persistence (one JSON record
/// per line).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    pub records: Vec<EvalRecord>,
}

impl Archive {
    pub fn load(path: &Path) -> Result<Archive> {
        let text = std::fs::read_to_string(path)?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: EvalRecord = serde_json::from_str(line)
                .map_err(|e| Error::CorruptArchive(format!("line {}: {e}", i + 1)))?;
            records.push(record);
        }
        Ok(Archive { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, gene: &ArchGene) -> bool {
        self.records.iter().any(|r| &r.gene == gene)
    }
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")?;
    Ok(())
}

/// Train/validation/probe datasets rendered at one input resolution. The
/// probe is the capped training subset used by perturbed-weight
/// evaluations.
struct ResolutionData {
    train: LabeledDataset,
    validation: LabeledDataset,
    probe: LabeledDataset,
}

/// Renders and caches datasets per resolution so candidates sharing an
/// input size share data. All derived sets depend only on the dataset
/// spec, master seed, and cap, never on the candidate.
struct DataProvider {
    dataset: DatasetSpec,
    channels: usize,
    master_seed: u64,
    eval_cap: usize,
    base: Option<(LabeledDataset, LabeledDataset)>,
    cache: BTreeMap<usize, ResolutionData>,
}

impl DataProvider {
    fn new(cfg: &EngineConfig) -> Result<DataProvider> {
        let base = match &cfg.dataset {
            DatasetSpec::SyntheticRings { .. } => None,
            DatasetSpec::BinaryBatches {
                train_files,
                validation_file,
                train_limit,
                validation_limit,
            } => {
                let mut train: Option<LabeledDataset> = None;
                for file in train_files {
                    let batch = data::read_cifar_batch(file, Split::Train)?;
                    train = Some(match train {
                        None => batch,
                        Some(mut acc) => {
                            if acc.resolution != batch.resolution || acc.channels != batch.channels
                            {
                                return Err(Error::ShapeError(
                                    "training batches disagree on image shape".into(),
                                ));
                            }
                            acc.images.extend(batch.images);
                            acc.labels.extend(batch.labels);
                            acc
                        }
                    });
                }
                let mut train = train.expect("validated: at least one train file");
                let mut validation = data::read_cifar_batch(validation_file, Split::Validation)?;
                if *train_limit > 0 && train.len() > *train_limit {
                    train.images.truncate(*train_limit);
                    train.labels.truncate(*train_limit);
                }
                if *validation_limit > 0 && validation.len() > *validation_limit {
                    validation.images.truncate(*validation_limit);
                    validation.labels.truncate(*validation_limit);
                }
                if train.channels != cfg.space.input_channels {
                    return Err(Error::ShapeError(format!(
                        "batch files have {} channels, space expects {}",
                        train.channels, cfg.space.input_channels
                    )));
                }
                Some((train, validation))
            }
        };
        Ok(DataProvider {
            dataset: cfg.dataset.clone(),
            channels: cfg.space.input_channels,
            master_seed: cfg.master_seed,
            eval_cap: cfg.fom.eval_cap,
            base,
            cache: BTreeMap::new(),
        })
    }

    fn at(&mut self, resolution: usize) -> Result<&ResolutionData> {
        if !self.cache.contains_key(&resolution) {
            let (train, validation) = match &self.dataset {
                DatasetSpec::SyntheticRings { train, validation, noise_std } => (
                    data::synthetic_rings(
                        *train,
                        resolution,
                        self.channels,
                        *noise_std,
                        seed::mix(self.master_seed, &[0xDA7A, 1]),
                        Split::Train,
                    ),
                    data::synthetic_rings(
                        *validation,
                        resolution,
                        self.channels,
                        *noise_std,
                        seed::mix(self.master_seed, &[0xDA7A, 2]),
                        Split::Validation,
                    ),
                ),
                DatasetSpec::BinaryBatches { .. } => {
                    let (bt, bv) = self.base.as_ref().expect("loaded in new");
                    (data::area_resample(bt, resolution), data::area_resample(bv, resolution))
                }
            };
            let probe =
                train.subsample(self.eval_cap.min(train.len()), seed::mix(self.master_seed, &[0xDA7A, 3]));
            self.cache.insert(resolution, ResolutionData { train, validation, probe });
        }
        Ok(self.cache.get(&resolution).expect("inserted above"))
    }
}

/// Result of a search run. `top` is empty and `completed` false when an
/// evaluation budget stopped the run early (the archive stays resumable).
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub top: Vec<EvalRecord>,
    pub archive: Archive,
    pub completed: bool,
    pub new_evaluations: usize,
    pub skipped_duplicates: usize,
}

/// One iteration's frozen state: the balance factor, the selected
/// surrogate, the deduplicated infill batch, and diagnostics for the log.
struct IterationPlan {
    gamma: f64,
    switch: SwitchOutcome,
    batch: Vec<ArchGene>,
    skipped: usize,
    front_sizes: Vec<usize>,
}

/// Orchestrates a full search over one configuration, owning the dataset
/// caches.
pub struct Engine {
    cfg: EngineConfig,
    data: DataProvider,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Engine> {
        cfg.validate()?;
        let data = DataProvider::new(&cfg)?;
        Ok(Engine { cfg, data })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// Retrains a gene exactly as an archive evaluation would (same
    /// initialization and shuffling for the same seed) using the engine's
    /// training configuration, and returns the decoded configuration with
    /// the trained weights.
    pub fn retrain(
        &mut self,
        gene: &ArchGene,
        eval_seed: u64,
    ) -> Result<(crate::search_space::NetworkConfig, nn_core::WeightVector)> {
        let config = search_space::decode(&self.cfg.space, gene)?;
        let w0 = nn_core::build_network(&config, seed::mix(eval_seed, &[1]))?;
        let mut tc = self.cfg.train.clone();
        tc.rng_seed = seed::mix(eval_seed, &[2]);
        let rd = self.data.at(config.input_resolution)?;
        let w = nn_core::train(&w0, &config, &rd.train, &tc)?;
        Ok((config, w))
    }

    /// Reproduces the trained weights behind an archive record, honoring the
    /// optimizer stored in the record even when the engine's configuration
    /// has a different one (a search run with an optimizer override writes
    /// such records).
    pub fn retrain_record(
        &mut self,
        record: &EvalRecord,
    ) -> Result<(crate::search_space::NetworkConfig, nn_core::WeightVector)> {
        let saved = self.cfg.train.optimizer;
        self.cfg.train.optimizer = record.optimizer;
        let result = self.retrain(&record.gene, record.seed);
        self.cfg.train.optimizer = saved;
        result
    }

    /// The validation split rendered at one resolution; the source set for
    /// corruption benchmarks.
    pub fn validation_at(&mut self, resolution: usize) -> Result<LabeledDataset> {
        Ok(self.data.at(resolution)?.validation.clone())
    }

    /// Trains one candidate and measures its figures of merit: validation
    /// accuracy, robustness to multiplicative weight noise on the training
    /// probe, and the analytic parameter count. Diverged training yields a
    /// failed record with the documented worst-case sentinels (accuracy 0,
    /// robustness 1).
    pub fn evaluate_candidate(&mut self, gene: &ArchGene, eval_seed: u64) -> Result<EvalRecord> {
        let started = std::time::Instant::now();
        let param_count = nn_core::param_count(&search_space::decode(&self.cfg.space, gene)?)?;
        let fom = self.cfg.fom.clone();
        let (top1_accuracy, robustness, failed) = match self.retrain(gene, eval_seed) {
            Ok((config, w)) => {
                let rd = self.data.at(config.input_resolution)?;
                let err = nn_core::eval_error(&w, &config, &rd.validation)?;
                let r = objectives::robustness(
                    &w,
                    &config,
                    &rd.probe,
                    fom.sigma,
                    fom.samples,
                    seed::mix(eval_seed, &[3]),
                )?;
                (1.0 - err, r, false)
            }
            Err(Error::DivergenceError { .. }) => (0.0, 1.0, true),
            Err(e) => return Err(e),
        };
        Ok(EvalRecord {
            gene: gene.clone(),
            top1_accuracy,
            robustness,
            param_count,
            sigma: fom.sigma,
            optimizer: self.cfg.train.optimizer,
            seed: eval_seed,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            failed,
        })
    }

    /// Runs the search to completion. Refuses to touch an existing archive
    /// unless `resume` is set, in which case the persisted records are
    /// verified against the deterministic schedule and the run continues
    /// from wherever it stopped.
    pub fn run(&mut self, resume: bool) -> Result<RunOutcome> {
        self.run_budgeted(resume, None)
    }

    /// Same as [`Engine::run`] but stops cleanly after at most
    /// `max_new_evaluations` fresh evaluations, leaving a resumable
    /// archive. The capped outcome has `completed == false` and no `top`.
    pub fn run_budgeted(
        &mut self,
        resume: bool,
        max_new_evaluations: Option<usize>,
    ) -> Result<RunOutcome> {
        let cfg = self.cfg.clone();
        let mut archive = if cfg.archive_path.exists() {
            if !resume {
                return Err(Error::Config(format!(
                    "archive {} already exists; resume or choose a fresh path",
                    cfg.archive_path.display()
                )));
            }
            Archive::load(&cfg.archive_path)?
        } else {
            Archive::default()
        };
        let mut new_evaluations = 0usize;
        let mut skipped_duplicates = 0usize;
        let capped = |count: usize| max_new_evaluations.is_some_and(|cap| count >= cap);
        let partial = |archive: Archive, new_evaluations, skipped_duplicates| RunOutcome {
            top: Vec::new(),
            archive,
            completed: false,
            new_evaluations,
            skipped_duplicates,
        };

        // Stage 1: seed the archive with distinct uniform samples. On
        // resume the persisted prefix must match the deterministic draw.
        let init_genes = self.initial_genes()?;
        for (i, record) in archive.records.iter().take(cfg.n_start).enumerate() {
            if record.gene != init_genes[i] {
                return Err(Error::CorruptArchive(format!(
                    "record {i} does not match the seeded sample for this configuration"
                )));
            }
        }
        if archive.is_empty() {
            self.log(serde_json::json!({
                "event": "init",
                "n_start": cfg.n_start,
                "gene_len": cfg.space.gene_len(),
            }))?;
        }
        while archive.len() < cfg.n_start {
            if capped(new_evaluations) {
                return Ok(partial(archive, new_evaluations, skipped_duplicates));
            }
            let gene = init_genes[archive.len()].clone();
            let record =
                self.evaluate_candidate(&gene, seed::mix_gene(cfg.master_seed, &gene.genes))?;
            append_line(&cfg.archive_path, &serde_json::to_string(&record)?)?;
            archive.records.push(record);
            new_evaluations += 1;
        }

        // Stage 2: iterate. Each iteration's plan is a pure function of the
        // archive prefix, which makes replay after an interruption exact.
        let mut pos = cfg.n_start;
        for iteration in 0..cfg.iterations {
            let plan = self.plan_iteration(&archive.records[..pos], iteration)?;
            let tau: serde_json::Map<String, serde_json::Value> = plan
                .switch
                .scores
                .iter()
                .map(|(kind, t)| (kind.to_string(), serde_json::json!(t)))
                .collect();
            self.log(serde_json::json!({
                "event": "iteration",
                "index": iteration,
                "gamma": plan.gamma,
                "surrogate": plan.switch.model.kind,
                "tau": tau,
                "front_sizes": plan.front_sizes,
                "infill": plan.batch.iter().map(|g| g.genes.clone()).collect::<Vec<_>>(),
                "skipped_duplicates": plan.skipped,
                "shortfall": cfg.infill_per_iter - plan.batch.len(),
            }))?;
            skipped_duplicates += plan.skipped;
            for gene in &plan.batch {
                if pos < archive.len() {
                    if &archive.records[pos].gene != gene {
                        return Err(Error::CorruptArchive(format!(
                            "record {pos} does not match the replayed infill schedule"
                        )));
                    }
                } else {
                    if capped(new_evaluations) {
                        return Ok(partial(archive, new_evaluations, skipped_duplicates));
                    }
                    let record =
                        self.evaluate_candidate(gene, seed::mix_gene(cfg.master_seed, &gene.genes))?;
                    append_line(&cfg.archive_path, &serde_json::to_string(&record)?)?;
                    archive.records.push(record);
                    new_evaluations += 1;
                }
                pos += 1;
            }
        }
        if archive.len() != pos {
            return Err(Error::CorruptArchive(format!(
                "archive holds {} records but the schedule produces {pos}",
                archive.len()
            )));
        }

        // Stage 3: the returned set is the head of the true nondominated
        // front, ordered by the combined accuracy/robustness objective.
        let front = front_indices(&archive.records, &cfg.fom)?;
        let top: Vec<EvalRecord> =
            front.iter().take(cfg.top_k).map(|&i| archive.records[i].clone()).collect();
        self.log(serde_json::json!({
            "event": "final",
            "archive_size": archive.len(),
            "front_size": front.len(),
            "selected": top.iter().map(|r| r.gene.genes.clone()).collect::<Vec<_>>(),
        }))?;
        Ok(RunOutcome { top, archive, completed: true, new_evaluations, skipped_duplicates })
    }

    /// The deterministic initial sample: distinct genes drawn uniformly,
    /// resampling collisions from a bounded stream.
    fn initial_genes(&self) -> Result<Vec<ArchGene>> {
        let mut genes = Vec::with_capacity(self.cfg.n_start);
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        let max_attempts = self.cfg.n_start as u64 * 1000;
        let mut attempt = 0u64;
        while genes.len() < self.cfg.n_start {
            if attempt >= max_attempts {
                return Err(Error::InsufficientData(format!(
                    "could not draw {} distinct architectures in {max_attempts} attempts",
                    self.cfg.n_start
                )));
            }
            let g = search_space::sample_uniform(
                &self.cfg.space,
                seed::mix(self.cfg.master_seed, &[0x1417, attempt]),
            );
            attempt += 1;
            if seen.insert(g.genes.clone()) {
                genes.push(g);
            }
        }
        Ok(genes)
    }

    /// Freezes the balance factor, selects the surrogate by cross-validated
    /// rank correlation, runs the genetic search against (predicted
    /// combined objective, analytic penalized size), and picks the infill
    /// batch: front by front, best crowding first, skipping genes already
    /// evaluated.
    fn plan_iteration(&self, records: &[EvalRecord], iteration: usize) -> Result<IterationPlan> {
        let gamma = objectives::gamma(records)?;
        let switch = surrogate::adaptive_switch(
            &self.cfg.space,
            records,
            &self.cfg.fom,
            gamma,
            seed::mix(self.cfg.master_seed, &[0x5085, iteration as u64]),
        )?;
        let space = &self.cfg.space;
        let fom = &self.cfg.fom;
        let model = &switch.model;
        let mut evaluator = |gene: &ArchGene| -> [f64; 2] {
            let f = surrogate::features(space, gene).expect("search genes stay inside the space");
            let predicted = model.predict(&f).expect("feature width fixed by the space");
            let config = search_space::decode(space, gene).expect("search genes decode");
            let params =
                nn_core::param_count(&config).expect("decoded configs count") as f64 / 1e6;
            [predicted, objectives::f_cp(params, fom.param_limit, fom.penalty)]
        };
        let pop = nsga2::optimize(
            space,
            self.cfg.nsga_pop,
            self.cfg.nsga_generations,
            1.0 / space.gene_len() as f64,
            seed::mix(self.cfg.master_seed, &[0x6A5A, iteration as u64]),
            &mut evaluator,
        )?;

        let mut front_sizes: Vec<usize> = Vec::new();
        for ind in &pop.individuals {
            if ind.rank >= front_sizes.len() {
                front_sizes.resize(ind.rank + 1, 0);
            }
            front_sizes[ind.rank] += 1;
        }
        let mut order: Vec<usize> = (0..pop.individuals.len()).collect();
        order.sort_by(|&i, &j| {
            let a = &pop.individuals[i];
            let b = &pop.individuals[j];
            a.rank.cmp(&b.rank).then(b.crowding.total_cmp(&a.crowding)).then(i.cmp(&j))
        });
        let known: BTreeSet<&Vec<usize>> = records.iter().map(|r| &r.gene.genes).collect();
        let mut batch: Vec<ArchGene> = Vec::with_capacity(self.cfg.infill_per_iter);
        let mut skipped = 0usize;
        for idx in order {
            if batch.len() == self.cfg.infill_per_iter {
                break;
            }
            let gene = &pop.individuals[idx].gene;
            if known.contains(&gene.genes) || batch.iter().any(|b| b == gene) {
                skipped += 1;
                continue;
            }
            batch.push(gene.clone());
        }
        Ok(IterationPlan { gamma, switch, batch, skipped, front_sizes })
    }

    fn log(&self, event: serde_json::Value) -> Result<()> {
        append_line(&self.cfg.log_path, &event.to_string())
    }
}

/// Standalone single-candidate evaluation (used by the `eval` subcommand):
/// builds a transient engine around the configuration and measures the
/// gene.
pub fn evaluate_candidate(gene: &ArchGene, cfg: &EngineConfig, eval_seed: u64) -> Result<EvalRecord> {
    Engine::new(cfg.clone())?.evaluate_candidate(gene, eval_seed)
}

/// True objective pair of every record: the combined accuracy/robustness
/// objective under the archive-frozen balance factor, and the penalized
/// parameter objective.
pub fn true_objectives(records: &[EvalRecord], fom: &FomConfig) -> Result<Vec<[f64; 2]>> {
    let g = objectives::gamma(records)?;
    Ok(records
        .iter()
        .map(|r| {
            [
                objectives::f_ar(r.top1_accuracy, r.robustness, fom.alpha, g),
                objectives::f_cp(r.params_millions(), fom.param_limit, fom.penalty),
            ]
        })
        .collect())
}

/// Indices of the archive's nondominated records under the true
/// objectives, ordered by combined objective (penalized size breaks ties).
pub fn front_indices(records: &[EvalRecord], fom: &FomConfig) -> Result<Vec<usize>> {
    let objs = true_objectives(records, fom)?;
    let fronts = nsga2::fast_nondominated_sort(&objs);
    let mut front0 = fronts.into_iter().next().unwrap_or_default();
    front0.sort_by(|&i, &j| {
        objs[i][0]
            .total_cmp(&objs[j][0])
            .then(objs[i][1].total_cmp(&objs[j][1]))
            .then(i.cmp(&j))
    });
    Ok(front0)
}

/// The top `k` records of the true nondominated front, in front order.
pub fn select_front(records: &[EvalRecord], fom: &FomConfig, top_k: usize) -> Result<Vec<EvalRecord>> {
    Ok(front_indices(records, fom)?.into_iter().take(top_k).map(|i| records[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nsga2::dominates;

    fn tiny_cfg(dir: &Path) -> EngineConfig {
        let space = SearchSpaceDef {
            resolution_choices: vec![8],
            stage_count: 1,
            depth_choices: vec![1, 2],
            kernel_choices: vec![3, 5],
            expansion_choices: vec![1, 2],
            base_channels: vec![2],
            input_channels: 1,
            num_classes: 2,
        };
        EngineConfig {
            space,
            dataset: DatasetSpec::SyntheticRings { train: 32, validation: 16, noise_std: 0.05 },
            fom: FomConfig { samples: 5, eval_cap: 16, ..FomConfig::default() },
            train: TrainConfig { batch_size: 16, epochs: 2, ..TrainConfig::default() },
            n_start: 8,
            iterations: 2,
            infill_per_iter: 2,
            top_k: 3,
            nsga_pop: 8,
            nsga_generations: 3,
            master_seed: 11,
            archive_path: dir.join("archive.jsonl"),
            log_path: dir.join("run_log.jsonl"),
            report_dir: dir.join("report"),
        }
    }

    #[test]
    fn config_validation_rejects_small_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = EngineConfig { n_start: 7, ..tiny_cfg(dir.path()) };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(tiny_cfg(dir.path()).validate().is_ok());
        EngineConfig::toy().validate().unwrap();
        EngineConfig::default().validate().unwrap();
    }

    #[test]
    fn candidate_evaluation_is_deterministic_and_complete() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let mut engine = Engine::new(cfg.clone()).unwrap();
        let gene = search_space::sample_uniform(&cfg.space, 3);
        let a = engine.evaluate_candidate(&gene, 42).unwrap();
        let b = engine.evaluate_candidate(&gene, 42).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let config = search_space::decode(&cfg.space, &gene).unwrap();
        assert_eq!(a.param_count, nn_core::param_count(&config).unwrap());
        assert_eq!(a.optimizer, cfg.train.optimizer);
        assert_eq!(a.sigma, cfg.fom.sigma);
        assert_eq!(a.seed, 42);
        assert!(!a.failed);
        // A different seed changes the trajectory. Accuracies can collide
        // (they are multiples of 1/len), so compare the trained weights.
        let (_, wa) = engine.retrain(&gene, 42).unwrap();
        let (_, wc) = engine.retrain(&gene, 43).unwrap();
        assert_ne!(wa.values, wc.values);
    }

    #[test]
    fn run_satisfies_schedule_and_front_postconditions() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let outcome = Engine::new(cfg.clone()).unwrap().run(false).unwrap();
        assert!(outcome.completed);
        let n = outcome.archive.len();
        assert!(n >= cfg.n_start);
        assert!(n <= cfg.n_start + cfg.iterations * cfg.infill_per_iter);
        assert_eq!(outcome.new_evaluations, n);

        let genes: BTreeSet<&Vec<usize>> =
            outcome.archive.records.iter().map(|r| &r.gene.genes).collect();
        assert_eq!(genes.len(), n, "archive genes must be unique");

        let objs = true_objectives(&outcome.archive.records, &cfg.fom).unwrap();
        assert!(!outcome.top.is_empty());
        assert!(outcome.top.len() <= cfg.top_k);
        for chosen in &outcome.top {
            let i = outcome.archive.records.iter().position(|r| r == chosen).unwrap();
            assert!(
                !objs.iter().any(|&o| dominates(o, objs[i])),
                "selected record is dominated"
            );
        }
        for pair in outcome.top.windows(2) {
            let i = outcome.archive.records.iter().position(|r| r == &pair[0]).unwrap();
            let j = outcome.archive.records.iter().position(|r| r == &pair[1]).unwrap();
            assert!(objs[i][0] <= objs[j][0], "selection must be ordered by combined objective");
        }
        assert!(cfg.log_path.exists());
        let on_disk = Archive::load(&cfg.archive_path).unwrap();
        assert_eq!(on_disk.records, outcome.archive.records);
    }

    #[test]
    fn identical_configs_produce_identical_runs() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = Engine::new(tiny_cfg(dir_a.path())).unwrap().run(false).unwrap();
        let b = Engine::new(tiny_cfg(dir_b.path())).unwrap().run(false).unwrap();
        assert_eq!(a.archive.records, b.archive.records);
        assert_eq!(a.top, b.top);
        assert_eq!(a.skipped_duplicates, b.skipped_duplicates);
    }

    #[test]
    fn budgeted_stop_then_resume_matches_uninterrupted_run() {
        let dir_full = tempfile::tempdir().unwrap();
        let full = Engine::new(tiny_cfg(dir_full.path())).unwrap().run(false).unwrap();

        for stop_after in [3usize, 9] {
            let dir = tempfile::tempdir().unwrap();
            let cfg = tiny_cfg(dir.path());
            let partial =
                Engine::new(cfg.clone()).unwrap().run_budgeted(false, Some(stop_after)).unwrap();
            assert!(!partial.completed);
            assert!(partial.top.is_empty());
            assert_eq!(partial.new_evaluations, stop_after);
            let resumed = Engine::new(cfg).unwrap().run(true).unwrap();
            assert!(resumed.completed);
            assert_eq!(resumed.archive.records, full.archive.records);
            assert_eq!(resumed.top, full.top);
            assert_eq!(
                resumed.new_evaluations + stop_after,
                full.archive.len(),
                "resume must not re-evaluate persisted records"
            );
        }
    }

    #[test]
    fn resuming_a_complete_run_changes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let first = Engine::new(cfg.clone()).unwrap().run(false).unwrap();
        let again = Engine::new(cfg).unwrap().run(true).unwrap();
        assert_eq!(again.archive.records, first.archive.records);
        assert_eq!(again.new_evaluations, 0);
        assert_eq!(again.top, first.top);
    }

    #[test]
    fn existing_archive_requires_resume() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        Engine::new(cfg.clone()).unwrap().run_budgeted(false, Some(2)).unwrap();
        let err = Engine::new(cfg).unwrap().run(false);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn resume_rejects_an_archive_from_another_configuration() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        Engine::new(cfg.clone()).unwrap().run_budgeted(false, Some(3)).unwrap();
        let foreign = EngineConfig { master_seed: 999, ..cfg };
        let err = Engine::new(foreign).unwrap().run(true);
        assert!(matches!(err, Err(Error::CorruptArchive(_))));
    }

    #[test]
    fn inactive_penalty_matches_unconstrained_search() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let tight_but_free = EngineConfig {
            fom: FomConfig { param_limit: 1e-9, penalty: 0.0, ..FomConfig::default() },
            ..tiny_cfg(dir_a.path())
        };
        let unconstrained = EngineConfig {
            fom: FomConfig { param_limit: 1e9, penalty: 10.0, ..FomConfig::default() },
            ..tiny_cfg(dir_b.path())
        };
        let a = Engine::new(tight_but_free).unwrap().run(false).unwrap();
        let b = Engine::new(unconstrained).unwrap().run(false).unwrap();
        assert_eq!(a.archive.records, b.archive.records);
    }

    #[test]
    fn archive_load_reports_corrupt_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("archive.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(Archive::load(&path), Err(Error::CorruptArchive(_))));
    }

    #[test]
    fn front_selection_orders_by_combined_objective() {
        let mk = |acc: f64, rob: f64, params: usize| EvalRecord {
            gene: ArchGene { genes: vec![(acc * 100.0) as usize] },
            top1_accuracy: acc,
            robustness: rob,
            param_count: params,
            sigma: 0.05,
            optimizer: crate::nn_core::Optimizer::Sgd,
            seed: 0,
            wall_clock_seconds: 0.0,
            failed: false,
        };
        // Record 1 dominates record 2 (better accuracy and robustness,
        // same size); record 0 trades size against quality.
        let records =
            vec![mk(0.80, 0.02, 1_000), mk(0.95, 0.01, 50_000), mk(0.90, 0.03, 50_000)];
        let fom = FomConfig { param_limit: 10.0, ..FomConfig::default() };
        let front = front_indices(&records, &fom).unwrap();
        assert_eq!(front.len(), 2);
        assert!(!front.contains(&2));
        let selected = select_front(&records, &fom, 1).unwrap();
        assert_eq!(selected.len(), 1);
        let objs = true_objectives(&records, &fom).unwrap();
        let best = front.iter().map(|&i| objs[i][0]).fold(f64::INFINITY, f64::min);
        assert_eq!(objs[front[0]][0], best);
    }
}
