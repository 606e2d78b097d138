//! Figures of merit: weight-perturbation robustness, the accuracy/robustness
//! scalarization with its balancing factor, and the penalized parameter
//! objective.

use crate::error::{Error, Result};
use crate::nn_core::{self, LabeledDataset, NetworkPlan, Optimizer, WeightVector};
use crate::search_space::{ArchGene, NetworkConfig};
use crate::seed;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// One evaluated architecture: the unit of archive persistence. Serialized
/// as a single JSON object per archive line, the gene as an integer array.
///
/// Equality ignores `wall_clock_seconds`, which records how long the
/// evaluation took but is not part of the result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub gene: ArchGene,
    pub top1_accuracy: f64,
    pub robustness: f64,
    pub param_count: usize,
    pub sigma: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    /// True when training diverged and the sentinel objectives were recorded.
    #[serde(default)]
    pub failed: bool,
}

impl PartialEq for EvalRecord {
    fn eq(&self, other: &Self) -> bool {
        self.gene == other.gene
            && self.top1_accuracy == other.top1_accuracy
            && self.robustness == other.robustness
            && self.param_count == other.param_count
            && self.sigma == other.sigma
            && self.optimizer == other.optimizer
            && self.seed == other.seed
            && self.failed == other.failed
    }
}

impl EvalRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.top1_accuracy) {
            return Err(Error::Config(format!(
                "top1_accuracy {} outside [0, 1]",
                self.top1_accuracy
            )));
        }
        if self.param_count == 0 {
            return Err(Error::Config("param_count must be positive".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::Config("sigma must be nonnegative".into()));
        }
        Ok(())
    }

    /// Parameter count in millions, the unit used by reports and the
    /// constraint limit.
    pub fn params_millions(&self) -> f64 {
        self.param_count as f64 / 1e6
    }
}

/// Weights and limits of the figures of merit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FomConfig {
    /// Balance between accuracy and robustness in [0, 1]; 1 ignores
    /// robustness entirely.
    pub alpha: f64,
    /// Multiplicative weight-noise intensity.
    pub sigma: f64,
    /// Monte-Carlo draws per robustness estimate.
    pub samples: usize,
    /// Parameter budget in millions.
    pub param_limit: f64,
    /// Penalty slope applied to the constraint violation.
    pub penalty: f64,
    /// Upper bound on the training subset used for perturbed evaluations.
    pub eval_cap: usize,
}

impl Default for FomConfig {
    fn default() -> Self {
        FomConfig {
            alpha: 0.5,
            sigma: 0.05,
            samples: 20,
            param_limit: 4.0,
            penalty: 10.0,
            eval_cap: 2048,
        }
    }
}

impl FomConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be >= 1".into()));
        }
        if self.penalty < 0.0 {
            return Err(Error::Config("penalty must be >= 0".into()));
        }
        if !(self.param_limit > 0.0) {
            return Err(Error::Config("param_limit must be > 0".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::Config("sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Core Monte-Carlo estimator behind [`robustness`]: the mean increase of an
/// arbitrary error function under multiplicative Gaussian noise on `base`.
/// Draw `m` gets its own seed derived from `rng_seed`, and the contributions
/// are summed in draw order, so the aggregate is deterministic.
pub fn robustness_with<E>(base: &[f64], sigma: f64, samples: usize, rng_seed: u64, mut eval: E) -> f64
where
    E: FnMut(&[f64]) -> f64,
{
    let base_error = eval(base);
    let mut perturbed = base.to_vec();
    let mut acc = 0.0;
    for m in 0..samples {
        let mut rng = seed::rng(seed::mix(rng_seed, &[m as u64]));
        for (p, &w) in perturbed.iter_mut().zip(base.iter()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *p = w + sigma * z * w;
        }
        acc += eval(&perturbed) - base_error;
    }
    acc / samples as f64
}

/// Mean increase in top-1 training error when every weight is scaled by
/// `1 + sigma * z` with `z` standard normal, averaged over `samples` draws.
/// The unperturbed weights are never modified. Low values indicate a flat
/// minimum.
pub fn robustness(
    w: &WeightVector,
    config: &NetworkConfig,
    train_data: &LabeledDataset,
    sigma: f64,
    samples: usize,
    rng_seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Config("samples must be >= 1".into()));
    }
    if sigma < 0.0 {
        return Err(Error::Config("sigma must be >= 0".into()));
    }
    if train_data.is_empty() {
        return Err(Error::InsufficientData("robustness needs a non-empty dataset".into()));
    }
    let plan = NetworkPlan::new(config)?;
    let mut ws = plan.workspace();
    // Evaluate once up front so a shape mismatch surfaces as an error
    // instead of a panic inside the closure.
    nn_core::eval_error(w, config, train_data)?;
    Ok(robustness_with(&w.values, sigma, samples, rng_seed, |values| {
        nn_core::eval_error_plan(&plan, values, train_data, &mut ws)
            .expect("shapes verified before sampling")
    }))
}

/// Balancing factor between accuracy and robustness: the ratio of the archive
/// sums of top-1 accuracy and robustness. Falls back to 1.0 when the
/// robustness sum is at or below 1e-9, where the ratio is undefined.
pub fn gamma(archive: &[EvalRecord]) -> Result<f64> {
    if archive.is_empty() {
        return Err(Error::EmptyArchive);
    }
    let acc_sum: f64 = archive.iter().map(|r| r.top1_accuracy).sum();
    let rob_sum: f64 = archive.iter().map(|r| r.robustness).sum();
    if rob_sum <= 1e-9 {
        return Ok(1.0);
    }
    Ok(acc_sum / rob_sum)
}

/// Combined accuracy/robustness objective (lower is better):
/// `alpha * (1 - accuracy) + gamma * (1 - alpha) * robustness`.
pub fn f_ar(top1_accuracy: f64, robustness: f64, alpha: f64, gamma: f64) -> f64 {
    alpha * (1.0 - top1_accuracy) + gamma * (1.0 - alpha) * robustness
}

/// Penalized parameter objective (lower is better): the parameter count in
/// millions plus `penalty` times the amount by which it exceeds the limit.
pub fn f_cp(param_count_millions: f64, param_limit: f64, penalty: f64) -> f64 {
    param_count_millions + (param_count_millions - param_limit).max(0.0) * penalty
}
