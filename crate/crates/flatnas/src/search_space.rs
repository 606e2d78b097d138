//! Discrete architecture space: integer-gene encoding, decoding to concrete
//! network configurations, and genetic variation operators.
//!
//! A gene is a fixed-length vector of indices into per-dimension choice lists:
//!
//! ```text
//! [ resolution | depth per stage | kernel per (stage, block) | expansion per (stage, block) ]
//! ```
//!
//! Kernel and expansion genes exist for every block slot up to the maximum
//! depth. Slots beyond a stage's chosen depth are *inert*: they are carried
//! through mutation and crossover (so later variation can re-activate them)
//! but are masked out at decode time.

use crate::error::{Error, Result};
use crate::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// The discrete search space: choice lists per gene dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpaceDef {
    /// Allowed input resolutions (pixels), strictly increasing.
    pub resolution_choices: Vec<usize>,
    /// Number of stages in the network body.
    pub stage_count: usize,
    /// Allowed blocks per stage, strictly increasing.
    pub depth_choices: Vec<usize>,
    /// Allowed kernel sizes per block, strictly increasing, odd values only.
    pub kernel_choices: Vec<usize>,
    /// Allowed channel expansion ratios per block, strictly increasing.
    pub expansion_choices: Vec<usize>,
    /// Output channel width of each stage; length must equal `stage_count`.
    pub base_channels: Vec<usize>,
    /// Image channels the networks consume.
    pub input_channels: usize,
    /// Classifier output dimension.
    pub num_classes: usize,
}

/// Fixed-length vector of indices into the choice lists of a [`SearchSpaceDef`].
/// Serializes as the bare integer array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArchGene {
    pub genes: Vec<usize>,
}

/// One block of a decoded network: a spatial convolution with an optional
/// channel expansion in front of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub kernel: usize,
    pub expansion: usize,
}

/// One decoded stage: `blocks.len()` is the chosen depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub channels: usize,
    pub blocks: Vec<BlockConfig>,
}

/// A concrete network configuration decoded from a gene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_resolution: usize,
    pub input_channels: usize,
    pub stages: Vec<StageConfig>,
    /// Classifier output dimension.
    pub head: usize,
}

fn check_choices(name: &str, choices: &[usize]) -> Result<()> {
    if choices.is_empty() {
        return Err(Error::Config(format!("{name} must be non-empty")));
    }
    if choices[0] == 0 {
        return Err(Error::Config(format!("{name} must be positive")));
    }
    if !choices.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Config(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

impl SearchSpaceDef {
    /// Validates all invariants; every other operation assumes they hold.
    pub fn validate(&self) -> Result<()> {
        check_choices("resolution_choices", &self.resolution_choices)?;
        check_choices("depth_choices", &self.depth_choices)?;
        check_choices("kernel_choices", &self.kernel_choices)?;
        check_choices("expansion_choices", &self.expansion_choices)?;
        if self.kernel_choices.iter().any(|k| k % 2 == 0) {
            return Err(Error::Config(
                "kernel_choices must be odd (same-padding convolutions)".into(),
            ));
        }
        if self.stage_count == 0 {
            return Err(Error::Config("stage_count must be positive".into()));
        }
        if self.base_channels.len() != self.stage_count {
            return Err(Error::Config(format!(
                "base_channels has {} entries, expected stage_count = {}",
                self.base_channels.len(),
                self.stage_count
            )));
        }
        if self.base_channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("base_channels must be positive".into()));
        }
        if self.input_channels == 0 || self.num_classes == 0 {
            return Err(Error::Config(
                "input_channels and num_classes must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Desk-scale default space; keeps all four gene dimensions at reduced
    /// ranges: resolutions {16, 24, 32}, three stages of one to three blocks,
    /// kernels {3, 5}, expansions {1, 2, 4}.
    pub fn toy_default() -> Self {
        SearchSpaceDef {
            resolution_choices: vec![16, 24, 32],
            stage_count: 3,
            depth_choices: vec![1, 2, 3],
            kernel_choices: vec![3, 5],
            expansion_choices: vec![1, 2, 4],
            base_channels: vec![8, 16, 32],
            input_channels: 1,
            num_classes: 2,
        }
    }

    /// Full-scale space in the shape of a MobileNetV3-style supernet:
    /// resolution 128..=224 step 4, depths {2,3,4}, kernels {3,5,7},
    /// expansions {3,4,6}.
    pub fn mobilenet_like() -> Self {
        SearchSpaceDef {
            resolution_choices: (128..=224).step_by(4).collect(),
            stage_count: 5,
            depth_choices: vec![2, 3, 4],
            kernel_choices: vec![3, 5, 7],
            expansion_choices: vec![3, 4, 6],
            base_channels: vec![24, 40, 80, 112, 160],
            input_channels: 3,
            num_classes: 10,
        }
    }

    /// Maximum blocks per stage.
    pub fn max_depth(&self) -> usize {
        *self.depth_choices.last().expect("validated non-empty")
    }

    /// Fixed gene length: 1 + stages + 2 * stages * max_depth.
    pub fn gene_len(&self) -> usize {
        1 + self.stage_count + 2 * self.stage_count * self.max_depth()
    }

    /// Domain size (number of choices) of each gene position.
    pub fn domain_sizes(&self) -> Vec<usize> {
        let s = self.stage_count;
        let d = self.max_depth();
        let mut out = Vec::with_capacity(self.gene_len());
        out.push(self.resolution_choices.len());
        out.extend(std::iter::repeat(self.depth_choices.len()).take(s));
        out.extend(std::iter::repeat(self.kernel_choices.len()).take(s * d));
        out.extend(std::iter::repeat(self.expansion_choices.len()).take(s * d));
        out
    }

    /// Gene position of a stage's depth index.
    fn depth_pos(&self, stage: usize) -> usize {
        1 + stage
    }

    /// Gene position of the kernel index for (stage, block).
    fn kernel_pos(&self, stage: usize, block: usize) -> usize {
        1 + self.stage_count + stage * self.max_depth() + block
    }

    /// Gene position of the expansion index for (stage, block).
    fn expansion_pos(&self, stage: usize, block: usize) -> usize {
        1 + self.stage_count + self.stage_count * self.max_depth() + stage * self.max_depth() + block
    }

    /// Checks a gene against this space.
    pub fn check_gene(&self, g: &ArchGene) -> Result<()> {
        let domains = self.domain_sizes();
        if g.genes.len() != domains.len() {
            return Err(Error::InvalidGene(format!(
                "gene length {} does not match space ({} positions)",
                g.genes.len(),
                domains.len()
            )));
        }
        for (pos, (&idx, &dom)) in g.genes.iter().zip(domains.iter()).enumerate() {
            if idx >= dom {
                return Err(Error::InvalidGene(format!(
                    "index {idx} at position {pos} exceeds domain of size {dom}"
                )));
            }
        }
        Ok(())
    }
}

/// Draws a gene with each index uniform over its dimension's domain.
pub fn sample_uniform(space: &SearchSpaceDef, rng_seed: u64) -> ArchGene {
    let mut rng = seed::rng(rng_seed);
    let genes = space
        .domain_sizes()
        .into_iter()
        .map(|dom| rng.gen_range(0..dom))
        .collect();
    ArchGene { genes }
}

/// Decodes a gene to a concrete configuration, masking inert block slots.
pub fn decode(space: &SearchSpaceDef, g: &ArchGene) -> Result<NetworkConfig> {
    space.check_gene(g)?;
    let resolution = space.resolution_choices[g.genes[0]];
    let mut stages = Vec::with_capacity(space.stage_count);
    for s in 0..space.stage_count {
        let depth = space.depth_choices[g.genes[space.depth_pos(s)]];
        let blocks = (0..depth)
            .map(|b| BlockConfig {
                kernel: space.kernel_choices[g.genes[space.kernel_pos(s, b)]],
                expansion: space.expansion_choices[g.genes[space.expansion_pos(s, b)]],
            })
            .collect();
        stages.push(StageConfig {
            channels: space.base_channels[s],
            blocks,
        });
    }
    Ok(NetworkConfig {
        input_resolution: resolution,
        input_channels: space.input_channels,
        stages,
        head: space.num_classes,
    })
}

/// Inverse of [`decode`]: looks up each choice's index. Inert slots are set
/// to index 0 so that `decode(space, encode(space, c)) == c`.
pub fn encode(space: &SearchSpaceDef, c: &NetworkConfig) -> Result<ArchGene> {
    let find = |choices: &[usize], v: usize, what: &str| -> Result<usize> {
        choices
            .iter()
            .position(|&x| x == v)
            .ok_or_else(|| Error::InvalidGene(format!("{what} value {v} not in choices")))
    };
    if c.stages.len() != space.stage_count {
        return Err(Error::InvalidGene(format!(
            "config has {} stages, space expects {}",
            c.stages.len(),
            space.stage_count
        )));
    }
    let mut genes = vec![0usize; space.gene_len()];
    genes[0] = find(&space.resolution_choices, c.input_resolution, "resolution")?;
    for (s, stage) in c.stages.iter().enumerate() {
        if stage.channels != space.base_channels[s] {
            return Err(Error::InvalidGene(format!(
                "stage {s} channels {} differ from space base {}",
                stage.channels, space.base_channels[s]
            )));
        }
        genes[space.depth_pos(s)] = find(&space.depth_choices, stage.blocks.len(), "depth")?;
        for (b, block) in stage.blocks.iter().enumerate() {
            if b >= space.max_depth() {
                return Err(Error::InvalidGene(format!(
                    "stage {s} has more blocks than max depth {}",
                    space.max_depth()
                )));
            }
            genes[space.kernel_pos(s, b)] = find(&space.kernel_choices, block.kernel, "kernel")?;
            genes[space.expansion_pos(s, b)] =
                find(&space.expansion_choices, block.expansion, "expansion")?;
        }
    }
    Ok(ArchGene { genes })
}

/// Resamples each gene independently with probability `per_gene_prob`.
pub fn mutate(space: &SearchSpaceDef, g: &ArchGene, per_gene_prob: f64, rng_seed: u64) -> ArchGene {
    let mut rng = seed::rng(rng_seed);
    let domains = space.domain_sizes();
    let genes = g
        .genes
        .iter()
        .zip(domains.iter())
        .map(|(&idx, &dom)| {
            if rng.gen::<f64>() < per_gene_prob {
                rng.gen_range(0..dom)
            } else {
                idx
            }
        })
        .collect();
    ArchGene { genes }
}

/// Uniform crossover: each child position takes one parent's value, chosen by
/// an independent fair coin; the second child gets the other parent's value.
pub fn crossover(a: &ArchGene, b: &ArchGene, rng_seed: u64) -> Result<(ArchGene, ArchGene)> {
    if a.genes.len() != b.genes.len() {
        return Err(Error::InvalidGene(format!(
            "parent lengths differ: {} vs {}",
            a.genes.len(),
            b.genes.len()
        )));
    }
    let mut rng = seed::rng(rng_seed);
    let mut c1 = Vec::with_capacity(a.genes.len());
    let mut c2 = Vec::with_capacity(a.genes.len());
    for (&ga, &gb) in a.genes.iter().zip(b.genes.iter()) {
        if rng.gen::<bool>() {
            c1.push(ga);
            c2.push(gb);
        } else {
            c1.push(gb);
            c2.push(ga);
        }
    }
    Ok((ArchGene { genes: c1 }, ArchGene { genes: c2 }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degenerate_space() -> SearchSpaceDef {
        SearchSpaceDef {
            resolution_choices: vec![8],
            stage_count: 2,
            depth_choices: vec![2],
            kernel_choices: vec![3],
            expansion_choices: vec![1],
            base_channels: vec![4, 8],
            input_channels: 1,
            num_classes: 2,
        }
    }

    #[test]
    fn gene_length_matches_formula() {
        let space = SearchSpaceDef::toy_default();
        // 1 + 3 + 3*3 + 3*3
        assert_eq!(space.gene_len(), 1 + 3 + 9 + 9);
        assert_eq!(space.domain_sizes().len(), space.gene_len());
    }

    #[test]
    fn single_choice_space_has_one_gene() {
        let space = degenerate_space();
        let g = sample_uniform(&space, 0);
        assert!(g.genes.iter().all(|&i| i == 0));
        space.check_gene(&g).unwrap();
    }

    #[test]
    fn sampling_is_deterministic() {
        let space = SearchSpaceDef::toy_default();
        assert_eq!(sample_uniform(&space, 42), sample_uniform(&space, 42));
        assert_ne!(sample_uniform(&space, 1), sample_uniform(&space, 2));
    }

    #[test]
    fn binary_dimension_sampling_is_balanced() {
        // Frequency oracle: 10^4 draws of the kernel dimension (2 choices in
        // the toy space) must land each value in [0.45, 0.55].
        let space = SearchSpaceDef::toy_default();
        let kernel_pos = space.kernel_pos(0, 0);
        let n = 10_000;
        let ones: usize = (0..n)
            .map(|i| sample_uniform(&space, seed::mix(900, &[i as u64])).genes[kernel_pos])
            .sum();
        let freq = ones as f64 / n as f64;
        assert!((0.45..=0.55).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn decode_masks_inert_positions() {
        let space = SearchSpaceDef::toy_default();
        // Depth index 0 => depth 1 in a stage with max depth 3.
        let mut g = sample_uniform(&space, 5);
        g.genes[space.depth_pos(0)] = 0;
        let cfg = decode(&space, &g).unwrap();
        assert_eq!(cfg.stages[0].blocks.len(), 1);

        // Flip the inert second block slot of stage 0: decode unchanged.
        let mut g2 = g.clone();
        let pos = space.kernel_pos(0, 1);
        g2.genes[pos] = (g2.genes[pos] + 1) % space.kernel_choices.len();
        assert_eq!(decode(&space, &g2).unwrap(), cfg);
    }

    #[test]
    fn decode_rejects_out_of_domain() {
        let space = SearchSpaceDef::toy_default();
        let mut g = sample_uniform(&space, 7);
        g.genes[0] = space.resolution_choices.len();
        assert!(matches!(decode(&space, &g), Err(Error::InvalidGene(_))));
    }

    #[test]
    fn full_scale_space_has_25_resolutions() {
        let space = SearchSpaceDef::mobilenet_like();
        assert_eq!(space.resolution_choices.len(), 25);
        assert_eq!(space.resolution_choices[0], 128);
        assert_eq!(*space.resolution_choices.last().unwrap(), 224);
    }

    #[test]
    fn encode_decode_round_trip() {
        let space = SearchSpaceDef::toy_default();
        for s in 0..50u64 {
            let g = sample_uniform(&space, s);
            let cfg = decode(&space, &g).unwrap();
            let g2 = encode(&space, &cfg).unwrap();
            assert_eq!(decode(&space, &g2).unwrap(), cfg);
        }
    }

    #[test]
    fn mutate_identity_at_zero_prob() {
        let space = SearchSpaceDef::toy_default();
        let g = sample_uniform(&space, 3);
        assert_eq!(mutate(&space, &g, 0.0, 99), g);
    }

    #[test]
    fn mutate_with_single_choice_dims_is_identity() {
        let space = degenerate_space();
        let g = sample_uniform(&space, 3);
        assert_eq!(mutate(&space, &g, 1.0, 99), g);
    }

    #[test]
    fn crossover_identity_for_identical_parents() {
        let space = SearchSpaceDef::toy_default();
        let g = sample_uniform(&space, 11);
        let (c1, c2) = crossover(&g, &g, 4).unwrap();
        assert_eq!(c1, g);
        assert_eq!(c2, g);
    }

    #[test]
    fn crossover_children_take_values_from_parents() {
        let space = SearchSpaceDef::toy_default();
        let a = sample_uniform(&space, 21);
        let b = sample_uniform(&space, 22);
        let (c1, c2) = crossover(&a, &b, 5).unwrap();
        assert_eq!(crossover(&a, &b, 5).unwrap(), (c1.clone(), c2.clone()));
        for i in 0..a.genes.len() {
            assert!(c1.genes[i] == a.genes[i] || c1.genes[i] == b.genes[i]);
            assert!(c2.genes[i] == a.genes[i] || c2.genes[i] == b.genes[i]);
            // Exchange: the pair (c1, c2) preserves the multiset {a, b} per position.
            let mut got = [c1.genes[i], c2.genes[i]];
            let mut want = [a.genes[i], b.genes[i]];
            got.sort_unstable();
            want.sort_unstable();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn crossover_rejects_mismatched_lengths() {
        let a = ArchGene { genes: vec![0, 1] };
        let b = ArchGene { genes: vec![0] };
        assert!(matches!(crossover(&a, &b, 0), Err(Error::InvalidGene(_))));
    }

    #[test]
    fn validate_rejects_even_kernels_and_bad_channels() {
        let mut space = SearchSpaceDef::toy_default();
        space.kernel_choices = vec![2, 4];
        assert!(space.validate().is_err());

        let mut space = SearchSpaceDef::toy_default();
        space.base_channels = vec![4];
        assert!(space.validate().is_err());
    }
}
