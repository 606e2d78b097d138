//! Image corruption families with 5-severity parameter tables, corrupted
//! test-set generation at the model's native resolution, and the corruption
//! error report (per-severity errors, per-type CE, and their mean mCE).

use crate::error::{Error, Result};
use crate::nn_core::{self, LabeledDataset, NetworkPlan, WeightVector};
use crate::search_space::NetworkConfig;
use crate::seed;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Implemented corruption families. Blur, displacement, and pixelation
/// parameters scale with resolution so a severity looks comparable at any
/// input size; noise-type parameters are resolution-free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionType {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    GaussianBlur,
    Contrast,
    Brightness,
    Pixelate,
    ElasticLite,
}

/// All implemented types, in report order.
pub const ALL_TYPES: [CorruptionType; 8] = [
    CorruptionType::GaussianNoise,
    CorruptionType::ShotNoise,
    CorruptionType::ImpulseNoise,
    CorruptionType::GaussianBlur,
    CorruptionType::Contrast,
    CorruptionType::Brightness,
    CorruptionType::Pixelate,
    CorruptionType::ElasticLite,
];

impl std::fmt::Display for CorruptionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl CorruptionType {
    pub fn name(&self) -> &'static str {
        match self {
            CorruptionType::GaussianNoise => "gaussian_noise",
            CorruptionType::ShotNoise => "shot_noise",
            CorruptionType::ImpulseNoise => "impulse_noise",
            CorruptionType::GaussianBlur => "gaussian_blur",
            CorruptionType::Contrast => "contrast",
            CorruptionType::Brightness => "brightness",
            CorruptionType::Pixelate => "pixelate",
            CorruptionType::ElasticLite => "elastic_lite",
        }
    }

    /// True when the corruption draws random numbers; deterministic types
    /// ignore their seed entirely.
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            CorruptionType::GaussianNoise
                | CorruptionType::ShotNoise
                | CorruptionType::ImpulseNoise
                | CorruptionType::ElasticLite
        )
    }
}

impl std::str::FromStr for CorruptionType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ALL_TYPES
            .iter()
            .find(|t| t.name() == s)
            .copied()
            .ok_or_else(|| Error::UnsupportedCorruption(s.to_string()))
    }
}

/// Severity parameter tables, strictly increasing in severity. Index 0 is
/// severity 1.
fn severity_table(ctype: CorruptionType) -> [f64; 5] {
    match ctype {
        // Additive noise standard deviation.
        CorruptionType::GaussianNoise => [0.04, 0.08, 0.12, 0.18, 0.26],
        // Signal-dependent noise scale: std = sqrt(x * p).
        CorruptionType::ShotNoise => [0.02, 0.05, 0.10, 0.18, 0.30],
        // Fraction of pixels replaced by salt or pepper.
        CorruptionType::ImpulseNoise => [0.01, 0.03, 0.06, 0.10, 0.17],
        // Blur standard deviation in pixels, at a 32-pixel reference
        // resolution (scaled by res/32 when applied).
        CorruptionType::GaussianBlur => [0.4, 0.6, 0.9, 1.3, 1.9],
        // Contrast reduction: values pulled toward 0.5 by factor (1 - p).
        CorruptionType::Contrast => [0.25, 0.40, 0.55, 0.70, 0.85],
        // Additive brightness shift.
        CorruptionType::Brightness => [0.08, 0.16, 0.24, 0.33, 0.42],
        // Resolution reduction fraction: rendered at res * (1 - p).
        CorruptionType::Pixelate => [0.30, 0.45, 0.60, 0.70, 0.80],
        // Displacement field amplitude in pixels at the 32-pixel reference.
        CorruptionType::ElasticLite => [0.8, 1.2, 1.7, 2.3, 3.0],
    }
}

/// Parameter applied at a given severity.
pub fn severity_param(ctype: CorruptionType, severity: u8) -> Result<f64> {
    if !(1..=5).contains(&severity) {
        return Err(Error::Config(format!("severity {severity} outside 1..=5")));
    }
    let table = severity_table(ctype);
    debug_assert!(table.windows(2).all(|w| w[0] < w[1]), "severity table must increase");
    Ok(table[(severity - 1) as usize])
}

/// A corruption to apply: type, severity, and the seed for stochastic types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub ctype: CorruptionType,
    pub severity: u8,
    pub rng_seed: u64,
}

/// Applies the corruption at its severity's tabled parameter and clamps the
/// result to [0, 1]. Operates natively at the image's own resolution.
pub fn corrupt(
    image: &[f64],
    channels: usize,
    resolution: usize,
    spec: &CorruptionSpec,
) -> Result<Vec<f64>> {
    let param = severity_param(spec.ctype, spec.severity)?;
    corrupt_with_param(image, channels, resolution, spec.ctype, param, spec.rng_seed)
}

/// Same as [`corrupt`] but with an explicit parameter; a parameter of 0 is
/// the identity for every type, which pins the no-corruption baseline in
/// tests.
pub fn corrupt_with_param(
    image: &[f64],
    channels: usize,
    resolution: usize,
    ctype: CorruptionType,
    param: f64,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    let px = channels * resolution * resolution;
    if image.len() != px {
        return Err(Error::ShapeError(format!(
            "image has {} values, expected {px}",
            image.len()
        )));
    }
    if param == 0.0 {
        return Ok(image.to_vec());
    }
    let mut rng = seed::rng(rng_seed);
    let r = resolution;
    let out = match ctype {
        CorruptionType::GaussianNoise => image
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + param * z
            })
            .collect(),
        CorruptionType::ShotNoise => image
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + (v.max(0.0) * param).sqrt() * z
            })
            .collect(),
        CorruptionType::ImpulseNoise => image
            .iter()
            .map(|&v| {
                if rng.gen::<f64>() < param {
                    if rng.gen::<bool>() {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    v
                }
            })
            .collect(),
        CorruptionType::GaussianBlur => {
            let sigma = param * r as f64 / 32.0;
            gaussian_blur(image, channels, r, sigma)
        }
        CorruptionType::Contrast => image.iter().map(|&v| (v - 0.5) * (1.0 - param) + 0.5).collect(),
        CorruptionType::Brightness => image.iter().map(|&v| v + param).collect(),
        CorruptionType::Pixelate => {
            let coarse = ((r as f64 * (1.0 - param)).round() as usize).clamp(1, r);
            if coarse == r {
                image.to_vec()
            } else {
                pixelate(image, channels, r, coarse)
            }
        }
        CorruptionType::ElasticLite => {
            let amplitude = param * r as f64 / 32.0;
            elastic(image, channels, r, amplitude, &mut rng)
        }
    };
    Ok(out.into_iter().map(|v: f64| v.clamp(0.0, 1.0)).collect())
}

/// Separable Gaussian blur with border renormalization (no padding bias).
fn gaussian_blur(image: &[f64], channels: usize, r: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return image.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut mid = vec![0.0; image.len()];
    let mut out = vec![0.0; image.len()];
    for c in 0..channels {
        let plane = c * r * r;
        // Horizontal pass.
        for y in 0..r {
            for x in 0..r {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sx = x as isize + ki as isize - radius;
                    if sx < 0 || sx >= r as isize {
                        continue;
                    }
                    acc += kv * image[plane + y * r + sx as usize];
                    norm += kv;
                }
                mid[plane + y * r + x] = acc / norm;
            }
        }
        // Vertical pass.
        for y in 0..r {
            for x in 0..r {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sy = y as isize + ki as isize - radius;
                    if sy < 0 || sy >= r as isize {
                        continue;
                    }
                    acc += kv * mid[plane + sy as usize * r + x];
                    norm += kv;
                }
                out[plane + y * r + x] = acc / norm;
            }
        }
    }
    out
}

/// Area-averages down to `coarse` pixels and re-expands by nearest neighbor.
fn pixelate(image: &[f64], channels: usize, r: usize, coarse: usize) -> Vec<f64> {
    let ds = LabeledDataset {
        channels,
        resolution: r,
        images: vec![image.to_vec()],
        labels: vec![0],
        split: nn_core::Split::Test,
    };
    let small = nn_core::data::area_resample(&ds, coarse);
    let mut out = Vec::with_capacity(image.len());
    for c in 0..channels {
        let plane = &small.images[0][c * coarse * coarse..(c + 1) * coarse * coarse];
        for y in 0..r {
            let sy = y * coarse / r;
            for x in 0..r {
                let sx = x * coarse / r;
                out.push(plane[sy * coarse + sx]);
            }
        }
    }
    out
}

/// Smooth random warp: a seeded 4x4 displacement grid is bilinearly
/// upsampled to a per-pixel offset field of the given amplitude, and the
/// image is resampled bilinearly at the displaced coordinates.
fn elastic<R: Rng>(image: &[f64], channels: usize, r: usize, amplitude: f64, rng: &mut R) -> Vec<f64> {
    const GRID: usize = 4;
    let mut gx = [[0.0f64; GRID]; GRID];
    let mut gy = [[0.0f64; GRID]; GRID];
    for row in 0..GRID {
        for col in 0..GRID {
            gx[row][col] = rng.gen_range(-1.0..1.0) * amplitude;
            gy[row][col] = rng.gen_range(-1.0..1.0) * amplitude;
        }
    }
    let sample_grid = |g: &[[f64; GRID]; GRID], fy: f64, fx: f64| {
        let sy = fy * (GRID - 1) as f64;
        let sx = fx * (GRID - 1) as f64;
        let y0 = (sy.floor() as usize).min(GRID - 2);
        let x0 = (sx.floor() as usize).min(GRID - 2);
        let ty = sy - y0 as f64;
        let tx = sx - x0 as f64;
        g[y0][x0] * (1.0 - ty) * (1.0 - tx)
            + g[y0][x0 + 1] * (1.0 - ty) * tx
            + g[y0 + 1][x0] * ty * (1.0 - tx)
            + g[y0 + 1][x0 + 1] * ty * tx
    };
    let bilinear = |plane: &[f64], y: f64, x: f64| {
        let yc = y.clamp(0.0, (r - 1) as f64);
        let xc = x.clamp(0.0, (r - 1) as f64);
        let y0 = (yc.floor() as usize).min(r.saturating_sub(2));
        let x0 = (xc.floor() as usize).min(r.saturating_sub(2));
        let (y1, x1) = ((y0 + 1).min(r - 1), (x0 + 1).min(r - 1));
        let ty = yc - y0 as f64;
        let tx = xc - x0 as f64;
        plane[y0 * r + x0] * (1.0 - ty) * (1.0 - tx)
            + plane[y0 * r + x1] * (1.0 - ty) * tx
            + plane[y1 * r + x0] * ty * (1.0 - tx)
            + plane[y1 * r + x1] * ty * tx
    };
    let mut out = Vec::with_capacity(image.len());
    for c in 0..channels {
        let plane = &image[c * r * r..(c + 1) * r * r];
        for y in 0..r {
            for x in 0..r {
                let fy = y as f64 / (r - 1).max(1) as f64;
                let fx = x as f64 / (r - 1).max(1) as f64;
                let dy = sample_grid(&gy, fy, fx);
                let dx = sample_grid(&gx, fy, fx);
                out.push(bilinear(plane, y as f64 + dy, x as f64 + dx));
            }
        }
    }
    out
}

/// One corrupted copy of the test set per (type, severity); labels are kept,
/// and each image's seed is derived from the master seed, the type, the
/// severity, and the image index.
pub fn build_corrupted_sets(
    test: &LabeledDataset,
    types: &[CorruptionType],
    master_seed: u64,
) -> Result<BTreeMap<(CorruptionType, u8), LabeledDataset>> {
    if test.is_empty() {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    let mut out = BTreeMap::new();
    for &ctype in types {
        for severity in 1..=5u8 {
            let images = test
                .images
                .iter()
                .enumerate()
                .map(|(i, img)| {
                    let spec = CorruptionSpec {
                        ctype,
                        severity,
                        rng_seed: seed::mix(
                            master_seed,
                            &[ctype as u64, severity as u64, i as u64],
                        ),
                    };
                    corrupt(img, test.channels, test.resolution, &spec)
                })
                .collect::<Result<Vec<_>>>()?;
            out.insert(
                (ctype, severity),
                LabeledDataset {
                    channels: test.channels,
                    resolution: test.resolution,
                    images,
                    labels: test.labels.clone(),
                    split: test.split,
                },
            );
        }
    }
    Ok(out)
}

/// Error of one model on one corrupted set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionEntry {
    pub ctype: CorruptionType,
    pub severity: u8,
    pub error: f64,
}

/// Per-(type, severity) top-1 errors with the derived aggregates: CE per
/// type is the mean error over its severities, and mCE the mean CE over
/// types. The clean error is carried for reference but never subtracted;
/// the aggregates are absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionReport {
    pub model_id: String,
    pub dataset_id: String,
    pub resolution: usize,
    pub clean_error: f64,
    pub entries: Vec<CorruptionEntry>,
    pub ce_per_type: Vec<(CorruptionType, f64)>,
    pub mce: f64,
}

/// Evaluates the model on every corrupted set and aggregates. All sets must
/// share the model's input resolution; mismatches are an error, never
/// silently resampled.
pub fn corruption_report(
    w: &WeightVector,
    config: &NetworkConfig,
    sets: &BTreeMap<(CorruptionType, u8), LabeledDataset>,
    clean_error: f64,
    model_id: &str,
    dataset_id: &str,
) -> Result<CorruptionReport> {
    if sets.is_empty() {
        return Err(Error::InsufficientData("no corrupted sets given".into()));
    }
    let plan = NetworkPlan::new(config)?;
    let mut ws = plan.workspace();
    let mut entries = Vec::with_capacity(sets.len());
    for (&(ctype, severity), set) in sets {
        if set.resolution != config.input_resolution || set.channels != config.input_channels {
            return Err(Error::ShapeError(format!(
                "corrupted set {ctype}/{severity} is {}x{}, model expects {}x{}",
                set.channels, set.resolution, config.input_channels, config.input_resolution
            )));
        }
        let error = nn_core::eval_error_plan(&plan, &w.values, set, &mut ws)?;
        entries.push(CorruptionEntry { ctype, severity, error });
    }

    let mut ce_per_type = Vec::new();
    let mut by_type: BTreeMap<CorruptionType, Vec<f64>> = BTreeMap::new();
    for e in &entries {
        by_type.entry(e.ctype).or_default().push(e.error);
    }
    for (ctype, errs) in &by_type {
        ce_per_type.push((*ctype, errs.iter().sum::<f64>() / errs.len() as f64));
    }
    let mce = ce_per_type.iter().map(|(_, ce)| ce).sum::<f64>() / ce_per_type.len() as f64;
    Ok(CorruptionReport {
        model_id: model_id.to_string(),
        dataset_id: dataset_id.to_string(),
        resolution: config.input_resolution,
        clean_error,
        entries,
        ce_per_type,
        mce,
    })
}

impl CorruptionReport {
    /// CSV of every (type, severity) error: `model,type,severity,error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,type,severity,error\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{}\n", self.model_id, e.ctype, e.severity, e.error));
        }
        out
    }

    /// CSV of the mean error over types at each severity:
    /// `model,severity,mean_error`.
    pub fn severity_curve_csv(&self) -> String {
        let mut by_sev: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
        for e in &self.entries {
            by_sev.entry(e.severity).or_default().push(e.error);
        }
        let mut out = String::from("model,severity,mean_error\n");
        for (sev, errs) in by_sev {
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            out.push_str(&format!("{},{},{}\n", self.model_id, sev, mean));
        }
        out
    }
}

/// Caches corrupted sets to `dir` in the input dataset's binary layout
/// (one label byte then channels x res x res pixel bytes per record), one
/// file per (type, severity), plus a small JSON manifest.
pub fn cache_corrupted_sets(
    sets: &BTreeMap<(CorruptionType, u8), LabeledDataset>,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = Vec::new();
    for (&(ctype, severity), set) in sets {
        let file = format!("{}_{}.bin", ctype.name(), severity);
        let mut bytes = Vec::with_capacity(set.len() * (1 + set.images[0].len()));
        for (img, &label) in set.images.iter().zip(set.labels.iter()) {
            bytes.push(u8::try_from(label).map_err(|_| {
                Error::Config(format!("label {label} does not fit the byte-label cache format"))
            })?);
            bytes.extend(img.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        }
        let mut f = std::fs::File::create(dir.join(&file))?;
        f.write_all(&bytes)?;
        manifest.push(serde_json::json!({
            "file": file,
            "type": ctype.name(),
            "severity": severity,
            "samples": set.len(),
            "channels": set.channels,
            "resolution": set.resolution,
        }));
    }
    let manifest_path = dir.join("manifest.json");
    std::fs::write(manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
