//! Dataset splits and repeated train/evaluate runs.
//!
//! Three split modes:
//!
//! * `noshm`: one pool (a single campaign, or everything when no campaign is
//!   named) split stratified into train/val/test;
//! * `loco`: leave one campaign out, the held-out campaign is the test set and
//!   the rest is split 80:20 into train/val;
//! * `gradual_prior`: LOCO, plus the first `prior_levels` classes of the
//!   held-out campaign moved into train/val.
//!
//! All stratified allocations hit `round(fraction * N)` exactly for every
//! split but the last, which takes the remainder.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::fingerprint;
use crate::ingest::AEStream;
use crate::metrics::{adjacent_error_fraction, ConfusionMatrix, MetricSummary};
use crate::pipeline::{stream_features, FeatureRecord, PipelineConfig};
use crate::trainer::{train, Example, TrainConfig};
use crate::{Error, Result};

/// Anything that carries the labels a split needs.
pub trait SplitItem {
    fn class(&self) -> usize;
    fn campaign(&self) -> &str;
    fn sensor(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Noshm,
    #[serde(alias = "shm_loco")]
    Loco,
    GradualPrior,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "noshm" => Ok(SplitMode::Noshm),
            "loco" | "shm_loco" => Ok(SplitMode::Loco),
            "gradual" | "gradual_prior" => Ok(SplitMode::GradualPrior),
            other => Err(Error::InvalidParameter(format!("unknown split mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Held-out campaign (loco, gradual) or the only campaign used (noshm).
    pub test_campaign: Option<String>,
    pub prior_levels: usize,
    /// train/val/test fractions for noshm.
    pub fractions: [f64; 3],
    /// train share of the non-test pool for loco and gradual.
    pub train_fraction: f64,
    /// Sensors to keep; empty keeps every sensor (sensor fusion).
    pub sensors: Vec<String>,
    pub seed: u64,
    pub k: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            mode: SplitMode::Noshm,
            test_campaign: None,
            prior_levels: 0,
            fractions: [0.8, 0.1, 0.1],
            train_fraction: 0.8,
            sensors: Vec::new(),
            seed: 0,
            k: crate::DEFAULT_CLASSES,
        }
    }
}

/// Indices into the item list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

fn sensor_ok<T: SplitItem>(item: &T, spec: &SplitSpec) -> bool {
    spec.sensors.is_empty() || spec.sensors.iter().any(|s| s == item.sensor())
}

fn by_class<T: SplitItem>(items: &[T], idx: impl Iterator<Item = usize>) -> BTreeMap<usize, Vec<usize>> {
    let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in idx {
        m.entry(items[i].class()).or_default().push(i);
    }
    m
}

/// Stratified partition of class groups into `fractions.len()` parts.
///
/// Each class gets `floor(f * n_c)` items per part; the leftovers are then
/// handed out so every part but the last reaches `round(f * N)` exactly,
/// preferring the class with the largest fractional remainder.
pub fn stratified_partition(
    groups: &BTreeMap<usize, Vec<usize>>,
    fractions: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    let m = fractions.len();
    if m == 0 || fractions.iter().any(|f| !(*f >= 0.0)) {
        return Err(Error::Split("fractions must be non-negative".into()));
    }
    let total_f: f64 = fractions.iter().sum();
    if (total_f - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("fractions sum to {total_f}, not 1")));
    }
    let n: usize = groups.values().map(Vec::len).sum();
    let mut targets: Vec<usize> = fractions[..m - 1]
        .iter()
        .map(|f| (f * n as f64).round() as usize)
        .collect();
    let assigned: usize = targets.iter().sum();
    if assigned > n {
        return Err(Error::Split("fractions over-allocate the pool".into()));
    }
    targets.push(n - assigned);

    let classes: Vec<(&usize, Vec<usize>)> = groups
        .iter()
        .map(|(c, v)| {
            let mut v = v.clone();
            v.shuffle(rng);
            (c, v)
        })
        .collect();

    // counts[c][s]
    let mut counts: Vec<Vec<usize>> = classes
        .iter()
        .map(|(_, v)| fractions.iter().map(|f| (f * v.len() as f64).floor() as usize).collect())
        .collect();
    let mut deficit: Vec<isize> = (0..m)
        .map(|s| targets[s] as isize - counts.iter().map(|c| c[s]).sum::<usize>() as isize)
        .collect();
    // (remainder, class, split) candidates, largest remainder first
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, (_, v)) in classes.iter().enumerate() {
        for (s, f) in fractions.iter().enumerate() {
            let exact = f * v.len() as f64;
            cand.push((exact - exact.floor(), ci, s));
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut left: Vec<usize> = classes
        .iter()
        .zip(&counts)
        .map(|((_, v), c)| v.len() - c.iter().sum::<usize>())
        .collect();
    for pass in 0..2 {
        for &(_, ci, s) in &cand {
            if left[ci] > 0 && deficit[s] > 0 && (pass == 1 || fractions[s] > 0.0) {
                counts[ci][s] += 1;
                left[ci] -= 1;
                deficit[s] -= 1;
            }
        }
    }
    // anything still unplaced goes wherever there is room
    for ci in 0..classes.len() {
        while left[ci] > 0 {
            let s = (0..m)
                .max_by_key(|&s| deficit[s])
                .expect("at least one part");
            counts[ci][s] += 1;
            left[ci] -= 1;
            deficit[s] -= 1;
        }
    }

    let mut parts = vec![Vec::new(); m];
    for ((_, v), c) in classes.iter().zip(&counts) {
        let mut at = 0;
        for s in 0..m {
            parts[s].extend_from_slice(&v[at..at + c[s]]);
            at += c[s];
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

fn check_classes<T: SplitItem>(items: &[T], spec: &SplitSpec) -> Result<()> {
    if let Some(bad) = items.iter().find(|i| i.class() == 0 || i.class() > spec.k) {
        return Err(Error::ClassOutOfRange {
            class: bad.class(),
            k: spec.k,
        });
    }
    Ok(())
}

pub fn split_noshm<T: SplitItem>(items: &[T], spec: &SplitSpec) -> Result<Split> {
    check_classes(items, spec)?;
    let pool = (0..items.len()).filter(|&i| {
        sensor_ok(&items[i], spec)
            && spec.test_campaign.as_deref().map_or(true, |c| items[i].campaign() == c)
    });
    let groups = by_class(items, pool);
    if groups.is_empty() {
        return Err(Error::Split("no items match the requested campaign and sensors".into()));
    }
    if let Some((c, v)) = groups.iter().find(|(_, v)| v.len() < 3) {
        return Err(Error::Split(format!("class {c} has {} item(s), need at least 3", v.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts = stratified_partition(&groups, &spec.fractions, &mut rng)?;
    let test = parts.pop().unwrap_or_default();
    let val = parts.pop().unwrap_or_default();
    let train = parts.pop().unwrap_or_default();
    Ok(Split { train, val, test })
}

fn test_campaign(spec: &SplitSpec) -> Result<&str> {
    spec.test_campaign
        .as_deref()
        .ok_or_else(|| Error::Split("a test campaign is required".into()))
}

pub fn split_loco<T: SplitItem>(items: &[T], spec: &SplitSpec) -> Result<Split> {
    check_classes(items, spec)?;
    let held_out = test_campaign(spec)?;
    let kept = || (0..items.len()).filter(|&i| sensor_ok(&items[i], spec));
    let test: Vec<usize> = kept().filter(|&i| items[i].campaign() == held_out).collect();
    if test.is_empty() {
        return Err(Error::Split(format!("campaign `{held_out}` has no items")));
    }
    let groups = by_class(items, kept().filter(|&i| items[i].campaign() != held_out));
    if groups.is_empty() {
        return Err(Error::Split("no training campaigns left".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let f = spec.train_fraction;
    let mut parts = stratified_partition(&groups, &[f, 1.0 - f], &mut rng)?;
    let val = parts.pop().unwrap_or_default();
    let train = parts.pop().unwrap_or_default();
    Ok(Split { train, val, test })
}

pub fn split_gradual_prior<T: SplitItem>(items: &[T], spec: &SplitSpec) -> Result<Split> {
    if spec.prior_levels >= spec.k {
        return Err(Error::Split(format!(
            "prior_levels = {} must be below K = {}",
            spec.prior_levels, spec.k
        )));
    }
    let mut split = split_loco(items, spec)?;
    if spec.prior_levels == 0 {
        return Ok(split);
    }
    let (moved, test): (Vec<usize>, Vec<usize>) = split
        .test
        .iter()
        .partition(|&&i| items[i].class() <= spec.prior_levels);
    split.test = test;
    let groups = by_class(items, moved.into_iter());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let f = spec.train_fraction;
    let mut parts = stratified_partition(&groups, &[f, 1.0 - f], &mut rng)?;
    split.val.extend(parts.pop().unwrap_or_default());
    split.train.extend(parts.pop().unwrap_or_default());
    split.train.sort_unstable();
    split.val.sort_unstable();
    Ok(split)
}

pub fn make_split<T: SplitItem>(items: &[T], spec: &SplitSpec) -> Result<Split> {
    match spec.mode {
        SplitMode::Noshm => split_noshm(items, spec),
        SplitMode::Loco => split_loco(items, spec),
        SplitMode::GradualPrior => split_gradual_prior(items, spec),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub key: String,
    pub repeat: usize,
    pub seed: u64,
    pub metrics: MetricSummary,
    pub adjacent_error_fraction: Option<f64>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub confusion: Vec<Vec<u64>>,
    pub fingerprint: String,
    /// Not serialized, so reruns give identical result files.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub key: String,
    pub repeats: usize,
    pub mean: MetricSummary,
    pub std: MetricSummary,
}

impl ExperimentSummary {
    pub fn from_results(key: &str, results: &[ExperimentResult]) -> Self {
        let n = results.len().max(1) as f64;
        let mut mean = [0.0; 5];
        for r in results {
            for (m, v) in mean.iter_mut().zip(r.metrics.as_array()) {
                *m += v / n;
            }
        }
        let mut var = [0.0; 5];
        if results.len() > 1 {
            for r in results {
                for ((s, v), m) in var.iter_mut().zip(r.metrics.as_array()).zip(mean) {
                    *s += (v - m).powi(2) / (n - 1.0);
                }
            }
        }
        let summary = |a: [f64; 5]| MetricSummary {
            acc: a[0],
            acc_pm1: a[1],
            recall_pm1: a[2],
            precision_pm1: a[3],
            f1_pm1: a[4],
        };
        Self {
            key: key.to_string(),
            repeats: results.len(),
            mean: summary(mean),
            std: summary(var.map(f64::sqrt)),
        }
    }
}

/// Seed of repeat `r`.
pub fn repeat_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

fn examples(items: &[FeatureRecord], idx: &[usize]) -> Vec<Example> {
    idx.iter().map(|&i| items[i].example()).collect()
}

/// One split + train + test-set evaluation.
pub fn run_once(
    items: &[FeatureRecord],
    split_spec: &SplitSpec,
    train_cfg: &TrainConfig,
    key: &str,
    repeat: usize,
) -> Result<ExperimentResult> {
    let started = Instant::now();
    let split = make_split(items, split_spec)?;
    let train_set = examples(items, &split.train);
    let val_set = examples(items, &split.val);
    let test_set = examples(items, &split.test);
    let (model, _) = train(&train_set, &val_set, train_cfg)?;
    let cm: ConfusionMatrix = model.evaluate(&test_set)?;
    Ok(ExperimentResult {
        key: key.to_string(),
        repeat,
        seed: train_cfg.seed,
        metrics: MetricSummary::from_confusion(&cm)?,
        adjacent_error_fraction: adjacent_error_fraction(&cm),
        n_train: split.train.len(),
        n_val: split.val.len(),
        n_test: split.test.len(),
        confusion: cm.rows(),
        fingerprint: fingerprint(&(split_spec, train_cfg, items.len())),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// `repeats` runs with seeds `base_seed + r`, run in parallel, returned in
/// repeat order.
pub fn run_experiment(
    items: &[FeatureRecord],
    split_spec: &SplitSpec,
    train_cfg: &TrainConfig,
    repeats: usize,
    base_seed: u64,
    key: &str,
) -> Result<(Vec<ExperimentResult>, ExperimentSummary)> {
    let results: Vec<ExperimentResult> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let seed = repeat_seed(base_seed, r);
            let split = SplitSpec {
                seed,
                ..split_spec.clone()
            };
            let cfg = TrainConfig {
                seed,
                ..train_cfg.clone()
            };
            run_once(items, &split, &cfg, key, r)
        })
        .collect::<Result<_>>()?;
    let summary = ExperimentSummary::from_results(key, &results);
    Ok((results, summary))
}

/// Builds features for every stream pair at each denoising level and runs
/// the experiment on each.
pub fn sweep_denoise_levels(
    streams: &[(AEStream, AEStream)],
    levels: &[usize],
    pipeline: &PipelineConfig,
    split_spec: &SplitSpec,
    train_cfg: &TrainConfig,
    repeats: usize,
    base_seed: u64,
) -> Result<Vec<(Vec<ExperimentResult>, ExperimentSummary)>> {
    levels
        .iter()
        .map(|&level| {
            let mut cfg = pipeline.clone();
            cfg.denoise.level = level;
            let mut items = Vec::new();
            for (vibro, ae) in streams {
                items.extend(stream_features(ae, vibro, &cfg)?);
            }
            log::info!("denoise level {level}: {} cycles", items.len());
            run_experiment(&items, split_spec, train_cfg, repeats, base_seed, &format!("level={level}"))
        })
        .collect()
}

pub fn sweep_prior_levels(
    items: &[FeatureRecord],
    priors: &[usize],
    split_spec: &SplitSpec,
    train_cfg: &TrainConfig,
    repeats: usize,
    base_seed: u64,
) -> Result<Vec<(Vec<ExperimentResult>, ExperimentSummary)>> {
    priors
        .iter()
        .map(|&p| {
            let spec = SplitSpec {
                mode: SplitMode::GradualPrior,
                prior_levels: p,
                ..split_spec.clone()
            };
            run_experiment(items, &spec, train_cfg, repeats, base_seed, &format!("prior={p}"))
        })
        .collect()
}

/// One row per repeat and one `summary` row per key carrying mean and std.
pub fn results_csv(groups: &[(Vec<ExperimentResult>, ExperimentSummary)]) -> String {
    let mut s = String::from("key,repeat,seed");
    for name in MetricSummary::NAMES {
        write!(s, ",{name}").unwrap();
    }
    for name in MetricSummary::NAMES {
        write!(s, ",{name}_std").unwrap();
    }
    s.push_str(",n_train,n_val,n_test,fingerprint\n");
    for (results, summary) in groups {
        for r in results {
            write!(s, "{},{},{}", r.key, r.repeat, r.seed).unwrap();
            for v in r.metrics.as_array() {
                write!(s, ",{v:.6}").unwrap();
            }
            s.push_str(&",".repeat(5));
            writeln!(
                s,
                ",{},{},{},{}",
                r.n_train, r.n_val, r.n_test, r.fingerprint
            )
            .unwrap();
        }
        write!(s, "{},summary,", summary.key).unwrap();
        for v in summary.mean.as_array() {
            write!(s, ",{v:.6}").unwrap();
        }
        for v in summary.std.as_array() {
            write!(s, ",{v:.6}").unwrap();
        }
        s.push_str(",,,,\n");
    }
    s
}
