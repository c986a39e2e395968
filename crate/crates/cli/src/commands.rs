use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use boltwave::cwt::ScaleLayout;
use boltwave::dataset::{read_json, read_jsonl, read_segments, write_json, write_jsonl, DatasetEntry, FeatureTable};
use boltwave::denoise::{denoise_stream, DenoiseConfig};
use boltwave::experiments::{
    make_split, results_csv, run_experiment, sweep_denoise_levels, sweep_prior_levels, ExperimentResult,
    ExperimentSummary, SplitMode, SplitSpec,
};
use boltwave::image::Normalization;
use boltwave::ingest::{
    campaign_specs, generate_synthetic, read_stream, write_stream, AEStream, SyntheticSpec, DEFAULT_CAMPAIGN_IDS,
};
use boltwave::metrics::EvalReport;
use boltwave::pipeline::{bank_for, render_segments, segment_stream, FeatureRecord, PipelineConfig};
use boltwave::trainer::{train, Example, LinearSoftmaxModel, TrainConfig, FEATURE_DIM};

use crate::config::{self, RunRecord};
use crate::plot::{Plot, Series, PALETTE};
use crate::{
    Command, DatasetArgs, DenoiseArgs, EvalArgs, Global, HyperArgs, PredictArgs, ReportArgs, ScalogramArgs,
    SegmentArgs, SplitArgs, SweepArgs, SynthArgs, TrainArgs, UsageError,
};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const FEATURES_FILE: &str = "features.f32le";
pub const DATASET_FILE: &str = "dataset.json";
pub const MODEL_FILE: &str = "model.bwlm";
pub const LOG_FILE: &str = "training_log.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const RESULTS_FILE: &str = "results.json";
pub const RUN_FILE: &str = "run.json";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| usage(format!("--{flag} is required")))
}

struct Ctx {
    command: &'static str,
    seed: Option<u64>,
    config: Map<String, Value>,
}

impl Ctx {
    fn record(&self) -> RunRecord {
        RunRecord::new(self.command, self.seed, self.config.clone())
    }

    fn write_run_in(&self, dir: &Path) -> Result<()> {
        self.record().write(dir.join(RUN_FILE))
    }

    /// For single-file outputs: `out.csv` gets `out.run.json`.
    fn write_run_beside(&self, file: &Path) -> Result<()> {
        self.record().write(file.with_extension(RUN_FILE))
    }
}

fn prepare<T>(command: &'static str, flags: &T, g: &Global) -> Result<(T, Ctx)>
where
    T: Serialize + serde::de::DeserializeOwned + Default,
{
    let file = match &g.config {
        Some(p) => config::load(p, command)?,
        None => Map::new(),
    };
    let seed = config::resolve_seed(g.seed, &file)?;
    let (args, config) = config::merge(flags, file)?;
    Ok((args, Ctx { command, seed, config }))
}

pub fn run(cmd: Command, g: &Global) -> Result<()> {
    match cmd {
        Command::Synth(a) => prepare("synth", &a, g).and_then(|(a, c)| synth(&a, &c)),
        Command::Segment(a) => prepare("segment", &a, g).and_then(|(a, c)| segment(&a, &c)),
        Command::Denoise(a) => prepare("denoise", &a, g).and_then(|(a, c)| denoise(&a, &c)),
        Command::Scalogram(a) => prepare("scalogram", &a, g).and_then(|(a, c)| scalogram(&a, &c)),
        Command::Dataset(a) => prepare("dataset", &a, g).and_then(|(a, c)| dataset(&a, &c)),
        Command::Train(a) => prepare("train", &a, g).and_then(|(a, c)| train_cmd(&a, &c)),
        Command::Eval(a) => prepare("eval", &a, g).and_then(|(a, c)| eval(&a, &c)),
        Command::Predict(a) => prepare("predict", &a, g).and_then(|(a, c)| predict(&a, &c)),
        Command::Sweep(a) => prepare("sweep", &a, g).and_then(|(a, c)| sweep(&a, &c)),
        Command::Report(a) => prepare("report", &a, g).and_then(|(a, c)| report(&a, &c)),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Sorted subdirectories of `dir` containing every file in `markers`.
fn subdirs_with(dir: &Path, markers: &[&str]) -> Result<Vec<PathBuf>> {
    if markers.iter().all(|m| dir.join(m).is_file()) {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = entry?.path();
        if p.is_dir() && markers.iter().all(|m| p.join(m).is_file()) {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        bail!("{} contains no {}", dir.display(), markers.join(" + "));
    }
    Ok(out)
}

fn dir_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

// ---- synth ----

fn evenly_spaced_shifts(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| -0.10 + 0.20 * i as f64 / (n - 1) as f64).collect(),
    }
}

fn synth(a: &SynthArgs, ctx: &Ctx) -> Result<()> {
    let out = required(&a.out, "out")?;
    let overrides = |mut s: SyntheticSpec| {
        if let Some(v) = a.seconds_per_level {
            s.seconds_per_level = v;
        }
        if let Some(v) = a.snr_db {
            s.snr_db = v;
        }
        if let Some(v) = a.sample_rate_hz {
            s.sample_rate_hz = v;
        }
        s
    };
    let family = |mut base: SyntheticSpec| -> Result<Vec<SyntheticSpec>> {
        if let Some(seed) = ctx.seed {
            base.seed = seed;
        }
        let ids: Vec<&str> = if a.campaigns.is_empty() {
            DEFAULT_CAMPAIGN_IDS.to_vec()
        } else {
            a.campaigns.iter().map(String::as_str).collect()
        };
        let shifts = if a.shifts.is_empty() {
            evenly_spaced_shifts(ids.len())
        } else {
            a.shifts.clone()
        };
        if shifts.len() != ids.len() {
            return Err(usage(format!("{} campaigns but {} shifts", ids.len(), shifts.len())));
        }
        Ok(campaign_specs(&overrides(base), &ids, &shifts)?)
    };
    let specs = match &a.spec {
        None => family(SyntheticSpec::default())?,
        Some(path) => match read_json::<Value>(path)? {
            Value::Array(items) => {
                let mut specs = Vec::with_capacity(items.len());
                for (i, item) in items.into_iter().enumerate() {
                    let mut s: SyntheticSpec =
                        serde_json::from_value(item).with_context(|| format!("{} entry {i}", path.display()))?;
                    if let Some(seed) = ctx.seed {
                        s.seed = seed.wrapping_add(i as u64);
                    }
                    specs.push(overrides(s));
                }
                specs
            }
            obj => {
                let base: SyntheticSpec =
                    serde_json::from_value(obj).with_context(|| format!("parsing {}", path.display()))?;
                if a.campaigns.is_empty() {
                    let mut s = overrides(base);
                    if let Some(seed) = ctx.seed {
                        s.seed = seed;
                    }
                    vec![s]
                } else {
                    family(base)?
                }
            }
        },
    };
    if specs.is_empty() {
        return Err(usage("the spec list is empty"));
    }
    let ids: BTreeSet<&str> = specs.iter().map(|s| s.campaign_id.as_str()).collect();
    if ids.len() != specs.len() {
        return Err(usage("campaign ids must be unique"));
    }
    for s in &specs {
        s.validate()?;
    }
    create_dir(&out)?;
    let streams: Vec<(AEStream, AEStream)> = specs
        .par_iter()
        .map(generate_synthetic)
        .collect::<boltwave::Result<_>>()?;
    for (spec, (vibro, ae)) in specs.iter().zip(&streams) {
        let dir = out.join(safe_name(&spec.campaign_id));
        create_dir(&dir)?;
        write_stream(ae, dir.join("ae.json"))?;
        write_stream(vibro, dir.join("vibro.json"))?;
        log::info!("campaign {}: {} samples", spec.campaign_id, ae.len());
    }
    write_json(out.join("specs.json"), &specs)?;
    ctx.write_run_in(&out)
}

// ---- segment / denoise ----

fn segment(a: &SegmentArgs, ctx: &Ctx) -> Result<()> {
    let out = required(&a.out, "out")?;
    let pairs: Vec<(Option<String>, PathBuf, PathBuf)> = match (&a.ae, &a.vibro, &a.from) {
        (Some(ae), Some(vibro), None) => vec![(None, ae.clone(), vibro.clone())],
        (None, None, Some(dir)) => subdirs_with(dir, &["ae.json", "vibro.json"])?
            .into_iter()
            .map(|d| (Some(dir_name(&d)), d.join("ae.json"), d.join("vibro.json")))
            .collect(),
        _ => return Err(usage("give either --ae and --vibro, or --from")),
    };
    let mut denoise = DenoiseConfig::with_level(a.denoise_level.unwrap_or(0));
    if let Some(b) = a.block_seconds {
        denoise.block_seconds = b;
    }
    let cfg = PipelineConfig {
        denoise,
        window: !a.no_window,
        ..PipelineConfig::default()
    };
    create_dir(&out)?;
    for (name, ae_path, vibro_path) in &pairs {
        let ae = read_stream(ae_path)?;
        let vibro = read_stream(vibro_path)?;
        let segments = segment_stream(&ae, &vibro, &cfg)?;
        let dir = match name {
            Some(n) if pairs.len() > 1 || a.from.is_some() => out.join(n),
            _ => out.clone(),
        };
        boltwave::dataset::write_segments(&dir, &segments, ae.manifest.sample_rate_hz, cfg.window)?;
        log::info!("{}: {} cycles", ae_path.display(), segments.len());
    }
    ctx.write_run_in(&out)
}

fn denoise(a: &DenoiseArgs, ctx: &Ctx) -> Result<()> {
    let input = required(&a.input, "in")?;
    let out = required(&a.out, "out")?;
    let level = required(&a.level, "level")?;
    let mut cfg = DenoiseConfig::with_level(level);
    if let Some(b) = a.block_seconds {
        cfg.block_seconds = b;
    }
    let stream = read_stream(&input)?;
    let cleaned = denoise_stream(&stream, &cfg)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_stream(&cleaned, &out)?;
    ctx.write_run_beside(&out)
}

// ---- scalogram ----

fn scalogram(a: &ScalogramArgs, ctx: &Ctx) -> Result<()> {
    let out = required(&a.out, "out")?;
    if a.segments.is_empty() {
        return Err(usage("--segments is required"));
    }
    let octaves = a.octaves.unwrap_or(8);
    let layout = if a.literal_12_filters {
        ScaleLayout::literal_twelve(octaves)
    } else {
        ScaleLayout::Voices {
            voices: a.voices.unwrap_or(12),
            octaves,
        }
    };
    let cfg = PipelineConfig {
        layout,
        n_fft: a.n_fft,
        ..PipelineConfig::default()
    };
    let mut dirs = Vec::new();
    for p in &a.segments {
        dirs.extend(subdirs_with(p, &[boltwave::dataset::SEGMENT_INDEX])?);
    }
    create_dir(&out.join("images"))?;
    let mut table = FeatureTable::new(FEATURE_DIM);
    let mut entries: Vec<DatasetEntry> = Vec::new();
    let mut seen = BTreeSet::new();
    for dir in &dirs {
        let (records, segments) = read_segments(dir)?;
        let Some(first) = records.first() else {
            log::warn!("{}: no segments", dir.display());
            continue;
        };
        let bank = bank_for(&segments, first.sample_rate_hz, &cfg)?;
        for chunk in segments.chunks(256) {
            let rendered = render_segments(chunk, &bank, Normalization::PerImage)?;
            for (seg, (img, features)) in chunk.iter().zip(rendered) {
                let rel = format!(
                    "images/{}_{}_L{}_{:05}.png",
                    safe_name(&seg.campaign_id),
                    safe_name(&seg.sensor_id),
                    seg.class_index,
                    seg.cycle_index
                );
                if !seen.insert(rel.clone()) {
                    bail!("two segments map to {rel}; campaign/sensor/cycle must be unique");
                }
                if !a.no_png {
                    img.write_png(out.join(&rel))?;
                }
                let row = table.push(&features)?;
                entries.push(DatasetEntry {
                    path: rel,
                    class: seg.class_index,
                    campaign: seg.campaign_id.clone(),
                    sensor: seg.sensor_id.clone(),
                    cycle_index: seg.cycle_index,
                    feature_row: Some(row),
                });
            }
        }
        log::info!("{}: {} scalograms", dir.display(), segments.len());
    }
    table.write(out.join(FEATURES_FILE))?;
    write_jsonl(out.join(MANIFEST_FILE), &entries)?;
    ctx.write_run_in(&out)
}

// ---- dataset ----

/// Written by `dataset`, read by `train`, `eval`, `predict`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub split: SplitSpec,
    pub sizes: BTreeMap<String, usize>,
    /// Items per class, per split.
    pub class_counts: BTreeMap<String, Vec<usize>>,
    /// Directory the image paths are relative to.
    pub image_root: PathBuf,
    pub features: PathBuf,
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn split_spec(s: &SplitArgs, seed: u64, campaigns: &BTreeSet<String>, k: usize) -> Result<SplitSpec> {
    let mode = s.mode.unwrap_or(SplitMode::Loco);
    let test_campaign = match (&s.test_campaign, mode) {
        (Some(c), _) => Some(c.clone()),
        (None, SplitMode::Noshm) => None,
        // middle campaign of the sorted list
        (None, _) => campaigns.iter().nth(campaigns.len() / 2).cloned(),
    };
    let mut spec = SplitSpec {
        mode,
        test_campaign,
        prior_levels: s.prior.unwrap_or(0),
        sensors: s.sensors.clone(),
        seed,
        k,
        ..SplitSpec::default()
    };
    if !s.fractions.is_empty() {
        let f: [f64; 3] = s
            .fractions
            .clone()
            .try_into()
            .map_err(|_| usage("--fractions takes three values: train,val,test"))?;
        spec.fractions = f;
    }
    if let Some(f) = s.train_fraction {
        spec.train_fraction = f;
    }
    Ok(spec)
}

fn class_count<T: boltwave::experiments::SplitItem>(items: &[T]) -> usize {
    items.iter().map(|i| i.class()).max().unwrap_or(0).max(2)
}

fn dataset(a: &DatasetArgs, ctx: &Ctx) -> Result<()> {
    let manifest = manifest_path(&required(&a.manifest, "manifest")?);
    let out = required(&a.out, "out")?;
    let entries: Vec<DatasetEntry> = read_jsonl(&manifest)?;
    if entries.is_empty() {
        bail!("{} is empty", manifest.display());
    }
    let campaigns: BTreeSet<String> = entries.iter().map(|e| e.campaign.clone()).collect();
    let k = class_count(&entries);
    let spec = split_spec(&a.split, ctx.seed.unwrap_or(0), &campaigns, k)?;
    let split = make_split(&entries, &spec)?;
    create_dir(&out)?;
    let root = manifest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .canonicalize()
        .with_context(|| format!("resolving {}", manifest.display()))?;
    let mut sizes = BTreeMap::new();
    let mut class_counts = BTreeMap::new();
    for (name, idx) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        let part: Vec<DatasetEntry> = idx.iter().map(|&i| entries[i].clone()).collect();
        let mut counts = vec![0usize; k];
        for e in &part {
            counts[e.class - 1] += 1;
        }
        write_jsonl(out.join(format!("{name}.jsonl")), &part)?;
        sizes.insert(name.to_string(), part.len());
        class_counts.insert(name.to_string(), counts);
    }
    log::info!("split sizes {sizes:?}");
    let info = DatasetInfo {
        split: spec,
        sizes,
        class_counts,
        features: root.join(FEATURES_FILE),
        image_root: root,
    };
    write_json(out.join(DATASET_FILE), &info)?;
    ctx.write_run_in(&out)
}

// ---- train / eval / predict ----

struct Loaded {
    dir: PathBuf,
    info: DatasetInfo,
    table: FeatureTable,
}

fn load_dataset(dir: &Path) -> Result<Loaded> {
    let info: DatasetInfo = read_json(dir.join(DATASET_FILE))?;
    let table = FeatureTable::read(&info.features)?;
    Ok(Loaded {
        dir: dir.to_path_buf(),
        info,
        table,
    })
}

fn features_of(table: &FeatureTable, e: &DatasetEntry) -> Result<Vec<f64>> {
    let row = e
        .feature_row
        .with_context(|| format!("{} has no feature row", e.path))?;
    table
        .row(row)
        .with_context(|| format!("feature row {row} of {} is out of range", e.path))
}

fn load_split(ds: &Loaded, split: &str) -> Result<(Vec<DatasetEntry>, Vec<Example>)> {
    if !["train", "val", "test"].contains(&split) {
        return Err(usage(format!("--split must be train, val or test, not `{split}`")));
    }
    let entries: Vec<DatasetEntry> = read_jsonl(ds.dir.join(format!("{split}.jsonl")))?;
    let examples = entries
        .iter()
        .map(|e| {
            Ok(Example {
                features: features_of(&ds.table, e)?,
                class: e.class,
            })
        })
        .collect::<Result<_>>()?;
    Ok((entries, examples))
}

fn train_config(h: &HyperArgs, k: usize, seed: u64) -> TrainConfig {
    let mut c = TrainConfig {
        k,
        seed,
        ..TrainConfig::default()
    };
    if let Some(v) = h.loss {
        c.loss = v;
    }
    if let Some(v) = h.optimizer {
        c.optimizer = v;
    }
    if let Some(v) = h.sched {
        c.schedule = v;
    }
    if let Some(v) = h.lr_max {
        c.lr_max = v;
    }
    if let Some(v) = h.epochs {
        c.epochs = v;
    }
    if let Some(v) = h.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = h.momentum {
        c.optimizer_params.momentum = v;
    }
    if let Some(v) = h.weight_decay {
        c.optimizer_params.weight_decay = v;
    }
    if let Some(v) = h.drop_factor {
        c.piecewise_drop_factor = v;
    }
    if let Some(v) = h.drop_epochs {
        c.piecewise_drop_epochs = v;
    }
    if let Some(v) = h.eval_every {
        c.eval_every = v;
    }
    c
}

fn train_cmd(a: &TrainArgs, ctx: &Ctx) -> Result<()> {
    let ds = load_dataset(&required(&a.dataset, "dataset")?)?;
    let out = required(&a.out, "out")?;
    let (_, train_set) = load_split(&ds, "train")?;
    let (_, val_set) = load_split(&ds, "val")?;
    let cfg = train_config(&a.hyper, ds.info.split.k, ctx.seed.unwrap_or(0));
    let (model, log) = train(&train_set, &val_set, &cfg)?;
    create_dir(&out)?;
    model.save(out.join(MODEL_FILE))?;
    write_text(&out.join(LOG_FILE), &log.to_csv())?;
    if let Some((it, acc, pm1)) = log.validation_curve().last() {
        log::info!("iteration {it}: val acc {acc:.4}, acc_pm1 {pm1:.4}");
    }
    ctx.write_run_in(&out)
}

fn load_model(p: &Path) -> Result<LinearSoftmaxModel> {
    let path = if p.is_dir() { p.join(MODEL_FILE) } else { p.to_path_buf() };
    Ok(LinearSoftmaxModel::load(&path)?)
}

fn eval(a: &EvalArgs, ctx: &Ctx) -> Result<()> {
    let model = load_model(&required(&a.model, "model")?)?;
    let ds = load_dataset(&required(&a.dataset, "dataset")?)?;
    let out = required(&a.out, "out")?;
    let split = a.split.as_deref().unwrap_or("test");
    let (_, examples) = load_split(&ds, split)?;
    let cm = model.evaluate(&examples)?;
    let report = EvalReport::from_confusion(&cm)?;
    create_dir(&out)?;
    write_json(out.join(METRICS_FILE), &report)?;
    write_text(&out.join(CONFUSION_FILE), &cm.to_csv())?;
    log::info!(
        "{split}: acc {:.4}, acc_pm1 {:.4}, f1_pm1 {:.4}",
        report.acc,
        report.acc_pm1,
        report.f1_pm1
    );
    ctx.write_run_in(&out)
}

fn predict(a: &PredictArgs, ctx: &Ctx) -> Result<()> {
    let model = load_model(&required(&a.model, "model")?)?;
    let ds = load_dataset(&required(&a.dataset, "dataset")?)?;
    let out = required(&a.out, "out")?;
    let split = a.split.as_deref().unwrap_or("test");
    let (entries, examples) = load_split(&ds, split)?;
    let mut csv = String::from("path,class,campaign,sensor,cycle_index,predicted");
    for c in 1..=model.k {
        write!(csv, ",p{c}")?;
    }
    csv.push('\n');
    for (e, x) in entries.iter().zip(&examples) {
        let p = model.predict_proba(&x.features)?;
        write!(
            csv,
            "{},{},{},{},{},{}",
            e.path,
            e.class,
            e.campaign,
            e.sensor,
            e.cycle_index,
            p.argmax()
        )?;
        for v in p.as_slice() {
            write!(csv, ",{v:.6}")?;
        }
        csv.push('\n');
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_text(&out, &csv)?;
    ctx.write_run_beside(&out)
}

// ---- sweep ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepGroup {
    pub key: String,
    pub summary: ExperimentSummary,
    pub results: Vec<ExperimentResult>,
}

fn feature_records(manifest_dir: &Path) -> Result<Vec<FeatureRecord>> {
    let manifest = manifest_path(manifest_dir);
    let entries: Vec<DatasetEntry> = read_jsonl(&manifest)?;
    let root = manifest.parent().unwrap_or(Path::new("."));
    let table = FeatureTable::read(root.join(FEATURES_FILE))?;
    entries
        .iter()
        .map(|e| {
            Ok(FeatureRecord {
                class: e.class,
                campaign: e.campaign.clone(),
                sensor: e.sensor.clone(),
                cycle_index: e.cycle_index,
                features: features_of(&table, e)?,
            })
        })
        .collect()
}

fn sweep(a: &SweepArgs, ctx: &Ctx) -> Result<()> {
    let out = required(&a.out, "out")?;
    let repeats = a.repeats.unwrap_or(5);
    if repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let seed = ctx.seed.unwrap_or(0);
    let parse = |s: &str, flag: &str| config::parse_list(s).map_err(|e| usage(format!("--{flag}: {e}")));
    let groups = match (&a.levels, &a.priors) {
        (Some(_), Some(_)) => return Err(usage("--levels and --priors are separate sweeps")),
        (Some(levels), None) => {
            let levels = parse(levels, "levels")?;
            let dir = a
                .streams
                .clone()
                .ok_or_else(|| usage("--levels needs --streams (a synth output directory)"))?;
            let streams: Vec<(AEStream, AEStream)> = subdirs_with(&dir, &["ae.json", "vibro.json"])?
                .iter()
                .map(|d| Ok((read_stream(d.join("vibro.json"))?, read_stream(d.join("ae.json"))?)))
                .collect::<Result<_>>()?;
            let campaigns: BTreeSet<String> = streams.iter().map(|s| s.1.manifest.campaign_id.clone()).collect();
            let k = streams.iter().map(|s| s.1.manifest.k).max().unwrap_or(2);
            let spec = split_spec(&a.split, seed, &campaigns, k)?;
            let cfg = train_config(&a.hyper, k, seed);
            sweep_denoise_levels(&streams, &levels, &PipelineConfig::default(), &spec, &cfg, repeats, seed)?
        }
        (None, priors) => {
            let dir = a
                .manifest
                .clone()
                .ok_or_else(|| usage("give --streams with --levels, or --manifest"))?;
            let items = feature_records(&dir)?;
            let campaigns: BTreeSet<String> = items.iter().map(|i| i.campaign.clone()).collect();
            let k = class_count(&items);
            let spec = split_spec(&a.split, seed, &campaigns, k)?;
            let cfg = train_config(&a.hyper, k, seed);
            match priors {
                Some(p) => sweep_prior_levels(&items, &parse(p, "priors")?, &spec, &cfg, repeats, seed)?,
                None => {
                    let sensors = if spec.sensors.is_empty() {
                        "all".to_string()
                    } else {
                        spec.sensors.join("+")
                    };
                    vec![run_experiment(&items, &spec, &cfg, repeats, seed, &format!("sensors={sensors}"))?]
                }
            }
        }
    };
    create_dir(&out)?;
    write_text(&out.join("results.csv"), &results_csv(&groups))?;
    let timings: Vec<Value> = groups
        .iter()
        .flat_map(|(results, _)| results.iter())
        .map(|r| serde_json::json!({"key": r.key, "repeat": r.repeat, "wall_time_s": r.wall_time_s}))
        .collect();
    write_json(out.join("timings.json"), &timings)?;
    let groups: Vec<SweepGroup> = groups
        .into_iter()
        .map(|(results, summary)| SweepGroup {
            key: summary.key.clone(),
            summary,
            results,
        })
        .collect();
    for g in &groups {
        log::info!(
            "{}: acc {:.4} ± {:.4}, acc_pm1 {:.4}",
            g.key,
            g.summary.mean.acc,
            g.summary.std.acc,
            g.summary.mean.acc_pm1
        );
    }
    write_json(out.join(RESULTS_FILE), &groups)?;
    ctx.write_run_in(&out)
}

// ---- report ----

/// `(iteration, val_acc, val_acc_pm1)` rows of a training log.
fn read_training_log(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .with_context(|| format!("{} has no `{name}` column", path.display()))
    };
    let (ci, ca, cp) = (col("iteration")?, col("val_acc")?, col("val_acc_pm1")?);
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let get = |i: usize| f.get(i).copied().unwrap_or("");
        if get(ca).is_empty() {
            continue;
        }
        let num = |i: usize| -> Result<f64> {
            get(i)
                .parse()
                .with_context(|| format!("{} line {}: bad number", path.display(), n + 2))
        };
        rows.push((num(ci)?, num(ca)?, num(cp)?));
    }
    Ok(rows)
}

fn key_value(key: &str, name: &str) -> Option<f64> {
    key.strip_prefix(name)?.strip_prefix('=')?.parse().ok()
}

fn report(a: &ReportArgs, ctx: &Ctx) -> Result<()> {
    let out = required(&a.out, "out")?;
    if a.runs.is_empty() {
        return Err(usage("--runs is required"));
    }
    let mut md = String::from("# Run summary\n\n");
    let mut evals = String::new();
    let mut experiments = String::new();
    let mut curves = Vec::new();
    let mut levels = Vec::new();
    let mut priors = Vec::new();
    let mut legend = Vec::new();

    for (i, run) in a.runs.iter().enumerate() {
        let name = dir_name(run);
        let mut found = false;
        if run.join(LOG_FILE).is_file() {
            let rows = read_training_log(&run.join(LOG_FILE))?;
            curves.push((i, rows));
            found = true;
        }
        if run.join(METRICS_FILE).is_file() {
            let r: EvalReport = read_json(run.join(METRICS_FILE))?;
            writeln!(
                evals,
                "| {name} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
                r.n, r.acc, r.acc_pm1, r.recall_pm1, r.precision_pm1, r.f1_pm1
            )?;
            found = true;
        }
        if run.join(RESULTS_FILE).is_file() {
            let groups: Vec<SweepGroup> = read_json(run.join(RESULTS_FILE))?;
            let mut lv = Vec::new();
            let mut pr = Vec::new();
            for g in &groups {
                let (m, s) = (&g.summary.mean, &g.summary.std);
                writeln!(
                    experiments,
                    "| {name} | {} | {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.4} ± {:.4} |",
                    g.key, g.summary.repeats, m.acc, s.acc, m.acc_pm1, s.acc_pm1, m.f1_pm1, s.f1_pm1
                )?;
                if let Some(x) = key_value(&g.key, "level") {
                    lv.push((x, g.summary.clone()));
                } else if let Some(x) = key_value(&g.key, "prior") {
                    pr.push((x, g.summary.clone()));
                }
            }
            if !lv.is_empty() {
                levels.push((i, lv));
            }
            if !pr.is_empty() {
                priors.push((i, pr));
            }
            found = true;
        }
        if !found {
            bail!(
                "{} holds no {LOG_FILE}, {METRICS_FILE} or {RESULTS_FILE}",
                run.display()
            );
        }
        legend.push(format!("- {}: {name}", PALETTE[i % PALETTE.len()].0));
    }

    if !evals.is_empty() {
        md.push_str("## Evaluations\n\n| run | n | acc | acc±1 | recall±1 | precision±1 | F1±1 |\n|---|---|---|---|---|---|---|\n");
        md.push_str(&evals);
        md.push('\n');
    }
    if !experiments.is_empty() {
        md.push_str("## Experiments (mean ± std over repeats)\n\n| run | key | repeats | acc | acc±1 | F1±1 |\n|---|---|---|---|---|---|\n");
        md.push_str(&experiments);
        md.push('\n');
    }

    create_dir(&out)?;
    let mut plots = Vec::new();
    if !curves.is_empty() {
        let mut series = Vec::new();
        for (i, rows) in &curves {
            series.push(Series {
                points: rows.iter().map(|r| (r.0, r.1)).collect(),
                color: *i,
                ..Series::default()
            });
            series.push(Series {
                points: rows.iter().map(|r| (r.0, r.2)).collect(),
                color: *i,
                dashed: true,
                ..Series::default()
            });
        }
        let plot = Plot::fit_x(series, (0.0, 1.0));
        plot.save(&out.join("acc_vs_iteration.png"))?;
        plots.push(("acc_vs_iteration.png", "validation accuracy vs iteration", plot.x_range));
    }
    for (file, what, data) in [
        ("acc_vs_denoise_level.png", "test accuracy vs denoising level", &levels),
        ("acc_vs_prior.png", "test accuracy vs prior level", &priors),
    ] {
        if data.is_empty() {
            continue;
        }
        let mut series = Vec::new();
        for (i, points) in data {
            series.push(Series {
                points: points.iter().map(|(x, s)| (*x, s.mean.acc)).collect(),
                err: Some(points.iter().map(|(_, s)| s.std.acc).collect()),
                color: *i,
                ..Series::default()
            });
            series.push(Series {
                points: points.iter().map(|(x, s)| (*x, s.mean.acc_pm1)).collect(),
                err: Some(points.iter().map(|(_, s)| s.std.acc_pm1).collect()),
                color: *i,
                dashed: true,
                ..Series::default()
            });
        }
        let plot = Plot::fit_x(series, (0.0, 1.0));
        plot.save(&out.join(file))?;
        plots.push((file, what, plot.x_range));
    }
    if !plots.is_empty() {
        md.push_str("## Plots\n\nSolid: exact accuracy. Dashed: accuracy within one class. Error bars: one std over repeats. y axis 0 to 1 in steps of 0.1; x grid in tenths of the range.\n\n");
        for (file, what, (lo, hi)) in &plots {
            writeln!(md, "- `{file}`: {what}, x from {lo} to {hi}")?;
        }
        md.push_str("\nColors:\n\n");
        md.push_str(&legend.join("\n"));
        md.push('\n');
    }
    write_text(&out.join("summary.md"), &md)?;
    ctx.write_run_in(&out)
}
