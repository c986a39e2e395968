//! Raw stream container, manifest validation and synthetic campaigns.
//!
//! A stream lives on disk as two files sharing a base path:
//!
//! * `<base>.json`: the [`StreamManifest`], UTF-8 JSON;
//! * `<base>.f32le`: the samples, IEEE-754 binary32, little endian, no header.
//!
//! Passing either file name (or the bare base) to [`read_stream`] or
//! [`write_stream`] addresses the same pair.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, DEFAULT_CLASSES};

/// Payload encoding tag accepted by this version.
pub const ENCODING_TAG: &str = "f32le-v1";

/// Half-open sample range `[start_sample, end_sample)` recorded at one tightening level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorqueInterval {
    pub class_index: usize,
    pub start_sample: usize,
    pub end_sample: usize,
}

impl TorqueInterval {
    pub fn contains(&self, sample: usize) -> bool {
        self.start_sample <= sample && sample < self.end_sample
    }
}

/// Free-form record of a processing step applied to a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessingStep {
    pub op: String,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub campaign_id: String,
    pub sensor_id: String,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    pub torque_schedule: Vec<TorqueInterval>,
    #[serde(rename = "K")]
    pub k: usize,
    pub encoding: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub processing: Vec<ProcessingStep>,
}

impl StreamManifest {
    pub fn new(
        campaign_id: impl Into<String>,
        sensor_id: impl Into<String>,
        sample_rate_hz: f64,
        n_samples: usize,
        torque_schedule: Vec<TorqueInterval>,
    ) -> Self {
        Self {
            campaign_id: campaign_id.into(),
            sensor_id: sensor_id.into(),
            sample_rate_hz,
            n_samples,
            torque_schedule,
            k: DEFAULT_CLASSES,
            encoding: ENCODING_TAG.to_string(),
            processing: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoding != ENCODING_TAG {
            return Err(Error::Manifest(format!(
                "unknown encoding tag `{}` (expected `{ENCODING_TAG}`)",
                self.encoding
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Manifest(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.k < 2 {
            return Err(Error::Manifest(format!("K must be at least 2, got {}", self.k)));
        }
        let mut prev_end = 0usize;
        for (i, iv) in self.torque_schedule.iter().enumerate() {
            if iv.class_index == 0 || iv.class_index > self.k {
                return Err(Error::Manifest(format!(
                    "interval {i}: class {} outside 1..={}",
                    iv.class_index, self.k
                )));
            }
            if iv.start_sample >= iv.end_sample {
                return Err(Error::Manifest(format!(
                    "interval {i}: empty range [{}, {})",
                    iv.start_sample, iv.end_sample
                )));
            }
            if iv.end_sample > self.n_samples {
                return Err(Error::Manifest(format!(
                    "interval {i}: end {} beyond n_samples {}",
                    iv.end_sample, self.n_samples
                )));
            }
            if i > 0 && iv.start_sample < prev_end {
                return Err(Error::Manifest(format!(
                    "interval {i}: overlaps or precedes the previous interval (start {} < {prev_end})",
                    iv.start_sample
                )));
            }
            prev_end = iv.end_sample;
        }
        Ok(())
    }

    /// Class of the torque interval containing `sample`, if any.
    pub fn class_at(&self, sample: usize) -> Option<&TorqueInterval> {
        // schedule is sorted and disjoint
        let idx = self
            .torque_schedule
            .partition_point(|iv| iv.end_sample <= sample);
        self.torque_schedule.get(idx).filter(|iv| iv.contains(sample))
    }
}

/// One sensor channel of raw samples (volts).
#[derive(Debug, Clone, PartialEq)]
pub struct AEStream {
    pub manifest: StreamManifest,
    pub samples: Vec<f32>,
}

impl AEStream {
    pub fn new(manifest: StreamManifest, samples: Vec<f32>) -> Result<Self> {
        manifest.validate()?;
        if manifest.n_samples != samples.len() {
            return Err(Error::LengthMismatch {
                expected: manifest.n_samples,
                actual: samples.len(),
            });
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample(i));
        }
        Ok(Self { manifest, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.manifest.sample_rate_hz
    }
}

/// Manifest and payload paths for a stream base path.
pub fn stream_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("f32le") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut json = base.clone().into_os_string();
    json.push(".json");
    let mut payload = base.into_os_string();
    payload.push(".f32le");
    (json.into(), payload.into())
}

pub fn write_stream(stream: &AEStream, path: impl AsRef<Path>) -> Result<()> {
    if let Some(i) = stream.samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteSample(i));
    }
    stream.manifest.validate()?;
    if stream.manifest.n_samples != stream.samples.len() {
        return Err(Error::LengthMismatch {
            expected: stream.manifest.n_samples,
            actual: stream.samples.len(),
        });
    }
    let (json_path, payload_path) = stream_paths(path);
    let json = serde_json::to_vec_pretty(&stream.manifest)
        .map_err(|e| Error::json(&json_path, e))?;
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    let mut bytes = Vec::with_capacity(stream.samples.len() * 4);
    for s in &stream.samples {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(&payload_path, bytes).map_err(|e| Error::io(&payload_path, e))?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<StreamManifest> {
    let (json_path, _) = stream_paths(path);
    let text = fs::read(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let manifest: StreamManifest =
        serde_json::from_slice(&text).map_err(|e| Error::json(&json_path, e))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<AEStream> {
    let (_, payload_path) = stream_paths(path.as_ref());
    let manifest = read_manifest(path)?;
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Manifest(format!(
            "payload {} is {} bytes, not a whole number of f32 samples",
            payload_path.display(),
            bytes.len()
        )));
    }
    let samples: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    AEStream::new(manifest, samples)
}

fn default_campaign() -> String {
    "synthetic".to_string()
}

fn default_sensor() -> String {
    "synthetic".to_string()
}

fn default_decay() -> f64 {
    6.0
}

fn default_burst_phase() -> [f64; 2] {
    [0.2, 0.45]
}

/// Parameters of a labeled synthetic campaign.
///
/// Each vibration cycle carries `bursts_per_cycle` exponentially damped
/// sinusoids at the burst frequency of the current class, buried in white
/// Gaussian noise. Classes differ only by burst frequency, which is strictly
/// monotone in the class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub sample_rate_hz: f64,
    pub excitation_hz: f64,
    pub seconds_per_level: f64,
    pub n_levels: usize,
    /// Peak-to-peak SNR, `10 log10(pp_signal / pp_noise)`.
    pub snr_db: f64,
    pub bursts_per_cycle: usize,
    pub class_burst_freqs_hz: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_campaign")]
    pub campaign_id: String,
    #[serde(default = "default_sensor")]
    pub sensor_id: String,
    /// Burst e-folding time, in periods of the burst frequency.
    #[serde(default = "default_decay")]
    pub burst_decay_periods: f64,
    /// Relative uniform jitter applied to every burst frequency.
    #[serde(default)]
    pub freq_jitter: f64,
    /// Relative shift applied to all burst frequencies of the campaign.
    #[serde(default)]
    pub freq_shift: f64,
    /// Burst onsets are drawn uniformly from this range of cycle fractions,
    /// measured from the vibrometer's falling zero crossing.
    #[serde(default = "default_burst_phase")]
    pub burst_phase: [f64; 2],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            sample_rate_hz: 100_000.0,
            excitation_hz: 120.0,
            seconds_per_level: 1.0,
            n_levels: DEFAULT_CLASSES,
            snr_db: 2.3,
            bursts_per_cycle: 1,
            class_burst_freqs_hz: vec![4_000.0, 5_500.0, 7_500.0, 10_000.0, 13_500.0, 18_000.0, 24_000.0],
            seed: 0,
            campaign_id: default_campaign(),
            sensor_id: default_sensor(),
            burst_decay_periods: default_decay(),
            freq_jitter: 0.08,
            freq_shift: 0.0,
            burst_phase: default_burst_phase(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return bad(format!("sample_rate_hz must be positive, got {}", self.sample_rate_hz));
        }
        if !(self.seconds_per_level.is_finite() && self.seconds_per_level > 0.0) {
            return bad(format!("seconds_per_level must be positive, got {}", self.seconds_per_level));
        }
        if !(self.excitation_hz > 0.0 && self.burst_decay_periods > 0.0) {
            return bad("excitation_hz and burst_decay_periods must be positive".into());
        }
        if self.n_levels < 2 {
            return bad(format!("need at least 2 levels, got {}", self.n_levels));
        }
        if self.class_burst_freqs_hz.len() != self.n_levels {
            return bad(format!(
                "{} burst frequencies for {} levels",
                self.class_burst_freqs_hz.len(),
                self.n_levels
            ));
        }
        let f = &self.class_burst_freqs_hz;
        let increasing = f.windows(2).all(|w| w[1] > w[0]);
        let decreasing = f.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return bad("class_burst_freqs_hz must be strictly monotone".into());
        }
        let [p0, p1] = self.burst_phase;
        if !(0.0 <= p0 && p0 <= p1 && p1 < 1.0) {
            return bad(format!("burst_phase must satisfy 0 <= lo <= hi < 1, got [{p0}, {p1}]"));
        }
        if !(0.0..1.0).contains(&self.freq_jitter) || self.freq_shift.abs() >= 1.0 {
            return bad("freq_jitter and |freq_shift| must lie in [0, 1)".into());
        }
        let nyquist = self.sample_rate_hz / 2.0;
        let worst = f.iter().cloned().fold(0.0, f64::max)
            * (1.0 + self.freq_shift.max(0.0))
            * (1.0 + self.freq_jitter);
        if self.excitation_hz >= nyquist || worst >= nyquist || f.iter().any(|&x| x <= 0.0) {
            return bad(format!(
                "frequencies must lie in (0, {nyquist}) Hz; highest burst frequency reaches {worst}"
            ));
        }
        Ok(())
    }

    pub fn samples_per_level(&self) -> usize {
        (self.seconds_per_level * self.sample_rate_hz).round() as usize
    }
}

pub const DEFAULT_CAMPAIGN_IDS: [&str; 5] = ["A", "B", "C", "D", "E"];
pub const DEFAULT_CAMPAIGN_SHIFTS: [f64; 5] = [-0.10, -0.05, 0.0, 0.05, 0.10];

/// One spec per campaign, each with its own seed and burst-frequency shift.
/// Campaign `i` uses seed `base.seed + i`.
pub fn campaign_specs(base: &SyntheticSpec, ids: &[&str], shifts: &[f64]) -> Result<Vec<SyntheticSpec>> {
    if ids.len() != shifts.len() {
        return Err(Error::InvalidParameter(format!(
            "{} campaign ids but {} shifts",
            ids.len(),
            shifts.len()
        )));
    }
    ids.iter()
        .zip(shifts)
        .enumerate()
        .map(|(i, (id, &shift))| {
            let spec = SyntheticSpec {
                campaign_id: id.to_string(),
                freq_shift: shift,
                seed: base.seed.wrapping_add(i as u64),
                ..base.clone()
            };
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

/// Output of [`generate_synthetic_parts`]: both streams plus the clean and
/// noise components that were summed into the AE channel.
#[derive(Debug, Clone)]
pub struct SyntheticParts {
    pub vibrometer: AEStream,
    pub ae: AEStream,
    pub clean: Vec<f64>,
    pub noise: Vec<f64>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(AEStream, AEStream)> {
    let parts = generate_synthetic_parts(spec)?;
    Ok((parts.vibrometer, parts.ae))
}

pub fn generate_synthetic_parts(spec: &SyntheticSpec) -> Result<SyntheticParts> {
    spec.validate()?;
    let fs = spec.sample_rate_hz;
    let per_level = spec.samples_per_level();
    if per_level == 0 {
        return Err(Error::InvalidParameter("level shorter than one sample".into()));
    }
    let n = per_level * spec.n_levels;
    let schedule: Vec<TorqueInterval> = (0..spec.n_levels)
        .map(|l| TorqueInterval {
            class_index: l + 1,
            start_sample: l * per_level,
            end_sample: (l + 1) * per_level,
        })
        .collect();

    let vib: Vec<f32> = (0..n)
        .map(|i| (2.0 * PI * spec.excitation_hz * i as f64 / fs).sin() as f32)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut clean = vec![0.0f64; n];
    let period = fs / spec.excitation_hz;
    let n_cycles = (n as f64 / period).ceil() as usize;
    for cycle in 0..n_cycles {
        for _ in 0..spec.bursts_per_cycle {
            let [p0, p1] = spec.burst_phase;
            // the sine falls through zero half a period into each cycle
            let offset = 0.5 + p0 + (p1 - p0) * rng.gen::<f64>();
            let amplitude: f64 = rng.gen_range(0.5..1.0);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            let jitter: f64 = rng.gen_range(-1.0..=1.0) * spec.freq_jitter;
            let start = ((cycle as f64 + offset) * period) as usize;
            if start >= n {
                continue;
            }
            let level = (start / per_level).min(spec.n_levels - 1);
            let freq = spec.class_burst_freqs_hz[level] * (1.0 + spec.freq_shift) * (1.0 + jitter);
            let tau = spec.burst_decay_periods / freq * fs;
            let len = ((tau * 1000f64.ln()).ceil() as usize).max(1);
            let w = 2.0 * PI * freq / fs;
            for (t, out) in clean[start..n.min(start + len)].iter_mut().enumerate() {
                let t = t as f64;
                *out += amplitude * (-t / tau).exp() * (w * t + phase).sin();
            }
        }
    }

    let mut noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let pp_clean = peak_to_peak(&clean);
    let pp_noise = peak_to_peak(&noise);
    if pp_clean > 0.0 && pp_noise > 0.0 {
        let target = pp_clean / 10f64.powf(spec.snr_db / 10.0);
        let scale = target / pp_noise;
        noise.iter_mut().for_each(|x| *x *= scale);
    }
    let ae: Vec<f32> = clean
        .iter()
        .zip(&noise)
        .map(|(c, e)| (c + e) as f32)
        .collect();

    let mut vib_manifest =
        StreamManifest::new(&spec.campaign_id, "vibrometer", fs, n, schedule.clone());
    let mut ae_manifest = StreamManifest::new(&spec.campaign_id, &spec.sensor_id, fs, n, schedule);
    vib_manifest.k = spec.n_levels;
    ae_manifest.k = spec.n_levels;

    Ok(SyntheticParts {
        vibrometer: AEStream::new(vib_manifest, vib)?,
        ae: AEStream::new(ae_manifest, ae)?,
        clean,
        noise,
    })
}

pub fn peak_to_peak(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Peak-to-peak SNR in dB, `10 log10(pp_signal / pp_noise)`.
pub fn snr_peak_to_peak_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * (peak_to_peak(signal) / peak_to_peak(noise)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n: usize, schedule: Vec<TorqueInterval>) -> StreamManifest {
        StreamManifest::new("B", "mu80", 5e6, n, schedule)
    }

    fn iv(class_index: usize, start_sample: usize, end_sample: usize) -> TorqueInterval {
        TorqueInterval {
            class_index,
            start_sample,
            end_sample,
        }
    }

    #[test]
    fn empty_stream_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = AEStream::new(manifest(0, vec![]), vec![]).unwrap();
        let base = dir.path().join("empty");
        write_stream(&s, &base).unwrap();
        let (json, payload) = stream_paths(&base);
        assert_eq!(fs::metadata(payload).unwrap().len(), 0);
        assert!(fs::metadata(json).unwrap().len() > 0);
        assert_eq!(read_stream(&base).unwrap(), s);
    }

    #[test]
    fn three_samples_twelve_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let s = AEStream::new(manifest(3, vec![iv(1, 0, 3)]), vec![1.0, -2.5, 0.0]).unwrap();
        write_stream(&s, dir.path().join("s.json")).unwrap();
        let bytes = fs::read(dir.path().join("s.f32le")).unwrap();
        assert_eq!(bytes.len(), 12);
        assert_eq!(&bytes[4..8], &(-2.5f32).to_le_bytes());
        assert_eq!(read_stream(dir.path().join("s")).unwrap(), s);
    }

    #[test]
    fn non_finite_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let s = AEStream {
            manifest: manifest(2, vec![]),
            samples: vec![0.0, f32::NAN],
        };
        assert!(matches!(
            write_stream(&s, dir.path().join("x")),
            Err(Error::NonFiniteSample(1))
        ));
    }

    #[test]
    fn length_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let s = AEStream::new(manifest(99, vec![]), vec![0.5; 99]).unwrap();
        write_stream(&s, dir.path().join("x")).unwrap();
        let mut m = s.manifest.clone();
        m.n_samples = 100;
        fs::write(
            dir.path().join("x.json"),
            serde_json::to_vec(&m).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            read_stream(dir.path().join("x")),
            Err(Error::LengthMismatch {
                expected: 100,
                actual: 99
            })
        ));
    }

    #[test]
    fn overlapping_schedule_rejected() {
        let m = manifest(100, vec![iv(1, 0, 50), iv(2, 40, 100)]);
        assert!(matches!(m.validate(), Err(Error::Manifest(_))));
        let m = manifest(100, vec![iv(1, 0, 50), iv(8, 50, 100)]);
        assert!(m.validate().is_err());
        let m = manifest(100, vec![iv(1, 0, 101)]);
        assert!(m.validate().is_err());
    }

    #[test]
    fn unknown_encoding_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(0, vec![]);
        m.encoding = "f64be".into();
        assert!(m.validate().is_err());
        assert!(matches!(
            read_stream(dir.path().join("nope")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn class_lookup() {
        let m = manifest(100, vec![iv(1, 0, 40), iv(2, 50, 100)]);
        assert_eq!(m.class_at(0).unwrap().class_index, 1);
        assert_eq!(m.class_at(39).unwrap().class_index, 1);
        assert!(m.class_at(45).is_none());
        assert_eq!(m.class_at(99).unwrap().class_index, 2);
        assert!(m.class_at(100).is_none());
    }

    #[test]
    fn synthetic_lengths() {
        let spec = SyntheticSpec {
            sample_rate_hz: 100_000.0,
            seconds_per_level: 1.0,
            ..SyntheticSpec::default()
        };
        let (vib, ae) = generate_synthetic(&spec).unwrap();
        assert_eq!(vib.len(), 700_000);
        assert_eq!(ae.len(), 700_000);
        assert_eq!(ae.manifest.torque_schedule.len(), 7);
        assert_eq!(ae.manifest.torque_schedule[6].class_index, 7);
        assert_eq!(ae.manifest.torque_schedule[6].end_sample, 700_000);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            seconds_per_level: 0.1,
            seed: 42,
            ..SyntheticSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let other = generate_synthetic(&SyntheticSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.1.samples, other.1.samples);
    }

    #[test]
    fn synthetic_snr_matches_request() {
        let spec = SyntheticSpec {
            seconds_per_level: 0.2,
            snr_db: 2.3,
            seed: 5,
            ..SyntheticSpec::default()
        };
        let parts = generate_synthetic_parts(&spec).unwrap();
        let snr = snr_peak_to_peak_db(&parts.clean, &parts.noise);
        assert!((snr - 2.3).abs() < 0.5, "snr = {snr}");
        // the stored channel is the sum of both parts
        let recon: f64 = parts
            .clean
            .iter()
            .zip(&parts.noise)
            .zip(&parts.ae.samples)
            .map(|((c, n), s)| (c + n - *s as f64).abs())
            .fold(0.0, f64::max);
        assert!(recon < 1e-6);
    }

    #[test]
    fn synthetic_spec_validation() {
        let mut s = SyntheticSpec::default();
        s.class_burst_freqs_hz[3] = s.class_burst_freqs_hz[2];
        assert!(s.validate().is_err());
        let s = SyntheticSpec {
            sample_rate_hz: 20_000.0,
            ..SyntheticSpec::default()
        };
        assert!(s.validate().is_err());
        let s = SyntheticSpec {
            seconds_per_level: 0.0,
            ..SyntheticSpec::default()
        };
        assert!(s.validate().is_err());
    }
}
