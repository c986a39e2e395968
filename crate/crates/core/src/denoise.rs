//! Orthogonal discrete wavelet transform and universal-threshold denoising.
//!
//! The transform is periodized: each level convolves with the low/high pass
//! pair, wraps indices modulo the (even) input length and keeps every
//! second output. Odd inputs are extended by repeating their last sample.
//! With orthonormal filters this is an orthogonal map, so the inverse is its
//! transpose and signal energy is preserved on even-length inputs.

use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{AEStream, ProcessingStep};
use crate::{Error, Result};

const DB45_DATA: &str = include_str!("../data/db45.txt");

const FILTER_TOL: f64 = 1e-8;

/// Quadrature mirror pair derived from an orthonormal low-pass filter.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilterPair {
    pub name: String,
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
}

impl WaveletFilterPair {
    /// Builds the pair and checks orthonormality of `lowpass`.
    pub fn from_lowpass(name: impl Into<String>, lowpass: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let fail = |reason: String| Error::InvalidFilter {
            name: name.clone(),
            reason,
        };
        let l = lowpass.len();
        if l < 2 || l % 2 != 0 {
            return Err(fail(format!("length {l} is not a positive even number")));
        }
        let sum: f64 = lowpass.iter().sum();
        if (sum - std::f64::consts::SQRT_2).abs() > FILTER_TOL {
            return Err(fail(format!("coefficients sum to {sum}, expected sqrt(2)")));
        }
        for k in 0..l / 2 {
            let dot: f64 = (0..l - 2 * k).map(|i| lowpass[i] * lowpass[i + 2 * k]).sum();
            let expected = if k == 0 { 1.0 } else { 0.0 };
            if (dot - expected).abs() > FILTER_TOL {
                return Err(fail(format!("<h, shift_{}(h)> = {dot}, expected {expected}", 2 * k)));
            }
        }
        let highpass = (0..l)
            .map(|n| {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[l - 1 - n]
            })
            .collect();
        Ok(Self {
            name,
            lowpass,
            highpass,
        })
    }

    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let name = name.into();
        let coeffs = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.parse::<f64>().map_err(|_| Error::InvalidFilter {
                    name: name.clone(),
                    reason: format!("cannot parse `{l}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_lowpass(name, coeffs)
    }

    pub fn load(name: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(name, &text)
    }

    /// Daubechies wavelet with 45 vanishing moments (90 taps).
    pub fn db45() -> &'static WaveletFilterPair {
        static DB45: OnceLock<WaveletFilterPair> = OnceLock::new();
        DB45.get_or_init(|| {
            WaveletFilterPair::parse("db45", DB45_DATA).expect("embedded db45 coefficients are valid")
        })
    }

    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }
}

/// Detail coefficients per level (finest first) plus the final approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub details: Vec<Vec<f64>>,
    pub approximation: Vec<f64>,
    /// Input length at each level, before any odd-length extension.
    pub lengths: Vec<usize>,
}

impl Pyramid {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn energy(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        self.details.iter().map(|d| sq(d)).sum::<f64>() + sq(&self.approximation)
    }
}

fn analysis_step(x: &[f64], filters: &WaveletFilterPair) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    debug_assert!(n % 2 == 0);
    let half = n / 2;
    let (h, g) = (&filters.lowpass, &filters.highpass);
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        let base = 2 * k;
        if base + h.len() <= n {
            for (i, xi) in x[base..base + h.len()].iter().enumerate() {
                sa += h[i] * xi;
                sd += g[i] * xi;
            }
        } else {
            for i in 0..h.len() {
                let xi = x[(base + i) % n];
                sa += h[i] * xi;
                sd += g[i] * xi;
            }
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64], filters: &WaveletFilterPair) -> Vec<f64> {
    let half = a.len();
    let n = 2 * half;
    let (h, g) = (&filters.lowpass, &filters.highpass);
    let mut x = vec![0.0; n];
    for k in 0..half {
        let base = 2 * k;
        for i in 0..h.len() {
            x[(base + i) % n] += a[k] * h[i] + d[k] * g[i];
        }
    }
    x
}

/// Maximum level whose every stage still sees at least `filter_len` samples.
pub fn max_level(len: usize, filter_len: usize) -> usize {
    let mut level = 0;
    let mut n = len;
    while n >= filter_len && n >= 2 {
        level += 1;
        n = n.div_ceil(2);
    }
    level
}

pub fn dwt(signal: &[f64], filters: &WaveletFilterPair, level: usize) -> Result<Pyramid> {
    if level == 0 {
        return Err(Error::InvalidParameter("decomposition level must be >= 1".into()));
    }
    if level > max_level(signal.len(), filters.len()) {
        return Err(Error::SignalTooShort {
            length: signal.len(),
            level,
            filter_len: filters.len(),
        });
    }
    let mut details = Vec::with_capacity(level);
    let mut lengths = Vec::with_capacity(level);
    let mut current = signal.to_vec();
    for _ in 0..level {
        lengths.push(current.len());
        if current.len() % 2 == 1 {
            current.push(*current.last().unwrap());
        }
        let (a, d) = analysis_step(&current, filters);
        details.push(d);
        current = a;
    }
    Ok(Pyramid {
        details,
        approximation: current,
        lengths,
    })
}

pub fn idwt(pyramid: &Pyramid, filters: &WaveletFilterPair) -> Result<Vec<f64>> {
    let mut current = pyramid.approximation.clone();
    for (d, &len) in pyramid.details.iter().zip(&pyramid.lengths).rev() {
        if d.len() != current.len() || len.div_ceil(2) != d.len() {
            return Err(Error::ShapeMismatch {
                expected: current.len(),
                actual: d.len(),
            });
        }
        current = synthesis_step(&current, d, filters);
        current.truncate(len);
    }
    Ok(current)
}

/// Thresholding settings for [`denoise_stream`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    /// Decomposition level; 0 leaves the signal untouched.
    pub level: usize,
    pub block_seconds: f64,
    pub wavelet: String,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            level: 0,
            block_seconds: 1.0,
            wavelet: "db45".into(),
        }
    }
}

impl DenoiseConfig {
    pub fn with_level(level: usize) -> Self {
        Self {
            level,
            ..Self::default()
        }
    }
}

/// Median absolute value divided by 0.6745.
pub fn mad_sigma(coeffs: &[f64]) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let mut abs: Vec<f64> = coeffs.iter().map(|c| c.abs()).collect();
    let n = abs.len();
    let mid = n / 2;
    let (_, &mut upper, _) = abs.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if n % 2 == 1 {
        upper
    } else {
        let lower = abs[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    median / 0.6745
}

/// Universal threshold `sigma * sqrt(2 ln n)`.
pub fn universal_threshold(sigma: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    sigma * (2.0 * (n as f64).ln()).sqrt()
}

pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    x.signum() * (x.abs() - lambda).max(0.0)
}

/// Denoises one block: per-level noise estimate, universal threshold, soft shrinkage.
pub fn denoise_block(block: &[f64], filters: &WaveletFilterPair, level: usize) -> Result<Vec<f64>> {
    if level == 0 {
        return Ok(block.to_vec());
    }
    let mut pyr = dwt(block, filters, level)?;
    for d in &mut pyr.details {
        let lambda = universal_threshold(mad_sigma(d), d.len());
        d.iter_mut().for_each(|c| *c = soft_threshold(*c, lambda));
    }
    idwt(&pyr, filters)
}

/// Block boundaries for a stream of `n` samples. A trailing remainder too
/// short for the requested depth is merged into the previous block.
pub fn block_ranges(n: usize, block_len: usize, min_len: usize) -> Vec<(usize, usize)> {
    let block_len = block_len.max(1);
    let mut ranges: Vec<(usize, usize)> = (0..n)
        .step_by(block_len)
        .map(|s| (s, (s + block_len).min(n)))
        .collect();
    if ranges.len() > 1 {
        let (s, e) = *ranges.last().unwrap();
        if e - s < min_len {
            ranges.pop();
            ranges.last_mut().unwrap().1 = e;
        }
    }
    ranges
}

fn filters_for(cfg: &DenoiseConfig) -> Result<&'static WaveletFilterPair> {
    match cfg.wavelet.as_str() {
        "db45" => Ok(WaveletFilterPair::db45()),
        other => Err(Error::InvalidParameter(format!("unsupported wavelet `{other}`"))),
    }
}

pub fn denoise_stream(stream: &AEStream, cfg: &DenoiseConfig) -> Result<AEStream> {
    if cfg.level == 0 {
        return Ok(stream.clone());
    }
    if !(cfg.block_seconds > 0.0) {
        return Err(Error::InvalidParameter("block_seconds must be positive".into()));
    }
    let filters = filters_for(cfg)?;
    let block_len = (cfg.block_seconds * stream.manifest.sample_rate_hz).round() as usize;
    // shortest block that still supports `level` stages
    let min_len = filters.len() << (cfg.level - 1);
    let ranges = block_ranges(stream.len(), block_len, min_len);
    let blocks: Vec<Vec<f64>> = ranges
        .par_iter()
        .map(|&(s, e)| {
            let x: Vec<f64> = stream.samples[s..e].iter().map(|&v| v as f64).collect();
            denoise_block(&x, filters, cfg.level)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<f32> = blocks.into_iter().flatten().map(|v| v as f32).collect();
    let mut manifest = stream.manifest.clone();
    manifest.processing.push(ProcessingStep {
        op: "wavelet_denoise".into(),
        params: serde_json::json!({
            "wavelet": cfg.wavelet,
            "level": cfg.level,
            "block_seconds": cfg.block_seconds,
            "threshold": "universal, per-level sigma = median(|d|)/0.6745",
            "shrinkage": "soft",
            "extension": "periodic",
        }),
    });
    AEStream::new(manifest, samples)
}
