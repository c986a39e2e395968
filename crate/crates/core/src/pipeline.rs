//! Stream pair to per-cycle features and images.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cwt::{fft_len_for, MorseFilterBank, ScaleLayout};
use crate::denoise::{denoise_stream, DenoiseConfig};
use crate::experiments::SplitItem;
use crate::image::{to_image, Normalization, Provenance, ScalogramImage};
use crate::ingest::AEStream;
use crate::segmentation::{apply_hanning, segment_cycles, CycleSegment};
use crate::trainer::{featurize, Example};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub denoise: DenoiseConfig,
    pub window: bool,
    pub layout: ScaleLayout,
    /// FFT length; the next power of two above the longest segment when unset.
    pub n_fft: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            denoise: DenoiseConfig::with_level(0),
            window: true,
            layout: ScaleLayout::default(),
            n_fft: None,
        }
    }
}

/// Pooled features of one cycle plus its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub class: usize,
    pub campaign: String,
    pub sensor: String,
    pub cycle_index: usize,
    pub features: Vec<f64>,
}

impl FeatureRecord {
    pub fn example(&self) -> Example {
        Example {
            features: self.features.clone(),
            class: self.class,
        }
    }
}

impl SplitItem for FeatureRecord {
    fn class(&self) -> usize {
        self.class
    }

    fn campaign(&self) -> &str {
        &self.campaign
    }

    fn sensor(&self) -> &str {
        &self.sensor
    }
}

/// Denoise the AE channel, cut it into cycles and window each cycle.
pub fn segment_stream(ae: &AEStream, vibro: &AEStream, cfg: &PipelineConfig) -> Result<Vec<CycleSegment>> {
    let cleaned;
    let ae = if cfg.denoise.level > 0 {
        cleaned = denoise_stream(ae, &cfg.denoise)?;
        &cleaned
    } else {
        ae
    };
    let segments = segment_cycles(ae, vibro)?;
    if cfg.window {
        segments.into_iter().map(apply_hanning).collect()
    } else {
        Ok(segments)
    }
}

/// Filter bank sized for the longest segment.
pub fn bank_for(segments: &[CycleSegment], sample_rate_hz: f64, cfg: &PipelineConfig) -> Result<MorseFilterBank> {
    let longest = segments.iter().map(CycleSegment::len).max().unwrap_or(0);
    if longest == 0 {
        return Err(Error::InvalidParameter("no segments to transform".into()));
    }
    let n_fft = cfg.n_fft.unwrap_or_else(|| fft_len_for(longest));
    MorseFilterBank::new(sample_rate_hz, n_fft, cfg.layout)
}

/// Scalogram features of every segment, in input order.
pub fn featurize_segments(segments: &[CycleSegment], bank: &MorseFilterBank) -> Result<Vec<FeatureRecord>> {
    segments
        .par_iter()
        .map(|s| {
            let scalogram = bank.cwt(&s.samples)?;
            Ok(FeatureRecord {
                class: s.class_index,
                campaign: s.campaign_id.clone(),
                sensor: s.sensor_id.clone(),
                cycle_index: s.cycle_index,
                features: featurize(&scalogram),
            })
        })
        .collect()
}

/// Scalogram image and pooled features of every segment, in input order.
pub fn render_segments(
    segments: &[CycleSegment],
    bank: &MorseFilterBank,
    norm: Normalization,
) -> Result<Vec<(ScalogramImage, Vec<f64>)>> {
    segments
        .par_iter()
        .map(|s| {
            let scalogram = bank.cwt(&s.samples)?;
            let img = to_image(
                &scalogram,
                norm,
                s.class_index,
                Provenance {
                    campaign: s.campaign_id.clone(),
                    sensor: s.sensor_id.clone(),
                    cycle_index: s.cycle_index,
                },
            );
            Ok((img, featurize(&scalogram)))
        })
        .collect()
}

pub fn stream_features(ae: &AEStream, vibro: &AEStream, cfg: &PipelineConfig) -> Result<Vec<FeatureRecord>> {
    let segments = segment_stream(ae, vibro, cfg)?;
    let bank = bank_for(&segments, ae.manifest.sample_rate_hz, cfg)?;
    featurize_segments(&segments, &bank)
}
