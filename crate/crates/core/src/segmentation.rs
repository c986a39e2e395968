//! Cycle segmentation driven by the vibrometer channel.
//!
//! Each positive-to-negative zero crossing of the vibrometer marks the start
//! of a vibration cycle; the AE samples between two consecutive crossings
//! form one [`CycleSegment`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ingest::AEStream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSegment {
    #[serde(skip)]
    pub samples: Vec<f64>,
    pub class_index: usize,
    pub campaign_id: String,
    pub sensor_id: String,
    pub cycle_index: usize,
    pub start_sample: usize,
}

impl CycleSegment {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Indices `i` with `signal[i - 1] > 0` and `signal[i] <= 0`, ascending.
pub fn zero_crossings<T: Copy + Into<f64>>(signal: &[T]) -> Vec<usize> {
    signal
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].into() > 0.0 && w[1].into() <= 0.0)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Slices `ae` into one segment per pair of consecutive vibrometer crossings.
///
/// The partial cycles before the first and after the last crossing are
/// dropped, as are cycles that do not fit entirely inside a single torque
/// interval of the AE manifest.
pub fn segment_cycles(ae: &AEStream, vibro: &AEStream) -> Result<Vec<CycleSegment>> {
    if ae.len() != vibro.len() {
        return Err(Error::InvalidParameter(format!(
            "AE stream has {} samples, vibrometer has {}",
            ae.len(),
            vibro.len()
        )));
    }
    if ae.manifest.sample_rate_hz != vibro.manifest.sample_rate_hz {
        return Err(Error::InvalidParameter(format!(
            "sample rates differ: AE {} Hz, vibrometer {} Hz",
            ae.manifest.sample_rate_hz, vibro.manifest.sample_rate_hz
        )));
    }
    let crossings = zero_crossings(&vibro.samples);
    Ok(segments_from_crossings(ae, &crossings))
}

pub(crate) fn segments_from_crossings(ae: &AEStream, crossings: &[usize]) -> Vec<CycleSegment> {
    crossings
        .windows(2)
        .enumerate()
        .filter_map(|(cycle_index, w)| {
            let (start, end) = (w[0], w[1]);
            let iv = ae.manifest.class_at(start)?;
            if end > iv.end_sample {
                return None;
            }
            Some(CycleSegment {
                samples: ae.samples[start..end].iter().map(|&s| s as f64).collect(),
                class_index: iv.class_index,
                campaign_id: ae.manifest.campaign_id.clone(),
                sensor_id: ae.manifest.sensor_id.clone(),
                cycle_index,
                start_sample: start,
            })
        })
        .collect()
}

/// Symmetric Hann window of length `n`, `0.5 (1 - cos(2 pi i / (n - 1)))`.
pub fn hanning(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| {
            // the two endpoints are exact zeros
            if i == 0 || i == n - 1 {
                0.0
            } else {
                0.5 * (1.0 - (2.0 * PI * i as f64 / denom).cos())
            }
        })
        .collect()
}

pub fn apply_hanning(mut segment: CycleSegment) -> Result<CycleSegment> {
    let n = segment.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "Hanning window needs at least 2 samples, segment has {n}"
        )));
    }
    for (s, w) in segment.samples.iter_mut().zip(hanning(n)) {
        *s *= w;
    }
    Ok(segment)
}
