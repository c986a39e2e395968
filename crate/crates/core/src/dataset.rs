//! On-disk dataset formats shared with external trainers.
//!
//! * image manifests: JSON lines, one [`DatasetEntry`] per scalogram PNG;
//! * feature tables: raw `f32` little-endian rows of pooled scalogram
//!   magnitudes, `feature_row` in the manifest points into it;
//! * segment stores: `index.jsonl` of [`SegmentRecord`] plus a concatenated
//!   `samples.f32le` payload.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiments::SplitItem;
use crate::segmentation::CycleSegment;
use crate::{Error, Result};

/// One line of an image manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    /// PNG path relative to the manifest's directory.
    pub path: String,
    pub class: usize,
    pub campaign: String,
    pub sensor: String,
    pub cycle_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_row: Option<usize>,
}

impl SplitItem for DatasetEntry {
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

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::json(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push(b'\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| Error::json(path, e))
}

/// Hex SHA-256 of the JSON serialization, truncated to 16 characters.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).unwrap_or_default();
    let digest = Sha256::digest(&bytes);
    format!("{digest:x}")[..16].to_string()
}

fn f32_bytes(values: impl Iterator<Item = f32>) -> Vec<u8> {
    values.flat_map(f32::to_le_bytes).collect()
}

fn f32_from_bytes(path: &Path, bytes: &[u8]) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Manifest(format!(
            "{} is not a whole number of f32 values",
            path.display()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Header stored next to a feature table as `<table>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTableHeader {
    pub dim: usize,
    pub rows: usize,
    pub encoding: String,
    pub description: String,
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    pub values: Vec<f32>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn push(&mut self, row: &[f64]) -> Result<usize> {
        if row.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.values.extend(row.iter().map(|&v| v as f32));
        Ok(self.rows() - 1)
    }

    pub fn row(&self, i: usize) -> Option<Vec<f64>> {
        (i < self.rows()).then(|| {
            self.values[i * self.dim..(i + 1) * self.dim]
                .iter()
                .map(|&v| v as f64)
                .collect()
        })
    }

    /// Writes `<path>` (payload) and `<path>.json` (header).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, f32_bytes(self.values.iter().copied())).map_err(|e| Error::io(path, e))?;
        write_json(
            header_path(path),
            &FeatureTableHeader {
                dim: self.dim,
                rows: self.rows(),
                encoding: "f32le-v1".into(),
                description: "16x16 average-pooled CWT magnitudes, row-major, high to low frequency".into(),
            },
        )
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let header: FeatureTableHeader = read_json(header_path(path))?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let values = f32_from_bytes(path, &bytes)?;
        if values.len() != header.dim * header.rows {
            return Err(Error::LengthMismatch {
                expected: header.dim * header.rows,
                actual: values.len(),
            });
        }
        Ok(Self {
            dim: header.dim,
            values,
        })
    }
}

fn header_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

/// Index line of a segment store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub class_index: usize,
    pub campaign_id: String,
    pub sensor_id: String,
    pub cycle_index: usize,
    pub start_sample: usize,
    pub sample_rate_hz: f64,
    /// Offset into `samples.f32le`, in samples.
    pub offset: usize,
    pub len: usize,
    pub windowed: bool,
}

pub const SEGMENT_INDEX: &str = "index.jsonl";
pub const SEGMENT_PAYLOAD: &str = "samples.f32le";

pub fn write_segments(
    dir: impl AsRef<Path>,
    segments: &[CycleSegment],
    sample_rate_hz: f64,
    windowed: bool,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut offset = 0;
    let mut index = Vec::with_capacity(segments.len());
    for s in segments {
        index.push(SegmentRecord {
            class_index: s.class_index,
            campaign_id: s.campaign_id.clone(),
            sensor_id: s.sensor_id.clone(),
            cycle_index: s.cycle_index,
            start_sample: s.start_sample,
            sample_rate_hz,
            offset,
            len: s.len(),
            windowed,
        });
        offset += s.len();
    }
    let payload_path = dir.join(SEGMENT_PAYLOAD);
    let bytes = f32_bytes(segments.iter().flat_map(|s| s.samples.iter().map(|&v| v as f32)));
    fs::write(&payload_path, bytes).map_err(|e| Error::io(&payload_path, e))?;
    write_jsonl(dir.join(SEGMENT_INDEX), &index)
}

pub fn read_segments(dir: impl AsRef<Path>) -> Result<(Vec<SegmentRecord>, Vec<CycleSegment>)> {
    let dir = dir.as_ref();
    let index: Vec<SegmentRecord> = read_jsonl(dir.join(SEGMENT_INDEX))?;
    let payload_path = dir.join(SEGMENT_PAYLOAD);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let samples = f32_from_bytes(&payload_path, &bytes)?;
    let segments = index
        .iter()
        .map(|r| {
            let end = r.offset + r.len;
            if end > samples.len() {
                return Err(Error::LengthMismatch {
                    expected: end,
                    actual: samples.len(),
                });
            }
            Ok(CycleSegment {
                samples: samples[r.offset..end].iter().map(|&v| v as f64).collect(),
                class_index: r.class_index,
                campaign_id: r.campaign_id.clone(),
                sensor_id: r.sensor_id.clone(),
                cycle_index: r.cycle_index,
                start_sample: r.start_sample,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((index, segments))
}
