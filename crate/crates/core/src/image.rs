//! Scalogram to 224x224 RGB image conversion.
//!
//! Magnitudes are resized bilinearly, min-max normalized, mapped to a
//! 256-entry LUT index and colored through the versioned blue-green-yellow
//! colormap shipped in `data/colormap_bgy_v1.csv`.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::cwt::Scalogram;
use crate::{Error, Result};

pub const IMAGE_SIZE: usize = 224;

pub const COLORMAP_VERSION: &str = "bgy-v1";

const COLORMAP_CSV: &str = include_str!("../data/colormap_bgy_v1.csv");

/// 256 RGB entries, index 0 for the lowest magnitude.
pub fn colormap() -> &'static [[u8; 3]; 256] {
    static LUT: OnceLock<[[u8; 3]; 256]> = OnceLock::new();
    LUT.get_or_init(|| parse_colormap(COLORMAP_CSV).expect("embedded colormap is valid"))
}

pub fn parse_colormap(text: &str) -> Result<[[u8; 3]; 256]> {
    let mut lut = [[0u8; 3]; 256];
    let mut seen = 0usize;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("bad colormap line `{line}`")))
        };
        if fields.len() != 4 {
            return Err(Error::InvalidParameter(format!("bad colormap line `{line}`")));
        }
        let idx = parse(fields[0])?;
        if idx != seen || idx > 255 {
            return Err(Error::InvalidParameter(format!("colormap index {idx} out of order")));
        }
        for c in 0..3 {
            let v = parse(fields[c + 1])?;
            lut[idx][c] = u8::try_from(v)
                .map_err(|_| Error::InvalidParameter(format!("colormap value {v} > 255")))?;
        }
        seen += 1;
    }
    if seen != 256 {
        return Err(Error::InvalidParameter(format!("colormap has {seen} entries, expected 256")));
    }
    Ok(lut)
}

/// Range used to map magnitudes onto LUT indices.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    /// Each image uses its own min and max.
    #[default]
    PerImage,
    /// A shared range, e.g. computed over a whole dataset.
    Fixed { min: f64, max: f64 },
}

/// Bilinear resize of a row-major `[rows x cols]` matrix, half-pixel centers.
pub fn resize_bilinear(src: &[f64], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f64> {
    assert_eq!(src.len(), rows * cols);
    let axis = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|o| {
                let pos = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5)
                    .clamp(0.0, (n_in - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let ys = axis(out_rows, rows);
    let xs = axis(out_cols, cols);
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let a = src[y0 * cols + x0] * (1.0 - fx) + src[y0 * cols + x1] * fx;
            let b = src[y1 * cols + x0] * (1.0 - fx) + src[y1 * cols + x1] * fx;
            out.push(a * (1.0 - fy) + b * fy);
        }
    }
    out
}

/// LUT indices (row-major, `IMAGE_SIZE` square) plus the resized magnitudes they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexImage {
    pub resized: Vec<f64>,
    pub indices: Vec<u8>,
}

pub fn render_indices(scalogram: &Scalogram, norm: Normalization) -> IndexImage {
    let resized = resize_bilinear(
        &scalogram.magnitudes,
        scalogram.n_scales,
        scalogram.n_time,
        IMAGE_SIZE,
        IMAGE_SIZE,
    );
    let (lo, hi) = match norm {
        Normalization::PerImage => resized
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        Normalization::Fixed { min, max } => (min, max),
    };
    let span = hi - lo;
    let indices = resized
        .iter()
        .map(|&v| {
            if !(span > 0.0) {
                0
            } else {
                (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8
            }
        })
        .collect();
    IndexImage { resized, indices }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub campaign: String,
    pub sensor: String,
    pub cycle_index: usize,
}

/// 224x224x3 RGB scalogram image. Rows run from high (top) to low frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalogramImage {
    pub pixels: Vec<u8>,
    pub label: usize,
    pub provenance: Provenance,
}

impl ScalogramImage {
    pub fn shape(&self) -> (usize, usize, usize) {
        (IMAGE_SIZE, IMAGE_SIZE, 3)
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let img = image::RgbImage::from_raw(IMAGE_SIZE as u32, IMAGE_SIZE as u32, self.pixels.clone())
            .ok_or_else(|| Error::Image("pixel buffer has the wrong size".into()))?;
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }
}

pub fn to_image(
    scalogram: &Scalogram,
    norm: Normalization,
    label: usize,
    provenance: Provenance,
) -> ScalogramImage {
    let lut = colormap();
    let idx = render_indices(scalogram, norm);
    let pixels = idx.indices.iter().flat_map(|&i| lut[i as usize]).collect();
    ScalogramImage {
        pixels,
        label,
        provenance,
    }
}
