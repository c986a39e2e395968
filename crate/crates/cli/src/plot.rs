//! Minimal line plots rendered straight to PNG. No text: axis ranges and
//! series colors are listed in the accompanying markdown.

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};

const WIDTH: u32 = 720;
const HEIGHT: u32 = 440;
const MARGIN: i64 = 40;

pub const PALETTE: [(&str, [u8; 3]); 8] = [
    ("blue", [31, 119, 180]),
    ("orange", [255, 127, 14]),
    ("green", [44, 160, 44]),
    ("red", [214, 39, 40]),
    ("purple", [148, 103, 189]),
    ("brown", [140, 86, 75]),
    ("pink", [227, 119, 194]),
    ("grey", [127, 127, 127]),
];

#[derive(Debug, Clone, Default)]
pub struct Series {
    pub points: Vec<(f64, f64)>,
    /// Symmetric error bar per point.
    pub err: Option<Vec<f64>>,
    pub dashed: bool,
    /// Index into [`PALETTE`].
    pub color: usize,
}

pub struct Plot {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub series: Vec<Series>,
}

impl Plot {
    /// x range spanning every point, y fixed to `y_range`.
    pub fn fit_x(series: Vec<Series>, y_range: (f64, f64)) -> Self {
        let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        let x_range = if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 1.0, lo + 1.0)
        } else {
            (0.0, 1.0)
        };
        Self {
            x_range,
            y_range,
            series,
        }
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let w = (WIDTH as i64 - 2 * MARGIN) as f64;
        let h = (HEIGHT as i64 - 2 * MARGIN) as f64;
        let fx = (x - self.x_range.0) / (self.x_range.1 - self.x_range.0);
        let fy = (y - self.y_range.0) / (self.y_range.1 - self.y_range.0);
        (MARGIN as f64 + fx * w, HEIGHT as f64 - MARGIN as f64 - fy * h)
    }

    pub fn render(&self) -> RgbImage {
        let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
        let grid = Rgb([225, 225, 225]);
        let axis = Rgb([0, 0, 0]);
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let y = self.y_range.0 + t * (self.y_range.1 - self.y_range.0);
            let x = self.x_range.0 + t * (self.x_range.1 - self.x_range.0);
            let (x0, yy) = self.to_px(self.x_range.0, y);
            let (x1, _) = self.to_px(self.x_range.1, y);
            line(&mut img, (x0, yy), (x1, yy), grid, 1, false);
            let (xx, y0) = self.to_px(x, self.y_range.0);
            let (_, y1) = self.to_px(x, self.y_range.1);
            line(&mut img, (xx, y0), (xx, y1), grid, 1, false);
            // ticks
            line(&mut img, (x0 - 5.0, yy), (x0, yy), axis, 1, false);
            line(&mut img, (xx, y0), (xx, y0 + 5.0), axis, 1, false);
        }
        let origin = self.to_px(self.x_range.0, self.y_range.0);
        line(&mut img, origin, self.to_px(self.x_range.1, self.y_range.0), axis, 2, false);
        line(&mut img, origin, self.to_px(self.x_range.0, self.y_range.1), axis, 2, false);

        for s in &self.series {
            let color = Rgb(PALETTE[s.color % PALETTE.len()].1);
            let px: Vec<(f64, f64)> = s.points.iter().map(|&(x, y)| self.to_px(x, y)).collect();
            for w in px.windows(2) {
                line(&mut img, w[0], w[1], color, 2, s.dashed);
            }
            for (j, &p) in px.iter().enumerate() {
                square(&mut img, p, 3, color);
                if let Some(e) = s.err.as_ref().and_then(|e| e.get(j)) {
                    let (x, y) = s.points[j];
                    let top = self.to_px(x, y + e);
                    let bottom = self.to_px(x, y - e);
                    line(&mut img, top, bottom, color, 1, false);
                    line(&mut img, (top.0 - 4.0, top.1), (top.0 + 4.0, top.1), color, 1, false);
                    line(&mut img, (bottom.0 - 4.0, bottom.1), (bottom.0 + 4.0, bottom.1), color, 1, false);
                }
            }
        }
        img
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.render()
            .save_with_format(path, image::ImageFormat::Png)
            .with_context(|| format!("writing {}", path.display()))
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn square(img: &mut RgbImage, (x, y): (f64, f64), r: i64, c: Rgb<u8>) {
    let (x, y) = (x.round() as i64, y.round() as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            put(img, x + dx, y + dy, c);
        }
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>, width: i64, dashed: bool) {
    let len = ((b.0 - a.0).hypot(b.1 - a.1)).ceil().max(1.0) as usize;
    for i in 0..=len {
        if dashed && (i / 6) % 2 == 1 {
            continue;
        }
        let t = i as f64 / len as f64;
        let x = (a.0 + t * (b.0 - a.0)).round() as i64;
        let y = (a.1 + t * (b.1 - a.1)).round() as i64;
        for d in 0..width {
            put(img, x, y + d, c);
            put(img, x + d, y, c);
        }
    }
}
