//! Continuous wavelet transform with analytic Morse wavelets.
//!
//! The filter bank is built directly in the frequency domain. For shape
//! `gamma` and time-bandwidth product `P^2`, with `beta = P^2 / gamma`, the
//! mother wavelet is
//!
//! ```text
//! Psi(w) = 2 (e gamma / beta)^(beta / gamma) w^beta exp(-w^gamma),   w > 0
//! Psi(w) = 0,                                                         w <= 0
//! ```
//!
//! which peaks at `w_p = (beta / gamma)^(1 / gamma)` with value exactly 2.
//! Filter `j` evaluates `Psi(w_p f / f_j)` over the FFT bin frequencies `f`,
//! so its peak sits on its center frequency `f_j`. A unit-amplitude tone at
//! `f_j` therefore produces a magnitude of 1 in row `j`.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Morse wavelet family parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorseParams {
    pub gamma: f64,
    /// Time-bandwidth product `P^2`.
    pub p2: f64,
}

impl Default for MorseParams {
    fn default() -> Self {
        Self { gamma: 3.0, p2: 60.0 }
    }
}

impl MorseParams {
    pub fn beta(&self) -> f64 {
        self.p2 / self.gamma
    }

    /// Dimensionless peak frequency `(beta / gamma)^(1 / gamma)`.
    pub fn peak_frequency(&self) -> f64 {
        (self.beta() / self.gamma).powf(1.0 / self.gamma)
    }

    /// Frequency response of the mother wavelet at dimensionless frequency `w`.
    pub fn response(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let (g, b) = (self.gamma, self.beta());
        let log_amp = std::f64::consts::LN_2 + (b / g) * (1.0 + g.ln() - b.ln());
        (log_amp + b * w.ln() - w.powf(g)).exp()
    }
}

/// How center frequencies are laid out between `f_max` and `f_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleLayout {
    /// `voices` filters per octave over `octaves` octaves below Nyquist.
    Voices { voices: usize, octaves: usize },
    /// `filters` filters in total, log-spaced from Nyquist down to
    /// `Nyquist / 2^octaves`, both ends included.
    Total { filters: usize, octaves: usize },
}

impl Default for ScaleLayout {
    fn default() -> Self {
        ScaleLayout::Voices {
            voices: 12,
            octaves: 8,
        }
    }
}

impl ScaleLayout {
    /// The literal "12 filters" reading.
    pub fn literal_twelve(octaves: usize) -> Self {
        ScaleLayout::Total {
            filters: 12,
            octaves,
        }
    }

    fn center_frequencies(&self, f_max: f64) -> Result<Vec<f64>> {
        match *self {
            ScaleLayout::Voices { voices, octaves } => {
                if voices == 0 || octaves == 0 {
                    return Err(Error::InvalidParameter(
                        "voices and octaves must be at least 1".into(),
                    ));
                }
                Ok((0..voices * octaves)
                    .map(|j| f_max * 2f64.powf(-(j as f64) / voices as f64))
                    .collect())
            }
            ScaleLayout::Total { filters, octaves } => {
                if filters < 2 || octaves == 0 {
                    return Err(Error::InvalidParameter(
                        "need at least 2 filters and 1 octave".into(),
                    ));
                }
                let step = octaves as f64 / (filters - 1) as f64;
                Ok((0..filters)
                    .map(|j| f_max * 2f64.powf(-(j as f64) * step))
                    .collect())
            }
        }
    }
}

/// Frequency-domain Morse filters for a fixed FFT length and sample rate.
#[derive(Clone)]
pub struct MorseFilterBank {
    pub params: MorseParams,
    pub layout: ScaleLayout,
    pub sample_rate_hz: f64,
    pub n_fft: usize,
    pub f_max_hz: f64,
    pub f_min_hz: f64,
    pub center_freqs_hz: Vec<f64>,
    /// Row-major `[n_scales x n_fft]`.
    filters: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for MorseFilterBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MorseFilterBank")
            .field("params", &self.params)
            .field("layout", &self.layout)
            .field("sample_rate_hz", &self.sample_rate_hz)
            .field("n_fft", &self.n_fft)
            .field("n_scales", &self.n_scales())
            .finish()
    }
}

/// Frequency in Hz of FFT bin `k`, negative above Nyquist.
pub fn bin_frequency(k: usize, n_fft: usize, sample_rate_hz: f64) -> f64 {
    let k = if 2 * k <= n_fft {
        k as f64
    } else {
        k as f64 - n_fft as f64
    };
    k * sample_rate_hz / n_fft as f64
}

impl MorseFilterBank {
    pub fn new(sample_rate_hz: f64, n_fft: usize, layout: ScaleLayout) -> Result<Self> {
        Self::with_params(MorseParams::default(), sample_rate_hz, n_fft, layout)
    }

    pub fn with_params(
        params: MorseParams,
        sample_rate_hz: f64,
        n_fft: usize,
        layout: ScaleLayout,
    ) -> Result<Self> {
        if n_fft < 2 {
            return Err(Error::InvalidParameter(format!("n_fft must be >= 2, got {n_fft}")));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !(params.gamma > 0.0 && params.p2 > 0.0) {
            return Err(Error::InvalidParameter("gamma and P^2 must be positive".into()));
        }
        let f_max = sample_rate_hz / 2.0;
        let octaves = match layout {
            ScaleLayout::Voices { octaves, .. } | ScaleLayout::Total { octaves, .. } => octaves,
        };
        let centers = layout.center_frequencies(f_max)?;
        let wp = params.peak_frequency();
        let bins: Vec<f64> = (0..n_fft)
            .map(|k| bin_frequency(k, n_fft, sample_rate_hz))
            .collect();
        let mut filters = Vec::with_capacity(centers.len() * n_fft);
        for &fc in &centers {
            filters.extend(bins.iter().map(|&f| params.response(wp * f / fc)));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            params,
            layout,
            sample_rate_hz,
            n_fft,
            f_max_hz: f_max,
            f_min_hz: f_max / 2f64.powi(octaves as i32),
            center_freqs_hz: centers,
            filters,
            fft: planner.plan_fft_forward(n_fft),
            ifft: planner.plan_fft_inverse(n_fft),
        })
    }

    pub fn n_scales(&self) -> usize {
        self.center_freqs_hz.len()
    }

    /// Sampled frequency response of filter `j`, one value per FFT bin.
    pub fn filter(&self, j: usize) -> &[f64] {
        &self.filters[j * self.n_fft..(j + 1) * self.n_fft]
    }

    /// Continuous response of filter `j` at `freq_hz`.
    pub fn response(&self, j: usize, freq_hz: f64) -> f64 {
        let wp = self.params.peak_frequency();
        self.params.response(wp * freq_hz / self.center_freqs_hz[j])
    }

    /// Ratio between neighbouring center frequencies.
    pub fn voice_ratio(&self) -> f64 {
        if self.center_freqs_hz.len() < 2 {
            return 1.0;
        }
        self.center_freqs_hz[0] / self.center_freqs_hz[1]
    }

    pub fn cwt(&self, signal: &[f64]) -> Result<Scalogram> {
        if signal.is_empty() {
            return Err(Error::InvalidParameter("cannot transform an empty signal".into()));
        }
        if signal.len() > self.n_fft {
            return Err(Error::InvalidParameter(format!(
                "signal of {} samples exceeds n_fft = {}",
                signal.len(),
                self.n_fft
            )));
        }
        let n = self.n_fft;
        let len = signal.len();
        let mut spectrum: Vec<Complex64> = signal
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
            .take(n)
            .collect();
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()
            .max(self.ifft.get_inplace_scratch_len())];
        self.fft.process_with_scratch(&mut spectrum, &mut scratch);

        let scale = 1.0 / n as f64;
        let mut magnitudes = Vec::with_capacity(self.n_scales() * len);
        let mut row = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..self.n_scales() {
            for ((r, x), h) in row.iter_mut().zip(&spectrum).zip(self.filter(j)) {
                *r = x * *h;
            }
            self.ifft.process_with_scratch(&mut row, &mut scratch);
            magnitudes.extend(row[..len].iter().map(|c| c.norm() * scale));
        }
        Ok(Scalogram {
            n_scales: self.n_scales(),
            n_time: len,
            magnitudes,
            center_freqs_hz: self.center_freqs_hz.clone(),
        })
    }
}

/// CWT magnitudes, rows ordered from high to low frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    pub n_scales: usize,
    pub n_time: usize,
    /// Row-major `[n_scales x n_time]`.
    pub magnitudes: Vec<f64>,
    pub center_freqs_hz: Vec<f64>,
}

impl Scalogram {
    pub fn from_rows(rows: Vec<Vec<f64>>, center_freqs_hz: Vec<f64>) -> Result<Self> {
        let n_scales = rows.len();
        let n_time = rows.first().map_or(0, Vec::len);
        if n_scales == 0 || n_time == 0 || rows.iter().any(|r| r.len() != n_time) {
            return Err(Error::InvalidParameter("scalogram rows must be non-empty and equal length".into()));
        }
        Ok(Self {
            n_scales,
            n_time,
            magnitudes: rows.into_iter().flatten().collect(),
            center_freqs_hz,
        })
    }

    pub fn get(&self, scale: usize, t: usize) -> f64 {
        self.magnitudes[scale * self.n_time + t]
    }

    pub fn row(&self, scale: usize) -> &[f64] {
        &self.magnitudes[scale * self.n_time..(scale + 1) * self.n_time]
    }

    pub fn row_energy(&self, scale: usize) -> f64 {
        self.row(scale).iter().map(|m| m * m).sum()
    }

    /// Row holding the largest summed magnitude.
    pub fn dominant_row(&self) -> usize {
        (0..self.n_scales)
            .map(|j| (j, self.row(j).iter().sum::<f64>()))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0
    }
}

pub fn build_filter_bank(sample_rate_hz: f64, n_fft: usize, layout: ScaleLayout) -> Result<MorseFilterBank> {
    MorseFilterBank::new(sample_rate_hz, n_fft, layout)
}

pub fn cwt(signal: &[f64], bank: &MorseFilterBank) -> Result<Scalogram> {
    bank.cwt(signal)
}

/// Smallest power of two not below `n`.
pub fn fft_len_for(n: usize) -> usize {
    n.max(2).next_power_of_two()
}
