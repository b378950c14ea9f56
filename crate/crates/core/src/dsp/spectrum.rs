use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{DspError, EegData};

/// Segment length in seconds.
const SEGMENT_SECS: f64 = 2.0;
const PEAK_DB: f64 = 6.0;
const NEIGHBOUR_HZ: f64 = 2.0;
const EXCLUDE_HZ: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdResult {
    pub freqs: Vec<f64>,
    /// One-sided density, µV²/Hz.
    pub power: Vec<f64>,
}

impl PsdResult {
    pub fn resolution(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    pub fn bin(&self, f: f64) -> usize {
        let df = self.resolution();
        ((f / df).round() as usize).min(self.freqs.len() - 1)
    }

    /// Integrated power between `lo` and `hi` Hz inclusive.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let df = self.resolution();
        self.freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p * df)
            .sum()
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate with 2 s Hann segments and 50% overlap.
pub fn welch(x: &[f64], fs: f64) -> Result<PsdResult, DspError> {
    let nseg = (SEGMENT_SECS * fs).round() as usize;
    if x.len() < nseg {
        return Err(DspError::TooShort {
            needed: nseg,
            got: x.len(),
        });
    }
    Ok(periodogram_average(x, fs, nseg, nseg / 2))
}

pub(crate) fn periodogram_average(x: &[f64], fs: f64, nseg: usize, step: usize) -> PsdResult {
    let win = hann(nseg);
    let wss: f64 = win.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(nseg);
    let nbins = nseg / 2 + 1;
    let mut acc = vec![0.0; nbins];
    let mut buf = vec![Complex64::default(); nseg];
    let mut count = 0usize;
    let mut start = 0;
    while start + nseg <= x.len() {
        let seg = &x[start..start + nseg];
        let mean = seg.iter().sum::<f64>() / nseg as f64;
        for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex64::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let scale = 1.0 / (fs * wss * count as f64);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let edge = k == 0 || (nseg.is_multiple_of(2) && k == nbins - 1);
            p * scale * if edge { 1.0 } else { 2.0 }
        })
        .collect();
    PsdResult {
        freqs: (0..nbins).map(|k| k as f64 * fs / nseg as f64).collect(),
        power,
    }
}

/// Sine-taper multitaper estimate over the whole input with `tapers`
/// orthonormal tapers, one-sided density.
pub fn multitaper(x: &[f64], fs: f64, tapers: usize) -> PsdResult {
    let n = x.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let nbins = n / 2 + 1;
    let mean = x.iter().sum::<f64>() / n as f64;
    let norm = (2.0 / (n as f64 + 1.0)).sqrt();
    let mut acc = vec![0.0; nbins];
    let mut buf = vec![Complex64::default(); n];
    for k in 1..=tapers {
        for (i, (b, &v)) in buf.iter_mut().zip(x).enumerate() {
            let w = norm * (PI * k as f64 * (i as f64 + 1.0) / (n as f64 + 1.0)).sin();
            *b = Complex64::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let scale = 1.0 / (fs * tapers.max(1) as f64);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let edge = k == 0 || (n.is_multiple_of(2) && k == nbins - 1);
            p * scale * if edge { 1.0 } else { 2.0 }
        })
        .collect();
    PsdResult {
        freqs: (0..nbins).map(|k| k as f64 * fs / n as f64).collect(),
        power,
    }
}

/// Single Hann-windowed periodogram over the whole input.
pub fn periodogram(x: &[f64], fs: f64) -> PsdResult {
    periodogram_average(x, fs, x.len(), x.len())
}

pub fn welch_psd(data: &EegData, channel: &str) -> Result<PsdResult, DspError> {
    welch(data.channel(channel)?, data.sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakScore {
    pub frequency: f64,
    pub flag: bool,
    /// Target bin over the neighbourhood median, dB.
    pub prominence_db: f64,
}

/// Compares the bin nearest `target` with the median of bins within 2 Hz,
/// leaving out the 0.5 Hz around the target itself.
pub fn psd_peak_score(psd: &PsdResult, target: f64) -> PeakScore {
    let k = psd.bin(target);
    let centre = psd.freqs[k];
    let mut neighbours: Vec<f64> = psd
        .freqs
        .iter()
        .zip(&psd.power)
        .filter(|(f, _)| {
            let d = (**f - centre).abs();
            d > EXCLUDE_HZ + 1e-9 && d <= NEIGHBOUR_HZ + 1e-9
        })
        .map(|(_, p)| *p)
        .collect();
    neighbours.sort_by(f64::total_cmp);
    let median = match neighbours.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => neighbours[n / 2],
        n => 0.5 * (neighbours[n / 2 - 1] + neighbours[n / 2]),
    };
    let prominence_db = 10.0 * (psd.power[k] / median).log10();
    PeakScore {
        frequency: centre,
        flag: prominence_db >= PEAK_DB,
        prominence_db,
    }
}
