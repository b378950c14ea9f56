use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{DspError, EegData};

/// Length of the odd-reflection padding, in periods of the low cut-off.
const PAD_PERIODS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub low_cut: f64,
    pub high_cut: f64,
    /// Butterworth order of each of the high- and low-pass sections.
    pub order: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            low_cut: 1.0,
            high_cut: 40.0,
            order: 4,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, fs: f64) -> Result<(), DspError> {
        if !(self.low_cut > 0.0 && self.low_cut < self.high_cut && self.high_cut < fs / 2.0) {
            return Err(DspError::Filter(format!(
                "need 0 < {} < {} < {}",
                self.low_cut,
                self.high_cut,
                fs / 2.0
            )));
        }
        if self.order == 0 || !self.order.is_multiple_of(2) {
            return Err(DspError::Filter(format!(
                "order {} must be even and positive",
                self.order
            )));
        }
        Ok(())
    }

    /// Cascade of second-order sections: high-pass stages then low-pass.
    pub fn sections(&self, fs: f64) -> Result<Vec<Biquad>, DspError> {
        self.validate(fs)?;
        let qs = butterworth_qs(self.order);
        let mut out: Vec<Biquad> = qs
            .iter()
            .map(|&q| Biquad::highpass(self.low_cut, q, fs))
            .collect();
        out.extend(qs.iter().map(|&q| Biquad::lowpass(self.high_cut, q, fs)));
        Ok(out)
    }
}

/// Pole-pair quality factors of an even-order Butterworth prototype.
fn butterworth_qs(order: usize) -> Vec<f64> {
    (0..order / 2)
        .map(|k| 1.0 / (2.0 * ((2 * k + 1) as f64 * PI / (2 * order) as f64).sin()))
        .collect()
}

/// Normalized second-order section, transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn lowpass(fc: f64, q: f64, fs: f64) -> Self {
        let w = 2.0 * PI * fc / fs;
        let (cw, alpha) = (w.cos(), w.sin() / (2.0 * q));
        let a0 = 1.0 + alpha;
        let b1 = (1.0 - cw) / a0;
        Self {
            b: [b1 / 2.0, b1, b1 / 2.0],
            a: [-2.0 * cw / a0, (1.0 - alpha) / a0],
        }
    }

    pub fn highpass(fc: f64, q: f64, fs: f64) -> Self {
        let w = 2.0 * PI * fc / fs;
        let (cw, alpha) = (w.cos(), w.sin() / (2.0 * q));
        let a0 = 1.0 + alpha;
        let b0 = (1.0 + cw) / 2.0 / a0;
        Self {
            b: [b0, -2.0 * b0, b0],
            a: [-2.0 * cw / a0, (1.0 - alpha) / a0],
        }
    }

    pub fn apply(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + z1;
            z1 = self.b[1] * *v - self.a[0] * y + z2;
            z2 = self.b[2] * *v - self.a[1] * y;
            *v = y;
        }
    }

    /// Magnitude response at `f` Hz.
    pub fn gain(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let z1 = (w.cos(), -w.sin());
        let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * z1.0 + self.b[2] * z2.0,
            self.b[1] * z1.1 + self.b[2] * z2.1,
        );
        let den = (
            1.0 + self.a[0] * z1.0 + self.a[1] * z2.0,
            self.a[0] * z1.1 + self.a[1] * z2.1,
        );
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

/// Forward-backward filtering with odd-reflection padding at both ends.
pub fn filtfilt(sections: &[Biquad], x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = pad.min(n - 1);
    let mut buf = Vec::with_capacity(n + 2 * pad);
    buf.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    buf.extend_from_slice(x);
    buf.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    for s in sections {
        s.apply(&mut buf);
    }
    buf.reverse();
    for s in sections {
        s.apply(&mut buf);
    }
    buf.reverse();
    buf[pad..pad + n].to_vec()
}

/// Zero-phase band-pass of every channel.
pub fn bandpass_filter(data: &EegData, spec: &FilterSpec) -> Result<EegData, DspError> {
    let fs = data.sample_rate;
    let sections = spec.sections(fs)?;
    let pad = (PAD_PERIODS * fs / spec.low_cut).ceil() as usize;
    Ok(EegData {
        labels: data.labels.clone(),
        sample_rate: fs,
        channels: data
            .channels
            .iter()
            .map(|c| filtfilt(&sections, c, pad))
            .collect(),
    })
}
