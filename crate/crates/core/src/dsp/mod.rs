//! Analysis chain: zero-phase band-pass, ICA blink removal, epoching and
//! averaging, Welch spectra with peak scoring, and the band-power LDA used
//! for motor imagery.

mod epochs;
mod filter;
mod ica;
mod mi;
mod spectrum;

pub use epochs::{extract_epochs, grand_average, Average, EpochSet, EpochWindow};
pub use filter::{bandpass_filter, filtfilt, Biquad, FilterSpec};
pub use ica::{fast_ica, remove_blink_component, BlinkRemoval, IcaConfig, IcaModel};
pub use mi::{
    band_features, mi_classify, mi_train, mi_train_features, mirror, MiDecision, MiModel,
    MI_FEATURES,
};
pub use spectrum::{periodogram, psd_peak_score, welch, welch_psd, PeakScore, PsdResult};

use thiserror::Error;

use crate::synth::MultichannelRecording;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid filter: {0}")]
    Filter(String),
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("no usable epochs ({excluded} excluded at the recording edges)")]
    NoEpochs { excluded: usize },
    #[error("condition `{condition}` has {got} epochs, need at least {needed}")]
    TooFewEpochs {
        condition: String,
        got: usize,
        needed: usize,
    },
    #[error("window is {got} samples, expected {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("covariance is singular after regularization")]
    SingularCovariance,
}

/// Channel-major signals in µV.
#[derive(Debug, Clone, PartialEq)]
pub struct EegData {
    pub labels: Vec<String>,
    pub sample_rate: f64,
    pub channels: Vec<Vec<f64>>,
}

impl EegData {
    pub fn new(labels: Vec<String>, sample_rate: f64, channels: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(labels.len(), channels.len());
        Self {
            labels,
            sample_rate,
            channels,
        }
    }

    /// De-interleaves frame-major samples.
    pub fn from_frames(labels: Vec<String>, sample_rate: f64, frames: &[f32]) -> Self {
        let nch = labels.len();
        let n = frames.len() / nch;
        let mut channels = vec![Vec::with_capacity(n); nch];
        for f in frames.chunks_exact(nch) {
            for (c, &x) in f.iter().enumerate() {
                channels[c].push(x as f64);
            }
        }
        Self::new(labels, sample_rate, channels)
    }

    pub fn from_recording(rec: &MultichannelRecording) -> Self {
        Self::from_frames(rec.labels.clone(), rec.sample_rate, &rec.data)
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, label: &str) -> Result<usize, DspError> {
        self.labels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(label))
            .ok_or_else(|| DspError::UnknownChannel(label.to_owned()))
    }

    pub fn channel(&self, label: &str) -> Result<&[f64], DspError> {
        Ok(&self.channels[self.index(label)?])
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> EegData {
        EegData {
            labels: self.labels.clone(),
            sample_rate: self.sample_rate,
            channels: self
                .channels
                .iter()
                .map(|c| c[start..start + len].to_vec())
                .collect(),
        }
    }
}
