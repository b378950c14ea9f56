//! Synthetic multichannel EEG locked to session events, and the behavioral
//! model of the simulated player.

mod montage;
mod player;
mod synthesizer;
mod templates;

pub use montage::{channel_index, position, spatial_weights, MONTAGE};
pub use player::SimulatedPlayer;
pub use synthesizer::{synthesize_recording, MultichannelRecording, Synthesizer};
pub use templates::{make_template, Component, ErpTemplate, TemplateKind, TEMPLATE_SPAN};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minigames::Side;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("unknown template kind `{0}`")]
    UnknownTemplate(String),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sample_rate: f64,
    pub channels: Vec<String>,
    /// Standard deviation of the pink background, µV.
    pub noise_sigma: f64,
    /// Peak-equivalent amplitude of occipital alpha, µV.
    pub alpha_amp: f64,
    pub alpha_freq: f64,
    /// Half width at half maximum of the alpha resonance, Hz.
    pub alpha_hwhm: f64,
    pub mu_amp: f64,
    pub mu_freq: f64,
    /// Mu amplitude factor over the contralateral hemisphere during movement.
    pub erd_factor: f64,
    pub blink_rate_per_min: f64,
    pub blink_amp: f64,
    pub ssvep_amp: f64,
    pub ssvep_harmonic_amp: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 256.0,
            channels: MONTAGE.iter().map(|c| (*c).to_owned()).collect(),
            noise_sigma: 10.0,
            alpha_amp: 5.0,
            alpha_freq: 10.0,
            alpha_hwhm: 1.5,
            mu_amp: 4.0,
            mu_freq: 10.0,
            erd_factor: 0.5,
            blink_rate_per_min: 12.0,
            blink_amp: 100.0,
            ssvep_amp: 2.0,
            ssvep_harmonic_amp: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut bad = Vec::new();
        if !(self.sample_rate >= 80.0) {
            bad.push(format!(
                "sample_rate = {} (must be >= 80)",
                self.sample_rate
            ));
        }
        if self.channels.is_empty() {
            bad.push("no channels".into());
        }
        for (i, c) in self.channels.iter().enumerate() {
            if channel_index(c).is_none() {
                bad.push(format!("channel `{c}` is not in the montage"));
            }
            if self.channels[..i].contains(c) {
                bad.push(format!("channel `{c}` listed twice"));
            }
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("alpha_amp", self.alpha_amp),
            ("mu_amp", self.mu_amp),
            ("blink_rate_per_min", self.blink_rate_per_min),
            ("blink_amp", self.blink_amp),
            ("ssvep_amp", self.ssvep_amp),
            ("ssvep_harmonic_amp", self.ssvep_harmonic_amp),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{name} = {v} (must be finite and >= 0)"));
            }
        }
        if !(self.alpha_hwhm > 0.0) {
            bad.push(format!("alpha_hwhm = {} (must be > 0)", self.alpha_hwhm));
        }
        if !(0.0..=1.0).contains(&self.erd_factor) {
            bad.push(format!(
                "erd_factor = {} (must be in [0, 1])",
                self.erd_factor
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(SynthError::Config(bad))
        }
    }

    pub fn channel_labels(&self) -> Vec<&str> {
        self.channels.iter().map(String::as_str).collect()
    }
}

/// Something that leaves a trace in the EEG. `t` is seconds from the start
/// of the recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEvent {
    pub t: f64,
    pub kind: SynthEventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SynthEventKind {
    /// A flashed image; targets additionally evoke a P300.
    VisualOnset { target: bool },
    /// Flicker of the attended box. Toggle times are relative to `t`.
    SsvepFlash { toggles: Vec<f64>, duration: f64 },
    /// A substituted move the player noticed.
    ErrorNoticed,
    /// Real or imagined hand movement for `duration` seconds.
    MotorWindow { side: Side, duration: f64 },
}

impl SynthEvent {
    pub fn new(t: f64, kind: SynthEventKind) -> Self {
        Self { t, kind }
    }

    /// Seconds during which the event contributes.
    pub fn span(&self) -> f64 {
        match &self.kind {
            SynthEventKind::VisualOnset { .. } | SynthEventKind::ErrorNoticed => TEMPLATE_SPAN,
            SynthEventKind::SsvepFlash { duration, .. }
            | SynthEventKind::MotorWindow { duration, .. } => *duration,
        }
    }
}
