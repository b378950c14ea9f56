//! Multi-stream recording on a single host clock, round-trip clock offset
//! estimation for remote sources, and the on-disk session archive.

mod align;
mod archive;
mod clock;
mod recorder;

pub use align::{align_events_to_samples, Alignment};
pub use archive::{read_session_archive, write_session_archive, SessionArchive, SessionMeta};
pub use clock::{estimate_clock_offset, ClockOffset, RoundTrip};
pub use recorder::Recorder;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TimelineError {
    #[error("stream `{0}` is not registered")]
    UnknownStream(String),
    #[error("stream `{0}` is already registered")]
    DuplicateStream(String),
    #[error("invalid stream header `{name}`: {reason}")]
    InvalidHeader { name: String, reason: String },
    #[error("event kind `{0}` is not in the marker vocabulary")]
    UnknownKind(String),
    #[error("{got} samples is not a whole number of {channels}-channel frames for `{stream}`")]
    FrameShape {
        stream: String,
        channels: usize,
        got: usize,
    },
    #[error("clock offset needs at least 3 round trips, got {0}")]
    TooFewRoundTrips(usize),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: byte {offset}: {message}", file.display())]
    Parse {
        file: PathBuf,
        offset: u64,
        message: String,
    },
}

/// Nanoseconds on a monotonic clock with an arbitrary epoch.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_secs(s: f64) -> Self {
        Timestamp((s * 1e9).round() as i64)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 * 1e-9
    }
}

impl std::ops::Add<i64> for Timestamp {
    type Output = Timestamp;
    fn add(self, ns: i64) -> Timestamp {
        Timestamp(self.0 + ns)
    }
}

impl std::ops::Sub for Timestamp {
    type Output = i64;
    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 - rhs.0
    }
}

/// Marker kinds accepted by the recorder.
pub const EVENT_KINDS: &[&str] = &[
    "move",
    "match",
    "injection",
    "cheat_report",
    "stimulus_onset",
    "response",
    "attack",
    "timeout",
    "minigame_start",
    "minigame_end",
    "mode_start",
    "mode_end",
    "flip_report",
    "time_sync",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerEvent {
    /// Stamped on the clock of the stream's source.
    pub t_ns: Timestamp,
    pub stream: String,
    pub kind: String,
    pub payload: serde_json::Value,
}

impl MarkerEvent {
    pub fn new(t_ns: i64, stream: &str, kind: &str, payload: serde_json::Value) -> Self {
        Self {
            t_ns: Timestamp(t_ns),
            stream: stream.to_owned(),
            kind: kind.to_owned(),
            payload,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamContent {
    Markers,
    Samples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub name: String,
    pub content: StreamContent,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channel_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
    pub source_clock: String,
    /// Time of the first frame, source clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_ns: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_count: Option<u64>,
}

pub const HOST_CLOCK: &str = "host";

impl StreamHeader {
    pub fn markers(name: &str, source_clock: &str) -> Self {
        Self {
            name: name.to_owned(),
            content: StreamContent::Markers,
            channel_labels: Vec::new(),
            sample_rate: None,
            source_clock: source_clock.to_owned(),
            start_ns: None,
            frame_count: None,
        }
    }

    pub fn samples(name: &str, labels: &[&str], rate: f64, start_ns: i64) -> Self {
        Self {
            name: name.to_owned(),
            content: StreamContent::Samples,
            channel_labels: labels.iter().map(|s| (*s).to_owned()).collect(),
            sample_rate: Some(rate),
            source_clock: HOST_CLOCK.to_owned(),
            start_ns: Some(Timestamp(start_ns)),
            frame_count: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.channel_labels.len()
    }

    pub fn validate(&self) -> Result<(), TimelineError> {
        let bad = |reason: &str| {
            Err(TimelineError::InvalidHeader {
                name: self.name.clone(),
                reason: reason.to_owned(),
            })
        };
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return bad("names must be non-empty [A-Za-z0-9_-]");
        }
        if self.content == StreamContent::Samples {
            if self.channel_labels.is_empty() {
                return bad("sample streams need at least one channel");
            }
            match self.sample_rate {
                Some(r) if r > 0.0 && r.is_finite() => {}
                _ => return bad("sample streams need a positive rate"),
            }
            if self.start_ns.is_none() {
                return bad("sample streams need a start time");
            }
        }
        Ok(())
    }
}

/// Frame-major sample block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Samples {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            data: Vec::new(),
        }
    }

    pub fn frames(&self) -> usize {
        self.data.len().checked_div(self.channels).unwrap_or(0)
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    /// Copies one channel out as f64.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&x| x as f64)
            .collect()
    }
}
