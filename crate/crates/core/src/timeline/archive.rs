use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    ClockOffset, MarkerEvent, Samples, StreamContent, StreamHeader, TimelineError, Timestamp,
};

pub const META_FILE: &str = "meta.json";
pub const EVENTS_FILE: &str = "events.jsonl";

/// Contents of `meta.json`; field order here is the on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub config: serde_json::Value,
    pub streams: Vec<StreamHeader>,
    /// Keyed by source clock; remote = host + offset.
    pub clock_offsets: BTreeMap<String, ClockOffset>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionArchive {
    pub session_id: String,
    pub config: serde_json::Value,
    pub streams: Vec<StreamHeader>,
    pub clock_offsets: BTreeMap<String, ClockOffset>,
    /// Source-clock stamps, ordered by corrected host time.
    pub events: Vec<MarkerEvent>,
    pub samples: BTreeMap<String, Samples>,
}

impl SessionArchive {
    pub fn header(&self, name: &str) -> Option<&StreamHeader> {
        self.streams.iter().find(|h| h.name == name)
    }

    /// Event time on the host clock.
    pub fn host_time(&self, e: &MarkerEvent) -> Timestamp {
        self.header(&e.stream)
            .and_then(|h| self.clock_offsets.get(&h.source_clock))
            .map_or(e.t_ns, |o| o.to_host(e.t_ns))
    }

    /// Events restamped on the host clock.
    pub fn corrected_events(&self) -> Vec<MarkerEvent> {
        self.events
            .iter()
            .map(|e| MarkerEvent {
                t_ns: self.host_time(e),
                ..e.clone()
            })
            .collect()
    }

    pub(super) fn sort_events(&mut self) {
        let mut keyed: Vec<(Timestamp, MarkerEvent)> = std::mem::take(&mut self.events)
            .into_iter()
            .map(|e| (self.host_time(&e), e))
            .collect();
        keyed.sort_by_key(|k| k.0);
        self.events = keyed.into_iter().map(|k| k.1).collect();
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TimelineError + '_ {
    move |source| TimelineError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Writes `meta.json`, `events.jsonl` and one `<stream>.f32` per sample
/// stream. Output depends only on the archive contents.
pub fn write_session_archive(dir: &Path, archive: &SessionArchive) -> Result<(), TimelineError> {
    for h in &archive.streams {
        h.validate()?;
    }
    for e in &archive.events {
        if archive.header(&e.stream).is_none() {
            return Err(TimelineError::UnknownStream(e.stream.clone()));
        }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut sorted = archive.clone();
    sorted.sort_events();
    for h in &mut sorted.streams {
        if let Some(s) = archive.samples.get(&h.name) {
            h.frame_count = Some(s.frames() as u64);
        }
    }

    let meta = SessionMeta {
        session_id: sorted.session_id.clone(),
        config: sorted.config.clone(),
        streams: sorted.streams.clone(),
        clock_offsets: sorted.clock_offsets.clone(),
    };
    let path = dir.join(META_FILE);
    let mut bytes = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(io_err(&path))?;

    let path = dir.join(EVENTS_FILE);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    for e in &sorted.events {
        serde_json::to_writer(&mut w, e).expect("event serializes");
        w.write_all(b"\n").map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    for h in sorted
        .streams
        .iter()
        .filter(|h| h.content == StreamContent::Samples)
    {
        let path = blob_path(dir, &h.name);
        let data = archive
            .samples
            .get(&h.name)
            .map_or(&[][..], |s| &s.data[..]);
        let mut bytes = Vec::with_capacity(data.len() * 4);
        for x in data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    Ok(())
}

fn blob_path(dir: &Path, stream: &str) -> PathBuf {
    dir.join(format!("{stream}.f32"))
}

/// Byte offset of a serde_json error position within `text`.
fn byte_offset(text: &[u8], line: usize, column: usize) -> u64 {
    let mut offset = 0usize;
    for (i, l) in text.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)) as u64;
        }
        offset += l.len() + 1;
    }
    text.len() as u64
}

pub fn read_session_archive(dir: &Path) -> Result<SessionArchive, TimelineError> {
    let path = dir.join(META_FILE);
    let text = fs::read(&path).map_err(io_err(&path))?;
    let meta: SessionMeta = serde_json::from_slice(&text).map_err(|e| TimelineError::Parse {
        offset: byte_offset(&text, e.line(), e.column()),
        file: path.clone(),
        message: e.to_string(),
    })?;
    for h in &meta.streams {
        h.validate().map_err(|e| TimelineError::Parse {
            file: path.clone(),
            offset: 0,
            message: e.to_string(),
        })?;
    }

    let path = dir.join(EVENTS_FILE);
    let text = fs::read(&path).map_err(io_err(&path))?;
    let mut events = Vec::new();
    let mut start = 0usize;
    for line in text.split_inclusive(|&b| b == b'\n') {
        let body = line.strip_suffix(b"\n").unwrap_or(line);
        if !body.is_empty() {
            let e: MarkerEvent =
                serde_json::from_slice(body).map_err(|err| TimelineError::Parse {
                    file: path.clone(),
                    offset: (start + err.column().saturating_sub(1)) as u64,
                    message: err.to_string(),
                })?;
            if !meta.streams.iter().any(|h| h.name == e.stream) {
                return Err(TimelineError::Parse {
                    file: path.clone(),
                    offset: start as u64,
                    message: format!("event on undeclared stream `{}`", e.stream),
                });
            }
            events.push(e);
        }
        start += line.len();
    }

    let mut samples = BTreeMap::new();
    for h in meta
        .streams
        .iter()
        .filter(|h| h.content == StreamContent::Samples)
    {
        let path = blob_path(dir, &h.name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let frame_bytes = h.channels() * 4;
        let whole = bytes.len() - bytes.len() % frame_bytes;
        if whole != bytes.len() {
            return Err(TimelineError::Parse {
                file: path,
                offset: whole as u64,
                message: format!(
                    "truncated frame: {} trailing bytes, frames are {frame_bytes} bytes",
                    bytes.len() - whole
                ),
            });
        }
        if let Some(n) = h.frame_count {
            let expected = n as usize * frame_bytes;
            if expected != bytes.len() {
                return Err(TimelineError::Parse {
                    file: path,
                    offset: expected.min(bytes.len()) as u64,
                    message: format!(
                        "expected {expected} bytes ({n} frames), found {}",
                        bytes.len()
                    ),
                });
            }
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        samples.insert(
            h.name.clone(),
            Samples {
                channels: h.channels(),
                data,
            },
        );
    }

    let mut archive = SessionArchive {
        session_id: meta.session_id,
        config: meta.config,
        streams: meta.streams,
        clock_offsets: meta.clock_offsets,
        events,
        samples,
    };
    archive.sort_events();
    Ok(archive)
}
