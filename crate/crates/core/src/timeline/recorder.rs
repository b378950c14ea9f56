use std::collections::BTreeMap;
use std::time::Instant;

use super::{
    ClockOffset, MarkerEvent, Samples, SessionArchive, StreamContent, StreamHeader, TimelineError,
    Timestamp, EVENT_KINDS,
};

/// In-memory session recorder. Events keep arrival order; callers that share
/// a recorder across tasks wrap it in a mutex, which serializes appends.
#[derive(Debug)]
pub struct Recorder {
    epoch: Instant,
    headers: Vec<StreamHeader>,
    events: Vec<MarkerEvent>,
    samples: BTreeMap<String, Samples>,
    clock_offsets: BTreeMap<String, ClockOffset>,
}

impl Default for Recorder {
    fn default() -> Self {
        Self::new()
    }
}

impl Recorder {
    pub fn new() -> Self {
        Self {
            epoch: Instant::now(),
            headers: Vec::new(),
            events: Vec::new(),
            samples: BTreeMap::new(),
            clock_offsets: BTreeMap::new(),
        }
    }

    /// Host clock reading.
    pub fn now(&self) -> Timestamp {
        Timestamp(self.epoch.elapsed().as_nanos() as i64)
    }

    pub fn register_stream(&mut self, header: StreamHeader) -> Result<(), TimelineError> {
        header.validate()?;
        if self.header(&header.name).is_some() {
            return Err(TimelineError::DuplicateStream(header.name));
        }
        if header.content == StreamContent::Samples {
            self.samples
                .insert(header.name.clone(), Samples::new(header.channels()));
        }
        self.headers.push(header);
        Ok(())
    }

    pub fn header(&self, name: &str) -> Option<&StreamHeader> {
        self.headers.iter().find(|h| h.name == name)
    }

    pub fn headers(&self) -> &[StreamHeader] {
        &self.headers
    }

    pub fn append_event(&mut self, event: MarkerEvent) -> Result<(), TimelineError> {
        if self.header(&event.stream).is_none() {
            return Err(TimelineError::UnknownStream(event.stream));
        }
        if !EVENT_KINDS.contains(&event.kind.as_str()) {
            return Err(TimelineError::UnknownKind(event.kind));
        }
        self.events.push(event);
        Ok(())
    }

    /// Appends with the given source timestamp, or the host clock if absent.
    pub fn append(
        &mut self,
        stream: &str,
        kind: &str,
        payload: serde_json::Value,
        t: Option<Timestamp>,
    ) -> Result<Timestamp, TimelineError> {
        let t = t.unwrap_or_else(|| self.now());
        self.append_event(MarkerEvent {
            t_ns: t,
            stream: stream.to_owned(),
            kind: kind.to_owned(),
            payload,
        })?;
        Ok(t)
    }

    pub fn push_frames(&mut self, stream: &str, data: &[f32]) -> Result<(), TimelineError> {
        let block = self
            .samples
            .get_mut(stream)
            .ok_or_else(|| TimelineError::UnknownStream(stream.to_owned()))?;
        if !data.len().is_multiple_of(block.channels) {
            return Err(TimelineError::FrameShape {
                stream: stream.to_owned(),
                channels: block.channels,
                got: data.len(),
            });
        }
        block.data.extend_from_slice(data);
        Ok(())
    }

    pub fn set_clock_offset(&mut self, source_clock: &str, offset: ClockOffset) {
        self.clock_offsets.insert(source_clock.to_owned(), offset);
    }

    pub fn events(&self) -> &[MarkerEvent] {
        &self.events
    }

    pub fn events_of<'a>(&'a self, stream: &'a str) -> impl Iterator<Item = &'a MarkerEvent> + 'a {
        self.events.iter().filter(move |e| e.stream == stream)
    }

    pub fn into_archive(self, session_id: &str, config: serde_json::Value) -> SessionArchive {
        let mut streams = self.headers;
        for h in &mut streams {
            if let Some(s) = self.samples.get(&h.name) {
                h.frame_count = Some(s.frames() as u64);
            }
        }
        let mut archive = SessionArchive {
            session_id: session_id.to_owned(),
            config,
            streams,
            clock_offsets: self.clock_offsets,
            events: self.events,
            samples: self.samples,
        };
        archive.sort_events();
        archive
    }
}
