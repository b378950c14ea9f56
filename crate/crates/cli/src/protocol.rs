//! Wire format between the game service and its display client. One JSON
//! document per WebSocket text frame.

use gwap_core::game::Pos;
use gwap_core::minigames::Side;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Hello,
    TimePing,
    TimePong,
    State,
    Move,
    MoveResult,
    CheatReport,
    MinigameStart,
    StimulusFlipReport,
    Response,
    MinigameResult,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub seq: u64,
    /// Sender's clock.
    pub t_ns: i64,
    pub payload: Value,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("{kind:?} payload: {source}")]
    Payload {
        kind: MessageType,
        source: serde_json::Error,
    },
    #[error("{0:?} is not accepted from the client")]
    Unexpected(MessageType),
    #[error("binary frames are not part of the protocol")]
    Binary,
}

impl Envelope {
    pub fn new(kind: MessageType, seq: u64, t_ns: i64, payload: impl Serialize) -> Self {
        Self {
            kind,
            seq,
            t_ns,
            payload: serde_json::to_value(payload).expect("payload serializes"),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }

    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, ProtocolError> {
        serde_json::from_value(self.payload.clone()).map_err(|source| ProtocolError::Payload {
            kind: self.kind,
            source,
        })
    }
}

/// Ping carries only `t_send`; the pong echoes it and adds the responder's
/// receive and send stamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSync {
    pub t_send: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_remote_recv: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_remote_send: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRequest {
    pub a: Pos,
    pub b: Pos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub trial: u32,
    /// Display clock, one per schedule item.
    pub scheduled_ns: Vec<i64>,
    pub actual_ns: Vec<i64>,
}

impl FlipReport {
    /// Flips that landed more than half a frame late.
    pub fn missed(&self, frame_ns: i64) -> usize {
        self.scheduled_ns
            .iter()
            .zip(&self.actual_ns)
            .filter(|(s, a)| *a - *s > frame_ns / 2)
            .count()
    }
}

/// A click, key press or grip squeeze during a mini-game. The envelope's
/// `t_ns` is the press time on the display clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseInput {
    pub trial: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub box_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

/// Sent by the client when a mini-game finished on screen. Imagery trials
/// may carry per-window decisions from an external classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinigameDone {
    pub trial: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_verdicts: Option<Vec<bool>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn envelope_round_trip() {
        let e = Envelope::new(
            MessageType::MoveResult,
            7,
            1_000,
            json!({"valid": true, "points": 30}),
        );
        let back = Envelope::parse(&e.to_text()).unwrap();
        assert_eq!(back, e);
        assert!(e.to_text().contains(r#""type":"move_result""#));
    }

    #[test]
    fn every_type_has_its_wire_name() {
        for (t, name) in [
            (MessageType::Hello, "hello"),
            (MessageType::TimePing, "time_ping"),
            (MessageType::TimePong, "time_pong"),
            (MessageType::State, "state"),
            (MessageType::Move, "move"),
            (MessageType::MoveResult, "move_result"),
            (MessageType::CheatReport, "cheat_report"),
            (MessageType::MinigameStart, "minigame_start"),
            (MessageType::StimulusFlipReport, "stimulus_flip_report"),
            (MessageType::Response, "response"),
            (MessageType::MinigameResult, "minigame_result"),
            (MessageType::End, "end"),
        ] {
            assert_eq!(serde_json::to_value(t).unwrap(), json!(name));
        }
    }

    #[test]
    fn rejects_unknown_type_and_missing_fields() {
        assert!(Envelope::parse(r#"{"type":"teleport","seq":1,"t_ns":0,"payload":{}}"#).is_err());
        assert!(Envelope::parse(r#"{"type":"move","seq":1,"payload":{}}"#).is_err());
        assert!(Envelope::parse("not json").is_err());
    }

    #[test]
    fn move_payload_decodes() {
        let e = Envelope::parse(
            r#"{"type":"move","seq":3,"t_ns":5,"payload":{"a":{"row":0,"col":0},"b":{"row":0,"col":1}}}"#,
        )
        .unwrap();
        let m: MoveRequest = e.payload_as().unwrap();
        assert_eq!(m.b, Pos::new(0, 1));
        let bad = Envelope::new(MessageType::Move, 4, 5, json!({"a": 1}));
        assert!(matches!(
            bad.payload_as::<MoveRequest>(),
            Err(ProtocolError::Payload { .. })
        ));
    }

    #[test]
    fn flip_report_counts_late_frames() {
        let r = FlipReport {
            trial: 1,
            scheduled_ns: vec![0, 100, 200],
            actual_ns: vec![0, 140, 260],
        };
        assert_eq!(r.missed(100), 1);
    }
}
