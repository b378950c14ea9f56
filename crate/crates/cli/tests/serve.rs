use std::path::Path;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use gwap_cli::protocol::{Envelope, MessageType, MoveRequest, TimeSync};
use gwap_cli::{serve_game, ServeOutcome};
use gwap_core::game::{Board, GameMode};
use gwap_core::session::{RoundSpec, SessionConfig};
use gwap_core::timeline::read_session_archive;
use serde_json::json;
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

const WAIT: Duration = Duration::from_secs(10);

fn config() -> SessionConfig {
    SessionConfig {
        rounds: vec![RoundSpec::new(GameMode::Normal, 600.0)],
        ..SessionConfig::default()
    }
}

async fn start(record: &Path) -> (Client, JoinHandle<anyhow::Result<ServeOutcome>>) {
    start_with(record, config()).await
}

async fn start_with(
    record: &Path,
    cfg: SessionConfig,
) -> (Client, JoinHandle<anyhow::Result<ServeOutcome>>) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let record = record.to_owned();
    let server = tokio::spawn(async move { serve_game(listener, cfg, &record).await });
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}"))
        .await
        .unwrap();
    (ws, server)
}

async fn send(ws: &mut Client, kind: MessageType, seq: u64, payload: serde_json::Value) {
    let env = Envelope::new(kind, seq, 42, payload);
    ws.send(Message::text(env.to_text())).await.unwrap();
}

async fn expect_any(ws: &mut Client) -> Envelope {
    tokio::time::timeout(WAIT, async {
        loop {
            match ws.next().await.expect("connection open").unwrap() {
                Message::Text(t) => return Envelope::parse(t.as_str()).unwrap(),
                Message::Close(f) => panic!("closed: {f:?}"),
                _ => {}
            }
        }
    })
    .await
    .expect("message in time")
}

/// Reads until a message of `kind` arrives, skipping everything else.
async fn expect(ws: &mut Client, kind: MessageType) -> Envelope {
    tokio::time::timeout(WAIT, async {
        loop {
            match ws.next().await.expect("connection open").unwrap() {
                Message::Text(t) => {
                    let env = Envelope::parse(t.as_str()).unwrap();
                    if env.kind == kind {
                        return env;
                    }
                }
                Message::Close(f) => panic!("closed while waiting for {kind:?}: {f:?}"),
                _ => {}
            }
        }
    })
    .await
    .expect("message in time")
}

#[tokio::test]
async fn connect_sends_hello_with_config_and_streams() {
    let tmp = tempfile::tempdir().unwrap();
    let (mut ws, server) = start(&tmp.path().join("rec")).await;
    let first = match ws.next().await.unwrap().unwrap() {
        Message::Text(t) => Envelope::parse(t.as_str()).unwrap(),
        other => panic!("unexpected {other:?}"),
    };
    assert_eq!(first.kind, MessageType::Hello);
    assert_eq!(first.payload["config"]["game"]["board_rows"], json!(8));
    let streams: Vec<&str> = first.payload["streams"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(streams, ["game", "ui"]);
    // the handshake starts right away
    expect(&mut ws, MessageType::TimePing).await;
    send(&mut ws, MessageType::End, 1, json!({})).await;
    let out = server.await.unwrap().unwrap();
    assert_eq!(out.end_reason, "client_end");
}

#[tokio::test]
async fn time_ping_is_echoed_with_server_stamps() {
    let tmp = tempfile::tempdir().unwrap();
    let (mut ws, server) = start(&tmp.path().join("rec")).await;
    send(&mut ws, MessageType::TimePing, 1, json!({"t_send": 777})).await;
    let pong = expect(&mut ws, MessageType::TimePong).await;
    let p: TimeSync = pong.payload_as().unwrap();
    assert_eq!(p.t_send, 777);
    let (r, s) = (p.t_remote_recv.unwrap(), p.t_remote_send.unwrap());
    assert!(r > 0 && s >= r);
    send(&mut ws, MessageType::End, 2, json!({})).await;
    server.await.unwrap().unwrap();
}

#[tokio::test]
async fn move_returns_resolution_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let record = tmp.path().join("rec");
    let (mut ws, server) = start(&record).await;
    let hello = expect(&mut ws, MessageType::Hello).await;
    let mut pings = Vec::new();
    let state = loop {
        let env = expect_any(&mut ws).await;
        match env.kind {
            MessageType::TimePing => pings.push(env.payload_as::<TimeSync>().unwrap()),
            MessageType::State => break env,
            _ => {}
        }
    };
    let p = &state.payload;
    let cells: Vec<u8> = serde_json::from_value(p["cells"].clone()).unwrap();
    let rows = p["rows"].as_u64().unwrap() as usize;
    let cols = p["cols"].as_u64().unwrap() as usize;
    let kinds = hello.payload["config"]["game"]["gem_kinds"]
        .as_u64()
        .unwrap() as u8;
    let board = Board::from_cells(rows, cols, kinds, cells, 0).unwrap();
    let (a, b) = board.valid_swaps()[0];

    // answer the server's pings so the recording gets a clock offset
    assert!(pings.len() >= 3);
    for (seq, t) in (1..).zip(&pings) {
        send(
            &mut ws,
            MessageType::TimePong,
            seq,
            json!({"t_send": t.t_send, "t_remote_recv": 1_000, "t_remote_send": 1_010}),
        )
        .await;
    }
    send(
        &mut ws,
        MessageType::Move,
        10,
        serde_json::to_value(MoveRequest { a, b }).unwrap(),
    )
    .await;
    let result = expect(&mut ws, MessageType::MoveResult).await;
    assert_eq!(result.payload["accepted"], json!(true));
    let mv = &result.payload["move"];
    assert_eq!(mv["a"], serde_json::to_value(a).unwrap());
    assert!(mv["valid"].is_boolean());
    assert!(mv["cascades"].as_u64().is_some());

    send(&mut ws, MessageType::End, 11, json!({})).await;
    let end = expect(&mut ws, MessageType::End).await;
    assert_eq!(end.payload["reason"], json!("client_end"));
    let out = server.await.unwrap().unwrap();
    let archive = read_session_archive(&out.record).unwrap();
    assert!(archive
        .events
        .iter()
        .any(|e| e.stream == "game" && e.kind == "move"));
    assert!(archive
        .events
        .iter()
        .any(|e| e.stream == "ui" && e.kind == "move"));
    assert!(archive.clock_offsets.contains_key("ui"));
}

#[tokio::test]
async fn protocol_violation_closes_with_code_and_still_records() {
    let tmp = tempfile::tempdir().unwrap();
    let record = tmp.path().join("rec");
    let (mut ws, server) = start(&record).await;
    ws.send(Message::text(
        r#"{"type":"teleport","seq":1,"t_ns":0,"payload":{}}"#,
    ))
    .await
    .unwrap();
    let code = tokio::time::timeout(WAIT, async {
        loop {
            match ws.next().await {
                Some(Ok(Message::Close(Some(f)))) => return Some(f.code),
                Some(Ok(_)) => continue,
                _ => return None,
            }
        }
    })
    .await
    .unwrap();
    assert_eq!(code, Some(CloseCode::Protocol));
    server.await.unwrap().unwrap();
    let archive = read_session_archive(&record).unwrap();
    assert!(archive.events.iter().any(
        |e| e.kind == "mode_end" && e.payload["detail"].as_str().unwrap().contains("malformed")
    ));
}

#[tokio::test]
async fn disconnect_still_finalizes_recording() {
    let tmp = tempfile::tempdir().unwrap();
    let record = tmp.path().join("rec");
    let (mut ws, server) = start(&record).await;
    expect(&mut ws, MessageType::Hello).await;
    drop(ws);
    let out = server.await.unwrap().unwrap();
    assert_eq!(out.end_reason, "disconnected");
    assert!(read_session_archive(&record).is_ok());
}

fn board_of(state: &Envelope, kinds: u8) -> Board {
    let p = &state.payload;
    Board::from_cells(
        p["rows"].as_u64().unwrap() as usize,
        p["cols"].as_u64().unwrap() as usize,
        kinds,
        serde_json::from_value(p["cells"].clone()).unwrap(),
        0,
    )
    .unwrap()
}

#[tokio::test]
async fn minigame_round_trip_over_the_socket() {
    let tmp = tempfile::tempdir().unwrap();
    let record = tmp.path().join("rec");
    let mut cfg = config();
    cfg.game.minigame_period = 2;
    cfg.minigame_gap = 0.0;
    let (mut ws, server) = start_with(&record, cfg).await;
    let hello = expect(&mut ws, MessageType::Hello).await;
    let kinds = hello.payload["config"]["game"]["gem_kinds"]
        .as_u64()
        .unwrap() as u8;
    let mut state = expect(&mut ws, MessageType::State).await;
    let mut seq = 0;
    let start = loop {
        let (a, b) = board_of(&state, kinds).valid_swaps()[0];
        seq += 1;
        send(
            &mut ws,
            MessageType::Move,
            seq,
            serde_json::to_value(MoveRequest { a, b }).unwrap(),
        )
        .await;
        expect(&mut ws, MessageType::MoveResult).await;
        let next = loop {
            let env = expect_any(&mut ws).await;
            if matches!(env.kind, MessageType::State | MessageType::MinigameStart) {
                break env;
            }
        };
        if next.kind == MessageType::MinigameStart {
            break next;
        }
        state = next;
    };
    let p = &start.payload;
    let trial = p["trial"].as_u64().unwrap();
    let items = p["schedule"]["items"].as_array().unwrap().len();
    assert!(items > 0);
    assert!(p["t0_ns"].as_i64().is_some());
    let flips: Vec<i64> = (0..items as i64).map(|i| 1_000_000 + i * 1_000).collect();
    seq += 1;
    send(
        &mut ws,
        MessageType::StimulusFlipReport,
        seq,
        json!({"trial": trial, "scheduled_ns": flips, "actual_ns": flips}),
    )
    .await;
    seq += 1;
    send(
        &mut ws,
        MessageType::Response,
        seq,
        json!({"trial": trial, "side": "left", "box": 0, "window": 0}),
    )
    .await;
    seq += 1;
    send(
        &mut ws,
        MessageType::MinigameResult,
        seq,
        json!({"trial": trial}),
    )
    .await;
    let result = expect(&mut ws, MessageType::MinigameResult).await;
    assert_eq!(result.payload["trial"], json!(trial));
    assert_eq!(result.payload["task"], p["task"]);
    assert!(result.payload["powerups"].is_array());

    send(&mut ws, MessageType::End, seq + 1, json!({})).await;
    server.await.unwrap().unwrap();
    let archive = read_session_archive(&record).unwrap();
    let onsets = archive
        .events
        .iter()
        .filter(|e| e.stream == "ui" && e.kind == "stimulus_onset")
        .count();
    assert_eq!(onsets, items);
    for kind in ["minigame_start", "minigame_end"] {
        assert!(archive
            .events
            .iter()
            .any(|e| e.stream == "game" && e.kind == kind));
    }
}
