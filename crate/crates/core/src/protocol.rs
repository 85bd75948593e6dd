//! Wire format for the control server: every message is a 4-byte big-endian
//! length followed by that many bytes of UTF-8 JSON. A `frame` response is
//! additionally followed by `payload_bytes` of raw PNG.

use crate::annotate::Annotation;
use crate::dataset::MetaRecord;
use crate::error::{Error, Result};
use crate::render::Quality;
use crate::scenario::ScenarioConfig;
use crate::world::Weather;
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};

pub const DEFAULT_PORT: u16 = 8000;
/// Largest JSON body accepted; longer bodies are drained and rejected.
pub const MAX_MESSAGE_BYTES: u32 = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMessage {
    pub id: i64,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    SetCameraPose {
        #[serde(alias = "pos")]
        position: [f64; 3],
        yaw: f64,
        pitch: f64,
        roll: f64,
    },
    SetClock {
        seconds: f64,
    },
    SetWeather {
        weather: Weather,
    },
    SetQuality {
        quality: Quality,
    },
    /// Places an object relative to the camera heading, on the ground.
    Spawn {
        class: String,
        forward: f64,
        lateral: f64,
        #[serde(default)]
        heading: f64,
    },
    /// Moves the camera horizontally, keeping altitude and angles.
    Goto {
        x: f64,
        y: f64,
    },
    StartScenario {
        config: Box<ScenarioConfig>,
    },
    RequestFrame,
    Stop,
    Ping,
}

/// Header of a captured frame; `payload_bytes` of PNG follow on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMessage {
    pub frame_id: u64,
    pub meta: MetaRecord,
    pub annotations: Vec<Annotation>,
    pub payload_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMessage {
    /// Correlation id of the command; `null` when the request could not be parsed far enough.
    pub id: Option<i64>,
    #[serde(flatten)]
    pub body: Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Pong,
    Ok,
    Spawned { object_id: u32 },
    Frame(FrameMessage),
    ScenarioComplete { frames: u64 },
    Error { message: String },
}

impl ResponseMessage {
    pub fn new(id: Option<i64>, body: Response) -> Self {
        Self { id, body }
    }

    pub fn error(id: Option<i64>, message: impl Into<String>) -> Self {
        Self::new(
            id,
            Response::Error {
                message: message.into(),
            },
        )
    }
}

pub fn encode<T: Serialize>(msg: &T) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("protocol messages serialize");
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn write_message<W: Write, T: Serialize>(w: &mut W, msg: &T) -> io::Result<()> {
    w.write_all(&encode(msg))
}

/// Outcome of reading one length-prefixed frame.
#[derive(Debug)]
pub enum Frame {
    Body(Vec<u8>),
    /// Length exceeded [`MAX_MESSAGE_BYTES`]; the body was drained.
    Oversized(u32),
    /// Clean end of stream at a frame boundary.
    Eof,
}

pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Frame> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(Frame::Eof),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_MESSAGE_BYTES {
        let drained = io::copy(&mut r.take(len as u64), &mut io::sink())?;
        if drained < len as u64 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        return Ok(Frame::Oversized(len));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(Frame::Body(body))
}

pub fn decode_command(body: &[u8]) -> Result<CommandMessage> {
    serde_json::from_slice(body).map_err(|e| Error::Protocol(e.to_string()))
}

pub fn decode_response(body: &[u8]) -> Result<ResponseMessage> {
    serde_json::from_slice(body).map_err(|e| Error::Protocol(e.to_string()))
}

/// Best-effort correlation id from a body that failed to decode.
pub fn salvage_id(body: &[u8]) -> Option<i64> {
    serde_json::from_slice::<serde_json::Value>(body)
        .ok()?
        .get("id")?
        .as_i64()
}

/// Reads one response and, for frames, its PNG payload.
pub fn read_response<R: Read>(r: &mut R) -> Result<Option<(ResponseMessage, Vec<u8>)>> {
    let body = match read_frame(r)? {
        Frame::Body(b) => b,
        Frame::Eof => return Ok(None),
        Frame::Oversized(n) => {
            return Err(Error::Protocol(format!("oversized response ({n} bytes)")))
        }
    };
    let msg = decode_response(&body)?;
    let mut payload = Vec::new();
    if let Response::Frame(f) = &msg.body {
        payload = vec![0u8; f.payload_bytes as usize];
        r.read_exact(&mut payload)?;
    }
    Ok(Some((msg, payload)))
}
