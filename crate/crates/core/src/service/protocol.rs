//! Wire protocol: length-prefixed JSON frames. See `docs/protocol.md`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::interp::Event;
use crate::kernel::{Snapshot, World};
use crate::semnet::NodeRecord;

pub const VERSION: u32 = 1;

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME: usize = 16 << 20;

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Inbound {
    Utterance {
        text: String,
        #[serde(default)]
        speaker: Option<String>,
    },
    Reset,
    SetSeed {
        seed: u64,
    },
    Pause,
    Resume,
    PlaceObject {
        name: String,
        x: f64,
        y: f64,
    },
    DumpMemory,
    ListKb,
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    /// First frame on every connection: speaker names, seed and static arena.
    Hello {
        speakers: Vec<String>,
        seed: u64,
        world: World,
    },
    Snapshot(Snapshot),
    Event(Event),
    Reply {
        text: String,
    },
    Memory {
        nodes: Vec<NodeRecord>,
    },
    Kb {
        text: String,
    },
    Error {
        message: String,
    },
}

/// Every frame carries the protocol version next to the message body.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope<'a> {
    pub v: u32,
    #[serde(flatten)]
    pub msg: &'a Outbound,
}

#[derive(Debug, Deserialize)]
struct InEnvelope {
    v: u32,
    #[serde(flatten)]
    msg: Inbound,
}

pub fn encode(msg: &Outbound) -> Vec<u8> {
    serde_json::to_vec(&Envelope { v: VERSION, msg }).expect("outbound messages serialize")
}

/// Parses an inbound frame body, checking the version.
pub fn decode(body: &[u8]) -> Result<Inbound, String> {
    let env: InEnvelope = serde_json::from_slice(body).map_err(|e| format!("bad message: {e}"))?;
    if env.v != VERSION {
        return Err(format!("unsupported protocol version {}", env.v));
    }
    Ok(env.msg)
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}
