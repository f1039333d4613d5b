//! Engine event log records.

use std::fmt;

use serde::Serialize;

use crate::kernel::{Actuator, CallId};
use crate::policy::{Kind, OpId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct DirId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct FocusId(pub u32);

impl fmt::Display for FocusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pending,
    Running,
    Done,
    Failed,
}

impl Status {
    pub fn is_final(self) -> bool {
        matches!(self, Status::Done | Status::Failed)
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub tick: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focus: Option<FocusId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directive: Option<DirId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventBody {
    /// A new focus entered the attention buffer.
    Posted { origin: String },
    Transition { from: Status, to: Status },
    /// ANTE/DO/POST phase entry with the candidate operators found.
    Phase { phase: Kind, candidates: Vec<OpId> },
    /// An operator was expanded for a directive.
    Invoke { op: OpId, phase: Kind },
    Fcn {
        name: String,
        args: Vec<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        call: Option<CallId>,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Speech { text: String },
    Truncated { text: String },
    Actuate { actuator: Actuator, action: String },
    Proximity { range: f64 },
    /// A query directive found its payload in memory.
    Found { nodes: Vec<u32> },
    FocusEnd { status: Status },
    /// Session-level records: what was said to the robot and its reply.
    Utterance { speaker: String, text: String },
    Reply { text: String },
}

impl Event {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

/// Renders events as JSON lines.
pub fn to_jsonl(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_json());
        out.push('\n');
    }
    out
}
