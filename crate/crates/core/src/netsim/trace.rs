use std::fmt;

use crate::crypto::Digest;
use crate::protocol::{Channel, MsgType, RejectReason};

/// What happened to one transmitted frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Accepted,
    Rejected(RejectReason),
    DroppedOutOfRange,
    /// Swallowed by an on-path adversary (and typically replaced).
    AdversaryDropped,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Accepted => f.write_str("Accepted"),
            Outcome::Rejected(r) => write!(f, "Rejected:{}", r.name()),
            Outcome::DroppedOutOfRange => f.write_str("DroppedOutOfRange"),
            Outcome::AdversaryDropped => f.write_str("AdversaryDropped"),
        }
    }
}

/// Who put the frame bytes on the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Honest,
    /// Injected, replayed or altered by the adversary.
    Adversary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time_s: f64,
    pub src: String,
    pub dst: String,
    pub frame_hash: Digest,
    pub outcome: Outcome,
    pub size: usize,
    /// `None` when the bytes do not parse.
    pub channel: Option<Channel>,
    pub msg_type: Option<MsgType>,
    pub origin: Origin,
}

impl TraceRecord {
    /// `time_s<TAB>src<TAB>dst<TAB>sha256(frame)<TAB>outcome`
    pub fn to_line(&self) -> String {
        format!(
            "{:.9}\t{}\t{}\t{}\t{}",
            self.time_s,
            self.src,
            self.dst,
            self.frame_hash.to_hex(),
            self.outcome
        )
    }
}

/// Append-only record of every frame outcome, in execution order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One line per record, each newline-terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }
}
