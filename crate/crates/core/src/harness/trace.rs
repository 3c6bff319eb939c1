//! Trace records and their line format.
//!
//! A trace file starts with a versioned header line, followed by a column
//! line and one tab-separated record per event. Absent fields are `-`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::crypto::Digest;
use crate::msg::MsgKind;
use crate::NodeId;

pub const TRACE_VERSION: &str = "toytrace v1";
pub const COLUMNS: &str =
    "time\tnode\tkind\tround\tepoch\tdepth\tpeer\tmsg\tid\tval\tdigest\tkey\tbytes\tsent_at";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[allow(non_camel_case_types, clippy::upper_case_acronyms)]
pub enum Kind {
    SEND,
    BCAST,
    DELIVER,
    DROP,
    TIMER,
    SIGN,
    VERIFY,
    TENTATIVE_DECIDE,
    DEFINITE_DECIDE,
    RECOVERY_START,
    RECOVERY_END,
    WRB_RETURN,
    OBBC_DECIDE,
    BBC_DECIDE,
    RB_DELIVER,
    AB_DELIVER,
    PROOF_IGNORED,
    SUSPECT,
    CRASH,
    CORRUPT,
    WARN,
    END,
}

impl Kind {
    const ALL: [Kind; 22] = [
        Kind::SEND,
        Kind::BCAST,
        Kind::DELIVER,
        Kind::DROP,
        Kind::TIMER,
        Kind::SIGN,
        Kind::VERIFY,
        Kind::TENTATIVE_DECIDE,
        Kind::DEFINITE_DECIDE,
        Kind::RECOVERY_START,
        Kind::RECOVERY_END,
        Kind::WRB_RETURN,
        Kind::OBBC_DECIDE,
        Kind::BBC_DECIDE,
        Kind::RB_DELIVER,
        Kind::AB_DELIVER,
        Kind::PROOF_IGNORED,
        Kind::SUSPECT,
        Kind::CRASH,
        Kind::CORRUPT,
        Kind::WARN,
        Kind::END,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Kind::SEND => "SEND",
            Kind::BCAST => "BCAST",
            Kind::DELIVER => "DELIVER",
            Kind::DROP => "DROP",
            Kind::TIMER => "TIMER",
            Kind::SIGN => "SIGN",
            Kind::VERIFY => "VERIFY",
            Kind::TENTATIVE_DECIDE => "TENTATIVE_DECIDE",
            Kind::DEFINITE_DECIDE => "DEFINITE_DECIDE",
            Kind::RECOVERY_START => "RECOVERY_START",
            Kind::RECOVERY_END => "RECOVERY_END",
            Kind::WRB_RETURN => "WRB_RETURN",
            Kind::OBBC_DECIDE => "OBBC_DECIDE",
            Kind::BBC_DECIDE => "BBC_DECIDE",
            Kind::RB_DELIVER => "RB_DELIVER",
            Kind::AB_DELIVER => "AB_DELIVER",
            Kind::PROOF_IGNORED => "PROOF_IGNORED",
            Kind::SUSPECT => "SUSPECT",
            Kind::CRASH => "CRASH",
            Kind::CORRUPT => "CORRUPT",
            Kind::WARN => "WARN",
            Kind::END => "END",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.iter().copied().find(|k| k.name() == s)
    }
}

/// Why a run stopped; carried in the `val` field of the END record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndReason {
    TargetReached = 0,
    Quiescent = 1,
    TimeLimit = 2,
}

impl EndReason {
    pub fn from_val(v: i64) -> Option<EndReason> {
        match v {
            0 => Some(EndReason::TargetReached),
            1 => Some(EndReason::Quiescent),
            2 => Some(EndReason::TimeLimit),
            _ => None,
        }
    }
}

/// One trace record. Field meaning depends on `kind`:
///
/// * SEND/DELIVER/DROP: `peer` is the other endpoint, `id` the envelope id,
///   `bytes` the wire size, `val` 1 when the message carries a block body.
/// * TENTATIVE_DECIDE: `peer` is the proposer, `val` the tx count, `id` 1 when
///   installed by recovery.
/// * WRB_RETURN: `val` 1 for a message, 0 for nil; `id` is the attempt.
/// * OBBC_DECIDE / BBC_DECIDE: `val` is the bit; for OBBC `id` 1 marks the fast path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: u64,
    pub node: NodeId,
    pub kind: Kind,
    pub round: Option<u64>,
    pub epoch: u64,
    pub depth: u32,
    pub peer: Option<NodeId>,
    pub msg: Option<MsgKind>,
    pub id: Option<u64>,
    pub val: Option<i64>,
    pub digest: Option<Digest>,
    pub key: String,
    pub bytes: u64,
    pub sent_at: Option<u64>,
}

impl TraceEvent {
    pub fn new(time: u64, node: NodeId, kind: Kind) -> TraceEvent {
        TraceEvent {
            time,
            node,
            kind,
            round: None,
            epoch: 0,
            depth: 0,
            peer: None,
            msg: None,
            id: None,
            val: None,
            digest: None,
            key: String::new(),
            bytes: 0,
            sent_at: None,
        }
    }

    pub fn round(mut self, r: u64) -> Self {
        self.round = Some(r);
        self
    }
    pub fn epoch(mut self, e: u64) -> Self {
        self.epoch = e;
        self
    }
    pub fn depth(mut self, d: u32) -> Self {
        self.depth = d;
        self
    }
    pub fn peer(mut self, p: NodeId) -> Self {
        self.peer = Some(p);
        self
    }
    pub fn msg(mut self, m: MsgKind) -> Self {
        self.msg = Some(m);
        self
    }
    pub fn id(mut self, i: u64) -> Self {
        self.id = Some(i);
        self
    }
    pub fn val(mut self, v: i64) -> Self {
        self.val = Some(v);
        self
    }
    pub fn digest(mut self, d: Digest) -> Self {
        self.digest = Some(d);
        self
    }
    pub fn key(mut self, k: impl Into<String>) -> Self {
        self.key = k.into();
        self
    }
    pub fn bytes(mut self, b: u64) -> Self {
        self.bytes = b;
        self
    }
    pub fn sent_at(mut self, t: u64) -> Self {
        self.sent_at = Some(t);
        self
    }

    pub fn to_line(&self) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref()
                .map_or_else(|| "-".to_string(), |x| x.to_string())
        }
        let mut s = String::with_capacity(96);
        let _ = write!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.time,
            self.node,
            self.kind.name(),
            opt(&self.round),
            self.epoch,
            self.depth,
            opt(&self.peer),
            self.msg.map_or("-", |m| m.name()),
            opt(&self.id),
            opt(&self.val),
            self.digest.map_or_else(|| "-".to_string(), |d| d.to_hex()),
            if self.key.is_empty() { "-" } else { &self.key },
            self.bytes,
            opt(&self.sent_at),
        );
        s
    }

    pub fn parse_line(line: &str) -> Result<TraceEvent, TraceParseError> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 14 {
            return Err(TraceParseError::Columns(cols.len()));
        }
        fn num<T: std::str::FromStr>(s: &str) -> Result<T, TraceParseError> {
            s.parse().map_err(|_| TraceParseError::Field(s.to_string()))
        }
        fn opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>, TraceParseError> {
            if s == "-" {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        }
        Ok(TraceEvent {
            time: num(cols[0])?,
            node: num(cols[1])?,
            kind: Kind::parse(cols[2]).ok_or_else(|| TraceParseError::Field(cols[2].into()))?,
            round: opt(cols[3])?,
            epoch: num(cols[4])?,
            depth: num(cols[5])?,
            peer: opt(cols[6])?,
            msg: match cols[7] {
                "-" => None,
                s => Some(MsgKind::parse(s).ok_or_else(|| TraceParseError::Field(s.into()))?),
            },
            id: opt(cols[8])?,
            val: opt(cols[9])?,
            digest: match cols[10] {
                "-" => None,
                s => Some(Digest::from_hex(s).ok_or_else(|| TraceParseError::Field(s.into()))?),
            },
            key: if cols[11] == "-" {
                String::new()
            } else {
                cols[11].to_string()
            },
            bytes: num(cols[12])?,
            sent_at: opt(cols[13])?,
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceParseError {
    #[error("missing or unsupported header line")]
    Header,
    #[error("expected 14 columns, got {0}")]
    Columns(usize),
    #[error("bad field `{0}`")]
    Field(String),
}

/// Run-level facts the oracle needs alongside the events.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TraceMeta {
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    pub gst: u64,
    pub delta: u64,
    pub beyond_f: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Trace {
    pub meta: TraceMeta,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new(meta: TraceMeta) -> Trace {
        Trace {
            meta,
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }

    pub fn header_line(&self) -> String {
        let m = &self.meta;
        format!(
            "# {TRACE_VERSION} n={} f={} seed={} gst={} delta={} beyond_f={}",
            m.n, m.f, m.seed, m.gst, m.delta, m.beyond_f
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 80 + 200);
        out.push_str(&self.header_line());
        out.push('\n');
        out.push_str(COLUMNS);
        out.push('\n');
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceParseError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(TraceParseError::Header)?;
        let rest = header
            .strip_prefix(&format!("# {TRACE_VERSION}"))
            .ok_or(TraceParseError::Header)?;
        let mut meta = TraceMeta::default();
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or(TraceParseError::Header)?;
            let bad = || TraceParseError::Field(kv.to_string());
            match k {
                "n" => meta.n = v.parse().map_err(|_| bad())?,
                "f" => meta.f = v.parse().map_err(|_| bad())?,
                "seed" => meta.seed = v.parse().map_err(|_| bad())?,
                "gst" => meta.gst = v.parse().map_err(|_| bad())?,
                "delta" => meta.delta = v.parse().map_err(|_| bad())?,
                "beyond_f" => meta.beyond_f = v.parse().map_err(|_| bad())?,
                _ => {}
            }
        }
        let mut events = Vec::new();
        for line in lines {
            if line.is_empty() || line == COLUMNS {
                continue;
            }
            events.push(TraceEvent::parse_line(line)?);
        }
        Ok(Trace { meta, events })
    }

    /// Nodes ever crashed or corrupted.
    pub fn faulty(&self) -> std::collections::BTreeSet<NodeId> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, Kind::CRASH | Kind::CORRUPT))
            .map(|e| e.node)
            .collect()
    }

    pub fn corrupted(&self) -> std::collections::BTreeSet<NodeId> {
        self.events
            .iter()
            .filter(|e| e.kind == Kind::CORRUPT)
            .map(|e| e.node)
            .collect()
    }

    pub fn end_reason(&self) -> Option<EndReason> {
        self.events
            .iter()
            .rev()
            .find(|e| e.kind == Kind::END)
            .and_then(|e| e.val)
            .and_then(EndReason::from_val)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash;

    #[test]
    fn line_roundtrip() {
        let e = TraceEvent::new(5, 2, Kind::DELIVER)
            .round(3)
            .epoch(1)
            .depth(4)
            .peer(0)
            .msg(MsgKind::OBBC_VOTE)
            .id(77)
            .val(-1)
            .digest(hash(b"x"))
            .key("0/3/0/1")
            .bytes(33)
            .sent_at(2);
        assert_eq!(TraceEvent::parse_line(&e.to_line()).unwrap(), e);
        let bare = TraceEvent::new(0, 0, Kind::END);
        assert_eq!(TraceEvent::parse_line(&bare.to_line()).unwrap(), bare);
    }

    #[test]
    fn text_roundtrip_and_header_check() {
        let mut t = Trace::new(TraceMeta {
            n: 4,
            f: 1,
            seed: 9,
            gst: 10,
            delta: 5,
            beyond_f: false,
        });
        t.push(TraceEvent::new(1, 0, Kind::CRASH));
        let text = t.to_text();
        assert!(text.starts_with("# toytrace v1"));
        assert_eq!(Trace::parse(&text).unwrap(), t);
        assert_eq!(Trace::parse("garbage"), Err(TraceParseError::Header));
    }
}
