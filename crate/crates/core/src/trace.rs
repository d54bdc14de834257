//! Trace format: an append-only, time-ordered event log that makes every run
//! replayable, plus the discovery report both engines produce.
//!
//! A trace is one header record followed by event records, serialized as
//! JSONL (one JSON object per line). Timestamps are integer ticks:
//!
//! * sync engine: slot `s` spans ticks `[s*K, (s+1)*K)` with `K =
//!   ticks_per_unit`; node events carry the slot index in `unit`;
//! * async engine: `K` is the tick length of one nominal local frame `L`;
//!   `unit` is the owner's local frame index, `slot` the slot within it.
//!
//! The header embeds the resolved scenario (as plain JSON) together with the
//! effective master seed and trial index, so a trace file is self-contained:
//! replay re-derives every reception, loss coin, and discovery from it.
//!
//! Records at the same tick are ordered by event kind (jammer first, then
//! node bookkeeping, then transmissions, then receptions), then by node id;
//! the full sort key is a strict total order.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocols::Mode;

/// Bumped whenever the record schema changes shape.
pub const TRACE_SCHEMA: u32 = 1;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Sync,
    Async,
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EngineKind::Sync => "sync",
            EngineKind::Async => "async",
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    JamScan,
    JamSet,
    Start,
    FrameBegin,
    SlotBegin,
    ChannelSelect,
    ModeSelect,
    Transmit,
    Receive,
    Discover,
}

/// First line of every trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub schema: u32,
    pub engine: EngineKind,
    /// Ticks per slot (sync) or per nominal frame length L (async).
    pub ticks_per_unit: u64,
    /// Effective master seed of the experiment.
    pub seed: u64,
    pub trial: u64,
    /// Resolved scenario configuration, opaque to this module.
    pub config: serde_json::Value,
}

/// One event. Unused fields stay `None` and are omitted from the JSON.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub t: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<u32>,
    /// Slot index (sync) or owner-local frame index (async).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<u64>,
    /// Slot within an async frame: 0, 1, or 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<u32>,
    /// Scan result of a jam_scan record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    /// Sender for receive/discover records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<u32>,
    /// Exclusive end tick for interval records (frame_begin, transmit,
    /// jam_set).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<u64>,
    /// The four boundary ticks of an async frame (start, thirds, end).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[u64; 4]>,
    /// Directed link index (topology order) for discover records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<usize>,
}

impl TraceRecord {
    fn blank(t: u64, kind: EventKind) -> Self {
        Self {
            t,
            kind,
            node: None,
            unit: None,
            slot: None,
            channel: None,
            channels: None,
            mode: None,
            peer: None,
            end: None,
            bounds: None,
            link: None,
        }
    }

    pub fn start(t: u64, node: u32) -> Self {
        Self {
            node: Some(node),
            ..Self::blank(t, EventKind::Start)
        }
    }

    pub fn frame_begin(node: u32, unit: u64, bounds: [u64; 4]) -> Self {
        Self {
            node: Some(node),
            unit: Some(unit),
            end: Some(bounds[3]),
            bounds: Some(bounds),
            ..Self::blank(bounds[0], EventKind::FrameBegin)
        }
    }

    pub fn slot_begin(t: u64, node: Option<u32>, unit: u64, slot: Option<u8>) -> Self {
        Self {
            node,
            unit: Some(unit),
            slot,
            ..Self::blank(t, EventKind::SlotBegin)
        }
    }

    pub fn channel_select(t: u64, node: u32, unit: u64, channel: u32) -> Self {
        Self {
            node: Some(node),
            unit: Some(unit),
            channel: Some(channel),
            ..Self::blank(t, EventKind::ChannelSelect)
        }
    }

    pub fn mode_select(t: u64, node: u32, unit: u64, mode: Mode) -> Self {
        Self {
            node: Some(node),
            unit: Some(unit),
            mode: Some(mode),
            ..Self::blank(t, EventKind::ModeSelect)
        }
    }

    pub fn transmit(t: u64, node: u32, unit: u64, slot: Option<u8>, channel: u32, end: u64) -> Self {
        Self {
            node: Some(node),
            unit: Some(unit),
            slot,
            channel: Some(channel),
            end: Some(end),
            ..Self::blank(t, EventKind::Transmit)
        }
    }

    pub fn receive(t: u64, node: u32, unit: u64, channel: u32, peer: u32) -> Self {
        Self {
            node: Some(node),
            unit: Some(unit),
            channel: Some(channel),
            peer: Some(peer),
            ..Self::blank(t, EventKind::Receive)
        }
    }

    pub fn discover(t: u64, node: u32, channel: u32, peer: u32, link: usize) -> Self {
        Self {
            node: Some(node),
            channel: Some(channel),
            peer: Some(peer),
            link: Some(link),
            ..Self::blank(t, EventKind::Discover)
        }
    }

    pub fn jam_scan(t: u64, channels: Vec<u32>) -> Self {
        Self {
            channels: Some(channels),
            ..Self::blank(t, EventKind::JamScan)
        }
    }

    /// `channel = None` records an idle round (nothing jammed).
    pub fn jam_set(t: u64, channel: Option<u32>, end: u64) -> Self {
        Self {
            channel,
            end: Some(end),
            ..Self::blank(t, EventKind::JamSet)
        }
    }

    /// Strict total order: tick, then kind, then node and position fields.
    pub fn sort_key(&self) -> (u64, EventKind, u32, u64, u8, u32, u32) {
        (
            self.t,
            self.kind,
            self.node.unwrap_or(0),
            self.unit.unwrap_or(0),
            self.slot.unwrap_or(0),
            self.peer.unwrap_or(0),
            self.channel.unwrap_or(0),
        )
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {err}")]
    Json { line: usize, err: String },
    #[error("trace is empty or missing its header line")]
    MissingHeader,
    #[error("unsupported trace schema {0} (this build reads schema {TRACE_SCHEMA})")]
    UnsupportedSchema(u32),
    #[error("trace records are not in sort order at line {line}")]
    NotOrdered { line: usize },
}

/// A complete single-trial trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(header: TraceHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn sort_records(&mut self) {
        self.records.sort_by_key(|r| r.sort_key());
    }

    /// Errors unless records are strictly increasing in the sort key.
    pub fn verify_ordering(&self) -> Result<(), TraceError> {
        for (i, w) in self.records.windows(2).enumerate() {
            if w[0].sort_key() >= w[1].sort_key() {
                // Line numbering: 1-based, header is line 1.
                return Err(TraceError::NotOrdered { line: i + 3 });
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        let header = serde_json::to_string(&self.header).expect("header serializes");
        writeln!(w, "{header}")?;
        for r in &self.records {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut lines = r.lines();
        let header_line = lines.next().ok_or(TraceError::MissingHeader)??;
        let header: TraceHeader =
            serde_json::from_str(&header_line).map_err(|e| TraceError::Json {
                line: 1,
                err: e.to_string(),
            })?;
        if header.schema != TRACE_SCHEMA {
            return Err(TraceError::UnsupportedSchema(header.schema));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| TraceError::Json {
                line: i + 2,
                err: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(Self { header, records })
    }

    pub fn from_jsonl_str(s: &str) -> Result<Self, TraceError> {
        Self::read_jsonl(s.as_bytes())
    }

    pub fn events(&self, kind: EventKind) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }
}

/// Which unit a report's times are measured in.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    Slots,
    Ticks,
}

/// Outcome of one trial. Times are relative to `t_s`, the moment the last
/// node started, and may be negative for links discovered before it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub engine: EngineKind,
    pub unit: TimeUnit,
    /// All directed links discovered within budget.
    pub success: bool,
    /// Absolute time (slots or ticks) of the latest node start.
    pub t_s: u64,
    /// Discovery time per directed link, in topology link order.
    pub link_times: Vec<Option<i64>>,
    /// Max over links, None unless all links discovered.
    pub completion: Option<i64>,
    /// Absolute units simulated (slots or ticks).
    pub budget: u64,
}

impl DiscoveryReport {
    pub fn discovered_links(&self) -> usize {
        self.link_times.iter().filter(|t| t.is_some()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> TraceHeader {
        TraceHeader {
            schema: TRACE_SCHEMA,
            engine: EngineKind::Sync,
            ticks_per_unit: 1000,
            seed: 42,
            trial: 0,
            config: serde_json::Value::Null,
        }
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical() {
        let mut t = Trace::new(header());
        t.push(TraceRecord::start(0, 0));
        t.push(TraceRecord::slot_begin(0, None, 0, None));
        t.push(TraceRecord::channel_select(0, 0, 0, 3));
        t.push(TraceRecord::mode_select(0, 0, 0, Mode::Transmit));
        t.push(TraceRecord::transmit(0, 0, 0, None, 3, 1000));
        t.push(TraceRecord::receive(0, 1, 0, 3, 0));
        t.push(TraceRecord::discover(0, 1, 3, 0, 2));
        t.push(TraceRecord::jam_scan(1500, vec![3]));
        t.push(TraceRecord::jam_set(1500, Some(3), 2500));
        let s1 = t.to_jsonl_string();
        let back = Trace::from_jsonl_str(&s1).unwrap();
        assert_eq!(t, back);
        assert_eq!(s1, back.to_jsonl_string());
    }

    #[test]
    fn ordering_is_strict_and_detectable() {
        let mut t = Trace::new(header());
        t.push(TraceRecord::channel_select(0, 1, 0, 3));
        t.push(TraceRecord::channel_select(0, 0, 0, 2));
        assert!(matches!(
            t.verify_ordering(),
            Err(TraceError::NotOrdered { line: 3 })
        ));
        t.sort_records();
        t.verify_ordering().unwrap();
        assert_eq!(t.records[0].node, Some(0));
    }

    #[test]
    fn same_tick_kind_order_is_causal() {
        let mut t = Trace::new(header());
        t.push(TraceRecord::discover(5, 1, 0, 0, 0));
        t.push(TraceRecord::receive(5, 1, 0, 0, 0));
        t.push(TraceRecord::transmit(5, 0, 5, None, 0, 6));
        t.push(TraceRecord::jam_scan(5, vec![]));
        t.sort_records();
        let kinds: Vec<EventKind> = t.records.iter().map(|r| r.kind).collect();
        assert_eq!(
            kinds,
            vec![
                EventKind::JamScan,
                EventKind::Transmit,
                EventKind::Receive,
                EventKind::Discover
            ]
        );
    }

    #[test]
    fn unknown_fields_rejected() {
        let line = r#"{"t":0,"kind":"start","node":0,"bogus":1}"#;
        assert!(serde_json::from_str::<TraceRecord>(line).is_err());
    }
}
