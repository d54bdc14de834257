//! Trace verification: re-derives every reception and discovery from the
//! raw decision events (starts, channel and mode selections, transmissions,
//! jam intervals) plus the stateless loss coins, and reports any divergence
//! from the recorded receptions and discoveries. Async traces additionally
//! run the structural lemma oracles.
//!
//! The re-derivation trusts only decision records and the header (topology,
//! seed, trial, impairment settings); reception and discovery records are
//! treated as claims to check. Deleting or editing one of them is therefore
//! detected, as is any engine nondeterminism.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::analysis::{
    check_legal_close, check_overlap_lemma, check_slot_overlap, extract_admissible_sequence,
    extract_frames, validate_admissible_sequence, TraceFrames,
};
use crate::engine_async::AsyncScenario;
use crate::engine_sync::SyncScenario;
use crate::model::{Adjacency, ChannelId, LinkIndex, NodeId};
use crate::protocols::Mode;
use crate::trace::{EngineKind, EventKind, Trace, TraceError, TraceRecord};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error("header config does not match the {0} engine: {1}")]
    BadConfig(EngineKind, String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DivergenceKind {
    /// Derivable from the decisions but absent from the record stream.
    MissingReception,
    /// Recorded but not derivable.
    ExtraReception,
    MissingDiscovery,
    ExtraDiscovery,
}

#[derive(Clone, Debug)]
pub struct Divergence {
    pub t: u64,
    pub kind: DivergenceKind,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct LemmaOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct ReplayReport {
    pub engine: EngineKind,
    pub receptions_recorded: usize,
    pub receptions_derived: usize,
    pub divergences: Vec<Divergence>,
    pub lemma_checks: Vec<LemmaOutcome>,
    pub notices: Vec<String>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.divergences.is_empty() && self.lemma_checks.iter().all(|c| c.passed)
    }
}

/// (t, receiver, unit, channel, peer)
type ReceptionKey = (u64, u32, u64, u32, u32);
/// (t, receiver, channel, peer, link)
type DiscoveryKey = (u64, u32, u32, u32, usize);

pub fn replay_verify(trace: &Trace) -> Result<ReplayReport, ReplayError> {
    trace.verify_ordering()?;
    match trace.header.engine {
        EngineKind::Sync => replay_sync(trace),
        EngineKind::Async => replay_async(trace),
    }
}

fn recorded_receptions(trace: &Trace) -> Result<BTreeSet<ReceptionKey>, ReplayError> {
    let mut out = BTreeSet::new();
    for r in trace.events(EventKind::Receive) {
        out.insert((
            r.t,
            field(r.node, "receive.node")?,
            field(r.unit, "receive.unit")?,
            field(r.channel, "receive.channel")?,
            field(r.peer, "receive.peer")?,
        ));
    }
    Ok(out)
}

fn recorded_discoveries(trace: &Trace) -> Result<BTreeSet<DiscoveryKey>, ReplayError> {
    let mut out = BTreeSet::new();
    for r in trace.events(EventKind::Discover) {
        out.insert((
            r.t,
            field(r.node, "discover.node")?,
            field(r.channel, "discover.channel")?,
            field(r.peer, "discover.peer")?,
            field(r.link, "discover.link")?,
        ));
    }
    Ok(out)
}

fn field<T>(v: Option<T>, what: &str) -> Result<T, ReplayError> {
    v.ok_or_else(|| ReplayError::Malformed(format!("record missing {what}")))
}

fn diff_sets(
    derived_rx: &BTreeSet<ReceptionKey>,
    recorded_rx: &BTreeSet<ReceptionKey>,
    derived_disc: &BTreeSet<DiscoveryKey>,
    recorded_disc: &BTreeSet<DiscoveryKey>,
) -> Vec<Divergence> {
    let mut out = Vec::new();
    for k in derived_rx.difference(recorded_rx) {
        out.push(Divergence {
            t: k.0,
            kind: DivergenceKind::MissingReception,
            detail: format!(
                "node {} should receive from {} on channel {} at t={}",
                k.1, k.4, k.3, k.0
            ),
        });
    }
    for k in recorded_rx.difference(derived_rx) {
        out.push(Divergence {
            t: k.0,
            kind: DivergenceKind::ExtraReception,
            detail: format!(
                "recorded reception at node {} from {} on channel {} at t={} is not derivable",
                k.1, k.4, k.3, k.0
            ),
        });
    }
    for k in derived_disc.difference(recorded_disc) {
        out.push(Divergence {
            t: k.0,
            kind: DivergenceKind::MissingDiscovery,
            detail: format!("link {} should be discovered at t={}", k.4, k.0),
        });
    }
    for k in recorded_disc.difference(derived_disc) {
        out.push(Divergence {
            t: k.0,
            kind: DivergenceKind::ExtraDiscovery,
            detail: format!("recorded discovery of link {} at t={} is not derivable", k.4, k.0),
        });
    }
    out.sort_by_key(|d| d.t);
    out
}

/// Jam intervals recovered from JamSet records (idle rounds carry no
/// channel).
fn recorded_jams(trace: &Trace) -> Result<Vec<(u64, u64, u32)>, ReplayError> {
    let mut out = Vec::new();
    for r in trace.events(EventKind::JamSet) {
        if let Some(c) = r.channel {
            out.push((r.t, field(r.end, "jam_set.end")?, c));
        }
    }
    Ok(out)
}

fn jammed(jams: &[(u64, u64, u32)], c: u32, a: u64, b: u64) -> bool {
    jams.iter()
        .any(|&(js, je, jc)| jc == c && js.max(a) < je.min(b))
}

fn replay_sync(trace: &Trace) -> Result<ReplayReport, ReplayError> {
    let scenario: SyncScenario = serde_json::from_value(trace.header.config.clone())
        .map_err(|e| ReplayError::BadConfig(EngineKind::Sync, e.to_string()))?;
    if !scenario.record_trace {
        return Err(ReplayError::Malformed(
            "trace was recorded without decision events".into(),
        ));
    }
    let topo = &scenario.topology;
    let adj = Adjacency::build(topo);
    let links = LinkIndex::build(topo);
    let seed = trace.header.seed;
    let trial = trace.header.trial;
    let k = trace.header.ticks_per_unit;
    let t_s = scenario.t_s();

    // Per-slot actions from the decision records.
    let mut channels: BTreeMap<(u64, u32), u32> = BTreeMap::new();
    let mut modes: BTreeMap<(u64, u32), Mode> = BTreeMap::new();
    let mut max_slot = 0u64;
    for r in &trace.records {
        match r.kind {
            EventKind::ChannelSelect => {
                let s = field(r.unit, "channel_select.unit")?;
                channels.insert((s, field(r.node, "channel_select.node")?), field(r.channel, "channel_select.channel")?);
                max_slot = max_slot.max(s);
            }
            EventKind::ModeSelect => {
                let s = field(r.unit, "mode_select.unit")?;
                modes.insert((s, field(r.node, "mode_select.node")?), field(r.mode, "mode_select.mode")?);
                max_slot = max_slot.max(s);
            }
            _ => {}
        }
    }
    let jams = recorded_jams(trace)?;

    let mut derived_rx: BTreeSet<ReceptionKey> = BTreeSet::new();
    let mut derived_disc: BTreeSet<DiscoveryKey> = BTreeSet::new();
    let mut discovered: Vec<bool> = vec![false; topo.links().len()];
    let mut undiscovered = topo.links().len();
    let mut completion_slot: Option<u64> = None;
    'slots: for s in 0..=max_slot {
        let slot_start = s * k;
        let slot_end = (s + 1) * k;
        for u in 0..topo.num_nodes() as u32 {
            if scenario.offsets[u as usize] > s {
                continue;
            }
            let (Some(&c), Some(&mode)) = (channels.get(&(s, u)), modes.get(&(s, u))) else {
                continue;
            };
            if mode != Mode::Listen {
                continue;
            }
            let mut transmitter = None;
            let mut collided = false;
            for &v in adj.span_neighbors_on(NodeId(u), ChannelId(c)) {
                if scenario.offsets[v.index()] > s {
                    continue;
                }
                if modes.get(&(s, v.0)) == Some(&Mode::Transmit)
                    && channels.get(&(s, v.0)) == Some(&c)
                {
                    if transmitter.is_some() {
                        collided = true;
                        break;
                    }
                    transmitter = Some(v);
                }
            }
            let Some(v) = transmitter.filter(|_| !collided) else {
                continue;
            };
            if jammed(&jams, c, slot_start, slot_end) {
                continue;
            }
            if scenario.loss.drops(seed, trial, NodeId(u), v, slot_start) {
                continue;
            }
            derived_rx.insert((slot_start, u, s, c, v.0));
            let li = links
                .index_of(v, NodeId(u), ChannelId(c))
                .ok_or_else(|| ReplayError::Malformed(format!(
                    "reception over missing link {} -> {u} on channel {c}",
                    v.0
                )))?;
            if !discovered[li] {
                discovered[li] = true;
                undiscovered -= 1;
                derived_disc.insert((slot_start, u, c, v.0, li));
                if undiscovered == 0 && !scenario.run_full_budget {
                    completion_slot = Some(s);
                }
            }
        }
        if completion_slot.is_some() {
            break 'slots;
        }
    }

    // Compare only within the recorded horizon: after early completion the
    // engine stops, so nothing beyond the completing slot is recorded.
    let cutoff = completion_slot.unwrap_or(t_s + scenario.budget_slots);
    derived_rx.retain(|r| r.2 <= cutoff);
    derived_disc.retain(|d| d.0 / k <= cutoff);
    let recorded_rx = recorded_receptions(trace)?;
    let recorded_disc = recorded_discoveries(trace)?;
    let divergences = diff_sets(&derived_rx, &recorded_rx, &derived_disc, &recorded_disc);
    Ok(ReplayReport {
        engine: EngineKind::Sync,
        receptions_recorded: recorded_rx.len(),
        receptions_derived: derived_rx.len(),
        divergences,
        lemma_checks: Vec::new(),
        notices: vec!["async-only structural lemma oracles skipped on a sync trace".into()],
    })
}

/// Transmission slots recovered from Transmit records.
struct TxSlot {
    node: u32,
    start: u64,
    end: u64,
    channel: u32,
}

fn replay_async(trace: &Trace) -> Result<ReplayReport, ReplayError> {
    let scenario: AsyncScenario = serde_json::from_value(trace.header.config.clone())
        .map_err(|e| ReplayError::BadConfig(EngineKind::Async, e.to_string()))?;
    if !scenario.record_trace {
        return Err(ReplayError::Malformed(
            "trace was recorded without decision events".into(),
        ));
    }
    let topo = &scenario.topology;
    let adj = Adjacency::build(topo);
    let links = LinkIndex::build(topo);
    let seed = trace.header.seed;
    let trial = trace.header.trial;
    let t_s = scenario.t_s();
    let horizon = t_s + scenario.budget_ticks;

    let frames = extract_frames(trace)
        .map_err(|e| ReplayError::Malformed(e.to_string()))?;
    let mut tx: Vec<TxSlot> = Vec::new();
    for r in trace.events(EventKind::Transmit) {
        tx.push(TxSlot {
            node: field(r.node, "transmit.node")?,
            start: r.t,
            end: field(r.end, "transmit.end")?,
            channel: field(r.channel, "transmit.channel")?,
        });
    }
    tx.sort_by_key(|s| s.start);
    let tx_of = |v: u32| -> Vec<&TxSlot> { tx.iter().filter(|s| s.node == v).collect() };
    let jams = recorded_jams(trace)?;

    let mut derived_rx: BTreeSet<ReceptionKey> = BTreeSet::new();
    let mut candidates: Vec<(u64, u32, u64, u32, u32)> = Vec::new();
    for u in frames.nodes() {
        for g in frames.frames(u) {
            if g.mode != Some(Mode::Listen) {
                continue;
            }
            let c = match g.channel {
                Some(c) => c,
                None => continue,
            };
            for &v in adj.span_neighbors_on(NodeId(u), ChannelId(c)) {
                for slot in tx_of(v.0) {
                    if slot.channel != c
                        || !(g.start() <= slot.start && slot.end <= g.end())
                    {
                        continue;
                    }
                    let clear = !adj
                        .span_neighbors_on(NodeId(u), ChannelId(c))
                        .iter()
                        .filter(|&&w| w != v)
                        .any(|&w| {
                            tx_of(w.0).iter().any(|o| {
                                o.channel == c && o.start.max(slot.start) < o.end.min(slot.end)
                            })
                        });
                    if !clear {
                        continue;
                    }
                    if jammed(&jams, c, slot.start, slot.end) {
                        continue;
                    }
                    if scenario.loss.drops(seed, trial, NodeId(u), v, slot.start) {
                        continue;
                    }
                    candidates.push((slot.end, u, g.index, c, v.0));
                }
            }
        }
    }
    candidates.sort_unstable();

    // Re-derive the engine's stopping point: on early completion the trace
    // is cut at the completing reception's tick, otherwise at the horizon
    // (where receptions ending exactly on the boundary are not collected).
    let mut discovered: Vec<bool> = vec![false; topo.links().len()];
    let mut undiscovered = topo.links().len();
    let mut cut: Option<u64> = None;
    let mut derived_disc: BTreeSet<DiscoveryKey> = BTreeSet::new();
    for &(t, u, unit, c, v) in &candidates {
        if t >= horizon {
            break;
        }
        if let Some(cut) = cut {
            if t > cut {
                break;
            }
        }
        derived_rx.insert((t, u, unit, c, v));
        let li = links
            .index_of(NodeId(v), NodeId(u), ChannelId(c))
            .ok_or_else(|| ReplayError::Malformed(format!(
                "reception over missing link {v} -> {u} on channel {c}"
            )))?;
        if !discovered[li] {
            discovered[li] = true;
            undiscovered -= 1;
            derived_disc.insert((t, u, c, v, li));
            if undiscovered == 0 && !scenario.run_full_budget {
                cut = Some(t);
            }
        }
    }

    let recorded_rx = recorded_receptions(trace)?;
    let recorded_disc = recorded_discoveries(trace)?;
    let divergences = diff_sets(&derived_rx, &recorded_rx, &derived_disc, &recorded_disc);

    let mut lemma_checks = Vec::new();
    let mut notices = Vec::new();
    if scenario.clock.delta <= 1.0 / 7.0 {
        lemma_checks.extend(run_lemma_oracles(&frames, &adj, topo.num_nodes(), t_s));
    } else {
        notices.push(format!(
            "drift bound {} exceeds 1/7; structural lemma oracles skipped",
            scenario.clock.delta
        ));
    }

    Ok(ReplayReport {
        engine: EngineKind::Async,
        receptions_recorded: recorded_rx.len(),
        receptions_derived: derived_rx.len(),
        divergences,
        lemma_checks,
        notices,
    })
}

/// Runs the overlap, slot-overlap, aligned-pair-existence, and admissible
/// sequence oracles over every adjacent ordered node pair.
pub fn run_lemma_oracles(
    frames: &TraceFrames,
    adj: &Adjacency,
    num_nodes: usize,
    t_s: u64,
) -> Vec<LemmaOutcome> {
    let mut out = Vec::new();
    let pass = |name| LemmaOutcome {
        name,
        passed: true,
        detail: String::new(),
    };
    match check_overlap_lemma(frames) {
        Ok(()) => out.push(pass("frame-overlap<=3")),
        Err(v) => out.push(LemmaOutcome {
            name: "frame-overlap<=3",
            passed: false,
            detail: v.detail,
        }),
    }
    match check_slot_overlap(frames) {
        Ok(()) => out.push(pass("slot-overlap<=3-across<=2-frames")),
        Err(v) => out.push(LemmaOutcome {
            name: "slot-overlap<=3-across<=2-frames",
            passed: false,
            detail: v.detail,
        }),
    }
    let end = frames
        .nodes()
        .flat_map(|n| frames.frames(n).last().map(|f| f.end()))
        .max()
        .unwrap_or(t_s);
    let mut close_details: Vec<String> = Vec::new();
    let mut admissible_details: Vec<String> = Vec::new();
    for u in 0..num_nodes as u32 {
        for &v in adj.graph_neighbors(NodeId(u)) {
            if let Err(viol) = check_legal_close(frames, v.0, u, t_s) {
                close_details.push(viol.detail);
                continue;
            }
            let seq = extract_admissible_sequence(frames, v.0, u, (t_s, end));
            if seq.incomplete || seq.pairs.len() < seq.guaranteed_len() {
                admissible_details.push(format!(
                    "admissible sequence for {} -> {u}: {} pairs, guaranteed {}",
                    v.0,
                    seq.pairs.len(),
                    seq.guaranteed_len()
                ));
                continue;
            }
            if let Err(viol) = validate_admissible_sequence(&seq, frames) {
                admissible_details.push(viol.detail);
            }
        }
    }
    out.push(LemmaOutcome {
        name: "aligned-pair-existence",
        passed: close_details.is_empty(),
        detail: close_details.join("; "),
    });
    out.push(LemmaOutcome {
        name: "admissible-sequence",
        passed: admissible_details.is_empty(),
        detail: admissible_details.join("; "),
    });
    out
}

/// Mutation helper for tamper tests and the CLI: drops the i-th reception
/// record (counting receptions only).
pub fn drop_nth_reception(trace: &mut Trace, n: usize) -> Option<TraceRecord> {
    let idx = trace
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind == EventKind::Receive)
        .map(|(i, _)| i)
        .nth(n)?;
    Some(trace.records.remove(idx))
}
