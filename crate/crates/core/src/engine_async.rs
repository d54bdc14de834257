//! Continuous-time simulator with per-node drifting clocks: schedules frame
//! and slot boundaries in real time, resolves interval-overlap reception
//! semantics, and supports jammer rounds unaligned with slots.
//!
//! Real time is a fixed-point tick grid with `ticks_per_l` ticks per nominal
//! frame length L; `ticks_per_l` must be divisible by 3 so that a frame's
//! three equal local-time slots stay exactly equal on the grid. Each frame's
//! slot length is the drift-adjusted third `K/(3(1+d))` rounded half-to-even
//! and then clamped into `[⌈K/(3(1+δ))⌉, ⌊K/(3(1−δ))⌋]`, so every generated
//! frame length lies within the legal real-time range `[L/(1+δ), L/(1−δ)]`
//! exactly, and zero drift puts boundaries at exact multiples of `K/3`.
//!
//! Reception follows the frame-pair coverage conditions: a receiver `u`
//! listening on `c` during its frame `g` clearly receives `v`'s transmission
//! slot `s` iff `s`'s real interval is entirely contained in `g`'s (closed
//! containment, boundary touching allowed), `v` transmitted on `c` in `s`,
//! no other neighbor of `u` has a transmission slot on `c` whose interval
//! overlaps `s` with positive length, the jammer did not jam `c` during any
//! part of `s`, and the loss coin succeeded. A message slot spanning parts of
//! two listening frames is received via neither (single-frame containment,
//! the conservative reading).
//!
//! Discovery times are reported in ticks relative to `T_s` (the latest start
//! offset); a reception completes at its transmission slot's end tick.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::engine_sync::EngineError;
use crate::impairments::{self, JamInterval, JammerConfig, JammerState, LossModel};
use crate::model::{Adjacency, ChannelId, ChannelSet, LinkIndex, NodeId, Topology};
use crate::protocols::{Mode, Strategy, StrategyKind};
use crate::rng;
use crate::trace::{
    DiscoveryReport, EngineKind, TimeUnit, Trace, TraceHeader, TraceRecord, TRACE_SCHEMA,
};

/// Default tick resolution per frame: the largest number below 10⁶ divisible
/// by 3 (exact thirds require divisibility).
pub const DEFAULT_TICKS_PER_L: u64 = 999_999;

/// How the per-frame drift values d_j in [−δ, +δ] are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ClockLaw {
    /// One uniform draw per node, constant across its frames.
    ConstantPerNode,
    /// Fresh uniform draw per frame (the default).
    ResampledPerFrame,
    /// Scripted worst cases: node u follows `scripts[u % len]`, frame j uses
    /// entry `j % script_len`.
    AdversarialScript { scripts: Vec<Vec<f64>> },
}

/// Max drift rate plus the law generating per-frame drifts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub delta: f64,
    #[serde(flatten)]
    pub law: ClockLaw,
}

impl ClockModel {
    pub fn drift_free() -> Self {
        Self {
            delta: 0.0,
            law: ClockLaw::ResampledPerFrame,
        }
    }
}

/// Drift-adjusted slot length in ticks for one frame.
pub fn slot_ticks(ticks_per_l: u64, d: f64, delta: f64) -> u64 {
    let k = ticks_per_l as f64;
    let lo = (k / (3.0 * (1.0 + delta))).ceil() as u64;
    let hi = (k / (3.0 * (1.0 - delta))).floor() as u64;
    let ideal = (k / (3.0 * (1.0 + d))).round_ties_even() as u64;
    ideal.clamp(lo, hi)
}

/// Longest slot the engine can produce at this drift bound.
pub fn max_slot_ticks(ticks_per_l: u64, delta: f64) -> u64 {
    slot_ticks(ticks_per_l, -delta, delta)
}

/// Slot boundary ticks of `drifts.len()` consecutive frames starting at
/// `start`: 3 slots per frame, equal within each frame.
pub fn frame_boundaries(drifts: &[f64], delta: f64, start: u64, ticks_per_l: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(drifts.len() * 3 + 1);
    let mut t = start;
    out.push(t);
    for &d in drifts {
        let st = slot_ticks(ticks_per_l, d, delta);
        for _ in 0..3 {
            t += st;
            out.push(t);
        }
    }
    out
}

/// One realized frame of one node.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub owner: NodeId,
    /// Local (per-node) frame index, starting at 0.
    pub index: u64,
    /// `[start, b1, b2, end]`: the three equal slots are
    /// `[start,b1) [b1,b2) [b2,end)`.
    pub boundaries: [u64; 4],
    pub mode: Mode,
    /// The frame-level channel selection (the listening channel when
    /// listening).
    pub channel: ChannelId,
    /// Per-slot transmit channels; all equal to `channel` unless the jamming
    /// variant re-draws per slot.
    pub slot_channels: [ChannelId; 3],
}

impl Frame {
    pub fn start(&self) -> u64 {
        self.boundaries[0]
    }

    pub fn end(&self) -> u64 {
        self.boundaries[3]
    }

    pub fn slot_interval(&self, i: usize) -> (u64, u64) {
        (self.boundaries[i], self.boundaries[i + 1])
    }
}

/// Complete description of one asynchronous trial, minus the seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsyncScenario {
    pub topology: Topology,
    /// All nodes run the same algorithm; must be an async kind.
    pub kind: StrategyKind,
    pub delta_est: Option<u64>,
    /// Per-node real start offsets in ticks.
    pub offsets_ticks: Vec<u64>,
    pub clock: ClockModel,
    /// Ticks per nominal frame length L; divisible by 3.
    pub ticks_per_l: u64,
    pub loss: LossModel,
    pub jammer: JammerConfig,
    /// Transmitting nodes re-draw their channel per slot (the strategy
    /// modification studied under jamming).
    pub jamming_variant: bool,
    /// Real-time budget in ticks after `T_s`.
    pub budget_ticks: u64,
    /// Keep simulating to the budget horizon after full discovery.
    pub run_full_budget: bool,
    pub record_trace: bool,
}

impl AsyncScenario {
    pub fn new(topology: Topology, kind: StrategyKind, delta_est: Option<u64>) -> Self {
        let n = topology.num_nodes();
        Self {
            topology,
            kind,
            delta_est,
            offsets_ticks: vec![0; n],
            clock: ClockModel::drift_free(),
            ticks_per_l: DEFAULT_TICKS_PER_L,
            loss: LossModel::off(),
            jammer: JammerConfig::disabled(),
            jamming_variant: false,
            budget_ticks: 100 * DEFAULT_TICKS_PER_L,
            run_full_budget: false,
            record_trace: true,
        }
    }

    pub fn t_s(&self) -> u64 {
        self.offsets_ticks.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !self.kind.is_async() {
            return Err(EngineError::InvalidScenario(format!(
                "strategy kind {} requires the sync engine",
                self.kind
            )));
        }
        Strategy::new(self.kind, self.delta_est)
            .map_err(|e| EngineError::InvalidScenario(e.to_string()))?;
        if self.offsets_ticks.len() != self.topology.num_nodes() {
            return Err(EngineError::InvalidScenario(format!(
                "{} offsets for {} nodes",
                self.offsets_ticks.len(),
                self.topology.num_nodes()
            )));
        }
        if self.ticks_per_l < 3 || self.ticks_per_l % 3 != 0 {
            return Err(EngineError::InvalidScenario(format!(
                "ticks_per_l must be a positive multiple of 3, got {}",
                self.ticks_per_l
            )));
        }
        if !(0.0..1.0).contains(&self.clock.delta) {
            return Err(EngineError::InvalidScenario(format!(
                "drift bound delta must be in [0, 1), got {}",
                self.clock.delta
            )));
        }
        if self.kind == StrategyKind::AsyncKnownDelta && self.clock.delta > 1.0 / 7.0 {
            return Err(EngineError::InvalidScenario(format!(
                "known-degree async discovery assumes drift at most 1/7, got {}",
                self.clock.delta
            )));
        }
        if let ClockLaw::AdversarialScript { scripts } = &self.clock.law {
            if scripts.is_empty() || scripts.iter().any(|s| s.is_empty()) {
                return Err(EngineError::InvalidScenario(
                    "adversarial clock scripts must be non-empty".into(),
                ));
            }
            for s in scripts {
                for &d in s {
                    if d.abs() > self.clock.delta {
                        return Err(EngineError::InvalidScenario(format!(
                            "scripted drift {} exceeds bound {}",
                            d, self.clock.delta
                        )));
                    }
                }
            }
        }
        if self.budget_ticks == 0 {
            return Err(EngineError::InvalidScenario(
                "budget_ticks must be positive".into(),
            ));
        }
        self.jammer
            .validate(max_slot_ticks(self.ticks_per_l, self.clock.delta))?;
        if self.jammer.enabled {
            impairments::check_jamming_preconditions(&self.topology)?;
        }
        Ok(())
    }
}

// One sampler per node per run; variant size is not worth an indirection.
#[allow(clippy::large_enum_variant)]
enum DriftSampler {
    Constant(f64),
    Resampled { delta: f64, stream: ChaCha12Rng },
    Script(Vec<f64>),
}

impl DriftSampler {
    fn for_node(clock: &ClockModel, seed: u64, trial: u64, node: u32) -> Self {
        match &clock.law {
            ClockLaw::ConstantPerNode => {
                let mut s = rng::purpose_node_stream(seed, "clock", trial, node);
                DriftSampler::Constant(symmetric_uniform(&mut s, clock.delta))
            }
            ClockLaw::ResampledPerFrame => DriftSampler::Resampled {
                delta: clock.delta,
                stream: rng::purpose_node_stream(seed, "clock", trial, node),
            },
            ClockLaw::AdversarialScript { scripts } => {
                DriftSampler::Script(scripts[node as usize % scripts.len()].clone())
            }
        }
    }

    fn next(&mut self, frame_index: u64) -> f64 {
        match self {
            DriftSampler::Constant(d) => *d,
            DriftSampler::Resampled { delta, stream } => symmetric_uniform(stream, *delta),
            DriftSampler::Script(s) => s[(frame_index % s.len() as u64) as usize],
        }
    }
}

fn symmetric_uniform(stream: &mut ChaCha12Rng, delta: f64) -> f64 {
    delta * (2.0 * rng::uniform_f64(stream) - 1.0)
}

/// Per-node generation state: strategy, streams, and the frames realized so
/// far (contiguous from the node's start offset).
struct NodeGen {
    strategy: Strategy,
    actions: ChaCha12Rng,
    drift: DriftSampler,
    frames: Vec<Frame>,
    next_start: u64,
    next_index: u64,
}

impl NodeGen {
    /// Generates frames until the next one would start at or beyond `upto`.
    #[allow(clippy::too_many_arguments)]
    fn extend(
        &mut self,
        upto: u64,
        owner: NodeId,
        channels: &ChannelSet,
        k: u64,
        delta: f64,
        rec: Option<&mut Vec<TraceRecord>>,
        tx_slots: &mut Vec<(u64, u64, ChannelId, u32)>,
    ) {
        let mut sink = rec;
        while self.next_start < upto {
            let d = self.drift.next(self.next_index);
            let st = slot_ticks(k, d, delta);
            let b0 = self.next_start;
            let boundaries = [b0, b0 + st, b0 + 2 * st, b0 + 3 * st];
            let action = self.strategy.step(channels, &mut self.actions);
            let slot_channels = if action.mode == Mode::Transmit && self.strategy.per_slot_redraw()
            {
                let mut chosen = [action.channel; 3];
                for slot in &mut chosen {
                    *slot = channels.nth(rng::uniform_index(&mut self.actions, channels.len()));
                }
                chosen
            } else {
                [action.channel; 3]
            };
            let frame = Frame {
                owner,
                index: self.next_index,
                boundaries,
                mode: action.mode,
                channel: action.channel,
                slot_channels,
            };
            if let Some(records) = sink.as_deref_mut() {
                records.push(TraceRecord::frame_begin(owner.0, frame.index, boundaries));
                records.push(TraceRecord::channel_select(
                    b0,
                    owner.0,
                    frame.index,
                    action.channel.0,
                ));
                records.push(TraceRecord::mode_select(b0, owner.0, frame.index, action.mode));
            }
            if action.mode == Mode::Transmit {
                for i in 0..3 {
                    let (a, b) = frame.slot_interval(i);
                    tx_slots.push((a, b, frame.slot_channels[i], owner.0));
                    if let Some(records) = sink.as_deref_mut() {
                        records.push(TraceRecord::transmit(
                            a,
                            owner.0,
                            frame.index,
                            Some(i as u8),
                            frame.slot_channels[i].0,
                            b,
                        ));
                    }
                }
            }
            self.frames.push(frame);
            self.next_start = boundaries[3];
            self.next_index += 1;
        }
    }

    /// Frames whose interval intersects [from, to).
    fn frames_overlapping(&self, from: u64, to: u64) -> &[Frame] {
        let lo = self.frames.partition_point(|f| f.end() <= from);
        let hi = self.frames.partition_point(|f| f.start() < to);
        &self.frames[lo..hi]
    }
}

struct Candidate {
    t: u64,
    receiver: NodeId,
    sender: NodeId,
    channel: ChannelId,
    link: usize,
    slot_start: u64,
    frame_index: u64,
}

/// Runs one trial, returning the trace and the discovery report.
pub fn run_async(
    scenario: &AsyncScenario,
    seed: u64,
    trial: u64,
) -> Result<(Trace, DiscoveryReport), EngineError> {
    scenario.validate()?;
    let topo = &scenario.topology;
    let n = topo.num_nodes();
    let k = scenario.ticks_per_l;
    let delta = scenario.clock.delta;
    let adj = Adjacency::build(topo);
    let link_index = LinkIndex::build(topo);
    let t_s = scenario.t_s();
    let horizon = t_s + scenario.budget_ticks;
    let max_frame = 3 * max_slot_ticks(k, delta);
    let margin = 2 * max_frame;

    let header = TraceHeader {
        schema: TRACE_SCHEMA,
        engine: EngineKind::Async,
        ticks_per_unit: k,
        seed,
        trial,
        config: serde_json::to_value(scenario).expect("scenario serializes"),
    };
    let mut trace = Trace::new(header);
    let rec = scenario.record_trace;

    let mut link_times: Vec<Option<i64>> = vec![None; topo.links().len()];
    let mut undiscovered = topo.links().len();
    let budget = scenario.budget_ticks;

    if undiscovered == 0 {
        let report = DiscoveryReport {
            engine: EngineKind::Async,
            unit: TimeUnit::Ticks,
            success: true,
            t_s,
            link_times,
            completion: None,
            budget,
        };
        return Ok((trace, report));
    }

    let mut nodes: Vec<NodeGen> = (0..n)
        .map(|u| {
            let strategy = {
                let s = Strategy::new(scenario.kind, scenario.delta_est).expect("validated");
                if scenario.jamming_variant {
                    s.into_jamming_variant().expect("async kind")
                } else {
                    s
                }
            };
            NodeGen {
                strategy,
                actions: rng::node_stream(seed, trial, u as u32),
                drift: DriftSampler::for_node(&scenario.clock, seed, trial, u as u32),
                frames: Vec::new(),
                next_start: scenario.offsets_ticks[u],
                next_index: 0,
            }
        })
        .collect();
    if rec {
        for u in 0..n {
            trace.push(TraceRecord::start(scenario.offsets_ticks[u], u as u32));
        }
    }

    // All transmission slots (start, end, channel, owner), kept sorted by
    // start for the jammer scan.
    let mut tx_slots: Vec<(u64, u64, ChannelId, u32)> = Vec::new();
    let mut jams: Vec<JamInterval> = Vec::new();
    let mut jammer_stream = rng::trial_stream(seed, trial, "jammer");
    let mut jammer_state = JammerState::default();
    let mut next_round = scenario.jammer.offset_ticks;
    let round = scenario.jammer.round_ticks;

    // Per-receiver cursor: first frame not yet fully resolved.
    let mut cursors: Vec<usize> = vec![0; n];
    let window = 16 * max_frame.max(1);
    let mut w0: u64 = 0;
    let mut cut: u64 = horizon;
    let mut complete = false;

    while w0 < horizon {
        let w1 = (w0 + window).min(horizon);
        let upto = w1 + margin;
        for (u, node) in nodes.iter_mut().enumerate() {
            let sink = if rec { Some(&mut trace.records) } else { None };
            let id = NodeId(u as u32);
            node.extend(upto, id, topo.channels(id), k, delta, sink, &mut tx_slots);
        }
        tx_slots.sort_unstable();

        if scenario.jammer.enabled {
            while next_round < w1 {
                let scan = scan_at(&tx_slots, next_round, max_frame);
                let pick =
                    impairments::jammer_step(&mut jammer_state, &scan, &mut jammer_stream);
                if rec {
                    trace.push(TraceRecord::jam_scan(
                        next_round,
                        scan.iter().map(|c| c.0).collect(),
                    ));
                    trace.push(TraceRecord::jam_set(
                        next_round,
                        pick.map(|c| c.0),
                        next_round + round,
                    ));
                }
                if let Some(c) = pick {
                    jams.push(JamInterval {
                        channel: c,
                        start: next_round,
                        end: next_round + round,
                    });
                }
                next_round += round;
            }
        }

        // Collect clear receptions whose transmission slot ends in [w0, w1).
        let mut candidates: Vec<Candidate> = Vec::new();
        for u in 0..n {
            let receiver = NodeId(u as u32);
            while cursors[u] < nodes[u].frames.len() && nodes[u].frames[cursors[u]].end() < w0 {
                cursors[u] += 1;
            }
            for gi in cursors[u]..nodes[u].frames.len() {
                let g = &nodes[u].frames[gi];
                if g.start() >= w1 {
                    break;
                }
                if g.mode != Mode::Listen {
                    continue;
                }
                let c = g.channel;
                let peers = adj.span_neighbors_on(receiver, c);
                for &v in peers {
                    for f in nodes[v.index()].frames_overlapping(g.start(), g.end()) {
                        if f.mode != Mode::Transmit {
                            continue;
                        }
                        for i in 0..3 {
                            if f.slot_channels[i] != c {
                                continue;
                            }
                            let (a, b) = f.slot_interval(i);
                            if !(g.start() <= a && b <= g.end()) {
                                continue;
                            }
                            if !(w0 <= b && b < w1) {
                                continue;
                            }
                            if interfered(&nodes, &adj, receiver, v, c, a, b) {
                                continue;
                            }
                            let link = link_index
                                .index_of(v, receiver, c)
                                .expect("span channel maps to a link");
                            candidates.push(Candidate {
                                t: b,
                                receiver,
                                sender: v,
                                channel: c,
                                link,
                                slot_start: a,
                                frame_index: g.index,
                            });
                        }
                    }
                }
            }
        }
        candidates.sort_unstable_by_key(|c| (c.t, c.receiver.0, c.sender.0, c.channel.0));

        for cand in &candidates {
            if complete && cand.t > cut {
                break;
            }
            if jam_overlaps(&jams, round, cand.channel, cand.slot_start, cand.t) {
                continue;
            }
            if scenario
                .loss
                .drops(seed, trial, cand.receiver, cand.sender, cand.slot_start)
            {
                continue;
            }
            if rec {
                trace.push(TraceRecord::receive(
                    cand.t,
                    cand.receiver.0,
                    cand.frame_index,
                    cand.channel.0,
                    cand.sender.0,
                ));
            }
            if link_times[cand.link].is_none() {
                link_times[cand.link] = Some(cand.t as i64 - t_s as i64);
                undiscovered -= 1;
                if rec {
                    trace.push(TraceRecord::discover(
                        cand.t,
                        cand.receiver.0,
                        cand.channel.0,
                        cand.sender.0,
                        cand.link,
                    ));
                }
                if undiscovered == 0 && !scenario.run_full_budget {
                    complete = true;
                    cut = cand.t;
                }
            }
        }
        if complete {
            break;
        }
        w0 = w1;
    }

    trace.records.retain(|r| r.t <= cut);
    trace.sort_records();

    let success = link_times
        .iter()
        .all(|t| matches!(t, Some(x) if *x <= budget as i64));
    let completion = if link_times.iter().all(|t| t.is_some()) {
        link_times.iter().map(|t| t.unwrap()).max()
    } else {
        None
    };
    let report = DiscoveryReport {
        engine: EngineKind::Async,
        unit: TimeUnit::Ticks,
        success,
        t_s,
        link_times,
        completion,
        budget,
    };
    Ok((trace, report))
}

/// True iff some neighbor of `receiver` other than `sender` has a
/// transmission slot on `c` overlapping (a, b) with positive length.
fn interfered(
    nodes: &[NodeGen],
    adj: &Adjacency,
    receiver: NodeId,
    sender: NodeId,
    c: ChannelId,
    a: u64,
    b: u64,
) -> bool {
    for &w in adj.span_neighbors_on(receiver, c) {
        if w == sender {
            continue;
        }
        for f in nodes[w.index()].frames_overlapping(a, b) {
            if f.mode != Mode::Transmit {
                continue;
            }
            for i in 0..3 {
                let (s, e) = f.slot_interval(i);
                if f.slot_channels[i] == c && s.max(a) < e.min(b) {
                    return true;
                }
            }
        }
    }
    false
}

/// Channels with a transmission active at instant `t` (start <= t < end).
fn scan_at(tx_slots: &[(u64, u64, ChannelId, u32)], t: u64, max_span: u64) -> ChannelSet {
    let hi = tx_slots.partition_point(|s| s.0 <= t);
    let floor = t.saturating_sub(max_span);
    let mut members = Vec::new();
    for i in (0..hi).rev() {
        let (start, end, c, _) = tx_slots[i];
        if start < floor {
            break;
        }
        if start <= t && t < end {
            members.push(c);
        }
    }
    members.sort_unstable();
    members.dedup();
    ChannelSet::new(members).expect("deduped")
}

/// Jam overlap check against rounds sorted by start; at most a couple of
/// rounds can reach back into (a, b) because rounds are at least slot-sized.
fn jam_overlaps(jams: &[JamInterval], round: u64, c: ChannelId, a: u64, b: u64) -> bool {
    let hi = jams.partition_point(|j| j.start < b);
    let floor = a.saturating_sub(round);
    for i in (0..hi).rev() {
        let j = jams[i];
        if j.start < floor {
            break;
        }
        if j.channel == c && j.start.max(a) < j.end.min(b) {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Link;
    use crate::trace::EventKind;

    fn set(ids: &[u32]) -> ChannelSet {
        ChannelSet::from_ids(ids.iter().copied()).unwrap()
    }

    fn sym_links(pairs: &[(u32, u32, &[u32])]) -> Vec<Link> {
        let mut out = Vec::new();
        for &(a, b, span) in pairs {
            out.push(Link {
                from: NodeId(a),
                to: NodeId(b),
                span: set(span),
            });
            out.push(Link {
                from: NodeId(b),
                to: NodeId(a),
                span: set(span),
            });
        }
        out
    }

    fn two_nodes_one_channel() -> Topology {
        Topology::new(
            vec![set(&[0]), set(&[0])],
            sym_links(&[(0, 1, &[0])]),
            None,
        )
        .unwrap()
    }

    #[test]
    fn boundaries_zero_drift_exact_thirds() {
        let k = DEFAULT_TICKS_PER_L;
        let b = frame_boundaries(&[0.0, 0.0], 0.0, 5, k);
        let third = k / 3;
        let expect: Vec<u64> = (0..=6).map(|i| 5 + i * third).collect();
        assert_eq!(b, expect);
    }

    #[test]
    fn boundaries_constant_extreme_drift() {
        let k = DEFAULT_TICKS_PER_L;
        let d = 1.0 / 7.0;
        // d = +delta: frame takes 7L/8 of real time; d = -delta: 7L/6.
        let fast = frame_boundaries(&[d], d, 0, k);
        let fast_len = fast[3];
        let ideal_fast = 7.0 * k as f64 / 8.0;
        assert!((fast_len as f64 - ideal_fast).abs() <= 3.0, "{fast_len}");
        let slow = frame_boundaries(&[-d], d, 0, k);
        let slow_len = slow[3];
        let ideal_slow = 7.0 * k as f64 / 6.0;
        assert!((slow_len as f64 - ideal_slow).abs() <= 3.0, "{slow_len}");
        // Every frame length stays inside the legal real-time range.
        let lo = 3 * slot_ticks(k, d, d);
        let hi = 3 * slot_ticks(k, -d, d);
        assert!(lo as f64 >= k as f64 / (1.0 + d) - 1e-9);
        assert!(hi as f64 <= k as f64 / (1.0 - d) + 1e-9);
    }

    #[test]
    fn aligned_pair_coverage_without_drift() {
        // Aligned frames, single channel, p = 1/3: a frame covers each
        // direction with prob p(1-p) = 2/9.
        let t = two_nodes_one_channel();
        let mut sc = AsyncScenario::new(t, StrategyKind::AsyncKnownDelta, Some(1));
        sc.ticks_per_l = 999;
        let frames = 20_000u64;
        sc.budget_ticks = frames * 999;
        sc.run_full_budget = true;
        let (trace, _) = run_async(&sc, 21, 0).unwrap();
        let mut covered = [0u64; 2];
        let mut seen_frames = [std::collections::HashSet::new(), std::collections::HashSet::new()];
        for r in trace.events(EventKind::Receive) {
            let u = r.node.unwrap() as usize;
            if seen_frames[u].insert(r.unit.unwrap()) {
                covered[u] += 1;
            }
        }
        for hits in covered {
            let freq = hits as f64 / frames as f64;
            // 3 sigma for p=2/9 over 20k frames is about 0.0088.
            assert!((freq - 2.0 / 9.0).abs() < 0.0088, "freq {freq}");
        }
    }

    #[test]
    fn single_node_immediate_success() {
        let t = Topology::new(vec![set(&[0])], vec![], None).unwrap();
        let sc = AsyncScenario::new(t, StrategyKind::AsyncUnknownDelta, None);
        let (trace, report) = run_async(&sc, 1, 0).unwrap();
        assert!(report.success);
        assert!(trace.records.is_empty());
    }

    #[test]
    fn reception_containment_soundness() {
        // Random offsets and drift: every receive must match a transmit slot
        // contained in a listening frame of the receiver.
        let t = Topology::new(
            vec![set(&[0, 1]), set(&[0, 1]), set(&[0, 1])],
            sym_links(&[(0, 1, &[0, 1]), (1, 2, &[0, 1]), (0, 2, &[0, 1])]),
            None,
        )
        .unwrap();
        let mut sc = AsyncScenario::new(t, StrategyKind::AsyncKnownDelta, Some(2));
        sc.ticks_per_l = 999;
        sc.clock = ClockModel {
            delta: 1.0 / 7.0,
            law: ClockLaw::ResampledPerFrame,
        };
        sc.offsets_ticks = vec![0, 700, 230];
        sc.budget_ticks = 400 * 999;
        sc.run_full_budget = true;
        let (trace, _) = run_async(&sc, 33, 0).unwrap();

        // Rebuild frame bounds and transmit slots from the trace itself.
        let mut frames: std::collections::HashMap<(u32, u64), [u64; 4]> =
            std::collections::HashMap::new();
        let mut listen_channel: std::collections::HashMap<(u32, u64), u32> =
            std::collections::HashMap::new();
        let mut tx: Vec<(u32, u64, u64, u32)> = Vec::new();
        for r in &trace.records {
            match r.kind {
                EventKind::FrameBegin => {
                    frames.insert((r.node.unwrap(), r.unit.unwrap()), r.bounds.unwrap());
                }
                EventKind::ChannelSelect => {
                    listen_channel.insert((r.node.unwrap(), r.unit.unwrap()), r.channel.unwrap());
                }
                EventKind::Transmit => {
                    tx.push((r.node.unwrap(), r.t, r.end.unwrap(), r.channel.unwrap()));
                }
                _ => {}
            }
        }
        let mut receives = 0;
        for r in trace.events(EventKind::Receive) {
            receives += 1;
            let u = r.node.unwrap();
            let g = frames[&(u, r.unit.unwrap())];
            assert_eq!(listen_channel[&(u, r.unit.unwrap())], r.channel.unwrap());
            let slot = tx
                .iter()
                .find(|(v, _, end, c)| {
                    *v == r.peer.unwrap() && *end == r.t && *c == r.channel.unwrap()
                })
                .expect("transmit slot behind reception");
            assert!(g[0] <= slot.1 && slot.2 <= g[3], "containment violated");
        }
        assert!(receives > 50, "expected plenty of receptions, got {receives}");
    }

    #[test]
    fn straddling_slot_not_received() {
        // Offset of 499 ticks with zero drift and 333-tick slots: the middle
        // slot of every node-0 transmit frame straddles a node-1 frame
        // boundary (boundaries sit at 499 mod 999, inside (333, 666)), so
        // its end residue 666 must never appear as a reception; likewise
        // node 1's slot starting at 832 mod 999 straddles node 0's
        // boundaries at 0, forbidding end residue 166.
        let t = two_nodes_one_channel();
        let mut sc = AsyncScenario::new(t, StrategyKind::AsyncKnownDelta, Some(1));
        sc.ticks_per_l = 999;
        sc.offsets_ticks = vec![0, 499];
        sc.budget_ticks = 3000 * 999;
        sc.run_full_budget = true;
        let (trace, _) = run_async(&sc, 5, 0).unwrap();
        let mut at_node1 = 0;
        for r in trace.events(EventKind::Receive) {
            let residue = r.t % 999;
            match r.node {
                Some(1) => {
                    assert!(residue == 0 || residue == 333, "residue {residue}");
                    at_node1 += 1;
                }
                Some(0) => {
                    assert!(residue == 832 || residue == 499, "residue {residue}");
                }
                _ => unreachable!(),
            }
        }
        assert!(at_node1 > 100, "got {at_node1}");
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let t = Topology::new(
            vec![set(&[0, 1]), set(&[0, 1]), set(&[1])],
            sym_links(&[(0, 1, &[0, 1]), (1, 2, &[1]), (0, 2, &[1])]),
            None,
        )
        .unwrap();
        let mut sc = AsyncScenario::new(t, StrategyKind::AsyncUnknownDelta, None);
        sc.ticks_per_l = 999;
        sc.clock = ClockModel {
            delta: 0.1,
            law: ClockLaw::ResampledPerFrame,
        };
        sc.budget_ticks = 500 * 999;
        let (t1, r1) = run_async(&sc, 77, 2).unwrap();
        let (t2, r2) = run_async(&sc, 77, 2).unwrap();
        assert_eq!(t1.to_jsonl_string(), t2.to_jsonl_string());
        assert_eq!(r1.link_times, r2.link_times);
        t1.verify_ordering().unwrap();
        let (t3, _) = run_async(&sc, 78, 2).unwrap();
        assert_ne!(t1.to_jsonl_string(), t3.to_jsonl_string());
    }

    #[test]
    fn adversarial_script_is_honored() {
        let t = two_nodes_one_channel();
        let mut sc = AsyncScenario::new(t, StrategyKind::AsyncKnownDelta, Some(1));
        sc.ticks_per_l = 999;
        let script = vec![1.0 / 7.0, -1.0 / 7.0, 0.0];
        sc.clock = ClockModel {
            delta: 1.0 / 7.0,
            law: ClockLaw::AdversarialScript {
                scripts: vec![script.clone()],
            },
        };
        sc.budget_ticks = 12 * 999;
        sc.run_full_budget = true;
        let (trace, _) = run_async(&sc, 9, 0).unwrap();
        for r in trace.events(EventKind::FrameBegin) {
            let b = r.bounds.unwrap();
            let d = script[(r.unit.unwrap() % 3) as usize];
            let expect = 3 * slot_ticks(999, d, 1.0 / 7.0);
            assert_eq!(b[3] - b[0], expect);
        }
    }

    #[test]
    fn jammer_rounds_disrupt_async() {
        let chans: &[u32] = &[0, 1, 2];
        let t = Topology::new(
            vec![set(chans); 3],
            sym_links(&[(0, 1, chans), (0, 2, chans), (1, 2, chans)]),
            None,
        )
        .unwrap();
        let mut sc = AsyncScenario::new(t, StrategyKind::AsyncKnownDelta, Some(1));
        sc.ticks_per_l = 999;
        sc.clock = ClockModel {
            delta: 0.05,
            law: ClockLaw::ResampledPerFrame,
        };
        sc.jamming_variant = true;
        sc.jammer = JammerConfig {
            enabled: true,
            round_ticks: max_slot_ticks(999, 0.05) + 3,
            offset_ticks: 7,
            k: 1,
        };
        sc.budget_ticks = 600 * 999;
        sc.run_full_budget = true;
        let (trace, _) = run_async(&sc, 13, 0).unwrap();

        let mut jam_intervals: Vec<(u64, u64, u32)> = Vec::new();
        for r in trace.events(EventKind::JamSet) {
            if let Some(c) = r.channel {
                jam_intervals.push((r.t, r.end.unwrap(), c));
            }
        }
        assert!(!jam_intervals.is_empty());
        // No reception may overlap a same-channel jam: recover each
        // reception's slot interval via its transmit record.
        let tx: Vec<(u32, u64, u64, u32)> = trace
            .events(EventKind::Transmit)
            .map(|r| (r.node.unwrap(), r.t, r.end.unwrap(), r.channel.unwrap()))
            .collect();
        let mut checked = 0;
        for r in trace.events(EventKind::Receive) {
            let slot = tx
                .iter()
                .find(|(v, _, end, c)| {
                    *v == r.peer.unwrap() && *end == r.t && *c == r.channel.unwrap()
                })
                .unwrap();
            for &(js, je, jc) in &jam_intervals {
                if jc == r.channel.unwrap() {
                    assert!(js.max(slot.1) >= je.min(slot.2), "jammed reception");
                }
            }
            checked += 1;
        }
        assert!(checked > 0);
        // Scan soundness: every scanned channel has an active transmission.
        for r in trace.events(EventKind::JamScan) {
            for c in r.channels.as_ref().unwrap() {
                assert!(
                    tx.iter().any(|(_, s, e, tc)| tc == c && *s <= r.t && r.t < *e),
                    "scan at {} reported idle channel {c}",
                    r.t
                );
            }
        }
    }

    #[test]
    fn budget_exhaustion_reports_failure() {
        let t = two_nodes_one_channel();
        let mut sc = AsyncScenario::new(t, StrategyKind::AsyncKnownDelta, Some(64));
        sc.ticks_per_l = 999;
        // Tx probability 1/192 per frame; 2 frames will essentially never
        // complete both directions.
        sc.budget_ticks = 2 * 999;
        let (_, report) = run_async(&sc, 3, 0).unwrap();
        assert!(!report.success);
        assert!(report.completion.is_none() || report.completion.unwrap() > 2 * 999);
    }

    #[test]
    fn validation_errors() {
        let t = two_nodes_one_channel();
        let sc = AsyncScenario::new(t.clone(), StrategyKind::SyncVariableKnownDelta, Some(1));
        assert!(matches!(sc.validate(), Err(EngineError::InvalidScenario(_))));
        let mut sc = AsyncScenario::new(t.clone(), StrategyKind::AsyncKnownDelta, Some(1));
        sc.clock.delta = 0.2;
        assert!(matches!(sc.validate(), Err(EngineError::InvalidScenario(_))));
        let mut sc = AsyncScenario::new(t.clone(), StrategyKind::AsyncUnknownDelta, None);
        sc.clock.delta = 0.2; // allowed for unknown-degree (warned elsewhere)
        sc.ticks_per_l = 1000;
        assert!(matches!(sc.validate(), Err(EngineError::InvalidScenario(_))));
        sc.ticks_per_l = 999;
        sc.validate().unwrap();
        let mut sc = AsyncScenario::new(t, StrategyKind::AsyncKnownDelta, Some(1));
        sc.clock.law = ClockLaw::AdversarialScript {
            scripts: vec![vec![0.5]],
        };
        sc.clock.delta = 0.1;
        assert!(matches!(sc.validate(), Err(EngineError::InvalidScenario(_))));
    }

    #[test]
    fn clock_law_json_shape() {
        let m = ClockModel {
            delta: 0.1,
            law: ClockLaw::AdversarialScript {
                scripts: vec![vec![0.1, -0.1]],
            },
        };
        let j = serde_json::to_value(&m).unwrap();
        assert_eq!(j["delta"], 0.1);
        assert_eq!(j["law"], "adversarial_script");
        let back: ClockModel = serde_json::from_value(j).unwrap();
        assert_eq!(back, m);
        let plain: ClockModel =
            serde_json::from_value(serde_json::json!({"delta": 0.0, "law": "resampled_per_frame"}))
                .unwrap();
        assert_eq!(plain.law, ClockLaw::ResampledPerFrame);
    }
}
