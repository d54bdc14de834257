//! Slotted synchronous simulator: advances all nodes in lockstep slots,
//! resolves collisions, applies impairments, detects discoveries, and emits
//! the trace.
//!
//! Reception semantics per slot: a receiver `u` listening on channel `c`
//! receives the message of neighbor `v` iff `v` transmitted on `c`, no other
//! neighbor of `u` transmitted on `c`, the jammer did not disrupt the
//! transmission, and the loss coin succeeded. A transmitting node never
//! receives in the same slot, and there is no collision detection: a receiver
//! under collision observes silence.
//!
//! Time is a tick grid with `ticks_per_slot` ticks per slot; slot `s` spans
//! `[s*K, (s+1)*K)`. Jammer rounds live on the same grid and may straddle
//! slot boundaries. Discovery times are counted in slots from `T_s`, the
//! latest start offset: a discovery in global slot `s` is reported as
//! `s - T_s + 1`, so "within X slots" means `time <= X`. Receptions before
//! `T_s` (times <= 0) still count toward discovery.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::impairments::{
    self, ImpairmentsError, JamInterval, JammerConfig, JammerState, LossModel,
};
use crate::model::{Adjacency, ChannelSet, LinkIndex, NodeId, Topology};
use crate::protocols::{Action, Mode, NodeKnowledge, Strategy, StrategyKind};
use crate::rng;
use crate::trace::{
    DiscoveryReport, EngineKind, TimeUnit, Trace, TraceHeader, TraceRecord, TRACE_SCHEMA,
};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("scenario invalid: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Impairment(#[from] ImpairmentsError),
    #[error("exact enumeration would visit {states} joint outcomes (limit {limit})")]
    EnumerationTooLarge { states: u128, limit: u128 },
    #[error("link index {0} out of range")]
    NoSuchLink(usize),
}

/// Complete description of one synchronous trial, minus the seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyncScenario {
    pub topology: Topology,
    /// All nodes run the same algorithm; must be a sync kind.
    pub kind: StrategyKind,
    /// Required for the known-Δ kinds, ignored by the unknown-Δ kinds.
    pub delta_est: Option<u64>,
    /// Per-node start slot. Must be all zero for the identical-start kinds.
    pub offsets: Vec<u64>,
    pub loss: LossModel,
    pub jammer: JammerConfig,
    /// Slots simulated after `T_s` (the latest start).
    pub budget_slots: u64,
    pub ticks_per_slot: u64,
    /// Keep stepping after full discovery (for coverage-frequency studies).
    pub run_full_budget: bool,
    /// Build the per-event record list. Off saves memory on bulk Monte Carlo
    /// runs; outcomes are unaffected.
    pub record_trace: bool,
}

impl SyncScenario {
    /// Canonical starting point: zero offsets, no impairments, trace on.
    pub fn new(topology: Topology, kind: StrategyKind, delta_est: Option<u64>) -> Self {
        let n = topology.num_nodes();
        Self {
            topology,
            kind,
            delta_est,
            offsets: vec![0; n],
            loss: LossModel::off(),
            jammer: JammerConfig::disabled(),
            budget_slots: 1000,
            ticks_per_slot: 1,
            run_full_budget: false,
            record_trace: true,
        }
    }

    pub fn t_s(&self) -> u64 {
        self.offsets.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !self.kind.is_sync() {
            return Err(EngineError::InvalidScenario(format!(
                "strategy kind {} requires the async engine",
                self.kind
            )));
        }
        if self.offsets.len() != self.topology.num_nodes() {
            return Err(EngineError::InvalidScenario(format!(
                "{} offsets for {} nodes",
                self.offsets.len(),
                self.topology.num_nodes()
            )));
        }
        if self.kind.is_identical_start() && self.offsets.iter().any(|&o| o != 0) {
            return Err(EngineError::InvalidScenario(format!(
                "strategy kind {} requires identical start times, offsets must all be 0",
                self.kind
            )));
        }
        if self.ticks_per_slot == 0 {
            return Err(EngineError::InvalidScenario(
                "ticks_per_slot must be positive".into(),
            ));
        }
        if self.budget_slots == 0 {
            return Err(EngineError::InvalidScenario(
                "budget_slots must be positive".into(),
            ));
        }
        // Constructs one strategy to surface Δ_est errors early.
        Strategy::new(self.kind, self.delta_est)
            .map_err(|e| EngineError::InvalidScenario(e.to_string()))?;
        self.jammer.validate(self.ticks_per_slot)?;
        if self.jammer.enabled {
            impairments::check_jamming_preconditions(&self.topology)?;
        }
        Ok(())
    }
}

/// Everything that happened in one slot, for callers that want to fold over
/// outcomes without parsing the trace.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotOutcome {
    pub slot: u64,
    /// One entry per node; None while the node is quiet (before its start).
    pub actions: Vec<Option<Action>>,
    /// (receiver, sender) pairs that cleanly received this slot, at most one
    /// sender per receiver.
    pub delivered: Vec<(NodeId, NodeId)>,
}

/// Runs one trial, returning the trace and the discovery report.
pub fn run_sync(
    scenario: &SyncScenario,
    seed: u64,
    trial: u64,
) -> Result<(Trace, DiscoveryReport), EngineError> {
    run_sync_observed(scenario, seed, trial, |_| {})
}

/// As [`run_sync`], invoking `observe` on every completed slot.
pub fn run_sync_observed<F: FnMut(&SlotOutcome)>(
    scenario: &SyncScenario,
    seed: u64,
    trial: u64,
    mut observe: F,
) -> Result<(Trace, DiscoveryReport), EngineError> {
    scenario.validate()?;
    let topo = &scenario.topology;
    let n = topo.num_nodes();
    let k = scenario.ticks_per_slot;
    let adj = Adjacency::build(topo);
    let link_lookup = LinkIndex::build(topo);
    let t_s = scenario.t_s();
    let end_slot = t_s + scenario.budget_slots;

    let mut strategies: Vec<Strategy> = (0..n)
        .map(|_| Strategy::new(scenario.kind, scenario.delta_est).expect("validated"))
        .collect();
    let mut streams: Vec<ChaCha12Rng> = (0..n)
        .map(|u| rng::node_stream(seed, trial, u as u32))
        .collect();
    let mut jammer_stream = rng::trial_stream(seed, trial, "jammer");
    let mut jammer_state = JammerState::default();
    let mut active_jams: Vec<JamInterval> = Vec::new();
    let mut next_round: u64 = scenario.jammer.offset_ticks;

    let mut knowledge: Vec<NodeKnowledge> = (0..n).map(|_| NodeKnowledge::default()).collect();
    let mut link_times: Vec<Option<i64>> = vec![None; topo.links().len()];
    let mut undiscovered = topo.links().len();

    let header = TraceHeader {
        schema: TRACE_SCHEMA,
        engine: EngineKind::Sync,
        ticks_per_unit: k,
        seed,
        trial,
        config: serde_json::to_value(scenario).expect("scenario serializes"),
    };
    let mut trace = Trace::new(header);
    let rec = scenario.record_trace;

    let mut actions: Vec<Option<Action>> = vec![None; n];
    for s in 0..end_slot {
        let slot_start = s * k;
        let slot_end = (s + 1) * k;
        if rec {
            trace.push(TraceRecord::slot_begin(slot_start, None, s, None));
            for u in 0..n {
                if scenario.offsets[u] == s {
                    trace.push(TraceRecord::start(slot_start, u as u32));
                }
            }
        }

        for u in 0..n {
            actions[u] = if scenario.offsets[u] <= s {
                let a = strategies[u].step(topo.channels(NodeId(u as u32)), &mut streams[u]);
                if rec {
                    trace.push(TraceRecord::channel_select(
                        slot_start, u as u32, s, a.channel.0,
                    ));
                    trace.push(TraceRecord::mode_select(slot_start, u as u32, s, a.mode));
                    if a.mode == Mode::Transmit {
                        trace.push(TraceRecord::transmit(
                            slot_start,
                            u as u32,
                            s,
                            None,
                            a.channel.0,
                            slot_end,
                        ));
                    }
                }
                Some(a)
            } else {
                None
            };
        }

        if scenario.jammer.enabled {
            active_jams.retain(|j| j.end > slot_start);
            while next_round < slot_end {
                // Rounds are at least one slot long, so this round starts
                // within the current slot and sees its transmissions.
                let scan = scan_channels(&actions);
                let pick = impairments::jammer_step(&mut jammer_state, &scan, &mut jammer_stream);
                if rec {
                    trace.push(TraceRecord::jam_scan(
                        next_round,
                        scan.iter().map(|c| c.0).collect(),
                    ));
                    trace.push(TraceRecord::jam_set(
                        next_round,
                        pick.map(|c| c.0),
                        next_round + scenario.jammer.round_ticks,
                    ));
                }
                if let Some(c) = pick {
                    active_jams.push(JamInterval {
                        channel: c,
                        start: next_round,
                        end: next_round + scenario.jammer.round_ticks,
                    });
                }
                next_round += scenario.jammer.round_ticks;
            }
        }

        let mut delivered: Vec<(NodeId, NodeId)> = Vec::new();
        for u in 0..n {
            let Some(Action {
                channel: c,
                mode: Mode::Listen,
            }) = actions[u]
            else {
                continue;
            };
            let receiver = NodeId(u as u32);
            let mut sender: Option<NodeId> = None;
            let mut collided = false;
            for &v in adj.span_neighbors_on(receiver, c) {
                if let Some(Action {
                    channel: vc,
                    mode: Mode::Transmit,
                }) = actions[v.index()]
                {
                    if vc == c {
                        if sender.is_some() {
                            collided = true;
                            break;
                        }
                        sender = Some(v);
                    }
                }
            }
            let Some(v) = sender else { continue };
            if collided {
                continue;
            }
            if impairments::apply_jamming(&active_jams, c, slot_start, slot_end) {
                continue;
            }
            if scenario.loss.drops(seed, trial, receiver, v, slot_start) {
                continue;
            }
            delivered.push((receiver, v));
            if rec {
                trace.push(TraceRecord::receive(slot_start, u as u32, s, c.0, v.0));
            }
            let advertised = topo.channels(v).clone();
            knowledge[u].on_receive(v, &advertised, topo.channels(receiver));
            let li = link_lookup.index_of(v, receiver, c).expect("span channel");
            if link_times[li].is_none() {
                link_times[li] = Some(s as i64 - t_s as i64 + 1);
                undiscovered -= 1;
                if rec {
                    trace.push(TraceRecord::discover(slot_start, u as u32, c.0, v.0, li));
                }
            }
        }

        observe(&SlotOutcome {
            slot: s,
            actions: actions.clone(),
            delivered,
        });

        if undiscovered == 0 && !scenario.run_full_budget {
            break;
        }
    }

    let success = link_times
        .iter()
        .all(|t| matches!(t, Some(x) if *x <= scenario.budget_slots as i64));
    let completion = if link_times.is_empty() {
        None
    } else if link_times.iter().all(|t| t.is_some()) {
        link_times.iter().map(|t| t.unwrap()).max()
    } else {
        None
    };
    let report = DiscoveryReport {
        engine: EngineKind::Sync,
        unit: TimeUnit::Slots,
        success,
        t_s,
        link_times,
        completion,
        budget: scenario.budget_slots,
    };
    trace.sort_records();
    Ok((trace, report))
}

fn scan_channels(actions: &[Option<Action>]) -> ChannelSet {
    let mut members: Vec<_> = actions
        .iter()
        .filter_map(|a| match a {
            Some(Action {
                channel,
                mode: Mode::Transmit,
            }) => Some(*channel),
            _ => None,
        })
        .collect();
    members.sort_unstable();
    members.dedup();
    ChannelSet::new(members).expect("deduped")
}

const ENUMERATION_LIMIT: u128 = 10_000_000;

/// Exact per-slot coverage probability of the directed link
/// `topology.links()[link_index]`, by full enumeration of the joint
/// channel/mode outcomes of every node that can affect the reception:
/// the transmitter, the receiver, and the receiver's other neighbors.
///
/// `profile[u]` gives node u's channel set (uniform draw) and transmit
/// probability for the slot under study. This is the brute-force oracle for
/// Monte Carlo validation; it shares no code with the engine's slot loop.
pub fn exact_coverage_prob_slot(
    topology: &Topology,
    link_index: usize,
    profile: &[(ChannelSet, f64)],
) -> Result<f64, EngineError> {
    let link = topology
        .links()
        .get(link_index)
        .ok_or(EngineError::NoSuchLink(link_index))?;
    if profile.len() != topology.num_nodes() {
        return Err(EngineError::InvalidScenario(format!(
            "{} profile entries for {} nodes",
            profile.len(),
            topology.num_nodes()
        )));
    }
    let adj = Adjacency::build(topology);
    let v = link.from;
    let u = link.to;
    let mut relevant: Vec<usize> = vec![v.index(), u.index()];
    for c in link.span.iter() {
        for &w in adj.span_neighbors_on(u, c) {
            relevant.push(w.index());
        }
    }
    relevant.sort_unstable();
    relevant.dedup();

    let mut states: u128 = 1;
    for &w in &relevant {
        states = states.saturating_mul(2 * profile[w].0.len() as u128);
    }
    if states > ENUMERATION_LIMIT {
        return Err(EngineError::EnumerationTooLarge {
            states,
            limit: ENUMERATION_LIMIT,
        });
    }

    // Mixed-radix counter over (channel index, mode) per relevant node.
    let radix: Vec<usize> = relevant.iter().map(|&w| 2 * profile[w].0.len()).collect();
    let mut digits = vec![0usize; relevant.len()];
    let mut total = 0.0f64;
    loop {
        let mut prob = 1.0f64;
        let mut tx_v: Option<crate::model::ChannelId> = None;
        let mut listen_u: Option<crate::model::ChannelId> = None;
        for (pos, &w) in relevant.iter().enumerate() {
            let (set, p) = &profile[w];
            let d = digits[pos];
            let channel = set.nth(d / 2);
            let transmit = d % 2 == 0;
            prob *= (if transmit { *p } else { 1.0 - *p }) / set.len() as f64;
            if w == v.index() && transmit {
                tx_v = Some(channel);
            }
            if w == u.index() && !transmit {
                listen_u = Some(channel);
            }
        }
        if prob > 0.0 {
            if let (Some(c), Some(cl)) = (tx_v, listen_u) {
                if c == cl && link.span.contains(c) {
                    let mut clear = true;
                    for (pos, &w) in relevant.iter().enumerate() {
                        if w == v.index() || w == u.index() {
                            continue;
                        }
                        let is_neighbor_on_c =
                            adj.span_neighbors_on(u, c).contains(&NodeId(w as u32));
                        let d = digits[pos];
                        let transmit = d % 2 == 0;
                        if is_neighbor_on_c && transmit && profile[w].0.nth(d / 2) == c {
                            clear = false;
                            break;
                        }
                    }
                    if clear {
                        total += prob;
                    }
                }
            }
        }
        // Increment the counter; stop after the last assignment.
        let mut pos = 0;
        loop {
            if pos == digits.len() {
                return Ok(total);
            }
            digits[pos] += 1;
            if digits[pos] < radix[pos] {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}
