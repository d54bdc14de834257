//! The six neighbor-discovery algorithms as pure per-node strategies.
//!
//! A [`Strategy`] owns only schedule counters. Each call to [`Strategy::step`]
//! consumes exactly two draws from the node's rng stream, in fixed order:
//! first the uniform channel choice, then the transmit/listen coin. That
//! discipline (plus the per-slot redraw of the jamming variant, which draws
//! once per transmitting slot) is what makes traces bit-reproducible.
//!
//! Schedules:
//!
//! * sync, identical start, known bound: stages of `ceil(log2(delta_est))`
//!   slots; slot `i` transmits with `min(1/2, |A(u)|/2^i)`.
//! * sync, identical start, no knowledge: the same stage shape with a running
//!   estimate `d` that starts at 2 and grows by 1 per stage.
//! * sync, variable start, known bound: constant `min(1/2, |A(u)|/delta_est)`.
//! * sync, variable start, no knowledge: epochs i = 1, 2, ...; epoch i has
//!   i+1 phases of 2^i slots; phase j uses estimate 2^j.
//! * async, known bound: one unit per frame, constant
//!   `min(1/2, |A(u)|/(3 delta_est))`.
//! * async, no knowledge: the epoch/phase schedule counted in frames, with
//!   `min(1/2, |A(u)|/(3 * 2^j))` in phase j.

use std::collections::BTreeMap;
use std::fmt;

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChannelId, ChannelSet, NodeId};
use crate::rng;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    SyncIdenticalKnownDelta,
    SyncIdenticalUnknownDelta,
    SyncVariableKnownDelta,
    SyncVariableUnknownDelta,
    AsyncKnownDelta,
    AsyncUnknownDelta,
}

impl StrategyKind {
    pub fn is_async(self) -> bool {
        matches!(self, Self::AsyncKnownDelta | Self::AsyncUnknownDelta)
    }

    pub fn is_sync(self) -> bool {
        !self.is_async()
    }

    /// Kinds that assume all nodes start at the same slot.
    pub fn is_identical_start(self) -> bool {
        matches!(
            self,
            Self::SyncIdenticalKnownDelta | Self::SyncIdenticalUnknownDelta
        )
    }

    /// Kinds that require a common degree upper bound `delta_est`.
    pub fn knows_delta(self) -> bool {
        matches!(
            self,
            Self::SyncIdenticalKnownDelta | Self::SyncVariableKnownDelta | Self::AsyncKnownDelta
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::SyncIdenticalKnownDelta => "sync_identical_known_delta",
            Self::SyncIdenticalUnknownDelta => "sync_identical_unknown_delta",
            Self::SyncVariableKnownDelta => "sync_variable_known_delta",
            Self::SyncVariableUnknownDelta => "sync_variable_unknown_delta",
            Self::AsyncKnownDelta => "async_known_delta",
            Self::AsyncUnknownDelta => "async_unknown_delta",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("strategy kind {kind} requires delta_est >= 1")]
    MissingDeltaEst { kind: StrategyKind },
    #[error("delta_est must be >= 1")]
    ZeroDeltaEst,
    #[error("the per-slot channel redraw variant applies only to async kinds, not {kind}")]
    VariantRequiresAsync { kind: StrategyKind },
}

/// Transceiver mode for one slot (sync) or one frame (async).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Transmit,
    Listen,
}

/// One scheduling unit's choice. The transmit payload is not stored here: it
/// is always the acting node's id plus its full channel set, invariant across
/// the run, so engines attach it at delivery time (see [`Message`]).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Action {
    pub channel: ChannelId,
    pub mode: Mode,
}

/// The content every transmission carries.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Message {
    pub sender: NodeId,
    pub advertised: ChannelSet,
}

/// What a node has learned: neighbor id mapped to the common channel set.
#[derive(Clone, Default, Debug, PartialEq, Eq)]
pub struct NodeKnowledge {
    discovered: BTreeMap<NodeId, ChannelSet>,
}

impl NodeKnowledge {
    /// Records `advertised ∩ own` for `sender`; idempotent. Returns true when
    /// the sender was not known before.
    pub fn on_receive(&mut self, sender: NodeId, advertised: &ChannelSet, own: &ChannelSet) -> bool {
        let common = advertised.intersection(own);
        // A clear reception happens on a channel both sides have.
        assert!(
            !common.is_empty(),
            "clear reception from {sender} with no common channel"
        );
        match self.discovered.insert(sender, common.clone()) {
            None => true,
            Some(prev) => {
                assert_eq!(prev, common, "advertised set changed between receptions");
                false
            }
        }
    }

    pub fn discovered(&self) -> &BTreeMap<NodeId, ChannelSet> {
        &self.discovered
    }

    pub fn len(&self) -> usize {
        self.discovered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discovered.is_empty()
    }
}

/// Transmit probability in slot `i` of a stage: min(1/2, a/2^i).
pub fn tx_prob_sync_identical(a: usize, i: u32) -> f64 {
    assert!(a >= 1 && i >= 1);
    (a as f64 / 2f64.powi(i as i32)).min(0.5)
}

/// Constant per-slot transmit probability: min(1/2, a/delta_est).
pub fn tx_prob_sync_variable(a: usize, delta_est: u64) -> f64 {
    assert!(a >= 1 && delta_est >= 1);
    (a as f64 / delta_est as f64).min(0.5)
}

/// Per-frame transmit probability: min(1/2, a/(3*delta_est)).
pub fn tx_prob_async(a: usize, delta_est: u64) -> f64 {
    assert!(a >= 1 && delta_est >= 1);
    (a as f64 / (3.0 * delta_est as f64)).min(0.5)
}

/// Slots per stage: ceil(log2(delta_est)), clamped to at least 1 so every
/// stage executes at least one slot.
pub fn stage_length(delta_est: u64) -> u32 {
    assert!(delta_est >= 1);
    delta_est.next_power_of_two().trailing_zeros().max(1)
}

/// Total units in epochs 1..=k: k * 2^(k+1); epoch i alone holds (i+1) * 2^i.
pub fn cumulative_units_through_epoch(k: u32) -> u64 {
    (k as u64) << (k + 1)
}

/// Locates `global_index` (0-based unit count from the node's own start) in
/// the epoch/phase schedule. Returns (epoch, phase, delta_est = 2^phase).
pub fn epoch_phase_at(global_index: u64) -> (u32, u32, u64) {
    let mut epoch = 1u32;
    while cumulative_units_through_epoch(epoch) <= global_index {
        epoch += 1;
    }
    let offset = global_index - cumulative_units_through_epoch(epoch - 1);
    let phase = (offset >> epoch) as u32 + 1;
    debug_assert!(phase <= epoch + 1);
    (epoch, phase, 1u64 << phase)
}

/// Schedule position of the unit a strategy is about to execute.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StepInfo {
    /// 1-based stage and 1-based slot within the stage.
    SyncIdenticalKnown { stage: u64, slot: u32 },
    /// Current running estimate d and 1-based slot within its stage.
    SyncIdenticalUnknown { estimate: u64, slot: u32 },
    SyncVariableKnown,
    SyncVariableUnknown { epoch: u32, phase: u32, delta_est: u64 },
    AsyncKnown { frame: u64 },
    AsyncUnknown { frame: u64, epoch: u32, phase: u32, delta_est: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Schedule {
    IdenticalKnown { stage: u64, slot: u32 },
    IdenticalUnknown { estimate: u64, slot: u32 },
    VariableKnown { unit: u64 },
    EpochPhase { unit: u64, epoch: u32, phase: u32, in_phase: u64 },
}

/// One node's strategy: kind, degree estimate, and schedule counters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Strategy {
    kind: StrategyKind,
    delta_est: u64,
    sched: Schedule,
    per_slot_redraw: bool,
}

impl Strategy {
    pub fn new(kind: StrategyKind, delta_est: Option<u64>) -> Result<Self, ProtocolError> {
        let delta_est = if kind.knows_delta() {
            match delta_est {
                Some(0) => return Err(ProtocolError::ZeroDeltaEst),
                Some(d) => d,
                None => return Err(ProtocolError::MissingDeltaEst { kind }),
            }
        } else {
            // Unknown-delta kinds derive estimates from their schedule.
            delta_est.unwrap_or(1).max(1)
        };
        let sched = match kind {
            StrategyKind::SyncIdenticalKnownDelta => Schedule::IdenticalKnown { stage: 1, slot: 1 },
            StrategyKind::SyncIdenticalUnknownDelta => {
                Schedule::IdenticalUnknown { estimate: 2, slot: 1 }
            }
            StrategyKind::SyncVariableKnownDelta | StrategyKind::AsyncKnownDelta => {
                Schedule::VariableKnown { unit: 0 }
            }
            StrategyKind::SyncVariableUnknownDelta | StrategyKind::AsyncUnknownDelta => {
                Schedule::EpochPhase {
                    unit: 0,
                    epoch: 1,
                    phase: 1,
                    in_phase: 0,
                }
            }
        };
        Ok(Self {
            kind,
            delta_est,
            sched,
            per_slot_redraw: false,
        })
    }

    /// The jamming variant: a transmitting node re-draws its channel uniformly
    /// at the beginning of each slot of the frame. Listening is unchanged.
    pub fn into_jamming_variant(mut self) -> Result<Self, ProtocolError> {
        if !self.kind.is_async() {
            return Err(ProtocolError::VariantRequiresAsync { kind: self.kind });
        }
        self.per_slot_redraw = true;
        Ok(self)
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn delta_est(&self) -> u64 {
        self.delta_est
    }

    pub fn per_slot_redraw(&self) -> bool {
        self.per_slot_redraw
    }

    /// Position of the unit the next [`step`](Self::step) will execute.
    pub fn peek(&self) -> StepInfo {
        match (&self.sched, self.kind) {
            (&Schedule::IdenticalKnown { stage, slot }, _) => {
                StepInfo::SyncIdenticalKnown { stage, slot }
            }
            (&Schedule::IdenticalUnknown { estimate, slot }, _) => {
                StepInfo::SyncIdenticalUnknown { estimate, slot }
            }
            (&Schedule::VariableKnown { .. }, StrategyKind::SyncVariableKnownDelta) => {
                StepInfo::SyncVariableKnown
            }
            (&Schedule::VariableKnown { unit }, StrategyKind::AsyncKnownDelta) => {
                StepInfo::AsyncKnown { frame: unit }
            }
            (&Schedule::EpochPhase { unit, epoch, phase, .. }, StrategyKind::SyncVariableUnknownDelta) => {
                StepInfo::SyncVariableUnknown {
                    epoch,
                    phase,
                    delta_est: 1u64 << phase,
                }
                .also_check(unit)
            }
            (&Schedule::EpochPhase { unit, epoch, phase, .. }, StrategyKind::AsyncUnknownDelta) => {
                StepInfo::AsyncUnknown {
                    frame: unit,
                    epoch,
                    phase,
                    delta_est: 1u64 << phase,
                }
                .also_check(unit)
            }
            _ => unreachable!("schedule/kind pairing is fixed at construction"),
        }
    }

    /// Transmit probability the next step will use, given |A(u)| = `a`.
    pub fn tx_prob(&self, a: usize) -> f64 {
        match &self.sched {
            Schedule::IdenticalKnown { slot, .. } => tx_prob_sync_identical(a, *slot),
            Schedule::IdenticalUnknown { slot, .. } => tx_prob_sync_identical(a, *slot),
            Schedule::VariableKnown { .. } => match self.kind {
                StrategyKind::SyncVariableKnownDelta => tx_prob_sync_variable(a, self.delta_est),
                StrategyKind::AsyncKnownDelta => tx_prob_async(a, self.delta_est),
                _ => unreachable!(),
            },
            Schedule::EpochPhase { phase, .. } => match self.kind {
                StrategyKind::SyncVariableUnknownDelta => tx_prob_sync_variable(a, 1u64 << phase),
                StrategyKind::AsyncUnknownDelta => tx_prob_async(a, 1u64 << phase),
                _ => unreachable!(),
            },
        }
    }

    /// Executes one scheduling unit: draws the channel, then the mode, then
    /// advances the schedule. Exactly two rng draws, channel first.
    pub fn step(&mut self, channels: &ChannelSet, stream: &mut ChaCha12Rng) -> Action {
        let channel = channels.nth(rng::uniform_index(stream, channels.len()));
        let p = self.tx_prob(channels.len());
        let mode = if rng::coin(stream, p) {
            Mode::Transmit
        } else {
            Mode::Listen
        };
        self.advance();
        Action { channel, mode }
    }

    fn advance(&mut self) {
        match &mut self.sched {
            Schedule::IdenticalKnown { stage, slot } => {
                if *slot >= stage_length(self.delta_est) {
                    *slot = 1;
                    *stage += 1;
                } else {
                    *slot += 1;
                }
            }
            Schedule::IdenticalUnknown { estimate, slot } => {
                if *slot >= stage_length(*estimate) {
                    *slot = 1;
                    *estimate += 1;
                } else {
                    *slot += 1;
                }
            }
            Schedule::VariableKnown { unit } => *unit += 1,
            Schedule::EpochPhase {
                unit,
                epoch,
                phase,
                in_phase,
            } => {
                *unit += 1;
                *in_phase += 1;
                if *in_phase == 1u64 << *epoch {
                    *in_phase = 0;
                    *phase += 1;
                    if *phase == *epoch + 2 {
                        *phase = 1;
                        *epoch += 1;
                    }
                }
            }
        }
    }
}

impl StepInfo {
    /// Cross-checks incremental epoch/phase counters against the closed-form
    /// inverse in debug builds.
    fn also_check(self, unit: u64) -> Self {
        if cfg!(debug_assertions) {
            let (e, p, d) = epoch_phase_at(unit);
            match self {
                StepInfo::SyncVariableUnknown { epoch, phase, delta_est }
                | StepInfo::AsyncUnknown { epoch, phase, delta_est, .. } => {
                    debug_assert_eq!((e, p, d), (epoch, phase, delta_est));
                }
                _ => {}
            }
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    // proptest's prelude has its own `Strategy` trait; shadow it back to ours.
    use super::Strategy;
    use crate::model::ChannelSet;
    use proptest::prelude::*;

    fn set(ids: &[u32]) -> ChannelSet {
        ChannelSet::from_ids(ids.iter().copied()).unwrap()
    }

    #[test]
    fn tx_prob_formulas() {
        assert_eq!(tx_prob_sync_identical(4, 2), 0.5);
        assert_eq!(tx_prob_sync_identical(4, 4), 0.25);
        assert_eq!(tx_prob_sync_identical(1, 1), 0.5);
        assert_eq!(tx_prob_sync_variable(2, 2), 0.5);
        assert_eq!(tx_prob_sync_variable(2, 8), 0.25);
        assert_eq!(tx_prob_sync_variable(1, 1), 0.5);
        assert_eq!(tx_prob_async(3, 1), 0.5);
        assert_eq!(tx_prob_async(3, 2), 0.5);
        assert_eq!(tx_prob_async(2, 4), 1.0 / 6.0);
    }

    #[test]
    fn stage_length_clamps() {
        assert_eq!(stage_length(8), 3);
        assert_eq!(stage_length(2), 1);
        assert_eq!(stage_length(5), 3);
        assert_eq!(stage_length(1), 1);
    }

    #[test]
    fn epoch_phase_examples() {
        assert_eq!(epoch_phase_at(0), (1, 1, 2));
        assert_eq!(epoch_phase_at(3), (1, 2, 4));
        assert_eq!(epoch_phase_at(4), (2, 1, 2));
    }

    #[test]
    fn prefix_sum_matches_direct_summation() {
        let mut total = 0u64;
        for k in 1..=20u32 {
            total += (k as u64 + 1) << k; // epoch k holds (k+1) * 2^k units
            assert_eq!(cumulative_units_through_epoch(k), total);
        }
        assert_eq!(cumulative_units_through_epoch(1), 4);
        assert_eq!(cumulative_units_through_epoch(2), 16);
    }

    #[test]
    fn epoch_phase_round_trip_small() {
        let mut expect_epoch = 1u32;
        let mut expect_phase = 1u32;
        let mut in_phase = 0u64;
        for index in 0..10_000u64 {
            assert_eq!(
                epoch_phase_at(index),
                (expect_epoch, expect_phase, 1u64 << expect_phase),
                "index {index}"
            );
            in_phase += 1;
            if in_phase == 1u64 << expect_epoch {
                in_phase = 0;
                expect_phase += 1;
                if expect_phase == expect_epoch + 2 {
                    expect_phase = 1;
                    expect_epoch += 1;
                }
            }
        }
    }

    #[test]
    fn strategy_construction_rules() {
        assert_eq!(
            Strategy::new(StrategyKind::SyncIdenticalKnownDelta, None).unwrap_err(),
            ProtocolError::MissingDeltaEst {
                kind: StrategyKind::SyncIdenticalKnownDelta
            }
        );
        assert_eq!(
            Strategy::new(StrategyKind::AsyncKnownDelta, Some(0)).unwrap_err(),
            ProtocolError::ZeroDeltaEst
        );
        let s = Strategy::new(StrategyKind::SyncVariableKnownDelta, Some(3)).unwrap();
        assert_eq!(
            s.into_jamming_variant().unwrap_err(),
            ProtocolError::VariantRequiresAsync {
                kind: StrategyKind::SyncVariableKnownDelta
            }
        );
        let a = Strategy::new(StrategyKind::AsyncUnknownDelta, None).unwrap();
        assert!(a.into_jamming_variant().unwrap().per_slot_redraw());
    }

    #[test]
    fn identical_known_stage_shape() {
        let mut s = Strategy::new(StrategyKind::SyncIdenticalKnownDelta, Some(8)).unwrap();
        let channels = set(&[0]);
        let mut stream = rng::node_stream(1, 0, 0);
        let mut seen = Vec::new();
        for _ in 0..7 {
            seen.push(s.peek());
            // Probability is non-increasing within a stage for fixed a.
            s.step(&channels, &mut stream);
        }
        assert_eq!(seen[0], StepInfo::SyncIdenticalKnown { stage: 1, slot: 1 });
        assert_eq!(seen[2], StepInfo::SyncIdenticalKnown { stage: 1, slot: 3 });
        assert_eq!(seen[3], StepInfo::SyncIdenticalKnown { stage: 2, slot: 1 });
        assert_eq!(seen[6], StepInfo::SyncIdenticalKnown { stage: 3, slot: 1 });
        let probs: Vec<f64> = (1..=3).map(|i| tx_prob_sync_identical(4, i)).collect();
        assert!(probs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn identical_unknown_estimate_progression() {
        let mut s = Strategy::new(StrategyKind::SyncIdenticalUnknownDelta, None).unwrap();
        let channels = set(&[0]);
        let mut stream = rng::node_stream(1, 0, 0);
        // d=2 stage: 1 slot; d=3: 2; d=4: 2; d=5: 3.
        let expected = [
            (2u64, 1u32),
            (3, 1),
            (3, 2),
            (4, 1),
            (4, 2),
            (5, 1),
            (5, 2),
            (5, 3),
            (6, 1),
        ];
        for (estimate, slot) in expected {
            assert_eq!(
                s.peek(),
                StepInfo::SyncIdenticalUnknown { estimate, slot }
            );
            s.step(&channels, &mut stream);
        }
        // First slot behaves as an identical-start known-degree stage with
        // estimate 2.
        let fresh = Strategy::new(StrategyKind::SyncIdenticalUnknownDelta, None).unwrap();
        assert_eq!(fresh.tx_prob(1), tx_prob_sync_identical(1, 1));
    }

    #[test]
    fn variable_known_singleton_channel() {
        let mut s = Strategy::new(StrategyKind::SyncVariableKnownDelta, Some(2)).unwrap();
        let channels = set(&[5]);
        let mut stream = rng::node_stream(9, 0, 0);
        let mut transmits = 0u32;
        let n = 20_000;
        for _ in 0..n {
            let a = s.step(&channels, &mut stream);
            assert_eq!(a.channel, ChannelId(5));
            if a.mode == Mode::Transmit {
                transmits += 1;
            }
        }
        let freq = transmits as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.015, "transmit freq {freq}");
    }

    #[test]
    fn async_unknown_uses_phase_estimate() {
        let mut s = Strategy::new(StrategyKind::AsyncUnknownDelta, None).unwrap();
        let channels = set(&[0, 1, 2]);
        let mut stream = rng::node_stream(3, 0, 0);
        for frame in 0..64u64 {
            let (epoch, phase, d) = epoch_phase_at(frame);
            assert_eq!(
                s.peek(),
                StepInfo::AsyncUnknown {
                    frame,
                    epoch,
                    phase,
                    delta_est: d
                }
            );
            assert_eq!(s.tx_prob(3), tx_prob_async(3, d));
            s.step(&channels, &mut stream);
        }
    }

    #[test]
    fn on_receive_records_intersection_idempotently() {
        let mut k = NodeKnowledge::default();
        let newly = k.on_receive(NodeId(4), &set(&[0, 1, 2]), &set(&[1, 2, 3]));
        assert!(newly);
        assert_eq!(k.discovered()[&NodeId(4)], set(&[1, 2]));
        let again = k.on_receive(NodeId(4), &set(&[0, 1, 2]), &set(&[1, 2, 3]));
        assert!(!again);
        assert_eq!(k.len(), 1);
    }

    #[test]
    #[should_panic(expected = "no common channel")]
    fn on_receive_disjoint_is_unreachable() {
        let mut k = NodeKnowledge::default();
        k.on_receive(NodeId(1), &set(&[0]), &set(&[1]));
    }

    proptest! {
        #[test]
        fn action_channel_is_member(
            kind_idx in 0usize..6,
            ids in proptest::collection::btree_set(0u32..32, 1..8),
            delta_est in 1u64..20,
            seed in 0u64..1000,
            steps in 1usize..40,
        ) {
            let kinds = [
                StrategyKind::SyncIdenticalKnownDelta,
                StrategyKind::SyncIdenticalUnknownDelta,
                StrategyKind::SyncVariableKnownDelta,
                StrategyKind::SyncVariableUnknownDelta,
                StrategyKind::AsyncKnownDelta,
                StrategyKind::AsyncUnknownDelta,
            ];
            let channels = ChannelSet::from_ids(ids.iter().copied()).unwrap();
            let mut s = Strategy::new(kinds[kind_idx], Some(delta_est)).unwrap();
            let mut stream = rng::node_stream(seed, 0, 0);
            for _ in 0..steps {
                let a = s.step(&channels, &mut stream);
                prop_assert!(channels.contains(a.channel));
            }
        }

        #[test]
        fn stepping_is_deterministic(seed in 0u64..500, steps in 1usize..60) {
            let channels = ChannelSet::from_ids(0..5u32).unwrap();
            let run = |seed| {
                let mut s = Strategy::new(StrategyKind::SyncIdenticalUnknownDelta, None).unwrap();
                let mut stream = rng::node_stream(seed, 3, 7);
                (0..steps).map(|_| s.step(&channels, &mut stream)).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(seed), run(seed));
        }
    }
}
