//! Shared fixtures for the engine benchmarks: homogeneous topologies and
//! ready-to-run scenarios sized so one trial stays in the low-millisecond
//! range on a desk machine.

use ndisco_core::engine_async::AsyncScenario;
use ndisco_core::engine_sync::SyncScenario;
use ndisco_core::impairments::JammerConfig;
use ndisco_core::model::{ChannelSet, Link, NodeId, Topology};
use ndisco_core::protocols::StrategyKind;

pub const TICKS_PER_L: u64 = 999;

/// Complete graph on `n` nodes sharing channels 0..s, full spans.
pub fn complete_topology(n: usize, s: u32) -> Topology {
    let set = ChannelSet::from_ids(0..s).unwrap();
    let mut links = Vec::new();
    for u in 0..n as u32 {
        for v in (u + 1)..n as u32 {
            links.push(Link {
                from: NodeId(u),
                to: NodeId(v),
                span: set.clone(),
            });
            links.push(Link {
                from: NodeId(v),
                to: NodeId(u),
                span: set.clone(),
            });
        }
    }
    Topology::new(vec![set; n], links, None).unwrap()
}

/// One synchronous trial on K8 with 4 channels, constant-probability
/// strategy, generous budget, trace recording switchable.
pub fn sync_fixture(record_trace: bool) -> SyncScenario {
    let t = complete_topology(8, 4);
    let mut sc = SyncScenario::new(t, StrategyKind::SyncVariableKnownDelta, Some(7));
    sc.budget_slots = 20_000;
    sc.record_trace = record_trace;
    sc
}

/// One asynchronous trial on a 4-node clique with drifted clocks; the
/// jammed variant enables the reactive jammer and per-slot re-draws.
pub fn async_fixture(jammed: bool) -> AsyncScenario {
    let t = complete_topology(4, 4);
    let mut sc = AsyncScenario::new(t, StrategyKind::AsyncKnownDelta, Some(3));
    sc.ticks_per_l = TICKS_PER_L;
    sc.clock.delta = 1.0 / 7.0;
    sc.budget_ticks = 3000 * TICKS_PER_L;
    sc.record_trace = false;
    if jammed {
        sc.jamming_variant = true;
        sc.clock.delta = 0.0;
        sc.jammer = JammerConfig {
            enabled: true,
            round_ticks: TICKS_PER_L / 3,
            offset_ticks: 0,
            k: 1,
        };
    }
    sc
}
