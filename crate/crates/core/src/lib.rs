//! Simulator, protocol library, and analysis toolkit for randomized neighbor
//! discovery in multi-hop multi-channel heterogeneous wireless (M2HeW) networks.
//!
//! The crate is organized around three layers:
//!
//! * **Model** ([`model`]): topologies, channel sets, derived parameters, and
//!   band expansion. Everything downstream consumes a validated [`model::Topology`].
//! * **Execution** ([`protocols`], [`engine_sync`], [`engine_async`],
//!   [`impairments`]): the six randomized discovery strategies and the two
//!   simulation engines (slot-synchronous and clock-drifted asynchronous),
//!   with optional packet loss and reactive jamming.
//! * **Analysis** ([`analysis`], [`trace`], [`replay`], [`stats`]): closed-form
//!   running-time bounds, structural checks on recorded executions (aligned
//!   pairs, admissible sequences), deterministic replay, and summary statistics.
//!
//! Scenario wiring for batch experiments lives in [`scenario`]; the `ndisco`
//! binary is a thin CLI over that module.
//!
//! # Determinism
//!
//! Every run is a pure function of `(config, master seed)`. Randomness is drawn
//! from per-`(trial, node)` ChaCha12 streams derived via a fixed seed-mixing
//! scheme (see [`rng`]), so results are independent of thread scheduling and
//! reproducible across platforms.

pub mod analysis;
pub mod engine_async;
pub mod engine_sync;
pub mod impairments;
pub mod model;
pub mod protocols;
pub mod replay;
pub mod rng;
pub mod scenario;
pub mod stats;
pub mod trace;

pub use model::{ChannelId, ChannelSet, DerivedParams, Link, NodeId, Topology};
pub use protocols::Strategy;
