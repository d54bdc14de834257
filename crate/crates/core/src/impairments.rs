//! Lossy-channel model and the reactive memory-less jammer, pluggable into
//! both engines.
//!
//! The jammer operates in rounds: at each round start it scans the spectrum,
//! learning exactly which channels carry an active transmission at that
//! instant (set semantics, no multiplicity), then jams one channel chosen
//! uniformly from the scan minus the channel it jammed last round, or nothing
//! when that set is empty. Rounds are at least one slot long, so at most two
//! distinct channels are jammed during any single slot interval.
//!
//! Loss is an independent coin per delivery opportunity, computed statelessly
//! from the master seed and the delivery coordinates so replay can recompute
//! it (see [`crate::rng::hash_coin`]).
//!
//! [`slowdown_bound`] evaluates the refined jamming slow-down curves; the
//! worst-case presentation constants are 18 (sync) and 21 (async). Where the
//! operands stay within exact rational range the bound is computed in integer
//! fractions, so small closed-form cases (such as N = S = 3 sync, exactly 18)
//! come out exact rather than within float error.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChannelId, ChannelSet, NodeId, Topology};
use crate::protocols::{ProtocolError, Strategy};
use crate::rng;
use crate::trace::EngineKind;

#[derive(Debug, Error, PartialEq)]
pub enum ImpairmentsError {
    #[error("loss probability must be in [0, 1), got {0}")]
    InvalidPhi(f64),
    #[error("jamming analysis requires N >= 3 and S >= 3, got N={n}, S={s}")]
    SmallSystem { n: usize, s: usize },
    #[error("jamming requires a homogeneous topology (identical channel sets, full spans)")]
    Heterogeneous,
    #[error("jamming round length {round} ticks is shorter than the maximum slot length {min_slot} ticks")]
    RoundTooShort { round: u64, min_slot: u64 },
    #[error("only k = 1 jammed channel per round is supported, got {0}")]
    UnsupportedK(u32),
}

/// Per-(message, receiver) loss probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    phi: f64,
}

impl LossModel {
    pub fn new(phi: f64) -> Result<Self, ImpairmentsError> {
        if !(0.0..1.0).contains(&phi) {
            return Err(ImpairmentsError::InvalidPhi(phi));
        }
        Ok(Self { phi })
    }

    pub fn off() -> Self {
        Self { phi: 0.0 }
    }

    pub fn phi(self) -> f64 {
        self.phi
    }

    /// Whether this delivery opportunity is lost. `t` is the tick identifying
    /// the opportunity (slot start for sync, transmission slot start for
    /// async).
    pub fn drops(self, master: u64, trial: u64, receiver: NodeId, sender: NodeId, t: u64) -> bool {
        if self.phi == 0.0 {
            return false;
        }
        rng::hash_coin(
            master,
            &[
                rng::label("loss"),
                trial,
                receiver.0 as u64,
                sender.0 as u64,
                t,
            ],
            self.phi,
        )
    }
}

/// Engine-facing jammer configuration; times in ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JammerConfig {
    pub enabled: bool,
    /// Round length in ticks; must be at least the (maximum) slot length.
    pub round_ticks: u64,
    /// Tick at which the first round starts.
    pub offset_ticks: u64,
    /// Channels jammed per round; only 1 is supported.
    pub k: u32,
}

impl JammerConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            round_ticks: 1,
            offset_ticks: 0,
            k: 1,
        }
    }

    /// `min_slot_ticks`: the longest slot the engine can produce.
    pub fn validate(&self, max_slot_ticks: u64) -> Result<(), ImpairmentsError> {
        if !self.enabled {
            return Ok(());
        }
        if self.k != 1 {
            return Err(ImpairmentsError::UnsupportedK(self.k));
        }
        if self.round_ticks < max_slot_ticks {
            return Err(ImpairmentsError::RoundTooShort {
                round: self.round_ticks,
                min_slot: max_slot_ticks,
            });
        }
        Ok(())
    }
}

/// Jamming analysis applies to homogeneous systems with N, S >= 3 only.
pub fn check_jamming_preconditions(t: &Topology) -> Result<(), ImpairmentsError> {
    if !t.is_homogeneous() {
        return Err(ImpairmentsError::Heterogeneous);
    }
    let n = t.num_nodes();
    let s = t.channels(crate::model::NodeId(0)).len();
    if n < 3 || s < 3 {
        return Err(ImpairmentsError::SmallSystem { n, s });
    }
    Ok(())
}

/// Jammer memory: the channel jammed in the previous and current round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct JammerState {
    pub previous: Option<ChannelId>,
    pub current: Option<ChannelId>,
}

/// Channels with an active transmission at instant `t`. A transmission
/// `[start, end)` is active at `t` iff `start <= t < end`.
pub fn jammer_scan(active: &[(ChannelId, u64, u64)], t: u64) -> ChannelSet {
    let mut members: Vec<ChannelId> = active
        .iter()
        .filter(|(_, start, end)| *start <= t && t < *end)
        .map(|(c, _, _)| *c)
        .collect();
    members.sort_unstable();
    members.dedup();
    ChannelSet::new(members).expect("deduped members")
}

/// One round decision: uniform over `scan` minus the previously jammed
/// channel; jams nothing when that set is empty. Consumes one rng draw iff
/// the choice set is non-empty.
pub fn jammer_step(
    state: &mut JammerState,
    scan: &ChannelSet,
    stream: &mut ChaCha12Rng,
) -> Option<ChannelId> {
    let last = state.current;
    let choices: Vec<ChannelId> = scan.iter().filter(|c| Some(*c) != last).collect();
    let pick = if choices.is_empty() {
        None
    } else {
        Some(choices[rng::uniform_index(stream, choices.len())])
    };
    state.previous = last;
    state.current = pick;
    pick
}

/// A jammed (channel, tick interval) record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JamInterval {
    pub channel: ChannelId,
    pub start: u64,
    pub end: u64,
}

/// True iff the transmission `[start, end)` on `channel` is destroyed: some
/// jam interval on the same channel intersects it with positive length.
pub fn apply_jamming(jams: &[JamInterval], channel: ChannelId, start: u64, end: u64) -> bool {
    jams.iter().any(|j| {
        j.channel == channel && j.start.max(start) < j.end.min(end)
    })
}

/// The jamming variant of the async strategies: a transmitting node re-draws
/// its channel uniformly at the beginning of each slot of the frame.
pub fn async_jamming_variant(strategy: Strategy) -> Result<Strategy, ProtocolError> {
    strategy.into_jamming_variant()
}

/// Which transmission-probability case of the slow-down analysis to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PCase {
    /// p = 1/2 (the case the worst-case constants come from).
    Half,
    /// p = min(1/2, S/(2(N-2))) sync, min(1/2, S/(6(N-2))) async: the
    /// degree-based refined curve.
    DegreeBased,
}

/// Worst-case slow-down presentation constants.
pub fn slowdown_worst_case(system: EngineKind) -> f64 {
    match system {
        EngineKind::Sync => 18.0,
        EngineKind::Async => 21.0,
    }
}

/// Upper bound on the jamming slow-down factor:
///
/// ```text
/// 1 / [ 1/2 * (S-1)/S * (1 - (1 - p*(S-2)/S)^(N-2)) ]
/// ```
///
/// with p per [`PCase`]. Exact-rational evaluation when operands permit.
pub fn slowdown_bound(
    system: EngineKind,
    n: usize,
    s: usize,
    p_case: PCase,
) -> Result<f64, ImpairmentsError> {
    if n < 3 || s < 3 {
        return Err(ImpairmentsError::SmallSystem { n, s });
    }
    let denom_factor: u64 = match system {
        EngineKind::Sync => 2,
        EngineKind::Async => 6,
    };
    let p = match p_case {
        PCase::Half => Frac::new(1, 2),
        PCase::DegreeBased => {
            let degree = Frac::new(s as i128, (denom_factor as i128) * (n as i128 - 2));
            if degree.less_than(Frac::new(1, 2)) {
                degree
            } else {
                Frac::new(1, 2)
            }
        }
    };
    if let Some(factor) = slowdown_exact(n, s, p) {
        return Ok(factor);
    }
    // Operand ranges outside i128: fall back to floating point.
    let p = p.to_f64();
    let t = p * (s as f64 - 2.0) / s as f64;
    let q = 1.0 - (1.0 - t).powi(n as i32 - 2);
    let survive = 0.5 * ((s as f64 - 1.0) / s as f64) * q;
    Ok(1.0 / survive)
}

fn slowdown_exact(n: usize, s: usize, p: Frac) -> Option<f64> {
    let s_i = s as i128;
    let t = p.mul(Frac::new(s_i - 2, s_i))?;
    let one_minus_t = Frac::new(1, 1).sub(t)?;
    let mut pow = Frac::new(1, 1);
    for _ in 0..(n - 2) {
        pow = pow.mul(one_minus_t)?;
    }
    let q = Frac::new(1, 1).sub(pow)?;
    let survive = Frac::new(1, 2)
        .mul(Frac::new(s_i - 1, s_i))?
        .mul(q)?;
    if survive.num <= 0 {
        return None;
    }
    // factor = 1/survive; exact when both sides fit in 53 bits.
    if survive.num.abs() < (1i128 << 53) && survive.den.abs() < (1i128 << 53) {
        Some(survive.den as f64 / survive.num as f64)
    } else {
        None
    }
}

/// Minimal exact fraction arithmetic with overflow checking.
#[derive(Clone, Copy, Debug)]
struct Frac {
    num: i128,
    den: i128,
}

impl Frac {
    fn new(num: i128, den: i128) -> Self {
        debug_assert!(den != 0);
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i128;
        let sign = if den < 0 { -1 } else { 1 };
        Self {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    fn mul(self, other: Self) -> Option<Self> {
        // Cross-reduce first to keep operands small.
        let g1 = gcd(self.num.unsigned_abs(), other.den.unsigned_abs()).max(1) as i128;
        let g2 = gcd(other.num.unsigned_abs(), self.den.unsigned_abs()).max(1) as i128;
        let num = (self.num / g1).checked_mul(other.num / g2)?;
        let den = (self.den / g2).checked_mul(other.den / g1)?;
        Some(Self::new(num, den))
    }

    fn sub(self, other: Self) -> Option<Self> {
        let num = self
            .num
            .checked_mul(other.den)?
            .checked_sub(other.num.checked_mul(self.den)?)?;
        let den = self.den.checked_mul(other.den)?;
        Some(Self::new(num, den))
    }

    fn less_than(self, other: Self) -> bool {
        // Denominators are positive after normalization.
        self.num * other.den < other.num * self.den
    }

    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}
