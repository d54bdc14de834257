//! Scenario configuration and the deterministic batch runner.
//!
//! A [`ScenarioConfig`] is the JSON surface of one experiment: topology
//! source, engine, strategy, impairments, trials, budget, seed. Parsing
//! rejects unknown keys and unsupported schema versions. [`ScenarioConfig::resolve`]
//! loads the topology, expands bands, computes the matching closed-form
//! bound, and builds the engine scenario; [`ResolvedScenario::run_trials`]
//! executes the batch, parallel across trials.
//!
//! Trial results are a pure function of `(config, master seed, trial)`.
//! Parallelism never changes them: each trial derives its own rng streams
//! from the master seed and the aggregation preserves trial order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    self, adjust_for_bands, adjust_for_loss, drift_assumption_threshold, AnalysisError,
    BoundsReport,
};
use crate::engine_async::{run_async, AsyncScenario, ClockModel, DEFAULT_TICKS_PER_L};
use crate::engine_sync::{run_sync, EngineError, SyncScenario};
use crate::impairments::{JammerConfig, LossModel};
use crate::model::{derive_params, ChannelLaw, DerivedParams, ModelError, Topology};
use crate::protocols::StrategyKind;
use crate::rng;
use crate::trace::{DiscoveryReport, EngineKind, Trace};

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Invalid(String),
    #[error("config parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Exactly one of the three sources must be set.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<Topology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    pub universal: usize,
    #[serde(default = "default_density")]
    pub density: f64,
    /// Channel-set law; full universal set when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<ChannelLaw>,
    /// Generator seed; the master seed when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_density() -> f64 {
    0.5
}

/// Start offsets in slots (sync) or ticks (async). Both fields absent means
/// a common start at 0; `uniform_theta` draws fresh offsets in [0, theta]
/// for every trial.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_theta: Option<u64>,
}

impl OffsetSpec {
    /// Largest offset any trial can see.
    fn theta(&self) -> u64 {
        if let Some(v) = &self.explicit {
            v.iter().copied().max().unwrap_or(0)
        } else {
            self.uniform_theta.unwrap_or(0)
        }
    }

    fn is_zero(&self) -> bool {
        self.theta() == 0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub engine: EngineKind,
    pub strategy: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_est: Option<u64>,
    pub topology: TopologySource,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub offsets: OffsetSpec,
    /// Async only: ticks per nominal frame length L.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticks_per_l: Option<u64>,
    /// Async only: drift bound and law; drift-free when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<ClockModel>,
    /// Per-message loss probability.
    #[serde(default)]
    pub phi: f64,
    #[serde(default = "JammerConfig::disabled")]
    pub jammer: JammerConfig,
    /// Async only: re-draw the channel per slot of a transmit frame.
    #[serde(default)]
    pub jamming_variant: bool,
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Slots (sync) or ticks (async); 4x the applicable closed-form bound
    /// when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub run_full_budget: bool,
    #[serde(default = "default_true")]
    pub record_trace: bool,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_trials() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(ScenarioError::Invalid(format!(
                "unsupported schema version {} (expected {})",
                cfg.schema, CONFIG_SCHEMA
            )));
        }
        Ok(cfg)
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self, ScenarioError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Applies one `key=value` override. Keys use dotted paths into the
    /// JSON form (`epsilon`, `clock.delta`, `offsets.explicit.1`); values
    /// are parsed as JSON, falling back to a plain string.
    pub fn with_override(&self, key: &str, raw: &str) -> Result<Self, ScenarioError> {
        let mut root = serde_json::to_value(self).expect("config serializes");
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        let (last, path) = parts
            .split_last()
            .ok_or_else(|| ScenarioError::Invalid("empty override key".into()))?;
        let mut cur = &mut root;
        for part in path {
            cur = match cur {
                serde_json::Value::Object(map) => map
                    .get_mut(*part)
                    .ok_or_else(|| ScenarioError::Invalid(format!("no such key: {key}")))?,
                serde_json::Value::Array(items) => {
                    let idx: usize = part
                        .parse()
                        .map_err(|_| ScenarioError::Invalid(format!("bad index in: {key}")))?;
                    items
                        .get_mut(idx)
                        .ok_or_else(|| ScenarioError::Invalid(format!("index out of range: {key}")))?
                }
                _ => return Err(ScenarioError::Invalid(format!("cannot descend into: {key}"))),
            };
        }
        match cur {
            serde_json::Value::Object(map) => {
                map.insert((*last).to_string(), parsed);
            }
            serde_json::Value::Array(items) => {
                let idx: usize = last
                    .parse()
                    .map_err(|_| ScenarioError::Invalid(format!("bad index in: {key}")))?;
                if idx >= items.len() {
                    return Err(ScenarioError::Invalid(format!("index out of range: {key}")));
                }
                items[idx] = parsed;
            }
            _ => return Err(ScenarioError::Invalid(format!("cannot descend into: {key}"))),
        }
        serde_json::from_value(root).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    fn load_topology(&self) -> Result<Topology, ScenarioError> {
        let src = &self.topology;
        let set = src.inline.is_some() as u8 + src.file.is_some() as u8 + src.generator.is_some() as u8;
        if set != 1 {
            return Err(ScenarioError::Invalid(
                "exactly one topology source (inline, file, generator) required".into(),
            ));
        }
        if let Some(t) = &src.inline {
            return Ok(t.clone());
        }
        if let Some(path) = &src.file {
            return Ok(Topology::from_json_str(&std::fs::read_to_string(path)?)?);
        }
        let g = src.generator.as_ref().unwrap();
        if !(0.0..=1.0).contains(&g.density) {
            return Err(ScenarioError::Invalid(format!(
                "generator density {} outside [0, 1]",
                g.density
            )));
        }
        if g.n == 0 || g.universal == 0 {
            return Err(ScenarioError::Invalid(
                "generator needs n >= 1 and universal >= 1".into(),
            ));
        }
        let law = g.law.clone().unwrap_or(ChannelLaw::Full);
        Ok(crate::model::generate_random_topology(
            g.n,
            g.universal,
            g.density,
            &law,
            g.seed.unwrap_or(self.seed),
        ))
    }

    /// Validates everything, loads and (for banded topologies) expands the
    /// topology, computes the matching bound, and freezes the engine
    /// scenario.
    pub fn resolve(&self) -> Result<ResolvedScenario, ScenarioError> {
        if self.schema != CONFIG_SCHEMA {
            return Err(ScenarioError::Invalid(format!(
                "unsupported schema version {}",
                self.schema
            )));
        }
        let kind = self.strategy;
        match self.engine {
            EngineKind::Sync if !kind.is_sync() => {
                return Err(ScenarioError::Invalid(format!(
                    "strategy {kind} requires the async engine"
                )))
            }
            EngineKind::Async if !kind.is_async() => {
                return Err(ScenarioError::Invalid(format!(
                    "strategy {kind} requires the sync engine"
                )))
            }
            _ => {}
        }
        if self.engine == EngineKind::Sync
            && (self.ticks_per_l.is_some() || self.clock.is_some() || self.jamming_variant)
        {
            return Err(ScenarioError::Invalid(
                "ticks_per_l, clock, and jamming_variant apply to the async engine only".into(),
            ));
        }
        if self.offsets.explicit.is_some() && self.offsets.uniform_theta.is_some() {
            return Err(ScenarioError::Invalid(
                "offsets.explicit and offsets.uniform_theta are mutually exclusive".into(),
            ));
        }
        if kind.is_identical_start() && !self.offsets.is_zero() {
            return Err(ScenarioError::Invalid(format!(
                "strategy {kind} requires identical start times, offsets must all be 0"
            )));
        }
        let loss = LossModel::new(self.phi)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if kind.knows_delta() && self.delta_est.is_none() {
            return Err(ScenarioError::Invalid(format!(
                "strategy {kind} requires delta_est"
            )));
        }

        let mut warnings = Vec::new();
        let loaded = self.load_topology()?;
        let (topology, bands) = match loaded.bands() {
            Some(b) => {
                let count = b.len() as u64;
                (loaded.expand_bands()?, count)
            }
            None => (loaded, 1),
        };
        let params = derive_params(&topology)?;
        if params.no_links {
            return Err(ScenarioError::Invalid("topology has no links".into()));
        }
        let effective_epsilon = if bands > 1 {
            warnings.push(format!(
                "{bands} bands: links expanded per band, epsilon tightened to epsilon/{bands}"
            ));
            adjust_for_bands(self.epsilon, bands)?
        } else {
            self.epsilon
        };

        let n = params.n as u64;
        let s = params.s as u64;
        let delta = params.delta as u64;
        let rho = params.rho;
        let eps = effective_epsilon;
        let theta = self.offsets.theta();
        let ticks_per_l = self.ticks_per_l.unwrap_or(DEFAULT_TICKS_PER_L);
        let clock = self.clock.clone().unwrap_or_else(ClockModel::drift_free);
        let theta_l = theta as f64 / ticks_per_l as f64;

        let bounds = match kind {
            StrategyKind::SyncIdenticalKnownDelta => analysis::bound_sync_identical_known_delta(
                n,
                s,
                delta,
                self.delta_est.unwrap(),
                rho,
                eps,
            )?,
            StrategyKind::SyncIdenticalUnknownDelta => {
                analysis::bound_sync_identical_unknown_delta(n, s, delta, rho, eps)?
            }
            StrategyKind::SyncVariableKnownDelta => {
                analysis::bound_sync_variable_known_delta(n, s, self.delta_est.unwrap(), rho, eps)?
            }
            StrategyKind::SyncVariableUnknownDelta => {
                analysis::bound_sync_variable_unknown_delta(n, s, delta, rho, eps, theta)?
            }
            StrategyKind::AsyncKnownDelta => analysis::bound_async_known_delta(
                n,
                s,
                self.delta_est.unwrap(),
                rho,
                eps,
                1.0,
                clock.delta,
            )?,
            StrategyKind::AsyncUnknownDelta => analysis::bound_async_unknown_delta(
                n,
                s,
                delta,
                rho,
                eps,
                theta_l,
                1.0,
                clock.delta,
            )?,
        };
        if kind == StrategyKind::AsyncUnknownDelta {
            let threshold = drift_assumption_threshold(n, s, eps, theta_l, 1.0)?;
            if clock.delta > threshold {
                warnings.push(format!(
                    "drift bound {} exceeds the assumed threshold {:.6e}; the closed-form bound is not guaranteed",
                    clock.delta, threshold
                ));
            }
        }

        // Budget: 4x the bound's primary time value, widened for loss.
        let budget = match self.budget {
            Some(b) => b,
            None => {
                let base = match self.engine {
                    EngineKind::Sync => bounds.slots.ok_or_else(|| {
                        ScenarioError::Invalid("bound reports no slot count".into())
                    })? as f64,
                    EngineKind::Async => {
                        bounds.time.ok_or_else(|| {
                            ScenarioError::Invalid("bound reports no time value".into())
                        })? * ticks_per_l as f64
                    }
                };
                adjust_for_loss(4.0 * base, self.phi)?.ceil() as u64
            }
        };

        let fixed_offsets = self
            .offsets
            .explicit
            .clone()
            .unwrap_or_else(|| vec![0; params.n]);
        if fixed_offsets.len() != params.n {
            return Err(ScenarioError::Invalid(format!(
                "{} explicit offsets for {} nodes",
                fixed_offsets.len(),
                params.n
            )));
        }
        let engine_scenario = match self.engine {
            EngineKind::Sync => {
                let mut sc = SyncScenario::new(topology.clone(), kind, self.delta_est);
                sc.offsets = fixed_offsets;
                sc.loss = loss;
                sc.jammer = self.jammer;
                sc.budget_slots = budget;
                sc.run_full_budget = self.run_full_budget;
                sc.record_trace = self.record_trace;
                sc.validate()?;
                EngineScenario::Sync(sc)
            }
            EngineKind::Async => {
                let mut sc = AsyncScenario::new(topology.clone(), kind, self.delta_est);
                sc.offsets_ticks = fixed_offsets;
                sc.clock = clock;
                sc.ticks_per_l = ticks_per_l;
                sc.loss = loss;
                sc.jammer = self.jammer;
                sc.jamming_variant = self.jamming_variant;
                sc.budget_ticks = budget;
                sc.run_full_budget = self.run_full_budget;
                sc.record_trace = self.record_trace;
                sc.validate()?;
                EngineScenario::Async(sc)
            }
        };

        Ok(ResolvedScenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            seed: self.seed,
            trials: self.trials,
            uniform_theta: self.offsets.uniform_theta.filter(|&t| t > 0),
            params,
            bounds,
            budget,
            effective_epsilon,
            warnings,
            engine_scenario,
        })
    }
}

#[derive(Clone, Debug)]
pub enum EngineScenario {
    Sync(SyncScenario),
    Async(AsyncScenario),
}

impl EngineScenario {
    pub fn run(&self, seed: u64, trial: u64) -> Result<(Trace, DiscoveryReport), EngineError> {
        match self {
            EngineScenario::Sync(sc) => run_sync(sc, seed, trial),
            EngineScenario::Async(sc) => run_async(sc, seed, trial),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResolvedScenario {
    pub name: String,
    pub seed: u64,
    pub trials: u64,
    /// Set when offsets are drawn uniformly per trial.
    uniform_theta: Option<u64>,
    pub params: DerivedParams,
    /// The closed-form bound matching the configured strategy.
    pub bounds: BoundsReport,
    /// Per-trial budget, slots or ticks.
    pub budget: u64,
    /// Epsilon after band tightening.
    pub effective_epsilon: f64,
    pub warnings: Vec<String>,
    pub engine_scenario: EngineScenario,
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub trial: u64,
    pub report: DiscoveryReport,
    /// Present when the scenario records traces.
    pub trace: Option<Trace>,
}

/// Parses a thread-cap string; None disables the cap.
fn parse_thread_cap(raw: Option<&str>) -> Option<usize> {
    raw.and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&k| k >= 1)
}

/// NDISCO_THREADS caps trial parallelism when set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    parse_thread_cap(std::env::var("NDISCO_THREADS").ok().as_deref())
}

impl ResolvedScenario {
    /// The engine scenario for one trial: the frozen base, with offsets
    /// redrawn from the trial's own stream under `uniform_theta`.
    pub fn scenario_for_trial(&self, trial: u64) -> EngineScenario {
        let mut sc = self.engine_scenario.clone();
        if let Some(theta) = self.uniform_theta {
            let mut stream = rng::trial_stream(self.seed, trial, "offsets");
            let draw = |rng_: &mut rand_chacha::ChaCha12Rng, n: usize| -> Vec<u64> {
                (0..n)
                    .map(|_| rng::uniform_index(rng_, theta as usize + 1) as u64)
                    .collect()
            };
            match &mut sc {
                EngineScenario::Sync(s) => {
                    s.offsets = draw(&mut stream, s.offsets.len());
                }
                EngineScenario::Async(s) => {
                    s.offsets_ticks = draw(&mut stream, s.offsets_ticks.len());
                }
            }
        }
        sc
    }

    pub fn run_trial(&self, trial: u64) -> Result<TrialOutcome, EngineError> {
        let sc = self.scenario_for_trial(trial);
        let (trace, report) = sc.run(self.seed, trial)?;
        let keep = match &sc {
            EngineScenario::Sync(s) => s.record_trace,
            EngineScenario::Async(s) => s.record_trace,
        };
        Ok(TrialOutcome {
            trial,
            report,
            trace: keep.then_some(trace),
        })
    }

    /// Runs all trials, parallel up to the thread cap. Results are ordered
    /// by trial and identical to a serial run.
    pub fn run_trials(&self) -> Result<Vec<TrialOutcome>, ScenarioError> {
        self.run_trials_capped(thread_cap())
    }

    pub fn run_trials_capped(&self, cap: Option<usize>) -> Result<Vec<TrialOutcome>, ScenarioError> {
        use rayon::prelude::*;
        let trials: Vec<u64> = (0..self.trials).collect();
        let work = || -> Vec<Result<TrialOutcome, EngineError>> {
            trials.par_iter().map(|&t| self.run_trial(t)).collect()
        };
        let results = match cap {
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| ScenarioError::Invalid(format!("thread pool: {e}")))?
                .install(work),
            None => work(),
        };
        results
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(ScenarioError::Engine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelSet, Link, NodeId};
    use crate::replay::replay_verify;
    use crate::stats::stats_csv_string;

    fn set(ids: &[u32]) -> ChannelSet {
        ChannelSet::from_ids(ids.iter().copied()).unwrap()
    }

    fn inline_triangle_json() -> serde_json::Value {
        let chans: &[u32] = &[0, 1];
        let topo = Topology::new(
            vec![set(chans); 3],
            vec![(0u32, 1u32), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)]
                .into_iter()
                .map(|(a, b)| Link {
                    from: NodeId(a),
                    to: NodeId(b),
                    span: set(chans),
                })
                .collect(),
            None,
        )
        .unwrap();
        serde_json::to_value(&topo).unwrap()
    }

    fn base_config() -> serde_json::Value {
        serde_json::json!({
            "schema": 1,
            "engine": "sync",
            "strategy": "sync_variable_known_delta",
            "delta_est": 2,
            "topology": { "inline": inline_triangle_json() },
            "seed": 9,
            "trials": 3,
        })
    }

    #[test]
    fn parse_rejects_unknown_keys_and_bad_schema() {
        let mut v = base_config();
        v["frobnicate"] = serde_json::json!(1);
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)), "{err}");

        let mut v = base_config();
        v["schema"] = serde_json::json!(99);
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("schema version"), "{err}");
    }

    #[test]
    fn topology_source_must_be_unique() {
        let mut v = base_config();
        v["topology"] = serde_json::json!({});
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        assert!(cfg.resolve().is_err());

        let mut v = base_config();
        v["topology"]["generator"] = serde_json::json!({"n": 3, "universal": 2});
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("exactly one"), "{err}");
    }

    #[test]
    fn engine_strategy_compatibility_enforced() {
        let mut v = base_config();
        v["engine"] = serde_json::json!("async");
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("sync engine"), "{err}");

        let mut v = base_config();
        v["strategy"] = serde_json::json!("async_known_delta");
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn identical_start_forces_zero_offsets() {
        let mut v = base_config();
        v["strategy"] = serde_json::json!("sync_identical_known_delta");
        v["offsets"] = serde_json::json!({"uniform_theta": 5});
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("identical start"), "{err}");
    }

    #[test]
    fn missing_delta_est_rejected_for_known_kinds() {
        let mut v = base_config();
        v.as_object_mut().unwrap().remove("delta_est");
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("delta_est"), "{err}");
    }

    #[test]
    fn budget_defaults_to_four_times_bound() {
        let cfg = ScenarioConfig::from_json_str(&base_config().to_string()).unwrap();
        let rs = cfg.resolve().unwrap();
        // N=3, S=2, delta_est=2, rho=1: 288 slots.
        assert_eq!(rs.bounds.slots, Some(288));
        assert_eq!(rs.budget, 4 * 288);

        let over = cfg.with_override("phi", "0.5").unwrap();
        let rs = over.resolve().unwrap();
        assert_eq!(rs.budget, 8 * 288);

        let over = cfg.with_override("budget", "77").unwrap();
        assert_eq!(over.resolve().unwrap().budget, 77);
    }

    #[test]
    fn override_epsilon_shrinks_bound_and_bad_keys_fail() {
        let cfg = ScenarioConfig::from_json_str(&base_config().to_string()).unwrap();
        let m = cfg.resolve().unwrap().bounds.m_value;
        let looser = cfg.with_override("epsilon", "0.2").unwrap();
        assert!(looser.resolve().unwrap().bounds.m_value < m);
        assert!(cfg.with_override("epsilonn", "0.2").is_err());
        assert!(cfg.with_override("nope.deep", "1").is_err());
    }

    #[test]
    fn jammer_on_heterogeneous_topology_rejected() {
        let chans = [set(&[0, 1]), set(&[0]), set(&[0, 1])].to_vec();
        let topo = Topology::new(
            chans,
            vec![
                (0u32, 1u32, vec![0u32]),
                (1, 0, vec![0]),
                (0, 2, vec![0, 1]),
                (2, 0, vec![0, 1]),
                (1, 2, vec![0]),
                (2, 1, vec![0]),
            ]
            .into_iter()
            .map(|(a, b, span)| Link {
                from: NodeId(a),
                to: NodeId(b),
                span: set(&span),
            })
            .collect(),
            None,
        )
        .unwrap();
        let mut v = base_config();
        v["topology"] = serde_json::json!({"inline": serde_json::to_value(&topo).unwrap()});
        v["jammer"] = serde_json::json!({"enabled": true, "round_ticks": 2, "offset_ticks": 0, "k": 1});
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn parallel_and_serial_trials_agree() {
        let mut v = base_config();
        v["trials"] = serde_json::json!(8);
        v["offsets"] = serde_json::json!({"uniform_theta": 9});
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        let rs = cfg.resolve().unwrap();
        let serial = rs.run_trials_capped(Some(1)).unwrap();
        let parallel = rs.run_trials_capped(Some(4)).unwrap();
        assert_eq!(serial.len(), 8);
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.trial, b.trial);
            assert_eq!(a.report, b.report);
            let (ta, tb) = (a.trace.as_ref().unwrap(), b.trace.as_ref().unwrap());
            assert_eq!(ta.to_jsonl_string(), tb.to_jsonl_string());
        }
        let csv_a = stats_csv_string("x", &serial.iter().map(|o| o.report.clone()).collect::<Vec<_>>());
        let csv_b = stats_csv_string("x", &parallel.iter().map(|o| o.report.clone()).collect::<Vec<_>>());
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn uniform_offsets_vary_across_trials_within_range() {
        let mut v = base_config();
        v["trials"] = serde_json::json!(6);
        v["offsets"] = serde_json::json!({"uniform_theta": 50});
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        let rs = cfg.resolve().unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for t in 0..6 {
            let EngineScenario::Sync(sc) = rs.scenario_for_trial(t) else {
                panic!("sync expected");
            };
            assert!(sc.offsets.iter().all(|&o| o <= 50));
            seen.insert(sc.offsets.clone());
        }
        assert!(seen.len() > 1, "all trials drew identical offsets");
    }

    #[test]
    fn round_trip_run_then_replay() {
        let mut v = base_config();
        v["trials"] = serde_json::json!(2);
        v["phi"] = serde_json::json!(0.3);
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        let rs = cfg.resolve().unwrap();
        for outcome in rs.run_trials_capped(Some(2)).unwrap() {
            assert!(outcome.report.success);
            let rep = replay_verify(outcome.trace.as_ref().unwrap()).unwrap();
            assert!(rep.ok(), "trial {}: {:?}", outcome.trial, rep.divergences);
        }
    }

    #[test]
    fn band_topology_expands_and_tightens_epsilon() {
        let all = set(&[0, 1, 2, 3]);
        let topo = Topology::new(
            vec![all.clone(); 2],
            vec![
                Link { from: NodeId(0), to: NodeId(1), span: all.clone() },
                Link { from: NodeId(1), to: NodeId(0), span: all.clone() },
            ],
            Some(vec![set(&[0, 1]), set(&[2, 3])]),
        )
        .unwrap();
        let mut v = base_config();
        v["topology"] = serde_json::json!({"inline": serde_json::to_value(&topo).unwrap()});
        v["delta_est"] = serde_json::json!(1);
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        let rs = cfg.resolve().unwrap();
        assert_eq!(rs.effective_epsilon, 0.05);
        assert!(!rs.warnings.is_empty());
        // Two directed links became four band-restricted links.
        let EngineScenario::Sync(sc) = &rs.engine_scenario else {
            panic!("sync expected");
        };
        assert_eq!(sc.topology.links().len(), 4);
        let outcome = rs.run_trial(0).unwrap();
        assert_eq!(outcome.report.link_times.len(), 4);
        assert!(outcome.report.success);
    }

    #[test]
    fn async_resolve_budget_scales_by_ticks_and_flags_drift() {
        let mut v = base_config();
        v["engine"] = serde_json::json!("async");
        v["strategy"] = serde_json::json!("async_unknown_delta");
        v.as_object_mut().unwrap().remove("delta_est");
        v["ticks_per_l"] = serde_json::json!(999);
        v["clock"] = serde_json::json!({"delta": 0.1, "law": "resampled_per_frame"});
        v["trials"] = serde_json::json!(1);
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        let rs = cfg.resolve().unwrap();
        let expected = (4.0 * rs.bounds.time.unwrap() * 999.0).ceil() as u64;
        assert_eq!(rs.budget, expected);
        // 0.1 is far above the assumption threshold at these sizes.
        assert!(rs.warnings.iter().any(|w| w.contains("threshold")), "{:?}", rs.warnings);
        assert_eq!(rs.bounds.assumption_ok, Some(false));
    }

    #[test]
    fn sync_config_rejects_async_only_knobs() {
        let mut v = base_config();
        v["clock"] = serde_json::json!({"delta": 0.0, "law": "resampled_per_frame"});
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("async engine only"), "{err}");
    }

    #[test]
    fn thread_cap_parsing() {
        assert_eq!(parse_thread_cap(None), None);
        assert_eq!(parse_thread_cap(Some("0")), None);
        assert_eq!(parse_thread_cap(Some("junk")), None);
        assert_eq!(parse_thread_cap(Some("3")), Some(3));
        assert_eq!(parse_thread_cap(Some(" 8 ")), Some(8));
    }
}
