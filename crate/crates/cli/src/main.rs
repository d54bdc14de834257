//! `ndisco`: batch runner, bound calculator, sweep generator, trace
//! verifier, and topology linter for the neighbor-discovery simulator.
//!
//! Exit codes: 0 success, 1 runtime failure (including trials exceeding
//! their budget and failed verification), 2 invalid input.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ndisco_core::analysis::{self, BoundsReport};
use ndisco_core::impairments::{slowdown_bound, slowdown_worst_case, PCase};
use ndisco_core::model::{derive_params, Topology};
use ndisco_core::protocols::StrategyKind;
use ndisco_core::replay::replay_verify;
use ndisco_core::scenario::{ScenarioConfig, ScenarioError};
use ndisco_core::stats::{empirical_stats, stats_csv_string};
use ndisco_core::trace::{EngineKind, Trace};

#[derive(Parser)]
#[command(name = "ndisco", version, about = "Neighbor-discovery simulator and analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of trials from a scenario config.
    Run(RunArgs),
    /// Evaluate the closed-form running-time bound for one parameter set.
    Bounds(BoundsArgs),
    /// Emit long-form CSV over a parameter grid.
    Sweep(SweepArgs),
    /// Re-derive receptions and discoveries from a recorded trace.
    Replay(ReplayArgs),
    /// Lint a topology or scenario config file.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial count; overrides the config.
    #[arg(long)]
    trials: Option<u64>,
    /// Directory for stats.csv, bounds.json, and traces.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Record and write per-trial traces.
    #[arg(long, overrides_with = "no_trace")]
    trace: bool,
    /// Skip trace recording (faster, less memory).
    #[arg(long)]
    no_trace: bool,
    /// Config override as a dotted key=value pair; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Strategy kind, e.g. sync_variable_known_delta.
    #[arg(long, value_parser = parse_kind)]
    kind: StrategyKind,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    s: u64,
    /// True max per-channel degree (unknown-delta kinds and the
    /// identical-start known-delta kind).
    #[arg(long)]
    delta: Option<u64>,
    /// Advertised degree bound (known-delta kinds).
    #[arg(long)]
    delta_est: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Max start offset: slots for sync unknown-delta, units of L for async.
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    /// Nominal frame length L (async), in the same unit as the reported time.
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    /// Clock drift bound delta (async).
    #[arg(long, default_value_t = 0.0)]
    drift: f64,
    /// Per-message loss probability; scales the bound by 1/(1-phi).
    #[arg(long)]
    phi: Option<f64>,
    /// Band count; tightens epsilon to epsilon/B.
    #[arg(long)]
    bands: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Node counts: comma list or inclusive range a..b.
    #[arg(long, default_value = "3,4,8")]
    n: String,
    /// Channel counts: comma list or inclusive range a..b.
    #[arg(long, default_value = "3..10")]
    s: String,
    /// sync or async slow-down formula.
    #[arg(long, default_value = "sync", value_parser = parse_engine)]
    engine: EngineKind,
    /// Transmission-probability case: half or degree_based.
    #[arg(long, default_value = "degree_based", value_parser = parse_pcase)]
    p_case: PCase,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trace file (JSONL) produced by `run --trace`.
    trace: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Topology JSON, or a scenario config (detected by its schema field).
    file: PathBuf,
}

/// Invalid input (exit 2) vs runtime failure (exit 1).
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Runtime(m) => m,
        }
    }
}

fn invalid<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Invalid(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Config-stage errors are invalid input; engine errors are runtime.
fn classify(e: ScenarioError) -> Failure {
    match e {
        ScenarioError::Engine(inner) => Failure::Invalid(inner.to_string()),
        other => Failure::Invalid(other.to_string()),
    }
}

fn parse_kind(s: &str) -> Result<StrategyKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown strategy kind: {s}"))
}

fn parse_engine(s: &str) -> Result<EngineKind, String> {
    match s {
        "sync" => Ok(EngineKind::Sync),
        "async" => Ok(EngineKind::Async),
        _ => Err(format!("unknown engine: {s}")),
    }
}

fn parse_pcase(s: &str) -> Result<PCase, String> {
    match s {
        "half" => Ok(PCase::Half),
        "degree_based" => Ok(PCase::DegreeBased),
        _ => Err(format!("unknown p case: {s}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Run(a) => cmd_run(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = ScenarioConfig::from_path(&args.config).map_err(classify)?;
    for pair in &args.overrides {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Failure::Invalid(format!("override must be KEY=VALUE: {pair}")))?;
        cfg = cfg.with_override(key, value).map_err(classify)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if args.no_trace {
        cfg.record_trace = false;
    } else if args.trace {
        cfg.record_trace = true;
    }

    let rs = cfg.resolve().map_err(classify)?;
    for w in &rs.warnings {
        eprintln!("warning: {w}");
    }
    let outcomes = rs.run_trials().map_err(|e| match e {
        ScenarioError::Engine(inner) => runtime(inner),
        other => classify(other),
    })?;
    let reports: Vec<_> = outcomes.iter().map(|o| o.report.clone()).collect();
    let stats = empirical_stats(&reports, None).map_err(runtime)?;

    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).map_err(runtime)?;
        let bounds_json =
            serde_json::to_string_pretty(&rs.bounds).expect("bounds report serializes");
        fs::write(dir.join("bounds.json"), bounds_json + "\n").map_err(runtime)?;
        fs::write(dir.join("stats.csv"), stats_csv_string(&rs.name, &reports))
            .map_err(runtime)?;
        if cfg.record_trace {
            for o in &outcomes {
                if let Some(trace) = &o.trace {
                    let path = dir.join(format!("trace-{:04}.jsonl", o.trial));
                    let file = fs::File::create(&path).map_err(runtime)?;
                    trace
                        .write_jsonl(std::io::BufWriter::new(file))
                        .map_err(runtime)?;
                }
            }
        }
    }

    let p = &rs.params;
    println!(
        "scenario {}: N={} S={} delta={} rho={:.4} trials={}",
        rs.name, p.n, p.s, p.delta, p.rho, rs.trials
    );
    println!(
        "bound {}: m={} budget={}",
        rs.bounds.algorithm, rs.bounds.m_value, rs.budget
    );
    let pct = 100.0 * stats.success_rate;
    match stats.completion {
        Some(c) => println!(
            "success {:.1}% ({}/{}), completion p50={} p90={} max={}",
            pct,
            (stats.success_rate * stats.trials as f64).round() as u64,
            stats.trials,
            c.p50,
            c.p90,
            c.max
        ),
        None => println!("success {:.1}%, no trial completed", pct),
    }
    if stats.success_rate < 1.0 {
        return Err(Failure::Runtime(format!(
            "{} of {} trials missed the budget",
            ((1.0 - stats.success_rate) * stats.trials as f64).round() as u64,
            stats.trials
        )));
    }
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> Result<(), Failure> {
    let kind = args.kind;
    let need_delta = || {
        args.delta
            .ok_or_else(|| Failure::Invalid(format!("--delta required for {kind}")))
    };
    let need_delta_est = || {
        args.delta_est
            .ok_or_else(|| Failure::Invalid(format!("--delta-est required for {kind}")))
    };
    let epsilon = match args.bands {
        Some(b) => analysis::adjust_for_bands(args.epsilon, b).map_err(invalid)?,
        None => args.epsilon,
    };
    let mut report = match kind {
        StrategyKind::SyncIdenticalKnownDelta => {
            let delta = need_delta()?;
            let delta_est = args.delta_est.unwrap_or(delta);
            analysis::bound_sync_identical_known_delta(
                args.n, args.s, delta, delta_est, args.rho, epsilon,
            )
        }
        StrategyKind::SyncIdenticalUnknownDelta => analysis::bound_sync_identical_unknown_delta(
            args.n,
            args.s,
            need_delta()?,
            args.rho,
            epsilon,
        ),
        StrategyKind::SyncVariableKnownDelta => analysis::bound_sync_variable_known_delta(
            args.n,
            args.s,
            need_delta_est()?,
            args.rho,
            epsilon,
        ),
        StrategyKind::SyncVariableUnknownDelta => analysis::bound_sync_variable_unknown_delta(
            args.n,
            args.s,
            need_delta()?,
            args.rho,
            epsilon,
            args.theta as u64,
        ),
        StrategyKind::AsyncKnownDelta => analysis::bound_async_known_delta(
            args.n,
            args.s,
            need_delta_est()?,
            args.rho,
            epsilon,
            args.l,
            args.drift,
        ),
        StrategyKind::AsyncUnknownDelta => analysis::bound_async_unknown_delta(
            args.n,
            args.s,
            need_delta()?,
            args.rho,
            epsilon,
            args.theta,
            args.l,
            args.drift,
        ),
    }
    .map_err(invalid)?;

    if let Some(b) = args.bands {
        report
            .notes
            .push(format!("{b} bands: epsilon tightened to {epsilon}"));
    }
    if let Some(phi) = args.phi {
        scale_for_loss(&mut report, phi).map_err(invalid)?;
    }
    match kind {
        StrategyKind::AsyncKnownDelta => {
            println!("drift assumption: delta <= 1/7 (configured delta = {})", args.drift);
        }
        StrategyKind::AsyncUnknownDelta => {
            let threshold = report.drift_threshold.expect("async unknown reports threshold");
            let ok = report.assumption_ok.unwrap_or(true);
            println!(
                "drift assumption: delta <= {threshold:.6e} (configured delta = {}, holds: {ok})",
                args.drift
            );
        }
        _ => {}
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("bounds report serializes")
    );
    Ok(())
}

/// Scales every time-dimension field by 1/(1-phi).
fn scale_for_loss(report: &mut BoundsReport, phi: f64) -> Result<(), analysis::AnalysisError> {
    let factor = analysis::adjust_for_loss(1.0, phi)?;
    let scale = |v: u64| (v as f64 * factor).ceil() as u64;
    report.stages = report.stages.map(scale);
    report.slots = report.slots.map(scale);
    report.frames = report.frames.map(scale);
    report.m_value = scale(report.m_value);
    report.time = report.time.map(|t| t * factor);
    report
        .notes
        .push(format!("loss phi={phi}: bounds scaled by {factor}"));
    Ok(())
}

/// "a,b,c" or inclusive "a..b".
fn parse_grid(raw: &str) -> Result<Vec<u64>, Failure> {
    let raw = raw.trim();
    let parse1 = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| Failure::Invalid(format!("bad grid value: {s}")))
    };
    if let Some((a, b)) = raw.split_once("..") {
        let (a, b) = (parse1(a)?, parse1(b)?);
        if a > b {
            return Err(Failure::Invalid(format!("empty range: {raw}")));
        }
        return Ok((a..=b).collect());
    }
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse1)
        .collect()
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let ns = parse_grid(&args.n)?;
    let ss = parse_grid(&args.s)?;
    if ns.is_empty() || ss.is_empty() {
        return Err(Failure::Invalid("empty sweep grid".into()));
    }
    let mut csv = String::from("engine,p_case,n,s,slowdown,worst_case\n");
    let worst = slowdown_worst_case(args.engine);
    let case_label = match args.p_case {
        PCase::Half => "half",
        PCase::DegreeBased => "degree_based",
    };
    for &n in &ns {
        for &s in &ss {
            let v = slowdown_bound(args.engine, n as usize, s as usize, args.p_case)
                .map_err(invalid)?;
            writeln!(csv, "{},{case_label},{n},{s},{v},{worst}", args.engine)
                .expect("write to String");
        }
    }
    match &args.out {
        Some(path) => fs::write(path, csv).map_err(runtime)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<(), Failure> {
    let file = fs::File::open(&args.trace).map_err(invalid)?;
    let trace = Trace::read_jsonl(BufReader::new(file)).map_err(invalid)?;
    let report = replay_verify(&trace).map_err(invalid)?;
    println!(
        "{} trace: {} receptions recorded, {} derived",
        report.engine, report.receptions_recorded, report.receptions_derived
    );
    for n in &report.notices {
        println!("notice: {n}");
    }
    for c in &report.lemma_checks {
        if c.passed {
            println!("lemma {}: pass", c.name);
        } else {
            println!("lemma {}: FAIL ({})", c.name, c.detail);
        }
    }
    for d in &report.divergences {
        println!("divergence at t={}: {}", d.t, d.detail);
    }
    if report.ok() {
        println!("verification: PASS");
        Ok(())
    } else {
        println!("verification: FAIL");
        Err(Failure::Runtime(format!(
            "{} divergences, {} lemma failures",
            report.divergences.len(),
            report.lemma_checks.iter().filter(|c| !c.passed).count()
        )))
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.file).map_err(invalid)?;
    let head: serde_json::Value = serde_json::from_str(&text).map_err(invalid)?;
    let is_scenario = head.get("schema").is_some() && head.get("strategy").is_some();
    if is_scenario {
        let cfg = ScenarioConfig::from_json_str(&text).map_err(classify)?;
        let rs = cfg.resolve().map_err(classify)?;
        for w in &rs.warnings {
            println!("warning: {w}");
        }
        let p = &rs.params;
        println!(
            "scenario ok: N={} S={} delta={} rho={:.4} bound m={} budget={}",
            p.n, p.s, p.delta, p.rho, rs.bounds.m_value, rs.budget
        );
        return Ok(());
    }
    let topo = Topology::from_json_str(&text).map_err(invalid)?;
    let p = derive_params(&topo).map_err(invalid)?;
    println!(
        "topology ok: N={} S={} delta={} delta0={} rho={:.4} bands={} homogeneous={}",
        p.n,
        p.s,
        p.delta,
        p.delta0,
        p.rho,
        p.b,
        topo.is_homogeneous()
    );
    if p.no_links {
        println!("note: topology has no links");
    }
    Ok(())
}
