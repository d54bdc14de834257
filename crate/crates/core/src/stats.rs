//! Summary statistics over batches of trials, and the stats CSV emitter.
//!
//! # CSV schema
//!
//! One row per (trial, link), stable columns:
//!
//! ```text
//! scenario,trial,link,discovery_time_from_ts,success
//! ```
//!
//! * `scenario`: caller-chosen identifier, quoted if it contains a comma.
//! * `trial`: trial index.
//! * `link`: link index into the topology's directed link list.
//! * `discovery_time_from_ts`: discovery time measured from the global start
//!   T_s, in the engine's unit (slots or ticks); empty when the link was
//!   never discovered within the recorded horizon.
//! * `success`: 1 when the link was discovered within the trial's budget.
//!
//! The column set is covered by a golden-file test; extending it means
//! appending columns, never renaming or reordering.

use std::io::{self, Write};

use thiserror::Error;

use crate::trace::{DiscoveryReport, TimeUnit};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty trial set")]
    Empty,
    #[error("trials disagree on time unit")]
    MixedUnits,
    #[error("trials disagree on link count")]
    MixedTopologies,
}

/// Success counter with Wilson score confidence intervals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BinomialEstimate {
    pub successes: u64,
    pub trials: u64,
}

impl BinomialEstimate {
    pub fn observe(&mut self, hit: bool) {
        self.trials += 1;
        self.successes += hit as u64;
    }

    pub fn p_hat(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        self.successes as f64 / self.trials as f64
    }

    /// Wilson score interval at critical value `z` (1.96 for 95%, 3.0 for
    /// the 3-sigma band).
    pub fn wilson_ci(&self, z: f64) -> (f64, f64) {
        if self.trials == 0 {
            return (0.0, 1.0);
        }
        let n = self.trials as f64;
        let p = self.p_hat();
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        ((center - half).max(0.0), (center + half).min(1.0))
    }

    pub fn half_width(&self, z: f64) -> f64 {
        let (lo, hi) = self.wilson_ci(z);
        (hi - lo) / 2.0
    }

    /// Plain normal-approximation standard error of p_hat.
    pub fn std_error(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let n = self.trials as f64;
        let p = self.p_hat();
        (p * (1.0 - p) / n).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkStats {
    pub link: usize,
    pub discovered: u64,
    /// Mean discovery time from T_s over trials that discovered the link.
    pub mean_time: Option<f64>,
    pub max_time: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Percentiles {
    pub p50: i64,
    pub p90: i64,
    pub p99: i64,
    pub max: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalStats {
    pub trials: usize,
    pub unit: TimeUnit,
    /// Fraction of trials whose completion time is within the bound the
    /// stats were computed against (the per-trial budget by default).
    pub success_rate: f64,
    pub per_link: Vec<LinkStats>,
    /// Percentiles of completion time over completed trials; None when no
    /// trial completed.
    pub completion: Option<Percentiles>,
    pub completed_trials: usize,
}

/// Nearest-rank percentile of a sorted slice.
fn percentile(sorted: &[i64], p: f64) -> i64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Aggregates a batch of trials of the same scenario. With `bound` the
/// success rate is measured against that value instead of each trial's
/// recorded budget.
pub fn empirical_stats(
    reports: &[DiscoveryReport],
    bound: Option<u64>,
) -> Result<EmpiricalStats, StatsError> {
    let first = reports.first().ok_or(StatsError::Empty)?;
    let links = first.link_times.len();
    if reports.iter().any(|r| r.unit != first.unit) {
        return Err(StatsError::MixedUnits);
    }
    if reports.iter().any(|r| r.link_times.len() != links) {
        return Err(StatsError::MixedTopologies);
    }

    let mut per_link = Vec::with_capacity(links);
    for li in 0..links {
        let times: Vec<i64> = reports
            .iter()
            .filter_map(|r| r.link_times[li])
            .collect();
        per_link.push(LinkStats {
            link: li,
            discovered: times.len() as u64,
            mean_time: if times.is_empty() {
                None
            } else {
                Some(times.iter().sum::<i64>() as f64 / times.len() as f64)
            },
            max_time: times.iter().copied().max(),
        });
    }

    let mut completions: Vec<i64> = reports.iter().filter_map(|r| r.completion).collect();
    completions.sort_unstable();
    let successes = reports
        .iter()
        .filter(|r| {
            let limit = bound.unwrap_or(r.budget) as i64;
            matches!(r.completion, Some(c) if c <= limit)
        })
        .count();

    Ok(EmpiricalStats {
        trials: reports.len(),
        unit: first.unit,
        success_rate: successes as f64 / reports.len() as f64,
        per_link,
        completion: if completions.is_empty() {
            None
        } else {
            Some(Percentiles {
                p50: percentile(&completions, 0.50),
                p90: percentile(&completions, 0.90),
                p99: percentile(&completions, 0.99),
                max: *completions.last().unwrap(),
            })
        },
        completed_trials: completions.len(),
    })
}

/// Median of completion times; trials that never completed count as
/// `horizon` so a jammed batch cannot look faster by failing.
pub fn median_completion(reports: &[DiscoveryReport], horizon: i64) -> Option<i64> {
    if reports.is_empty() {
        return None;
    }
    let mut xs: Vec<i64> = reports
        .iter()
        .map(|r| r.completion.unwrap_or(horizon))
        .collect();
    xs.sort_unstable();
    Some(percentile(&xs, 0.50))
}

/// Ratio of median completion times, jammed over clean.
pub fn slowdown_ratio(
    jammed: &[DiscoveryReport],
    clean: &[DiscoveryReport],
    horizon: i64,
) -> Option<f64> {
    let j = median_completion(jammed, horizon)?;
    let c = median_completion(clean, horizon)?;
    if c <= 0 {
        return None;
    }
    Some(j as f64 / c as f64)
}

pub const STATS_CSV_HEADER: &str = "scenario,trial,link,discovery_time_from_ts,success";

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes one row per (trial, link); trials are numbered by position.
pub fn write_stats_csv<W: Write>(
    mut w: W,
    scenario_id: &str,
    reports: &[DiscoveryReport],
) -> io::Result<()> {
    writeln!(w, "{STATS_CSV_HEADER}")?;
    let id = csv_field(scenario_id);
    for (trial, r) in reports.iter().enumerate() {
        for (li, t) in r.link_times.iter().enumerate() {
            let time = t.map(|x| x.to_string()).unwrap_or_default();
            let ok = matches!(t, Some(x) if *x <= r.budget as i64) as u8;
            writeln!(w, "{id},{trial},{li},{time},{ok}")?;
        }
    }
    Ok(())
}

pub fn stats_csv_string(scenario_id: &str, reports: &[DiscoveryReport]) -> String {
    let mut buf = Vec::new();
    write_stats_csv(&mut buf, scenario_id, reports).expect("write to Vec");
    String::from_utf8(buf).expect("CSV is UTF-8")
}
