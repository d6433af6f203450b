//! Single-fault campaigns, per-run outcome rows and aggregate metrics.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fault::{FaultKind, FaultParams, FaultSpec};
use crate::sim::step_index;
use crate::Error;

use super::scenario::ScenarioConfig;
use super::scheduler::{run_scenario_with, RunOptions};
use super::trace::{Outcome, Trace};

/// Activation times swept by the campaign (s).
pub const ACTIVATION_TIMES: [f64; 3] = [2.0, 5.0, 8.0];
/// Self-report probabilities swept for self-detectable kinds.
pub const DETECTABILITIES: [f64; 2] = [0.0, 1.0];

/// Default parameters of each catalog entry.
pub fn catalog_params(kind: FaultKind) -> FaultParams {
    let mut p = FaultParams::default();
    match kind {
        FaultKind::NcRandomCorruption => p.range = Some(6.0),
        FaultKind::NcSystematicParam => p.assumed_brake = Some(16.0),
        FaultKind::NcSensorBias => p.bias_s = Some(3.0),
        FaultKind::NcFalsePositive | FaultKind::ScFalsePositivePerception => {
            p.phantom_ahead = Some(30.0);
            p.phantom_v = Some(0.0);
        }
        FaultKind::PlatformBrakeDegrade => p.factor = Some(0.5),
        _ => {}
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    /// Injected fault; `None` for the control run.
    pub fault: Option<FaultSpec>,
    pub config: ScenarioConfig,
}

/// The control run plus one run per kind × valid target × activation time ×
/// detectability. Injected faults are permanent and are added to any
/// faults the base scenario already contains.
pub fn single_fault_campaign(base: &ScenarioConfig) -> Vec<RunSpec> {
    let mut runs = vec![RunSpec {
        run_id: format!("{}/control", base.name),
        fault: None,
        config: base.clone(),
    }];
    for kind in FaultKind::ALL {
        let targets: Vec<String> = match kind.target_boundary() {
            Some(b) => vec![b.to_string()],
            None => {
                let mut ids: Vec<String> = base.actors.iter().map(|a| a.id.clone()).collect();
                ids.sort();
                ids
            }
        };
        let detectabilities: Vec<Option<f64>> = if kind.self_detectable() {
            DETECTABILITIES.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        for target in &targets {
            for t_on in ACTIVATION_TIMES.into_iter().filter(|&t| t < base.duration) {
                for &d in &detectabilities {
                    let fault = FaultSpec {
                        params: catalog_params(kind),
                        detectability: d,
                        ..FaultSpec::new(kind, target.clone(), t_on)
                    };
                    let mut config = base.clone();
                    config.faults.push(fault.clone());
                    let d_part = d.map_or(String::new(), |d| format!("/d{d}"));
                    runs.push(RunSpec {
                        run_id: format!("{}/{kind:?}/{target}/t{t_on}{d_part}", base.name),
                        fault: Some(fault),
                        config,
                    });
                }
            }
        }
    }
    runs
}

/// Per-run facts the metrics are computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub outcome: Outcome,
    pub takeover: bool,
    pub takeover_cause: Option<String>,
    /// Injected-fault activation to takeover decision (s).
    pub latency_s: Option<f64>,
    pub false_takeover: bool,
}

impl RunSummary {
    pub fn from_trace(spec: &RunSpec, trace: &Trace) -> Self {
        let takeover = trace.end.takeover;
        let takeover_step = takeover.map(|t| step_index(t.t));
        let latency_s = match (&spec.fault, takeover_step) {
            (Some(f), Some(ts)) if ts >= f.onset_step() => Some((ts - f.onset_step()) as f64 / 10.0),
            _ => None,
        };
        let false_takeover = takeover_step.is_some_and(|ts| {
            let adi_fault = trace
                .header
                .faults
                .iter()
                .any(|f| f.kind.is_adi() && f.onset_step() <= ts);
            let risky = trace
                .records
                .iter()
                .take_while(|r| r.step < ts)
                .any(|r| r.true_risk >= trace.header.risk.r_max);
            !adi_fault && !risky
        });
        Self {
            run_id: spec.run_id.clone(),
            outcome: trace.outcome(),
            takeover: takeover.is_some(),
            takeover_cause: takeover.and_then(|t| t.cause).map(|c| c.to_string()),
            latency_s,
            false_takeover,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub runs: usize,
    pub crash_count: usize,
    pub mrc_count: usize,
    pub mission_complete_count: usize,
    pub architectural_failure_count: usize,
    pub false_takeover_count: usize,
    pub takeover_count: usize,
    pub latency_count: usize,
    pub latency_sum_s: f64,
    pub latency_max_s: Option<f64>,
}

impl Metrics {
    pub fn mean_latency_s(&self) -> Option<f64> {
        (self.latency_count > 0).then(|| self.latency_sum_s / self.latency_count as f64)
    }

    /// Fraction of runs ending in `MissionComplete`.
    pub fn availability(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.mission_complete_count as f64 / self.runs as f64
        }
    }

    pub fn merge(&self, other: &Metrics) -> Metrics {
        Metrics {
            runs: self.runs + other.runs,
            crash_count: self.crash_count + other.crash_count,
            mrc_count: self.mrc_count + other.mrc_count,
            mission_complete_count: self.mission_complete_count + other.mission_complete_count,
            architectural_failure_count: self.architectural_failure_count + other.architectural_failure_count,
            false_takeover_count: self.false_takeover_count + other.false_takeover_count,
            takeover_count: self.takeover_count + other.takeover_count,
            latency_count: self.latency_count + other.latency_count,
            latency_sum_s: self.latency_sum_s + other.latency_sum_s,
            latency_max_s: match (self.latency_max_s, other.latency_max_s) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
        }
    }
}

pub fn compute_metrics(runs: &[RunSummary]) -> Metrics {
    let mut m = Metrics::default();
    // sorted so that the floating-point sum does not depend on run order
    let mut latencies: Vec<f64> = runs.iter().filter_map(|r| r.latency_s).collect();
    latencies.sort_by(f64::total_cmp);
    for r in runs {
        m.runs += 1;
        match r.outcome {
            Outcome::Crash => m.crash_count += 1,
            Outcome::MinimalRiskCondition => m.mrc_count += 1,
            Outcome::MissionComplete => m.mission_complete_count += 1,
            Outcome::ArchitecturalFailure => m.architectural_failure_count += 1,
        }
        m.false_takeover_count += usize::from(r.false_takeover);
        m.takeover_count += usize::from(r.takeover);
    }
    m.latency_count = latencies.len();
    m.latency_sum_s = latencies.iter().sum();
    m.latency_max_s = latencies.last().copied();
    m
}

/// One row of the outcomes table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub run_id: String,
    pub fault_kind: String,
    pub target: String,
    pub t_on: Option<f64>,
    pub detectability: Option<f64>,
    pub outcome: Outcome,
    pub takeover_cause: Option<String>,
    pub latency_s: Option<f64>,
}

impl OutcomeRow {
    pub fn new(spec: &RunSpec, summary: &RunSummary) -> Self {
        let f = spec.fault.as_ref();
        Self {
            run_id: spec.run_id.clone(),
            fault_kind: f.map_or("none".into(), |f| format!("{:?}", f.kind)),
            target: f.map_or(String::new(), |f| f.target.clone()),
            t_on: f.map(|f| f.t_on),
            detectability: f.and_then(|f| f.detectability),
            outcome: summary.outcome,
            takeover_cause: summary.takeover_cause.clone(),
            latency_s: summary.latency_s,
        }
    }
}

/// Runs every spec on a pool of `parallelism` workers and maps each
/// finished trace through `inspect`. Results keep the order of `specs`. A
/// panicking run aborts the campaign with that run's id.
pub fn run_specs<T, F>(specs: &[RunSpec], opts: &RunOptions, parallelism: usize, inspect: F) -> Result<Vec<T>, Error>
where
    T: Send,
    F: Fn(&RunSpec, Trace) -> T + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let results: Vec<Result<T, Error>> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                catch_unwind(AssertUnwindSafe(|| inspect(spec, run_scenario_with(&spec.config, opts)))).map_err(|p| {
                    let msg = p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default();
                    Error::RunFailed {
                        run_id: spec.run_id.clone(),
                        fault: spec.fault.as_ref().map(|f| f.code()),
                        message: msg,
                    }
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub rows: Vec<OutcomeRow>,
    pub summaries: Vec<RunSummary>,
    pub metrics: Metrics,
}

impl CampaignReport {
    pub fn write_outcomes_csv(&self, out: impl Write) -> Result<(), Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn write_summary_csv(&self, out: impl Write) -> Result<(), Error> {
        write_summary_csv(&[("all".to_string(), self.metrics)], out)
    }
}

/// One metrics row per label.
pub fn write_summary_csv(rows: &[(String, Metrics)], mut out: impl Write) -> Result<(), Error> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    writeln!(
        out,
        "label,runs,crash_count,mrc_count,mission_complete_count,architectural_failure_count,false_takeover_count,takeover_count,mean_latency_s,max_latency_s,availability"
    )
    .map_err(io)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for (label, m) in rows {
        writeln!(
            out,
            "{label},{},{},{},{},{},{},{},{},{},{}",
            m.runs,
            m.crash_count,
            m.mrc_count,
            m.mission_complete_count,
            m.architectural_failure_count,
            m.false_takeover_count,
            m.takeover_count,
            opt(m.mean_latency_s()),
            opt(m.latency_max_s),
            m.availability()
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Executes the single-fault campaign of every base scenario.
pub fn run_campaign(bases: &[ScenarioConfig], opts: &RunOptions, parallelism: usize) -> Result<CampaignReport, Error> {
    let specs: Vec<RunSpec> = bases.iter().flat_map(single_fault_campaign).collect();
    let summaries = run_specs(&specs, opts, parallelism, |spec, trace| RunSummary::from_trace(spec, &trace))?;
    let rows = specs.iter().zip(&summaries).map(|(s, r)| OutcomeRow::new(s, r)).collect();
    let metrics = compute_metrics(&summaries);
    Ok(CampaignReport {
        rows,
        summaries,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(outcome: Outcome, latency: Option<f64>) -> RunSummary {
        RunSummary {
            run_id: String::new(),
            outcome,
            takeover: latency.is_some(),
            takeover_cause: None,
            latency_s: latency,
            false_takeover: false,
        }
    }

    #[test]
    fn all_mission_complete() {
        let runs = vec![summary(Outcome::MissionComplete, None); 10];
        let m = compute_metrics(&runs);
        assert_eq!(m.availability(), 1.0);
        assert_eq!(m.crash_count, 0);
        assert_eq!(m.mean_latency_s(), None);
    }

    #[test]
    fn latency_mean() {
        let m = compute_metrics(&[summary(Outcome::MinimalRiskCondition, Some(0.3))]);
        assert_eq!(m.mean_latency_s(), Some(0.3));
        assert_eq!(m.latency_max_s, Some(0.3));
    }

    #[test]
    fn merge_is_additive() {
        let runs = vec![
            summary(Outcome::MissionComplete, None),
            summary(Outcome::MinimalRiskCondition, Some(0.5)),
            summary(Outcome::Crash, None),
            summary(Outcome::MinimalRiskCondition, Some(0.3)),
        ];
        let whole = compute_metrics(&runs);
        let merged = compute_metrics(&runs[..2]).merge(&compute_metrics(&runs[2..]));
        assert_eq!(whole.runs, merged.runs);
        assert_eq!(whole.crash_count, merged.crash_count);
        assert_eq!(whole.latency_count, merged.latency_count);
        assert!((whole.latency_sum_s - merged.latency_sum_s).abs() < 1e-12);
        assert_eq!(whole.latency_max_s, merged.latency_max_s);
        let counts = whole.crash_count + whole.mrc_count + whole.mission_complete_count + whole.architectural_failure_count;
        assert_eq!(counts, whole.runs);
    }

    #[test]
    fn permutation_invariant() {
        let mut runs = vec![
            summary(Outcome::MinimalRiskCondition, Some(0.1)),
            summary(Outcome::MinimalRiskCondition, Some(0.7)),
            summary(Outcome::MinimalRiskCondition, Some(0.2)),
        ];
        let a = compute_metrics(&runs);
        runs.reverse();
        assert_eq!(a, compute_metrics(&runs));
    }
}
