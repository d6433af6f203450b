//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use adi_core::fault::{FaultKind, FaultSpec};
use adi_core::harness::campaign::{run_specs, single_fault_campaign, OutcomeRow, RunSpec, RunSummary};
use adi_core::harness::classify::{check_transition_legality, classify_records};
use adi_core::harness::{run_scenario, run_scenario_with, Outcome, RunOptions, ScenarioConfig, VehicleLevelState};
use adi_core::platform::{Intent, Source};
use adi_core::risk::{oracle_check, RiskParams, RISK_CAP};
use adi_core::sim::step_index;
use adi_core::supervisor::{IscKind, SupervisorConfig, TakeoverCause, K_MISS};

use VehicleLevelState::*;

const BASE_SUITE: [&str; 5] = [
    "benign_cruise",
    "stopped_obstacle",
    "lead_hard_brake",
    "adjacent_cut_in",
    "degraded_platform",
];
const DEMO: &str = "silent_nc_stopped_obstacle";
/// Reaction time granted to the nominal channel, in steps.
const REACT_STEPS: usize = 5;

fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// What the criteria need to know about one campaign run.
#[derive(Debug, Clone)]
struct Facts {
    spec_id: String,
    fault: Option<FaultSpec>,
    outcome: Outcome,
    takeover: Option<(u64, Option<TakeoverCause>)>,
    first_self_report: Option<u64>,
    first_cap: Option<u64>,
    first_directive: Option<u64>,
    path: Vec<VehicleLevelState>,
    labels: Vec<VehicleLevelState>,
    gaps: usize,
    illegal: usize,
    nc_maneuver_applied: bool,
    fault_active_steps: usize,
    summary: RunSummary,
}

fn facts(spec: &RunSpec, trace: adi_core::harness::Trace) -> Facts {
    let c = classify_records(&trace.records, trace.header.risk.r_max);
    let labels: Vec<_> = c.labels.iter().map(|(_, l)| *l).collect();
    let mut path = Vec::new();
    for l in &labels {
        if path.last() != Some(l) {
            path.push(*l);
        }
    }
    let fault_code = spec.fault.as_ref().map(|f| f.code());
    Facts {
        spec_id: spec.run_id.clone(),
        fault: spec.fault.clone(),
        outcome: trace.outcome(),
        takeover: trace.end.takeover.map(|t| (step_index(t.t), t.cause)),
        first_self_report: trace
            .records
            .iter()
            .find(|r| r.nc.as_ref().is_some_and(|n| !n.self_diagnosed_errors.is_empty()))
            .map(|r| r.step),
        first_cap: trace.records.iter().find(|r| r.true_risk >= RISK_CAP).map(|r| r.step),
        first_directive: trace.records.iter().find(|r| r.directive.is_some()).map(|r| r.step),
        illegal: check_transition_legality(&labels).len(),
        gaps: c.gaps.len(),
        nc_maneuver_applied: trace
            .records
            .iter()
            .filter_map(|r| r.setpoint)
            .any(|s| s.source == Source::Nominal && s.intent == Intent::SafetyManeuver),
        fault_active_steps: fault_code.map_or(0, |code| {
            trace.records.iter().filter(|r| r.active_faults.contains(&code)).count()
        }),
        summary: RunSummary::from_trace(spec, &trace),
        path,
        labels,
    }
}

/// A perception fault manifests when it leaves the vehicle in an
/// undetected hazardous event that the nominal channel does not resolve
/// with its own safety maneuver within the reaction time.
fn manifests(f: &Facts) -> bool {
    let Some(first) = f.labels.iter().position(|l| *l == UndetectedHazardousEvent) else {
        return false;
    };
    !f.labels[first..]
        .iter()
        .take(REACT_STEPS + 1)
        .any(|l| *l == SafetyManeuverNc)
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, n: u32, title: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("criterion {n:>2} [{}] {title}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn list(ids: &[String]) -> String {
    if ids.is_empty() {
        String::new()
    } else {
        format!("; offending: {}", ids.join(", "))
    }
}

fn main() -> ExitCode {
    let mut report = Report { failed: 0 };
    let bases: Vec<ScenarioConfig> = BASE_SUITE.iter().map(|n| scenario(n)).collect();
    let specs: Vec<RunSpec> = bases.iter().flat_map(single_fault_campaign).collect();
    let opts = RunOptions::default();

    let started = Instant::now();
    let runs = run_specs(&specs, &opts, 4, facts).expect("campaign runs");
    let elapsed = started.elapsed().as_secs_f64();

    // 1. single-fault safety
    let bad: Vec<String> = runs
        .iter()
        .filter(|f| matches!(f.outcome, Outcome::Crash | Outcome::ArchitecturalFailure))
        .map(|f| format!("{} ({})", f.spec_id, f.outcome))
        .collect();
    report.line(
        1,
        "single-fault safety",
        bad.is_empty() && elapsed < 60.0,
        format!("{} runs, {} crash or architectural failure, {elapsed:.1} s{}", runs.len(), bad.len(), list(&bad)),
    );

    // 2. supervisor value demonstration
    let demo = scenario(DEMO);
    let with = run_scenario(&demo).outcome();
    let without = run_scenario_with(&demo, &RunOptions { supervisor_enabled: false }).outcome();
    report.line(
        2,
        "supervisor value",
        with == Outcome::MinimalRiskCondition && without == Outcome::Crash,
        format!("with supervisor {with}, without {without}"),
    );

    // 3. risk oracle equivalence
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut ok = true;
    for params in std::iter::once(RiskParams::default()).chain(bases.iter().map(|b| b.risk)) {
        let r = oracle_check(&params, 0.05);
        worst = worst.max(r.max_abs_diff);
        ok &= r.passed() && r.points == 1000;
    }
    let secs = started.elapsed().as_secs_f64();
    report.line(
        3,
        "risk oracle equivalence",
        ok && secs < 30.0,
        format!("1000-point grid, max |diff| {worst:.4} (tolerance 0.05), {secs:.1} s"),
    );

    // 4. direct takeover on self-report
    let reporting: Vec<&Facts> = runs
        .iter()
        .filter(|f| f.fault.as_ref().is_some_and(|x| x.detectability == Some(1.0)) && f.first_self_report.is_some())
        .collect();
    let bad: Vec<String> = reporting
        .iter()
        .filter(|f| f.takeover != Some((f.first_self_report.unwrap(), Some(TakeoverCause::Isc(IscKind::SelfDiagnosedError)))))
        .map(|f| format!("{} takeover {:?} report {:?}", f.spec_id, f.takeover, f.first_self_report))
        .collect();
    let expected = runs
        .iter()
        .filter(|f| f.fault.as_ref().is_some_and(|x| x.detectability == Some(1.0)) && f.fault_active_steps > 0)
        .count();
    report.line(
        4,
        "direct takeover",
        bad.is_empty() && !reporting.is_empty() && reporting.len() == expected,
        format!("{} self-reporting runs, {} with non-zero latency{}", reporting.len(), bad.len(), list(&bad)),
    );

    // 5. heartbeat latency
    let silent: Vec<&Facts> = runs
        .iter()
        .filter(|f| f.fault.as_ref().is_some_and(|x| x.kind == FaultKind::NcSilence))
        .collect();
    let bad: Vec<String> = silent
        .iter()
        .filter(|f| {
            let onset = f.fault.as_ref().unwrap().onset_step();
            f.takeover != Some((onset + K_MISS, Some(TakeoverCause::Isc(IscKind::HeartbeatLost))))
                || f.summary.latency_s != Some(0.3)
        })
        .map(|f| format!("{} takeover {:?}", f.spec_id, f.takeover))
        .collect();
    report.line(
        5,
        "heartbeat latency",
        bad.is_empty() && !silent.is_empty(),
        format!("{} silent-channel runs, takeover exactly 0.3 s after activation in {}{}", silent.len(), silent.len() - bad.len(), list(&bad)),
    );

    // 6. ISC/ESC complementarity
    let blind: Vec<&Facts> = runs
        .iter()
        .filter(|f| f.fault.as_ref().is_some_and(|x| x.kind.is_nc_perception() && x.detectability == Some(0.0)))
        .collect();
    let manifest: Vec<&&Facts> = blind.iter().filter(|f| manifests(f)).collect();
    let bad: Vec<String> = manifest
        .iter()
        .filter(|f| {
            let caught_in_time = matches!(f.takeover, Some((step, Some(TakeoverCause::EscGraceExpired))) if f.first_cap.is_none_or(|c| step < c));
            !caught_in_time || f.outcome != Outcome::MinimalRiskCondition
        })
        .map(|f| format!("{} {} takeover {:?}", f.spec_id, f.outcome, f.takeover))
        .collect();
    let crashed = blind.iter().filter(|f| f.outcome == Outcome::Crash).count();
    report.line(
        6,
        "ISC/ESC complementarity",
        bad.is_empty() && crashed == 0 && !manifest.is_empty(),
        format!(
            "{} blind perception runs, {} manifest, {} caught by ESC grace expiry and ended in MRC{}",
            blind.len(),
            manifest.len(),
            manifest.len() - bad.len(),
            list(&bad)
        ),
    );

    // 7. no false takeover
    let controls: Vec<&Facts> = runs.iter().filter(|f| f.fault.is_none()).collect();
    let takeovers: Vec<String> = controls
        .iter()
        .filter(|f| f.takeover.is_some())
        .map(|f| f.spec_id.clone())
        .collect();
    let false_takeovers = runs.iter().filter(|f| f.summary.false_takeover).count();
    let cut_in = controls
        .iter()
        .find(|f| f.spec_id.starts_with("adjacent_cut_in/"))
        .expect("cut-in control run");
    let narrative = [NominalOperation, HazardousEventOperational, SafetyManeuverNc, MinimalRiskCondition];
    report.line(
        7,
        "no false takeover",
        takeovers.is_empty() && false_takeovers == 0 && cut_in.path == narrative,
        format!(
            "{} control runs, {} takeovers, {} false takeovers in the campaign; cut-in path {:?}{}",
            controls.len(),
            takeovers.len(),
            false_takeovers,
            cut_in.path,
            list(&takeovers)
        ),
    );

    // 8. supervisor failure handling
    let mut details = Vec::new();
    let mut ok = true;
    for base in &bases {
        let mut simplex = base.clone();
        simplex.faults.retain(|f| !f.kind.is_adi());
        simplex.faults.push(FaultSpec::new(FaultKind::ScSilence, "sc", 5.0));
        let mut duplicated = simplex.clone();
        duplicated.supervisor = SupervisorConfig::DuplicatedSc;
        let spec = |cfg: &ScenarioConfig| RunSpec {
            run_id: cfg.name.clone(),
            fault: cfg.faults.last().cloned(),
            config: cfg.clone(),
        };
        let s = facts(&spec(&simplex), run_scenario(&simplex));
        let d = facts(&spec(&duplicated), run_scenario(&duplicated));
        let control = controls
            .iter()
            .find(|f| f.spec_id == format!("{}/control", base.name))
            .expect("control run");
        let simplex_ok = s.outcome == Outcome::MinimalRiskCondition
            && s.first_directive.is_some()
            && s.nc_maneuver_applied
            && s.takeover.is_none();
        // with a hot standby the run ends exactly as the fault-free run
        let duplicated_ok = d.outcome == control.outcome && d.first_directive.is_none() && d.takeover.is_none();
        ok &= simplex_ok && duplicated_ok;
        details.push(format!(
            "{}: simplex {} / duplicated {} (fault-free {})",
            base.name, s.outcome, d.outcome, control.outcome
        ));
    }
    report.line(8, "supervisor failure handling", ok, details.join(", "));

    // 9. diagram conformance
    let bad: Vec<String> = runs
        .iter()
        .filter(|f| f.gaps > 0 || f.illegal > 0)
        .map(|f| format!("{} ({} gaps, {} illegal)", f.spec_id, f.gaps, f.illegal))
        .collect();
    let crash_without_hazard = runs
        .iter()
        .filter(|f| f.outcome == Outcome::Crash)
        .filter(|f| !f.path.iter().any(|l| matches!(l, HazardousEventOperational | UndetectedHazardousEvent)))
        .count();
    report.line(
        9,
        "diagram conformance",
        bad.is_empty() && crash_without_hazard == 0,
        format!("{} traces, {} with rule gaps or illegal transitions{}", runs.len(), bad.len(), list(&bad)),
    );

    // 10. determinism
    let mut identical = true;
    for cfg in bases.iter().chain(std::iter::once(&demo)) {
        identical &= run_scenario(cfg).to_jsonl_string() == run_scenario(cfg).to_jsonl_string();
    }
    let rows = |p: usize| -> Vec<OutcomeRow> {
        run_specs(&specs, &opts, p, |s, t| OutcomeRow::new(s, &RunSummary::from_trace(s, &t))).expect("campaign runs")
    };
    let same_rows = rows(1) == rows(8);
    report.line(
        10,
        "determinism",
        identical && same_rows,
        format!("byte-identical repeated traces: {identical}; parallelism 1 vs 8 identical outcomes: {same_rows}"),
    );

    println!("{} of 10 criteria passed", 10 - report.failed);
    if report.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
