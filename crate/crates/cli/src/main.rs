use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use adi_core::harness::campaign::{run_campaign, write_summary_csv, CampaignReport};
use adi_core::harness::classify::{check_transition_legality, classify_records};
use adi_core::harness::{run_scenario_with, Outcome, RunOptions, ScenarioConfig, Trace};
use adi_core::risk::{oracle_check, RiskParams};
use adi_core::supervisor::SupervisorConfig;
use adi_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_VALIDATION: u8 = 1;
const EXIT_PROPERTY: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "adi", version, about = "Two-channel automated driving simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the single-fault campaign of one or more base scenarios.
    Campaign {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        parallelism: u16,
    },
    /// Check scenario files without running them.
    Validate {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Compare the closed-form risk estimate with the simulation oracle.
    Oracle {
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        r_max: Option<f64>,
        #[arg(long)]
        a_avoid_max: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Replaces the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "adi-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    /// Debug: run without the safety supervisor.
    #[arg(long)]
    no_supervisor: bool,
    #[arg(long, value_enum)]
    sc_config: Option<ScConfig>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScConfig {
    Simplex,
    Duplicated,
}

fn load(path: &Path, common: &Common) -> Result<ScenarioConfig, Error> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(sc) = common.sc_config {
        cfg.supervisor = match sc {
            ScConfig::Simplex => SupervisorConfig::LiveSignalSimplex,
            ScConfig::Duplicated => SupervisorConfig::DuplicatedSc,
        };
    }
    Ok(cfg)
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_manifest(out: &Path, command: &str, seed: Option<u64>, inputs: &[PathBuf], files: &[&str]) -> Result<(), Error> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    let manifest = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix_s": now.as_secs(),
        "seed_override": seed,
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "outputs": files,
    });
    let mut w = create(&out.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| Error::Io(e.to_string()))?;
    w.flush().map_err(io_err)
}

fn write_trace_csv(trace: &Trace, out: impl Write) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "step", "t", "ego_s", "ego_v", "ego_a", "ego_lane", "true_risk", "source", "intent", "accel_request", "takeover", "label",
    ])
    .map_err(|e| Error::Io(e.to_string()))?;
    for r in &trace.records {
        let sp = r.setpoint;
        w.write_record([
            r.step.to_string(),
            r.t.to_string(),
            r.ego.s.to_string(),
            r.ego.v.to_string(),
            r.ego.a.to_string(),
            r.ego.lane.to_string(),
            r.true_risk.to_string(),
            sp.map_or(String::new(), |s| format!("{:?}", s.source)),
            sp.map_or(String::new(), |s| format!("{:?}", s.intent)),
            sp.map_or(String::new(), |s| s.accel_request.to_string()),
            r.takeover_latched.to_string(),
            r.label.map_or(String::new(), |l| format!("{l:?}")),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(io_err)
}

fn cmd_run(config: &Path, common: &Common) -> Result<u8, Error> {
    let cfg = load(config, common)?;
    let opts = RunOptions {
        supervisor_enabled: !common.no_supervisor,
    };
    let trace = run_scenario_with(&cfg, &opts);
    fs::create_dir_all(&common.out).map_err(io_err)?;
    let file = match common.format {
        Format::Jsonl => format!("{}.trace.jsonl", cfg.name),
        Format::Csv => format!("{}.trace.csv", cfg.name),
    };
    let mut w = create(&common.out.join(&file))?;
    match common.format {
        Format::Jsonl => trace.write_jsonl(&mut w).map_err(io_err)?,
        Format::Csv => write_trace_csv(&trace, &mut w)?,
    }
    w.flush().map_err(io_err)?;
    write_manifest(&common.out, "run", common.seed, &[config.to_path_buf()], &[&file])?;

    let classification = classify_records(&trace.records, cfg.risk.r_max);
    let labels: Vec<_> = classification.labels.iter().map(|(_, l)| *l).collect();
    let illegal = check_transition_legality(&labels);
    let path: Vec<String> = classification
        .transitions
        .iter()
        .map(|t| format!("{:?}@{}", t.to, t.t))
        .collect();
    let takeover = trace
        .end
        .takeover
        .map_or("none".to_string(), |t| format!("{}@{}", t.cause.map_or("?".into(), |c| c.to_string()), t.t));
    println!(
        "{} seed={} outcome={} t_end={} takeover={} transitions=[{}]",
        cfg.name,
        cfg.seed,
        trace.outcome(),
        trace.end.t_end,
        takeover,
        path.join(" ")
    );
    for g in &classification.gaps {
        eprintln!("unclassified step {}: {}", g.step, g.reason);
    }
    for (i, from, to) in &illegal {
        eprintln!("illegal transition at record {i}: {from:?} -> {to:?}");
    }
    let bad = !classification.gaps.is_empty()
        || !illegal.is_empty()
        || matches!(trace.outcome(), Outcome::Crash | Outcome::ArchitecturalFailure);
    Ok(if bad { EXIT_PROPERTY } else { 0 })
}

fn cmd_campaign(configs: &[PathBuf], common: &Common, parallelism: usize) -> Result<u8, Error> {
    let bases = configs.iter().map(|p| load(p, common)).collect::<Result<Vec<_>, _>>()?;
    let opts = RunOptions {
        supervisor_enabled: !common.no_supervisor,
    };
    let report: CampaignReport = run_campaign(&bases, &opts, parallelism)?;
    fs::create_dir_all(&common.out).map_err(io_err)?;

    let outcomes = match common.format {
        Format::Csv => {
            let name = "outcomes.csv";
            report.write_outcomes_csv(create(&common.out.join(name))?)?;
            name
        }
        Format::Jsonl => {
            let name = "outcomes.jsonl";
            let mut w = create(&common.out.join(name))?;
            for row in &report.rows {
                serde_json::to_writer(&mut w, row).map_err(|e| Error::Io(e.to_string()))?;
                w.write_all(b"\n").map_err(io_err)?;
            }
            w.flush().map_err(io_err)?;
            name
        }
    };
    let mut per_scenario = Vec::new();
    for base in &bases {
        let prefix = format!("{}/", base.name);
        let runs: Vec<_> = report
            .summaries
            .iter()
            .filter(|s| s.run_id.starts_with(&prefix))
            .cloned()
            .collect();
        per_scenario.push((base.name.clone(), adi_core::harness::compute_metrics(&runs)));
    }
    per_scenario.push(("all".to_string(), report.metrics));
    write_summary_csv(&per_scenario, create(&common.out.join("summary.csv"))?)?;
    write_manifest(&common.out, "campaign", common.seed, configs, &[outcomes, "summary.csv"])?;

    let m = &report.metrics;
    println!(
        "runs={} crash={} mrc={} mission_complete={} architectural_failure={} false_takeover={} availability={:.3}",
        m.runs,
        m.crash_count,
        m.mrc_count,
        m.mission_complete_count,
        m.architectural_failure_count,
        m.false_takeover_count,
        m.availability()
    );
    for row in report.rows.iter().filter(|r| matches!(r.outcome, Outcome::Crash | Outcome::ArchitecturalFailure)) {
        println!("{}: {}", row.run_id, row.outcome);
    }
    let violated = m.crash_count > 0 || m.architectural_failure_count > 0 || m.false_takeover_count > 0;
    Ok(if violated { EXIT_PROPERTY } else { 0 })
}

fn cmd_validate(configs: &[PathBuf]) -> u8 {
    let mut code = 0;
    for path in configs {
        match ScenarioConfig::load(path) {
            Ok(cfg) => println!("{}: ok ({})", path.display(), cfg.name),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                code = EXIT_VALIDATION;
            }
        }
    }
    code
}

fn cmd_oracle(tolerance: f64, horizon: Option<f64>, r_max: Option<f64>, a_avoid_max: Option<f64>) -> Result<u8, Error> {
    let d = RiskParams::default();
    let params = RiskParams {
        horizon: horizon.unwrap_or(d.horizon),
        r_max: r_max.unwrap_or(d.r_max),
        a_avoid_max: a_avoid_max.unwrap_or(d.a_avoid_max),
    };
    params
        .validate()
        .map_err(|m| Error::Validation(vec![adi_core::harness::scenario::FieldError { path: "risk".into(), message: m }]))?;
    let report = oracle_check(&params, tolerance);
    let (v, g, o) = report.worst_point;
    println!(
        "points={} max_abs_diff={:.4} worst=(ego_v={v:.2}, gap={g:.2}, obstacle_v={o:.2}) tolerance={} {}",
        report.points,
        report.max_abs_diff,
        report.tolerance,
        if report.passed() { "PASS" } else { "FAIL" }
    );
    Ok(if report.passed() { 0 } else { EXIT_PROPERTY })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run { config, common } => cmd_run(config, common),
        Command::Campaign {
            configs,
            common,
            parallelism,
        } => cmd_campaign(configs, common, usize::from(*parallelism)),
        Command::Validate { configs } => Ok(cmd_validate(configs)),
        Command::Oracle {
            tolerance,
            horizon,
            r_max,
            a_avoid_max,
        } => cmd_oracle(*tolerance, *horizon, *r_max, *a_avoid_max),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Validation(_) | Error::Io(_) => EXIT_VALIDATION,
                Error::RunFailed { .. } | Error::Internal(_) => EXIT_INTERNAL,
            })
        }
    }
}
