//! `run`, `compare` and `audit` subcommands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ptxlink_core::jumphost::{verify_audit, AuditEntry, AuditVerdict};
use ptxlink_core::metrics::report::{run_experiment, write_samples_csv, RunMeta};
use ptxlink_core::metrics::{compare, Report};
use ptxlink_core::netemu::config::NetConfig;
use ptxlink_core::scenario::replay::Execution;
use ptxlink_core::scenario::{read_trace_file, replay, run_teleop, write_trace_file, ReplayVerdict, RunConfig};

use crate::checks::{experiment_checks, print_checks, teleop_checks, Check};
use crate::config::{ConfigError, Mode, ScenarioConfig};
use crate::Exit;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit(&self) -> Exit {
        Exit::ConfigError
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io(format!("{}: {e}", path.display()))
    }
}

/// Flags of `ptxlink run`; each one overrides the scenario file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Topology preset, e.g. setup3.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Link profile: lte, 5g-nsa, 5g-sa or any profile in --net-config.
    #[arg(long)]
    pub network: Option<String>,
    /// function, container or orchestrated (kubernetes).
    #[arg(long)]
    pub deployment: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub net_config: Option<PathBuf>,
    #[arg(long)]
    pub route: Option<PathBuf>,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Teleop drive length in seconds.
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Operator token for teleop modes.
    #[arg(long)]
    pub token: Option<String>,
    /// Report path; samples, trace and audit files are written next to it.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    /// Trace path, default `<out>.trace.jsonl`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Re-execute a recorded trace and check it is reproduced exactly.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Exit 1 when an acceptance threshold is breached.
    #[arg(long)]
    pub ci: bool,
}

impl RunArgs {
    /// Scenario file with flags applied on top.
    pub fn scenario_config(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut c = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(m) = self.mode {
            c.mode = m;
        }
        if self.replay.is_some() {
            c.mode = Mode::Replay;
            c.replay.clone_from(&self.replay);
        }
        macro_rules! over {
            ($($f:ident <- $g:ident),*) => { $( if self.$g.is_some() { c.$f = self.$g.clone(); } )* };
        }
        over!(preset <- scenario, network <- network, deployment <- deployment, samples <- samples,
              net_config <- net_config, route <- route, world <- world, rules <- rules,
              registry <- registry, duration_s <- duration_s, token <- token);
        Ok(c)
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn finish(checks: Vec<Check>, ci: bool) -> Exit {
    if ci {
        print_checks(&checks);
        if checks.iter().any(|c| !c.pass) {
            return Exit::Breach;
        }
    }
    Exit::Ok
}

pub fn run(args: &RunArgs) -> Result<Exit, CliError> {
    let cfg = args.scenario_config()?;
    match cfg.mode {
        Mode::Replay => {
            let path = cfg
                .replay
                .as_ref()
                .ok_or_else(|| ConfigError("replay mode needs --replay <trace.jsonl>".into()))?;
            run_replay(path)
        }
        Mode::TeleopServe => Err(ConfigError("teleop_serve runs under `ptxlink serve`".into()).into()),
        Mode::Experiment | Mode::Teleop => {
            let seed = cfg.effective_seed(args.seed)?;
            let run = cfg.resolve(seed)?;
            execute_to_files(run, args)
        }
    }
}

fn execute_to_files(run: RunConfig, args: &RunArgs) -> Result<Exit, CliError> {
    let started = Instant::now();
    let started_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
    let trace_path = args.trace.clone().unwrap_or_else(|| sibling(&args.out, "trace.jsonl"));
    let (exec, report_text, checks) = match &run {
        RunConfig::Experiment { spec, net } => {
            let cfg = NetConfig::from_file(net.clone()).map_err(|e| ConfigError(e.to_string()))?;
            let (mut report, data) = run_experiment(spec, &cfg).map_err(|e| ConfigError(e.to_string()))?;
            let exec = Execution {
                report_json: report.canonical_json(),
                trace: data.trace,
            };
            let samples_path = sibling(&args.out, "samples.csv");
            let w = create(&samples_path)?;
            write_samples_csv(w, &data.samples).map_err(|e| CliError::io(&samples_path, e))?;
            report.samples_path = Some(samples_path.display().to_string());
            report.meta = Some(RunMeta {
                started_unix_ms,
                wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            for (k, s) in &report.box_stats {
                println!("{k}: median {:.2} ms, mean {:.2} ms, n {}", s.median, s.mean, s.n);
            }
            if let (Some(per), Some(pdr)) = (report.per, report.pdr) {
                println!("PER {per:.6}, PDR {pdr:.6}");
            }
            let checks = experiment_checks(&report);
            (exec, report.to_json(), checks)
        }
        RunConfig::Teleop { config } => {
            let (report, sim) = run_teleop((**config).clone()).map_err(|e| ConfigError(e.to_string()))?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            let audit_path = sibling(&args.out, "audit.jsonl");
            sim.host.audit.write_jsonl(&audit_path).map_err(|e| CliError::io(&audit_path, e))?;
            match report.rtt_mean_ms {
                Some(m) => println!("command->ack mean {m:.2} ms over {} commands", report.commands_accepted),
                None => println!("no accepted commands"),
            }
            println!(
                "telemetry: {} generated, {} logged, {} at twin; audit {:?}",
                report.records_generated, report.records_logged, report.records_at_twin, report.audit
            );
            let checks = teleop_checks(&report);
            (
                Execution {
                    report_json: text.clone(),
                    trace: sim.trace().to_vec(),
                },
                text,
                checks,
            )
        }
    };
    write_text(&args.out, &report_text)?;
    let mut w = create(&trace_path)?;
    write_trace_file(&mut w, &exec.header(run), &exec.trace).map_err(|e| CliError::io(&trace_path, e))?;
    println!("report {}, trace {}", args.out.display(), trace_path.display());
    Ok(finish(checks, args.ci))
}

pub fn run_replay(path: &Path) -> Result<Exit, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let (header, records) = read_trace_file(BufReader::new(f)).map_err(|e| CliError::io(path, e))?;
    let verdict = replay(&header, &records).map_err(|e| ConfigError(e.to_string()))?;
    println!("{}", serde_json::to_string(&verdict).expect("json"));
    Ok(match verdict {
        ReplayVerdict::Identical { .. } => Exit::Ok,
        _ => Exit::Breach,
    })
}

fn load_report(path: &Path) -> Result<Report, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Report::from_json(&text).map_err(|e| CliError::io(path, e))
}

pub fn run_compare(a: &Path, b: &Path, json: bool) -> Result<Exit, CliError> {
    let (ra, rb) = (load_report(a)?, load_report(b)?);
    let c = compare(&ra, &rb).map_err(|e| ConfigError(e.to_string()))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&c).expect("json"));
    } else {
        print!("{}", c.to_table());
    }
    Ok(Exit::Ok)
}

/// Parse an exported audit log. A line that does not parse is reported as
/// the break point, same as a digest mismatch.
pub fn audit_verdict(text: &str) -> AuditVerdict {
    let mut entries: Vec<AuditEntry> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str(line) {
            Ok(e) => entries.push(e),
            Err(_) => {
                return match verify_audit(&entries) {
                    AuditVerdict::Intact => AuditVerdict::BrokenAt(entries.len() as u64),
                    broken => broken,
                }
            }
        }
    }
    verify_audit(&entries)
}

pub fn run_audit_verify(path: &Path) -> Result<Exit, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v = audit_verdict(&text);
    println!("{}", serde_json::to_string(&v).expect("json"));
    Ok(match v {
        AuditVerdict::Intact => Exit::Ok,
        AuditVerdict::BrokenAt(_) => Exit::Breach,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/r.json"), "trace.jsonl"), PathBuf::from("out/r.trace.jsonl"));
        assert_eq!(sibling(Path::new("report.json"), "samples.csv"), PathBuf::from("report.samples.csv"));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(&p, r#"{"network":"lte","samples":10,"seed":1}"#).unwrap();
        let a = RunArgs {
            config: Some(p),
            network: Some("5g-sa".into()),
            ..RunArgs::default()
        };
        let c = a.scenario_config().unwrap();
        assert_eq!((c.network.as_deref(), c.samples, c.seed), (Some("5g-sa"), Some(10), Some(1)));
    }

    #[test]
    fn unparsable_audit_line_is_a_break() {
        let mut log = ptxlink_core::jumphost::AuditLog::new();
        for i in 0..3 {
            log.append(i, "s".into(), ptxlink_core::jumphost::AuditEvent::AuthFail, Default::default());
        }
        let text = log.to_jsonl();
        assert_eq!(audit_verdict(&text), AuditVerdict::Intact);
        let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
        lines[1].push('x');
        assert_eq!(audit_verdict(&lines.join("\n")), AuditVerdict::BrokenAt(1));
    }
}
