use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ptxlink_cli::commands::{self, CliError, RunArgs};
use ptxlink_cli::config::Mode;
use ptxlink_cli::{serve, Exit};
use ptxlink_core::scenario::RunConfig;

#[derive(Parser)]
#[command(name = "ptxlink", version, about = "Offshore robot teleoperation and telemetry link emulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment or scripted teleop drive, or replay a trace.
    Run(RunArgs),
    /// Compare two experiment reports.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve the operator gateway: ws://<listen>/ops, /schema, /metrics.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Also accept raw PTX1 frames on this TCP address.
        #[arg(long)]
        frames: Option<SocketAddr>,
    },
    /// Audit log tools.
    Audit {
        #[command(subcommand)]
        cmd: AuditCmd,
    },
}

#[derive(Subcommand)]
enum AuditCmd {
    /// Check the hash chain of an exported audit log.
    Verify { path: PathBuf },
}

fn serve_cmd(mut run: RunArgs, listen: SocketAddr, frames: Option<SocketAddr>) -> Result<Exit, CliError> {
    run.mode = Some(Mode::TeleopServe);
    let cfg = run.scenario_config()?;
    let seed = cfg.effective_seed(run.seed)?;
    let RunConfig::Teleop { config } = cfg.resolve(seed)? else {
        unreachable!("teleop_serve resolves to a teleop config")
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(async {
        let server = serve::start(*config, listen, frames)
            .await
            .map_err(|e| CliError::Io(e.to_string()))?;
        println!("ops gateway on ws://{}/ops", server.http_addr);
        if let Some(f) = server.frames_addr {
            println!("frame endpoint on tcp://{f}");
        }
        let _ = tokio::signal::ctrl_c().await;
        let report = server.shutdown().await;
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&run.out, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", run.out.display())))?;
        println!("report {}", run.out.display());
        Ok(Exit::Ok)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => commands::run(&a),
        Cmd::Compare { a, b, json } => commands::run_compare(&a, &b, json),
        Cmd::Serve { run, listen, frames } => serve_cmd(run, listen, frames),
        Cmd::Audit {
            cmd: AuditCmd::Verify { path },
        } => commands::run_audit_verify(&path),
    };
    match res {
        Ok(e) => e.into(),
        Err(e) => {
            eprintln!("ptxlink: {e}");
            e.exit().into()
        }
    }
}
