//! `agentctl`: benchmark suites, planning runs, control episodes and
//! reports from the command line.
//!
//! Exit codes: 0 success, 1 runtime error, 2 configuration or input error,
//! 3 the provider failed everywhere.

mod bench;
mod config;
mod episode;
mod plot;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "agentctl", version, about = "Agentic planning and control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a benchmark suite of random state machines.
    GenSuite(bench::GenSuiteArgs),
    /// Run recovery planning on every suite instance.
    FsmBench(bench::FsmBenchArgs),
    /// Run one closed-loop episode on the thermal twin.
    ControlRun(episode::ControlRunArgs),
    /// Merge finished runs into tables and plots.
    Report(report::ReportArgs),
}

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }

    pub fn malformed(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }

    pub fn provider(error: anyhow::Error) -> Self {
        Self { code: 3, error }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self { code: 1, error: e.into() }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenSuite(a) => bench::cmd_gen_suite(a),
        Command::FsmBench(a) => bench::cmd_fsm_bench(a),
        Command::ControlRun(a) => episode::cmd_control_run(a),
        Command::Report(a) => report::cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
