//! `control-run`.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use agentic_control::agent::{AgentController, AuditKind};
use agentic_control::control::{
    run_episode, Controller, PidController, ReplayController, ZeroController,
};
use agentic_control::twin::HeaterCommand;
use anyhow::Context;
use tracing::info;

use crate::config::{CommonArgs, ControllerKind, RunFile};
use crate::{plot, Failure};

#[derive(Debug, Clone, clap::Args)]
pub struct ControlRunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub controller: Option<ControllerKind>,
    /// JSON list of `[q1, q2]` pairs for `--controller scripted`.
    #[arg(long)]
    pub commands: Option<PathBuf>,
}

fn load_commands(path: &std::path::Path) -> Result<Vec<HeaterCommand>, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::config)?;
    let pairs: Vec<[f64; 2]> = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::config)?;
    Ok(pairs.into_iter().map(|[a, b]| HeaterCommand::new(a, b)).collect())
}

pub fn cmd_control_run(args: &ControlRunArgs) -> Result<(), Failure> {
    let out = &args.common.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut file = RunFile::resolve(&args.common)?;
    if let Some(c) = args.controller {
        file.controller = c;
    }
    if let Some(c) = &args.commands {
        file.commands = Some(c.clone());
    }
    let config = file.episode.clone();

    let mut audit = None;
    let log = if file.controller == ControllerKind::Llm {
        let templates = file.templates()?;
        let provider = file.provider_source(out)?.make();
        file.write_echo(out)?;
        let mut agent = AgentController::new(provider, templates);
        let log = run_episode(&config, &mut agent).context("running episode")?;
        audit = Some(agent.into_audit());
        log
    } else {
        let mut controller: Box<dyn Controller> = match file.controller {
            ControllerKind::Zero => Box::new(ZeroController),
            ControllerKind::Scripted => {
                let path = file.commands.clone().ok_or_else(|| {
                    Failure::config(anyhow::anyhow!("the replay controller needs --commands"))
                })?;
                Box::new(ReplayController::new(load_commands(&path)?))
            }
            _ => Box::new(PidController::from_config(&config)),
        };
        file.write_echo(out)?;
        run_episode(&config, controller.as_mut()).context("running episode")?
    };

    fs::write(out.join("episode.json"), serde_json::to_string_pretty(&log)? + "\n")?;
    fs::write(out.join("trajectory.csv"), log.trajectory.to_csv_string())?;
    fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&log.metrics)? + "\n")?;
    if args.common.plot {
        let svg = plot::episode_svg(&[(log.controller.clone(), &log.trajectory)], config.setpoint);
        fs::write(out.join("plot.svg"), svg)?;
    }
    info!(
        controller = %log.controller,
        tw_mae = log.metrics.tw_mae,
        rmse = log.metrics.rmse,
        fallbacks = log.metrics.fallbacks,
        "episode finished"
    );

    if let Some(audit) = audit {
        fs::write(out.join("audit.jsonl"), audit.to_jsonl())?;
        let failed_scopes: BTreeSet<&str> = audit
            .entries()
            .iter()
            .filter(|e| e.kind == AuditKind::ProviderError)
            .map(|e| e.scope.as_str())
            .collect();
        let n = log.decisions.len();
        if n > 0 && failed_scopes.len() == n && log.fallback_count() == n {
            return Err(Failure::provider(anyhow::anyhow!(
                "the provider failed in every one of the {n} intervals"
            )));
        }
    }
    Ok(())
}
