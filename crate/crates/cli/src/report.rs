//! `report`: merges finished runs into comparison tables and plots.

use std::fs;
use std::path::{Path, PathBuf};

use agentic_control::control::EpisodeLog;
use agentic_control::metrics::{control_table, fsm_table, latency_stats, latency_table, Table};
use agentic_control::twin::Trajectory;
use anyhow::{anyhow, Context};
use tracing::info;

use crate::bench::{cell_rows, InstanceRecord};
use crate::{plot, Failure};

#[derive(Debug, Clone, clap::Args)]
pub struct ReportArgs {
    /// Run directories, `episode.json` files or `instances.jsonl` files.
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the tables as markdown.
    #[arg(long)]
    pub markdown: bool,
    /// Also write an SVG comparing the episodes.
    #[arg(long)]
    pub plot: bool,
}

enum Run {
    Episode { log: Box<EpisodeLog>, trajectory: Option<Trajectory> },
    Fsm(Vec<InstanceRecord>),
}

fn label_for(path: &Path) -> String {
    let standard = ["episode.json", "instances.jsonl"];
    let named = if path.is_file() && path.file_name().is_some_and(|n| standard.iter().any(|s| n == *s)) {
        path.parent().and_then(Path::file_name)
    } else if path.is_file() {
        path.file_stem()
    } else {
        path.file_name()
    };
    let raw = named.map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn read_episode(path: &Path) -> anyhow::Result<Run> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let log: EpisodeLog = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let csv = path.with_file_name("trajectory.csv");
    let trajectory = match fs::File::open(&csv) {
        Ok(f) => Some(Trajectory::read_csv(f).with_context(|| format!("parsing {}", csv.display()))?),
        Err(_) => None,
    };
    Ok(Run::Episode { log: Box::new(log), trajectory })
}

fn read_instances(path: &Path) -> anyhow::Result<Run> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let records = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<InstanceRecord>(l).with_context(|| format!("{} line {}", path.display(), i + 1))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if records.is_empty() {
        return Err(anyhow!("{} holds no instances", path.display()));
    }
    Ok(Run::Fsm(records))
}

fn read_run(path: &Path) -> anyhow::Result<Run> {
    if path.is_dir() {
        let ep = path.join("episode.json");
        let inst = path.join("instances.jsonl");
        if ep.is_file() {
            read_episode(&ep)
        } else if inst.is_file() {
            read_instances(&inst)
        } else {
            Err(anyhow!("{} holds neither episode.json nor instances.jsonl", path.display()))
        }
    } else if path.extension().is_some_and(|e| e == "jsonl") {
        read_instances(path)
    } else if path.extension().is_some_and(|e| e == "json") {
        read_episode(path)
    } else {
        Err(anyhow!("cannot tell what kind of log {} is", path.display()))
    }
}

fn write_table(out: &Path, stem: &str, table: &Table, md: &mut Option<String>) -> anyhow::Result<()> {
    fs::write(out.join(format!("{stem}.csv")), table.to_csv())?;
    if let Some(doc) = md {
        doc.push_str(&format!("## {stem}\n\n{}\n", table.to_markdown()));
    }
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), Failure> {
    if args.inputs.is_empty() {
        return Err(Failure::malformed(anyhow!("no input logs given")));
    }
    let mut runs: Vec<(String, Run)> = Vec::new();
    for p in &args.inputs {
        let run = read_run(p).map_err(Failure::malformed)?;
        let base = label_for(p);
        let mut label = base.clone();
        let mut k = 2;
        while runs.iter().any(|(l, _)| *l == label) {
            label = format!("{base}_{k}");
            k += 1;
        }
        runs.push((label, run));
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut md = args.markdown.then(String::new);

    let mut control = Vec::new();
    let mut latency = Vec::new();
    for (label, run) in &runs {
        match run {
            Run::Episode { log, .. } => {
                control.push((label.clone(), log.metrics.clone()));
                if let Some(l) = log.metrics.wall_latency {
                    latency.push((label.clone(), l));
                }
            }
            Run::Fsm(records) => {
                let rows = cell_rows(records)?;
                write_table(&args.out, &format!("fsm_table_{label}"), &fsm_table(&rows), &mut md)?;
                let secs: Vec<f64> = records.iter().map(|r| r.wall_seconds).collect();
                latency.push((label.clone(), latency_stats(&secs).map_err(|e| Failure::malformed(e.into()))?));
            }
        }
    }
    if !control.is_empty() {
        write_table(&args.out, "control_table", &control_table(&control), &mut md)?;
    }
    if !latency.is_empty() {
        write_table(&args.out, "latency_table", &latency_table(&latency), &mut md)?;
    }
    if let Some(doc) = md {
        fs::write(args.out.join("report.md"), format!("# Report\n\n{doc}"))?;
    }
    if args.plot {
        let episodes: Vec<(String, &Trajectory, f64)> = runs
            .iter()
            .filter_map(|(label, r)| match r {
                Run::Episode { log, trajectory: Some(t) } => Some((label.clone(), t, log.config.setpoint)),
                _ => None,
            })
            .collect();
        if let Some(&(_, _, sp)) = episodes.first() {
            let series: Vec<(String, &Trajectory)> = episodes.iter().map(|(l, t, _)| (l.clone(), *t)).collect();
            fs::write(args.out.join("comparison.svg"), plot::episode_svg(&series, sp))?;
        }
    }
    info!(runs = runs.len(), dir = %args.out.display(), "report written");
    Ok(())
}
