//! `gen-suite` and `fsm-bench`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use agentic_control::agent::{oracle_rule, AuditLog, PlanError, PlanOutcome, Planner};
use agentic_control::fsm::{BenchInstance, Fsm, PathPlan, Suite};
use agentic_control::metrics::{fsm_metrics, fsm_table, FsmBenchRecord, FsmCellRow, FsmInstanceSummary};
use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::config::{CommonArgs, ProviderSource, RunFile};
use crate::Failure;

#[derive(Debug, Clone, clap::Args)]
pub struct GenSuiteArgs {
    /// Suite directory to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = agentic_control::fsm::DEFAULT_INSTANCES_PER_CELL)]
    pub per_cell: usize,
    /// Also write a provider script that answers every task optimally.
    #[arg(long)]
    pub oracle_script: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct FsmBenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Load this suite instead of generating one.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Reprompts allowed per instance.
    #[arg(long)]
    pub budget: Option<u32>,
}

pub fn write_oracle_script(suite: &Suite, path: &Path) -> anyhow::Result<()> {
    let mut out = Vec::new();
    for (inst, fsm) in suite.manifest.instances.iter().zip(&suite.machines) {
        let rule = oracle_rule(fsm, inst.start, inst.goal)?;
        serde_json::to_writer(&mut out, &rule)?;
        out.write_all(b"\n")?;
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_gen_suite(args: &GenSuiteArgs) -> Result<(), Failure> {
    if args.per_cell == 0 {
        return Err(Failure::config(anyhow::anyhow!("--per-cell must be at least 1")));
    }
    let suite = Suite::generate(&agentic_control::fsm::default_cells(), args.per_cell, args.seed)
        .context("generating suite")?;
    suite.write_dir(&args.out)?;
    if let Some(p) = &args.oracle_script {
        write_oracle_script(&suite, p)?;
    }
    info!(instances = suite.manifest.instances.len(), dir = %args.out.display(), "suite written");
    Ok(())
}

/// One line of `instances.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub seed: u64,
    pub start: usize,
    pub goal: usize,
    pub first_attempt_valid: bool,
    pub solved: bool,
    pub reprompts: u32,
    pub found_path: Option<PathPlan>,
    pub optimal_path: Option<PathPlan>,
    pub provider_error: Option<String>,
    pub wall_seconds: f64,
}

impl InstanceRecord {
    pub fn summary(&self) -> FsmInstanceSummary {
        FsmInstanceSummary {
            id: self.id.clone(),
            first_attempt_valid: self.first_attempt_valid,
            solved: self.solved,
            reprompts: self.reprompts,
            found_len: self.found_path.as_ref().filter(|_| self.solved).map(PathPlan::len_transitions),
            optimal_len: self.optimal_path.as_ref().map(PathPlan::len_transitions),
            seconds: self.wall_seconds,
        }
    }
}

fn run_instance(
    inst: &BenchInstance,
    fsm: &Fsm,
    source: &ProviderSource,
    file: &RunFile,
    templates: &agentic_control::agent::TemplateStore,
) -> anyhow::Result<(InstanceRecord, AuditLog)> {
    let provider = source.make();
    let mut audit = AuditLog::new(inst.id.clone());
    let planner = Planner::new(&*provider, templates).with_budget(file.bench.budget);
    let optimal = fsm.shortest_path(inst.start, inst.goal)?;
    let (outcome, provider_error): (PlanOutcome, _) = match planner.plan(fsm, inst.start, inst.goal, &mut audit) {
        Ok(o) => (o, None),
        Err(PlanError::Provider { error, partial }) => {
            warn!(instance = %inst.id, %error, "provider failed");
            (*partial, Some(error.to_string()))
        }
        Err(e) => return Err(e).with_context(|| format!("instance {}", inst.id)),
    };
    let s = outcome.summarize(inst.id.clone(), optimal.as_ref());
    let record = InstanceRecord {
        id: inst.id.clone(),
        n_nodes: inst.n_nodes,
        n_edges: inst.n_edges,
        seed: inst.seed,
        start: inst.start,
        goal: inst.goal,
        first_attempt_valid: s.first_attempt_valid,
        solved: s.solved,
        reprompts: s.reprompts,
        found_path: outcome.final_path.clone(),
        optimal_path: optimal,
        provider_error,
        wall_seconds: s.seconds,
    };
    Ok((record, audit))
}

/// Groups records into cells in order of first appearance.
pub fn cell_rows(records: &[InstanceRecord]) -> Result<Vec<FsmCellRow>, Failure> {
    let mut cells: Vec<FsmBenchRecord> = Vec::new();
    for r in records {
        match cells
            .iter_mut()
            .find(|c| c.n_nodes == r.n_nodes && c.n_edges == r.n_edges)
        {
            Some(c) => c.instances.push(r.summary()),
            None => cells.push(FsmBenchRecord {
                n_nodes: r.n_nodes,
                n_edges: r.n_edges,
                instances: vec![r.summary()],
            }),
        }
    }
    cells
        .iter()
        .map(|c| fsm_metrics(c).map_err(|e| Failure::malformed(e.into())))
        .collect()
}

#[derive(Debug, Serialize)]
struct BenchSummary<'a> {
    provider: String,
    instances: usize,
    solved: usize,
    provider_failures: usize,
    cells: &'a [FsmCellRow],
}

pub fn cmd_fsm_bench(args: &FsmBenchArgs) -> Result<(), Failure> {
    let out = &args.common.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut file = RunFile::resolve(&args.common)?;
    if let Some(s) = &args.suite {
        file.bench.suite = Some(s.clone());
    }
    if let Some(b) = args.budget {
        file.bench.budget = b;
    }
    if file.bench.instances_per_cell == 0 || file.bench.cells.is_empty() {
        return Err(Failure::config(anyhow::anyhow!("the suite has no instances")));
    }
    let templates = file.templates()?;
    let source = file.provider_source(out)?;

    let suite = match &file.bench.suite {
        Some(dir) => Suite::load_dir(dir)
            .with_context(|| format!("loading suite {}", dir.display()))
            .map_err(Failure::config)?,
        None => Suite::generate(&file.bench.cells, file.bench.instances_per_cell, file.bench.seed)
            .context("generating suite")?,
    };
    let suite_dir = out.join("suite");
    suite.write_dir(&suite_dir)?;
    file.bench.suite = Some(suite_dir);
    file.write_echo(out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(file.parallel)
        .build()
        .context("building worker pool")?;
    info!(instances = suite.manifest.instances.len(), workers = file.parallel, "running benchmark");
    let results: Vec<anyhow::Result<(InstanceRecord, AuditLog)>> = pool.install(|| {
        suite
            .manifest
            .instances
            .par_iter()
            .zip(suite.machines.par_iter())
            .map(|(inst, fsm)| run_instance(inst, fsm, &source, &file, &templates))
            .collect()
    });

    let mut records = Vec::with_capacity(results.len());
    let mut audit = AuditLog::new("");
    for r in results {
        let (rec, log) = r?;
        records.push(rec);
        audit.append(log);
    }
    fs::write(out.join("audit.jsonl"), audit.to_jsonl())?;
    let mut lines = String::new();
    for r in &records {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    fs::write(out.join("instances.jsonl"), lines)?;

    let rows = cell_rows(&records)?;
    fs::write(out.join("fsm_table.csv"), fsm_table(&rows).to_csv())?;
    let failures = records.iter().filter(|r| r.provider_error.is_some()).count();
    let summary = BenchSummary {
        provider: source.make().label(),
        instances: records.len(),
        solved: records.iter().filter(|r| r.solved).count(),
        provider_failures: failures,
        cells: &rows,
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    info!(solved = summary.solved, instances = summary.instances, "benchmark finished");

    if failures == records.len() {
        return Err(Failure::provider(anyhow::anyhow!(
            "the provider failed on all {failures} instances"
        )));
    }
    Ok(())
}
