//! Run configuration: one file (TOML or JSON) that command-line flags
//! override. The resolved form is echoed into every output directory and
//! can be passed back through `--config` to replay a run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use agentic_control::agent::TemplateStore;
use agentic_control::control::EpisodeConfig;
use agentic_control::fsm::default_cells;
use agentic_control::provider::{
    parse_script, CompletionProvider, HttpProvider, ProviderConfig, ScriptedProvider,
};
use anyhow::Context;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// OpenAI-compatible cloud endpoint.
    #[default]
    Openai,
    /// OpenAI-compatible server on this machine.
    Local,
    /// Replies replayed from a JSON-lines script.
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Pid,
    Llm,
    /// Replays a fixed command list.
    Scripted,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    /// Existing suite directory; generated from `seed` when absent.
    pub suite: Option<PathBuf>,
    pub seed: u64,
    pub instances_per_cell: usize,
    pub cells: Vec<(usize, usize)>,
    pub budget: u32,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            suite: None,
            seed: 1,
            instances_per_cell: agentic_control::fsm::DEFAULT_INSTANCES_PER_CELL,
            cells: default_cells(),
            budget: agentic_control::agent::DEFAULT_PLAN_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub provider: ProviderKind,
    /// Reply script for the scripted provider.
    pub script: Option<PathBuf>,
    /// HTTP settings; the kind decides the defaults when absent.
    pub http: Option<ProviderConfig>,
    /// Directory of template overrides.
    pub prompts: Option<PathBuf>,
    pub parallel: usize,
    pub controller: ControllerKind,
    /// JSON list of `[q1, q2]` pairs for the replay controller.
    pub commands: Option<PathBuf>,
    pub episode: EpisodeConfig,
    pub bench: BenchSettings,
}

/// Flags shared by the run commands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    #[arg(long)]
    pub model: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Also write an SVG plot.
    #[arg(long)]
    pub plot: bool,
    /// Reply script for `--provider scripted`.
    #[arg(long)]
    pub script: Option<PathBuf>,
}

pub fn load_run_file(path: &Path) -> Result<RunFile, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::config)?;
    let mut file: RunFile = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
    .map_err(Failure::config)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut file.script, &mut file.prompts, &mut file.commands, &mut file.bench.suite] {
        if let Some(rel) = p.as_mut() {
            if rel.is_relative() {
                *rel = base.join(&*rel);
            }
        }
    }
    Ok(file)
}

impl RunFile {
    pub fn resolve(args: &CommonArgs) -> Result<Self, Failure> {
        let mut file = match &args.config {
            Some(p) => load_run_file(p)?,
            None => RunFile::default(),
        };
        if let Some(k) = args.provider {
            file.provider = k;
        }
        if let Some(s) = &args.script {
            file.script = Some(s.clone());
        }
        if let Some(seed) = args.seed {
            file.bench.seed = seed;
        }
        if let Some(p) = args.parallel {
            file.parallel = p;
        }
        file.parallel = file.parallel.max(1);
        if file.provider != ProviderKind::Scripted {
            let mut http = file.http.take().unwrap_or_else(|| match file.provider {
                ProviderKind::Local => ProviderConfig::local("llama3.1"),
                _ => ProviderConfig::default(),
            });
            if let Some(m) = &args.model {
                http.model = m.clone();
            }
            http.validate().map_err(|e| Failure::config(e.into()))?;
            file.http = Some(http);
        }
        file.episode.validate().map_err(|e| Failure::config(e.into()))?;
        Ok(file)
    }

    pub fn templates(&self) -> Result<TemplateStore, Failure> {
        match &self.prompts {
            Some(dir) => TemplateStore::with_overrides(dir).map_err(|e| Failure::config(e.into())),
            None => Ok(TemplateStore::bundled()),
        }
    }

    /// Builds the provider factory. The script, when used, is copied to
    /// `out/script.jsonl` and the echo points there.
    pub fn provider_source(&mut self, out: &Path) -> Result<ProviderSource, Failure> {
        match self.provider {
            ProviderKind::Scripted => {
                let path = self
                    .script
                    .clone()
                    .ok_or_else(|| Failure::config(anyhow::anyhow!("the scripted provider needs --script")))?;
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading script {}", path.display()))
                    .map_err(Failure::config)?;
                let rules = parse_script(text.as_bytes())
                    .with_context(|| format!("parsing script {}", path.display()))
                    .map_err(Failure::config)?;
                let provider = ScriptedProvider::new(rules)
                    .map_err(|e| Failure::config(e.into()))?
                    .with_label("scripted");
                let copy = out.join("script.jsonl");
                if std::fs::canonicalize(&path).ok() != std::fs::canonicalize(&copy).ok() {
                    std::fs::write(&copy, &text).with_context(|| format!("writing {}", copy.display()))?;
                }
                self.script = Some(absolute(&copy));
                Ok(ProviderSource::Scripted(Arc::new(provider)))
            }
            ProviderKind::Openai | ProviderKind::Local => {
                let cfg = self.http.clone().expect("resolved above");
                let p = HttpProvider::new(cfg).map_err(|e| Failure::config(e.into()))?;
                Ok(ProviderSource::Shared(Arc::new(p)))
            }
        }
    }

    pub fn write_echo(&self, out: &Path) -> anyhow::Result<()> {
        let mut echo = self.clone();
        for p in [&mut echo.prompts, &mut echo.commands, &mut echo.bench.suite] {
            if let Some(path) = p.as_mut() {
                *path = absolute(path);
            }
        }
        let text = serde_json::to_string_pretty(&echo)?;
        std::fs::write(out.join("config.json"), text + "\n").context("writing config echo")
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Hands out providers: a fresh script replay per episode or instance, so
/// results do not depend on scheduling, or one shared HTTP client.
#[derive(Clone)]
pub enum ProviderSource {
    Scripted(Arc<ScriptedProvider>),
    Shared(Arc<dyn CompletionProvider>),
}

impl ProviderSource {
    pub fn make(&self) -> Arc<dyn CompletionProvider> {
        match self {
            ProviderSource::Scripted(template) => Arc::new(template.fresh()),
            ProviderSource::Shared(p) => Arc::clone(p),
        }
    }
}
