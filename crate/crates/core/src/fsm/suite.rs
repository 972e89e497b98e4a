//! Benchmark suites: directories of FSM JSON files plus a manifest that
//! fixes the `(start, goal)` task of every instance.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{generate_fsm, Fsm, FsmError, StateId};

pub const DEFAULT_INSTANCES_PER_CELL: usize = 20;

pub const MANIFEST_FILE: &str = "manifest.json";

/// The `(nodes, edges)` cells of the planning benchmark.
pub fn default_cells() -> Vec<(usize, usize)> {
    vec![
        (4, 4),
        (4, 6),
        (5, 10),
        (6, 15),
        (6, 20),
        (10, 45),
        (12, 66),
        (15, 105),
        (20, 190),
        (25, 300),
    ]
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Fsm(#[from] FsmError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed FSM file {path}: {message}")]
    Malformed { path: String, message: String },
}

/// Splitmix64 stream used to derive per-instance seeds from a suite seed.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// The `index`-th value of the splitmix stream seeded with `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut sm = SplitMix64::new(base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    sm.next_u64()
}

/// On-disk FSM: `{"n_nodes": N, "adjacency": {"0": [1, 2], ...}, "seed": s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmFile {
    pub n_nodes: usize,
    pub adjacency: BTreeMap<String, Vec<StateId>>,
    pub seed: u64,
}

impl FsmFile {
    pub fn from_fsm(fsm: &Fsm, seed: u64) -> Self {
        let adjacency = fsm
            .lists()
            .iter()
            .enumerate()
            .map(|(i, s)| (i.to_string(), s.clone()))
            .collect();
        Self {
            n_nodes: fsm.n_nodes(),
            adjacency,
            seed,
        }
    }

    pub fn to_fsm(&self) -> Result<Fsm, String> {
        let mut map = BTreeMap::new();
        for (k, v) in &self.adjacency {
            let id: StateId = k.parse().map_err(|_| format!("non-numeric state key {k:?}"))?;
            if id >= self.n_nodes {
                return Err(format!("state key {id} outside 0..{}", self.n_nodes));
            }
            map.insert(id, v.clone());
        }
        Ok(Fsm::from_map(self.n_nodes, &map))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchInstance {
    pub id: String,
    pub n_nodes: usize,
    pub n_edges: usize,
    /// Generator seed, derived from the suite seed.
    pub seed: u64,
    /// Seed used to draw the `(start, goal)` task.
    pub task_seed: u64,
    pub file: String,
    pub start: StateId,
    pub goal: StateId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub suite_seed: u64,
    pub instances_per_cell: usize,
    pub instances: Vec<BenchInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub manifest: SuiteManifest,
    pub machines: Vec<Fsm>,
}

impl Suite {
    pub fn generate(
        cells: &[(usize, usize)],
        per_cell: usize,
        suite_seed: u64,
    ) -> Result<Self, SuiteError> {
        let mut seeds = SplitMix64::new(suite_seed);
        let mut instances = Vec::new();
        let mut machines = Vec::new();
        for &(n, r) in cells {
            for k in 0..per_cell {
                let seed = seeds.next_u64();
                let task_seed = derive_seed(seed, 1);
                let fsm = generate_fsm(n, r, seed)?;
                let (start, goal) = fsm.sample_benchmark_task(task_seed)?;
                let id = format!("n{n}_e{r}_{k:02}");
                instances.push(BenchInstance {
                    file: format!("{id}.json"),
                    id,
                    n_nodes: n,
                    n_edges: r,
                    seed,
                    task_seed,
                    start,
                    goal,
                });
                machines.push(fsm);
            }
        }
        Ok(Self {
            manifest: SuiteManifest {
                suite_seed,
                instances_per_cell: per_cell,
                instances,
            },
            machines,
        })
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), SuiteError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (inst, fsm) in self.manifest.instances.iter().zip(&self.machines) {
            let path = dir.join(&inst.file);
            write_json(&path, &FsmFile::from_fsm(fsm, inst.seed))?;
        }
        write_json(&dir.join(MANIFEST_FILE), &self.manifest)
    }

    pub fn load_dir(dir: &Path) -> Result<Self, SuiteError> {
        let manifest: SuiteManifest = read_json(&dir.join(MANIFEST_FILE))?;
        let mut machines = Vec::with_capacity(manifest.instances.len());
        for inst in &manifest.instances {
            let path = dir.join(&inst.file);
            let file: FsmFile = read_json(&path)?;
            let fsm = file.to_fsm().map_err(|message| SuiteError::Malformed {
                path: path.display().to_string(),
                message,
            })?;
            if inst.start >= fsm.n_nodes() || inst.goal >= fsm.n_nodes() {
                return Err(SuiteError::Malformed {
                    path: path.display().to_string(),
                    message: format!("task ({}, {}) outside the machine", inst.start, inst.goal),
                });
            }
            machines.push(fsm);
        }
        Ok(Self { manifest, machines })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> SuiteError {
    SuiteError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SuiteError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| SuiteError::Json {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SuiteError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|source| SuiteError::Json {
        path: path.display().to_string(),
        source,
    })
}
