use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentCell, ExperimentConfig, ModelSet, Rejection};
use crate::augment::{compose, MemoryKind};
use crate::envs::{Task, TaskSet};
use crate::error::Error;
use crate::search::{run_search, SearchMethod};
use crate::types::{derive_seed, fingerprint, Telemetry};

/// Per-task outcome of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub task_id: String,
    pub cell_id: String,
    /// One verdict per trajectory; beam records only the selected one.
    pub verdicts: Vec<bool>,
    pub selected_verdict: bool,
    pub trajectory_lengths: Vec<usize>,
    /// Per trajectory, whether it skipped the discovery call. Absent when the
    /// environment has no discovery tool.
    pub discovery_skipped: Option<Vec<bool>>,
    pub final_answer: Option<String>,
    pub telemetry: Telemetry,
}

impl VerdictRecord {
    pub fn pass_at_n(&self) -> bool {
        self.verdicts.iter().any(|v| *v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub id: String,
    pub benchmark: String,
    pub env: String,
    pub serializable: bool,
    pub method: SearchMethod,
    pub memory: Vec<MemoryKind>,
    pub seed: u64,
    pub status: CellStatus,
    pub error: Option<String>,
    pub tasks: usize,
    pub verdict_file: Option<String>,
    pub telemetry: Telemetry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub cells: Vec<ManifestCell>,
}

impl Manifest {
    pub fn failed(&self) -> impl Iterator<Item = &ManifestCell> {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn verdict_file_name(cell_id: &str) -> String {
    format!("{cell_id}.verdicts.jsonl")
}

fn run_task(cell: &ExperimentCell, task: &Task, set: &TaskSet, models: &ModelSet) -> Result<VerdictRecord, Error> {
    let mut env = task.environment();
    let mut stack = compose(&cell.memory, cell.dedup_threshold)?;
    let seed = derive_seed(cell.seed, fingerprint(&task.id));
    let record = run_search(task, env.as_mut(), models.models(), &mut stack, &cell.search, seed)?;
    let graded: Vec<&crate::types::Trajectory> = match cell.search.method {
        SearchMethod::Beam => record.selected.map(|i| &record.trajectories[i]).into_iter().collect(),
        _ => record.trajectories.iter().collect(),
    };
    let verdicts = graded
        .iter()
        .map(|t| set.key.grade(&task.id, t.answer()))
        .collect::<Result<Vec<_>, _>>()?;
    let discovery = task.world.discovery_tool();
    Ok(VerdictRecord {
        task_id: task.id.clone(),
        cell_id: cell.id.clone(),
        selected_verdict: set.key.grade(&task.id, record.final_answer.as_deref())?,
        verdicts,
        trajectory_lengths: graded.iter().map(|t| t.steps.len()).collect(),
        discovery_skipped: discovery.map(|tool| graded.iter().map(|t| !t.uses_tool(tool)).collect()),
        final_answer: record.final_answer,
        telemetry: record.telemetry,
    })
}

/// Runs every task of one cell on `jobs` threads, in task order.
pub fn run_cell(cell: &ExperimentCell, set: &TaskSet, models: &ModelSet, jobs: usize) -> Result<Vec<VerdictRecord>, Error> {
    if let Err(reason) = cell.check() {
        return Err(Error::Inadmissible {
            cell: cell.id.clone(),
            reason,
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<VerdictRecord, Error>> =
        pool.install(|| set.tasks.par_iter().map(|t| run_task(cell, t, set, models)).collect());
    results.into_iter().collect()
}

/// Runs every cell of `config`, writing `<cell>.verdicts.jsonl` files and
/// `manifest.json` into `out`. All cells are checked before any model call;
/// a failing cell is recorded in the manifest and the others still run.
pub fn run_matrix(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Manifest, Error> {
    let benchmarks = config.load_benchmarks()?;
    let cells = config.cells(&benchmarks)?;
    let rejected: Vec<(String, Rejection)> =
        cells.iter().filter_map(|c| c.check().err().map(|r| (c.id.clone(), r))).collect();
    if let Some((cell, reason)) = rejected.into_iter().next() {
        return Err(Error::Inadmissible { cell, reason });
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut model_sets: BTreeMap<&str, ModelSet> = BTreeMap::new();
    for c in &cells {
        if !model_sets.contains_key(c.benchmark.as_str()) {
            model_sets.insert(&c.benchmark, config.model_set(&c.benchmark)?);
        }
    }

    let mut manifest = Manifest {
        seed: config.seed,
        cells: Vec::new(),
    };
    for cell in &cells {
        let set = &benchmarks[&cell.benchmark];
        let path: PathBuf = out.join(verdict_file_name(&cell.id));
        let mut entry = ManifestCell {
            id: cell.id.clone(),
            benchmark: cell.benchmark.clone(),
            env: cell.env.clone(),
            serializable: cell.serializable,
            method: cell.search.method,
            memory: cell.memory_kinds(),
            seed: cell.seed,
            status: CellStatus::Ok,
            error: None,
            tasks: set.tasks.len(),
            verdict_file: None,
            telemetry: Telemetry::default(),
        };
        match run_cell(cell, set, &model_sets[cell.benchmark.as_str()], jobs) {
            Ok(records) => {
                let mut body = String::new();
                for r in &records {
                    entry.telemetry.merge(&r.telemetry);
                    body.push_str(&serde_json::to_string(r).expect("verdict serialises"));
                    body.push('\n');
                }
                write_atomic(&path, body.as_bytes())?;
                entry.verdict_file = Some(verdict_file_name(&cell.id));
            }
            Err(e) => {
                if path.exists() {
                    std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                }
                entry.status = CellStatus::Failed;
                entry.error = Some(e.to_string());
            }
        }
        manifest.cells.push(entry);
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    write_atomic(&out.join("manifest.json"), json.as_bytes())?;
    Ok(manifest)
}

/// Reads a verdict file written by [`run_matrix`].
pub fn read_verdicts(path: &Path) -> Result<Vec<VerdictRecord>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1))))
        .collect()
}
