//! Toy tool-use environments, task fixtures and the offline grader.
//!
//! Search code receives a [`Task`] and an [`Environment`]; gold answers live
//! in a separate [`AnswerKey`] that only the experiment runner holds.

mod kg;
mod shell;
mod sql;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use kg::ToyKgWorld;
pub use shell::ScriptedShellWorld;
pub use sql::{Cell, Table, ToySqlWorld};

use crate::error::{EnvError, Error};
use crate::types::{fingerprint, Action, Observation, StateHandle};

/// Transition function of a tool-use task.
pub trait Environment: Send {
    fn id(&self) -> &str;
    /// Whether states can be snapshotted and forked.
    fn serializable(&self) -> bool;
    /// Returns the handle of the initial state, discarding all prior state.
    fn reset(&mut self) -> StateHandle;
    fn step(&mut self, state: &StateHandle, action: &Action) -> Result<(StateHandle, Observation), EnvError>;
    /// Independent copy of `state`. Always fails on non-serializable worlds.
    fn fork(&mut self, state: &StateHandle) -> Result<StateHandle, EnvError>;
}

/// Snapshot bookkeeping for read-only worlds, where a state is fully
/// described by the actions that led to it.
#[derive(Debug, Default, Clone)]
struct Snapshots {
    issued: HashSet<u64>,
}

impl Snapshots {
    fn root(&mut self, env_id: &str) -> StateHandle {
        let token = fingerprint(env_id);
        self.issued.insert(token);
        StateHandle {
            env_id: env_id.to_string(),
            snapshot_token: Some(token),
            depth: 0,
        }
    }

    fn check(&self, state: &StateHandle) -> Result<u64, EnvError> {
        let token = state.snapshot_token.ok_or(EnvError::UnknownSnapshot(0))?;
        if self.issued.contains(&token) {
            Ok(token)
        } else {
            Err(EnvError::UnknownSnapshot(token))
        }
    }

    fn advance(&mut self, state: &StateHandle, action: &Action) -> Result<StateHandle, EnvError> {
        let parent = self.check(state)?;
        let token = fingerprint(&format!("{parent:016x}\u{1f}{}", action.raw_text));
        self.issued.insert(token);
        Ok(StateHandle {
            env_id: state.env_id.clone(),
            snapshot_token: Some(token),
            depth: state.depth + 1,
        })
    }
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .unwrap_or(s)
}

/// World content of a task fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorldSpec {
    Sql { tables: BTreeMap<String, Table> },
    Kg { triples: Vec<[String; 3]> },
    Shell { files: BTreeMap<String, String> },
}

impl WorldSpec {
    pub fn serializable(&self) -> bool {
        !matches!(self, WorldSpec::Shell { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            WorldSpec::Sql { .. } => "sql",
            WorldSpec::Kg { .. } => "kg",
            WorldSpec::Shell { .. } => "shell",
        }
    }

    /// Tool whose call counts as schema discovery, if the world has one.
    pub fn discovery_tool(&self) -> Option<&'static str> {
        match self {
            WorldSpec::Sql { .. } => Some("LIST_TABLES"),
            _ => None,
        }
    }

    pub fn build(&self, env_id: &str) -> Box<dyn Environment> {
        match self {
            WorldSpec::Sql { tables } => Box::new(ToySqlWorld::new(env_id, tables.clone())),
            WorldSpec::Kg { triples } => Box::new(ToyKgWorld::new(env_id, triples)),
            WorldSpec::Shell { files } => Box::new(ScriptedShellWorld::new(env_id, files.clone())),
        }
    }
}

/// A task as seen by search code: no gold answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub prompt: String,
    pub tools: Vec<String>,
    pub world: Arc<WorldSpec>,
}

impl Task {
    /// Question followed by the tool schema.
    pub fn prompt_text(&self) -> String {
        if self.tools.is_empty() {
            self.prompt.clone()
        } else {
            format!("{}\nTOOLS: {}", self.prompt, self.tools.join("; "))
        }
    }

    pub fn environment(&self) -> Box<dyn Environment> {
        self.world.build(&self.id)
    }
}

/// Gold answer: a single value, or an unordered entity set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    One(String),
    Set(Vec<String>),
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn normalize_set<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<String> = items.map(normalize).filter(|s| !s.is_empty()).collect();
    v.sort();
    v.dedup();
    v
}

/// Offline verifier. Held by the runner, never passed into a search.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnswerKey {
    gold: BTreeMap<String, Gold>,
}

impl AnswerKey {
    pub fn insert(&mut self, task_id: impl Into<String>, gold: Gold) {
        self.gold.insert(task_id.into(), gold);
    }

    /// Exact match after whitespace and case normalisation. Entity-set golds
    /// accept any order, separated by commas.
    pub fn grade(&self, task_id: &str, answer: Option<&str>) -> Result<bool, Error> {
        let gold = self
            .gold
            .get(task_id)
            .ok_or_else(|| Error::UnknownTask(task_id.to_string()))?;
        let Some(answer) = answer else { return Ok(false) };
        Ok(match gold {
            Gold::One(g) => normalize(g) == normalize(answer),
            Gold::Set(g) => normalize_set(g.iter().map(String::as_str)) == normalize_set(answer.split(',')),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaskEntry {
    id: String,
    prompt: String,
    world: String,
    gold: Gold,
}

/// On-disk fixture: shared tool schema and worlds, then tasks.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaskFile {
    benchmark: String,
    #[serde(default)]
    tools: Vec<String>,
    worlds: BTreeMap<String, WorldSpec>,
    tasks: Vec<TaskEntry>,
}

/// Tasks of one benchmark together with their answer key.
#[derive(Debug, Clone)]
pub struct TaskSet {
    pub benchmark: String,
    pub tasks: Vec<Task>,
    pub key: AnswerKey,
}

impl TaskSet {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TaskSet::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::parse(path, m),
            other => other,
        })
    }

    pub fn parse(json: &str) -> Result<Self, Error> {
        let file: TaskFile = serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
        let worlds: BTreeMap<String, Arc<WorldSpec>> =
            file.worlds.into_iter().map(|(k, v)| (k, Arc::new(v))).collect();
        let mut tasks = Vec::new();
        let mut key = AnswerKey::default();
        let mut seen = HashSet::new();
        for entry in file.tasks {
            if !seen.insert(entry.id.clone()) {
                return Err(Error::Config(format!("duplicate task id {}", entry.id)));
            }
            let world = worlds
                .get(&entry.world)
                .ok_or_else(|| Error::Config(format!("task {} names unknown world {}", entry.id, entry.world)))?;
            key.insert(entry.id.clone(), entry.gold);
            tasks.push(Task {
                id: entry.id,
                prompt: entry.prompt,
                tools: file.tools.clone(),
                world: world.clone(),
            });
        }
        Ok(TaskSet {
            benchmark: file.benchmark,
            tasks,
            key,
        })
    }

    pub fn serializable(&self) -> bool {
        self.tasks.iter().all(|t| t.world.serializable())
    }
}
