use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentCell;
use crate::augment::{AugmentorConfig, MemoryKind, DEFAULT_DEDUP_THRESHOLD, DEFAULT_REFLECTION_THRESHOLD};
use crate::envs::TaskSet;
use crate::error::Error;
use crate::models::{
    AugmentorModel, ChatClient, HashEmbedder, Models, Policy, RemoteAugmentor, RemoteConfig, RemotePolicy,
    RemoteReward, RewardModel, Role, ScriptedAugmentor, ScriptedPolicy, ScriptedReward,
};
use crate::search::SearchConfig;

/// Where one model role comes from: a list of script files, or a remote endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoleSource {
    Scripted(Vec<PathBuf>),
    Remote(RemoteConfig),
}

impl RoleSource {
    fn rebase(&mut self, base: &Path) {
        if let RoleSource::Scripted(paths) = self {
            for p in paths.iter_mut() {
                *p = base.join(&*p);
            }
        }
    }

    fn apply(&mut self, overrides: &RemoteOverrides) {
        if let RoleSource::Remote(cfg) = self {
            if let Some(e) = &overrides.endpoint {
                cfg.endpoint = e.clone();
            }
            if let Some(m) = &overrides.model {
                cfg.model = m.clone();
            }
            if let Some(k) = &overrides.api_key_env {
                cfg.api_key_env = k.clone();
            }
        }
    }
}

/// Command-line overrides for every remote role.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RemoteOverrides {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
}

fn default_dim() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsConfig {
    pub policy: RoleSource,
    pub reward: RoleSource,
    pub augmentor: RoleSource,
    #[serde(default = "default_dim")]
    pub embed_dim: usize,
}

/// Fixture file of a benchmark, optionally with its own model scripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub tasks: PathBuf,
    #[serde(default)]
    pub policy: Option<RoleSource>,
    #[serde(default)]
    pub reward: Option<RoleSource>,
    #[serde(default)]
    pub augmentor: Option<RoleSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub id: String,
    pub memory: Vec<MemoryKind>,
    pub benchmark: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub reflection_threshold: Option<f64>,
    #[serde(default)]
    pub dedup_threshold: Option<f64>,
}

/// Declarative experiment: models, benchmarks and cells. Relative paths are
/// resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub models: ModelsConfig,
    pub benchmarks: BTreeMap<String, BenchmarkConfig>,
    pub cells: Vec<CellConfig>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::parse(path, m),
            other => other,
        })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, Error> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.models.policy.rebase(base);
        cfg.models.reward.rebase(base);
        cfg.models.augmentor.rebase(base);
        for b in cfg.benchmarks.values_mut() {
            b.tasks = base.join(&b.tasks);
            for r in [&mut b.policy, &mut b.reward, &mut b.augmentor].into_iter().flatten() {
                r.rebase(base);
            }
        }
        let mut ids = std::collections::HashSet::new();
        for c in &cfg.cells {
            if !ids.insert(c.id.as_str()) {
                return Err(Error::Config(format!("duplicate cell id {}", c.id)));
            }
            if !cfg.benchmarks.contains_key(&c.benchmark) {
                return Err(Error::Config(format!("cell {} names unknown benchmark {}", c.id, c.benchmark)));
            }
            if c.id.is_empty() || c.id.contains(['/', '\\']) {
                return Err(Error::Config(format!("cell id {:?} is not a valid file stem", c.id)));
            }
            c.search.validate()?;
        }
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, remote: &RemoteOverrides) {
        if let Some(s) = seed {
            self.seed = s;
            for c in &mut self.cells {
                c.seed = None;
            }
        }
        for r in [&mut self.models.policy, &mut self.models.reward, &mut self.models.augmentor] {
            r.apply(remote);
        }
        for b in self.benchmarks.values_mut() {
            for r in [&mut b.policy, &mut b.reward, &mut b.augmentor].into_iter().flatten() {
                r.apply(remote);
            }
        }
    }

    pub fn load_benchmarks(&self) -> Result<BTreeMap<String, TaskSet>, Error> {
        self.benchmarks
            .iter()
            .map(|(name, b)| TaskSet::load(&b.tasks).map(|t| (name.clone(), t)))
            .collect()
    }

    /// Resolves every cell against the loaded benchmarks. Cell seeds default
    /// to a derivation of the experiment seed and the cell id.
    pub fn cells(&self, benchmarks: &BTreeMap<String, TaskSet>) -> Result<Vec<ExperimentCell>, Error> {
        self.cells
            .iter()
            .map(|c| {
                let set = benchmarks
                    .get(&c.benchmark)
                    .ok_or_else(|| Error::Config(format!("benchmark {} not loaded", c.benchmark)))?;
                let env = set.tasks.first().map_or("empty", |t| t.world.kind()).to_string();
                let memory = c
                    .memory
                    .iter()
                    .map(|&k| {
                        let mut a = AugmentorConfig::for_method(k, c.search.method);
                        a.reflection_threshold = c.reflection_threshold.unwrap_or(DEFAULT_REFLECTION_THRESHOLD);
                        a
                    })
                    .collect();
                Ok(ExperimentCell {
                    id: c.id.clone(),
                    memory,
                    search: c.search.clone(),
                    env,
                    serializable: set.serializable(),
                    benchmark: c.benchmark.clone(),
                    seed: c
                        .seed
                        .unwrap_or_else(|| crate::types::derive_seed(self.seed, crate::types::fingerprint(&c.id))),
                    dedup_threshold: c.dedup_threshold.unwrap_or(DEFAULT_DEDUP_THRESHOLD),
                })
            })
            .collect()
    }

    /// Instantiates the models used for `benchmark`.
    pub fn model_set(&self, benchmark: &str) -> Result<ModelSet, Error> {
        let b = self.benchmarks.get(benchmark);
        let pick = |own: Option<&RoleSource>, global: &RoleSource| own.unwrap_or(global).clone();
        let policy = pick(b.and_then(|b| b.policy.as_ref()), &self.models.policy);
        let reward = pick(b.and_then(|b| b.reward.as_ref()), &self.models.reward);
        let augmentor = pick(b.and_then(|b| b.augmentor.as_ref()), &self.models.augmentor);
        Ok(ModelSet {
            policy: match policy {
                RoleSource::Scripted(p) => Box::new(ScriptedPolicy::from_files(&p)?),
                RoleSource::Remote(c) => Box::new(RemotePolicy::new(ChatClient::new(c, Role::Policy))),
            },
            reward: match reward {
                RoleSource::Scripted(p) => Box::new(ScriptedReward::from_files(&p)?),
                RoleSource::Remote(c) => Box::new(RemoteReward::new(ChatClient::new(c, Role::Supervisor))),
            },
            augmentor: match augmentor {
                RoleSource::Scripted(p) => Box::new(ScriptedAugmentor::from_files(&p)?),
                RoleSource::Remote(c) => Box::new(RemoteAugmentor::new(ChatClient::new(c, Role::Supervisor))),
            },
            embedder: HashEmbedder {
                dim: self.models.embed_dim,
            },
        })
    }
}

/// Owned models for one benchmark.
pub struct ModelSet {
    pub policy: Box<dyn Policy>,
    pub reward: Box<dyn RewardModel>,
    pub augmentor: Box<dyn AugmentorModel>,
    pub embedder: HashEmbedder,
}

impl ModelSet {
    pub fn models(&self) -> Models<'_> {
        Models {
            policy: self.policy.as_ref(),
            reward: self.reward.as_ref(),
            augmentor: self.augmentor.as_ref(),
            embedder: &self.embedder,
        }
    }
}
