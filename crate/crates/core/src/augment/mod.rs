//! Memory augmentors: invocation, analysis, persistence and retrieval.
//!
//! An [`AugmentorStack`] holds the task-scoped [`MemoryStore`] and the
//! configured augmentors. Search code calls its hooks after every expansion
//! and every finished trajectory, and asks it for the bundle to inject into
//! the next policy prompt.

use serde::{Deserialize, Serialize};

use crate::error::{Error, ModelError};
use crate::models::{cosine, AugmentKind, Models};
use crate::search::SearchMethod;
use crate::types::{
    render_bundle, render_steps, Abstraction, ContextBundle, ContextUnit, Step, Telemetry, Trajectory,
};

pub const DEFAULT_REFLECTION_THRESHOLD: f64 = 0.3;
pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    None,
    RawSibling,
    Reflection,
    Fact,
}

impl MemoryKind {
    /// Whether the augmentor reads completed trajectories of the same task.
    pub fn cross_trajectory(self) -> bool {
        matches!(self, MemoryKind::Reflection | MemoryKind::Fact)
    }

    pub fn label(self) -> &'static str {
        match self {
            MemoryKind::None => "No Memory",
            MemoryKind::RawSibling => "Raw Sibling",
            MemoryKind::Reflection => "Reflection",
            MemoryKind::Fact => "Fact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    PerStep,
    PerTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactMode {
    /// One extraction call per executed step.
    Incremental,
    /// One extraction call over the whole finished trajectory.
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentorConfig {
    pub kind: MemoryKind,
    pub trigger: Option<Trigger>,
    pub reflection_threshold: f64,
    pub fact_mode: FactMode,
}

impl AugmentorConfig {
    /// Standard configuration of `kind` under `method`: facts are extracted
    /// per step in tree search and per trajectory in best-of-N.
    pub fn for_method(kind: MemoryKind, method: SearchMethod) -> Self {
        let tree = method != SearchMethod::BestOfN;
        let (trigger, fact_mode) = match kind {
            MemoryKind::None | MemoryKind::RawSibling => (None, FactMode::Incremental),
            MemoryKind::Reflection => (Some(Trigger::PerTrajectory), FactMode::Incremental),
            MemoryKind::Fact if tree => (Some(Trigger::PerStep), FactMode::Incremental),
            MemoryKind::Fact => (Some(Trigger::PerTrajectory), FactMode::Batch),
        };
        AugmentorConfig {
            kind,
            trigger,
            reflection_threshold: DEFAULT_REFLECTION_THRESHOLD,
            fact_mode,
        }
    }

    fn validate(&self) -> Result<(), Error> {
        let ok = match self.kind {
            MemoryKind::None | MemoryKind::RawSibling => self.trigger.is_none(),
            MemoryKind::Reflection => self.trigger == Some(Trigger::PerTrajectory),
            MemoryKind::Fact => matches!(
                (self.trigger, self.fact_mode),
                (Some(Trigger::PerStep), FactMode::Incremental) | (Some(Trigger::PerTrajectory), FactMode::Batch)
            ),
        };
        if !ok {
            return Err(Error::Config(format!(
                "{} augmentor cannot use trigger {:?} with fact mode {:?}",
                self.kind.label(),
                self.trigger,
                self.fact_mode
            )));
        }
        if !(0.0..=1.0).contains(&self.reflection_threshold) {
            return Err(Error::Config(format!(
                "reflection threshold {} outside [0, 1]",
                self.reflection_threshold
            )));
        }
        Ok(())
    }
}

/// Persistent memory of one task. Only grows; a fresh store is created per task.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    units: Vec<ContextUnit>,
    dedup_threshold: f64,
}

impl Default for MemoryStore {
    fn default() -> Self {
        MemoryStore {
            units: Vec::new(),
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
        }
    }
}

impl MemoryStore {
    pub fn new(dedup_threshold: f64) -> Result<Self, Error> {
        if !(dedup_threshold > 0.0 && dedup_threshold <= 1.0) {
            return Err(Error::Config(format!("dedup threshold {dedup_threshold} outside (0, 1]")));
        }
        Ok(MemoryStore {
            units: Vec::new(),
            dedup_threshold,
        })
    }

    pub fn dedup_threshold(&self) -> f64 {
        self.dedup_threshold
    }

    /// Persists a unit if the persistence predicate admits it. Ephemeral
    /// units and facts too close to a stored fact are dropped.
    pub fn offer(&mut self, unit: ContextUnit) -> bool {
        if !unit.persistent() {
            return false;
        }
        if unit.abstraction() == Abstraction::Fact {
            let Some(e) = unit.embedding() else { return false };
            let duplicate = self.facts().any(|f| {
                f.embedding()
                    .is_some_and(|g| cosine(e, g) >= self.dedup_threshold)
            });
            if duplicate {
                return false;
            }
        }
        self.units.push(unit);
        true
    }

    pub fn units(&self) -> &[ContextUnit] {
        &self.units
    }

    pub fn facts(&self) -> impl Iterator<Item = &ContextUnit> {
        self.units.iter().filter(|u| u.abstraction() == Abstraction::Fact)
    }

    pub fn reflections(&self) -> impl Iterator<Item = &ContextUnit> {
        self.units.iter().filter(|u| u.abstraction() == Abstraction::Reflection)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// One JSON object per unit: scope, abstraction, body, source_iteration.
    pub fn to_jsonl(&self) -> String {
        self.units
            .iter()
            .map(|u| {
                serde_json::json!({
                    "scope": u.scope(),
                    "abstraction": u.abstraction(),
                    "body": u.body(),
                    "source_iteration": u.source_iteration(),
                })
                .to_string()
                    + "\n"
            })
            .collect()
    }
}

/// Raw records of the siblings already completed in the current expansion.
/// No model is consulted.
pub fn sibling_context(prior_siblings: &[Step], source_iteration: usize) -> Vec<ContextUnit> {
    prior_siblings
        .iter()
        .map(|s| ContextUnit::sibling(s.render_line(), source_iteration))
        .collect()
}

/// Writes one reflection when the trajectory scored strictly below `threshold`.
pub fn maybe_reflect(
    trajectory: &Trajectory,
    task_prompt: &str,
    models: &Models<'_>,
    threshold: f64,
    telemetry: &mut Telemetry,
) -> Result<Option<ContextUnit>, ModelError> {
    if trajectory.trajectory_score >= threshold {
        return Ok(None);
    }
    let g = models
        .augmentor
        .analyze(AugmentKind::Reflect, &trajectory.render_text(task_prompt))?;
    telemetry.record_supervisor(g.usage);
    let text = g.value.trim();
    if text.is_empty() {
        return Err(ModelError::Malformed("empty reflection".into()));
    }
    Ok(Some(ContextUnit::reflection(text, trajectory.iteration_index)))
}

/// Extracts facts from `text`, embeds them and offers them to the store.
/// Returns the number newly stored.
pub fn extract_facts(
    text: &str,
    source_iteration: usize,
    models: &Models<'_>,
    store: &mut MemoryStore,
    telemetry: &mut Telemetry,
) -> Result<usize, ModelError> {
    let g = models.augmentor.analyze(AugmentKind::ExtractFacts, text)?;
    telemetry.record_supervisor(g.usage);
    let mut stored = 0;
    for line in g.value.lines() {
        let fact = line.trim().trim_start_matches("- ").trim();
        if fact.is_empty() {
            continue;
        }
        let embedding = models.embedder.embed(fact)?;
        if store.offer(ContextUnit::fact(fact, source_iteration, embedding)) {
            stored += 1;
        }
    }
    Ok(stored)
}

/// Every persistent unit plus the given ephemeral ones (inject-all).
pub fn retrieve(store: &MemoryStore, ephemeral: Vec<ContextUnit>) -> ContextBundle {
    let mut units = store.units().to_vec();
    units.extend(ephemeral);
    render_bundle(units)
}

/// Composite of independently triggered augmentors sharing one store.
#[derive(Debug, Clone)]
pub struct AugmentorStack {
    configs: Vec<AugmentorConfig>,
    store: MemoryStore,
}

/// Builds the composite augmentor. Duplicate kinds are a configuration error.
pub fn compose(configs: &[AugmentorConfig], dedup_threshold: f64) -> Result<AugmentorStack, Error> {
    for (i, c) in configs.iter().enumerate() {
        c.validate()?;
        if configs[..i].iter().any(|d| d.kind == c.kind) {
            return Err(Error::Config(format!("duplicate augmentor kind {}", c.kind.label())));
        }
    }
    Ok(AugmentorStack {
        configs: configs.iter().copied().filter(|c| c.kind != MemoryKind::None).collect(),
        store: MemoryStore::new(dedup_threshold)?,
    })
}

impl AugmentorStack {
    pub fn none() -> Self {
        AugmentorStack {
            configs: Vec::new(),
            store: MemoryStore::default(),
        }
    }

    pub fn configs(&self) -> &[AugmentorConfig] {
        &self.configs
    }

    pub fn store(&self) -> &MemoryStore {
        &self.store
    }

    pub fn has(&self, kind: MemoryKind) -> bool {
        self.configs.iter().any(|c| c.kind == kind)
    }

    /// Raw Sibling memory is realised by interleaved expansion.
    pub fn wants_interleaved(&self) -> bool {
        self.has(MemoryKind::RawSibling)
    }

    pub fn bundle(&self, ephemeral: Vec<ContextUnit>) -> ContextBundle {
        retrieve(&self.store, ephemeral)
    }

    /// Per-step hook, run after each expanded candidate has been scored.
    pub fn on_step(
        &mut self,
        step: &Step,
        task_prompt: &str,
        iteration: usize,
        trajectory_id: &str,
        models: &Models<'_>,
        telemetry: &mut Telemetry,
    ) -> Result<(), Error> {
        let per_step_facts = self
            .configs
            .iter()
            .any(|c| c.kind == MemoryKind::Fact && c.trigger == Some(Trigger::PerStep));
        if per_step_facts {
            let text = render_steps(task_prompt, std::slice::from_ref(step), None);
            extract_facts(&text, iteration, models, &mut self.store, telemetry).map_err(|source| {
                Error::Augmentor {
                    trajectory: trajectory_id.to_string(),
                    source,
                }
            })?;
        }
        Ok(())
    }

    /// Per-trajectory hook: batch fact extraction, then reflection.
    pub fn on_trajectory(
        &mut self,
        trajectory: &Trajectory,
        task_prompt: &str,
        trajectory_id: &str,
        models: &Models<'_>,
        telemetry: &mut Telemetry,
    ) -> Result<(), Error> {
        let wrap = |source| Error::Augmentor {
            trajectory: trajectory_id.to_string(),
            source,
        };
        for c in self.configs.clone() {
            match (c.kind, c.trigger) {
                (MemoryKind::Fact, Some(Trigger::PerTrajectory)) => {
                    let text = trajectory.render_text(task_prompt);
                    extract_facts(&text, trajectory.iteration_index, models, &mut self.store, telemetry)
                        .map_err(wrap)?;
                }
                (MemoryKind::Reflection, _) => {
                    if let Some(unit) =
                        maybe_reflect(trajectory, task_prompt, models, c.reflection_threshold, telemetry)
                            .map_err(wrap)?
                    {
                        self.store.offer(unit);
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
