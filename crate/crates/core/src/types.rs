//! Domain types shared by the augmentors, search methods, environments and
//! the experiment runner.
//!
//! Everything here is an immutable value type. Constructors enforce the
//! invariants (unit-interval rewards, ephemeral sibling context, embedded
//! facts), so downstream code can rely on them without re-checking.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::search::GiveUpStats;

/// Hard cap on trajectory length, shared by every search method.
pub const MAX_STEPS: usize = 15;

/// Tool name of the terminal answer action.
pub const FINAL_ANSWER: &str = "FINAL_ANSWER";

/// Stable 64-bit FNV-1a hash. Used for context fingerprints, snapshot tokens
/// and embedding features; must not change between releases.
pub fn fingerprint(text: &str) -> u64 {
    fingerprint_bytes(text.as_bytes())
}

pub(crate) fn fingerprint_bytes(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Derives an independent sub-seed from a parent seed and a salt
/// (splitmix64 finalizer over the combination).
pub fn derive_seed(parent: u64, salt: u64) -> u64 {
    let mut z = parent ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Validates a score coming from a scripted fixture: anything outside [0, 1]
/// (or NaN) is a broken fixture and is reported, never clamped.
pub fn checked_unit(value: f64) -> Result<f64, ModelError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ModelError::RewardOutOfRange(value))
    }
}

/// Clamps a score parsed from a live model into [0, 1].
pub fn clamp_unit(value: f64) -> f64 {
    if value.is_nan() {
        0.0
    } else {
        value.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateHandle {
    pub env_id: String,
    /// `None` exactly when the owning environment is non-serializable.
    pub snapshot_token: Option<u64>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub tool_name: String,
    pub arguments: String,
    /// Full model emission the action was parsed from.
    pub raw_text: String,
}

impl Action {
    pub fn tool(name: impl Into<String>, arguments: impl Into<String>) -> Self {
        let tool_name = name.into();
        let arguments = arguments.into();
        let raw_text = format!("{tool_name}({arguments})");
        Action {
            tool_name,
            arguments,
            raw_text,
        }
    }

    pub fn final_answer(answer: impl Into<String>) -> Self {
        Action::tool(FINAL_ANSWER, answer)
    }

    pub fn is_final(&self) -> bool {
        self.tool_name == FINAL_ANSWER
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.tool_name, self.arguments)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub content: String,
    pub is_error: bool,
    pub tool_name: String,
}

impl Observation {
    pub fn ok(tool_name: &str, content: impl Into<String>) -> Self {
        Observation {
            content: content.into(),
            is_error: false,
            tool_name: tool_name.to_string(),
        }
    }

    pub fn error(tool_name: &str, content: impl Into<String>) -> Self {
        Observation {
            content: content.into(),
            is_error: true,
            tool_name: tool_name.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: Action,
    pub observation: Observation,
    pub reward: Option<f64>,
}

impl Step {
    pub fn new(action: Action, observation: Observation) -> Self {
        Step {
            action,
            observation,
            reward: None,
        }
    }

    /// Attaches a reward, clamped into [0, 1].
    pub fn with_reward(mut self, reward: f64) -> Self {
        self.reward = Some(clamp_unit(reward));
        self
    }

    /// One-line `TOOL(args) -> observation` rendering shared by sibling
    /// records and trajectory text.
    pub fn render_line(&self) -> String {
        if self.action.is_final() {
            format!("{}", self.action)
        } else if self.observation.is_error {
            format!("{} -> ERROR: {}", self.action, self.observation.content)
        } else {
            format!("{} -> {}", self.action, self.observation.content)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminalKind {
    Answered,
    Apology,
    MaxDepth,
}

/// Decides whether a final answer is a give-up ("I cannot find ...").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApologyClassifier {
    /// Lower-case substrings; a final answer containing any of them is an apology.
    pub patterns: Vec<String>,
}

impl Default for ApologyClassifier {
    fn default() -> Self {
        ApologyClassifier {
            patterns: [
                "i cannot find",
                "i can't find",
                "i could not find",
                "i apologize",
                "i'm sorry",
                "unable to find",
                "unable to determine",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        }
    }
}

impl ApologyClassifier {
    pub fn is_apology(&self, action: &Action) -> bool {
        if !action.is_final() {
            return false;
        }
        let text = action.arguments.to_lowercase();
        self.patterns.iter().any(|p| text.contains(p.as_str()))
    }
}

/// What the policy saw when it produced one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContextSummary {
    pub fingerprint: u64,
    pub facts: usize,
    pub reflections: usize,
    pub siblings: usize,
}

impl ContextSummary {
    pub fn of(bundle: &ContextBundle) -> Self {
        let count = |a: Abstraction| bundle.units.iter().filter(|u| u.abstraction() == a).count();
        ContextSummary {
            fingerprint: bundle.fingerprint(),
            facts: count(Abstraction::Fact),
            reflections: count(Abstraction::Reflection),
            siblings: count(Abstraction::Raw),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.facts == 0 && self.reflections == 0 && self.siblings == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub terminal_kind: TerminalKind,
    pub trajectory_score: f64,
    pub iteration_index: usize,
    /// Context summary per step, parallel to `steps`.
    pub contexts: Vec<ContextSummary>,
}

/// Aggregate score of a trajectory: the mean of per-step rewards when every
/// step was scored, otherwise the reward of the final step.
pub fn trajectory_score(steps: &[Step]) -> Option<f64> {
    if !steps.is_empty() && steps.iter().all(|s| s.reward.is_some()) {
        let sum: f64 = steps.iter().filter_map(|s| s.reward).sum();
        Some(sum / steps.len() as f64)
    } else {
        steps.last().and_then(|s| s.reward)
    }
}

impl Trajectory {
    pub fn build(
        steps: Vec<Step>,
        contexts: Vec<ContextSummary>,
        iteration_index: usize,
        classifier: &ApologyClassifier,
    ) -> Result<Self, crate::Error> {
        if steps.is_empty() || steps.len() > MAX_STEPS {
            return Err(crate::Error::Config(format!(
                "trajectory length {} outside [1, {MAX_STEPS}]",
                steps.len()
            )));
        }
        if contexts.len() != steps.len() {
            return Err(crate::Error::Config(
                "context summaries must parallel steps".into(),
            ));
        }
        let score = trajectory_score(&steps).ok_or_else(|| {
            crate::Error::Config("trajectory has no reward on its final step".into())
        })?;
        let last = &steps[steps.len() - 1].action;
        let terminal_kind = if classifier.is_apology(last) {
            TerminalKind::Apology
        } else if last.is_final() {
            TerminalKind::Answered
        } else {
            TerminalKind::MaxDepth
        };
        Ok(Trajectory {
            steps,
            terminal_kind,
            trajectory_score: score,
            iteration_index,
            contexts,
        })
    }

    /// The final answer text, if the trajectory ended with one.
    pub fn answer(&self) -> Option<&str> {
        self.steps
            .last()
            .filter(|s| s.action.is_final())
            .map(|s| s.action.arguments.as_str())
    }

    pub fn uses_tool(&self, tool: &str) -> bool {
        self.steps.iter().any(|s| s.action.tool_name == tool)
    }

    /// Plain-text rendering handed to augmentor models.
    pub fn render_text(&self, task_prompt: &str) -> String {
        render_steps(task_prompt, &self.steps, Some(self.trajectory_score))
    }
}

pub(crate) fn render_steps(task_prompt: &str, steps: &[Step], score: Option<f64>) -> String {
    let mut out = format!("TASK: {task_prompt}\n");
    for (i, step) in steps.iter().enumerate() {
        out.push_str(&format!("[{i}] {}\n", step.render_line()));
    }
    if let Some(score) = score {
        out.push_str(&format!("SCORE: {score:.3}\n"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scope {
    CrossSibling,
    CrossTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Abstraction {
    Raw,
    Reflection,
    Fact,
}

/// One produced memory item.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextUnit {
    scope: Scope,
    abstraction: Abstraction,
    body: String,
    source_iteration: usize,
    persistent: bool,
    #[serde(skip)]
    embedding: Option<Vec<f64>>,
}

impl ContextUnit {
    /// Raw action/observation record of a prior sibling. Always ephemeral.
    pub fn sibling(body: impl Into<String>, source_iteration: usize) -> Self {
        ContextUnit {
            scope: Scope::CrossSibling,
            abstraction: Abstraction::Raw,
            body: body.into(),
            source_iteration,
            persistent: false,
            embedding: None,
        }
    }

    pub fn reflection(body: impl Into<String>, source_iteration: usize) -> Self {
        ContextUnit {
            scope: Scope::CrossTrajectory,
            abstraction: Abstraction::Reflection,
            body: body.into(),
            source_iteration,
            persistent: true,
            embedding: None,
        }
    }

    pub fn fact(body: impl Into<String>, source_iteration: usize, embedding: Vec<f64>) -> Self {
        ContextUnit {
            scope: Scope::CrossTrajectory,
            abstraction: Abstraction::Fact,
            body: body.into(),
            source_iteration,
            persistent: true,
            embedding: Some(embedding),
        }
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn abstraction(&self) -> Abstraction {
        self.abstraction
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn source_iteration(&self) -> usize {
        self.source_iteration
    }

    pub fn persistent(&self) -> bool {
        self.persistent
    }

    pub fn embedding(&self) -> Option<&[f64]> {
        self.embedding.as_deref()
    }
}

/// Context injected into the policy prompt.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContextBundle {
    pub units: Vec<ContextUnit>,
    pub rendered: String,
}

impl ContextBundle {
    pub fn empty() -> Self {
        ContextBundle::default()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.rendered)
    }
}

const SECTIONS: [(Abstraction, &str); 3] = [
    (Abstraction::Fact, "FACTS:"),
    (Abstraction::Reflection, "REFLECTIONS:"),
    (Abstraction::Raw, "SIBLINGS:"),
];

/// Orders units (persistent by source iteration then insertion order, then
/// ephemeral units in insertion order) and renders them as labelled sections.
pub fn render_bundle(units: Vec<ContextUnit>) -> ContextBundle {
    let mut indexed: Vec<(usize, ContextUnit)> = units.into_iter().enumerate().collect();
    indexed.sort_by_key(|(i, u)| (!u.persistent, if u.persistent { u.source_iteration } else { 0 }, *i));
    let units: Vec<ContextUnit> = indexed.into_iter().map(|(_, u)| u).collect();

    let mut rendered = String::new();
    for (abstraction, label) in SECTIONS {
        let mut section = units.iter().filter(|u| u.abstraction == abstraction).peekable();
        if section.peek().is_none() {
            continue;
        }
        rendered.push_str(label);
        rendered.push('\n');
        for unit in section {
            rendered.push_str("- ");
            rendered.push_str(&unit.body.replace('\n', " "));
            rendered.push('\n');
        }
    }
    ContextBundle { units, rendered }
}

/// Token usage reported by one model call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub tokens_in: u64,
    pub tokens_out: u64,
}

impl Usage {
    /// Whitespace word count, used by scripted models so cost reports are
    /// populated without a tokenizer.
    pub fn estimate(prompt: &str, output: &str) -> Self {
        Usage {
            tokens_in: prompt.split_whitespace().count() as u64,
            tokens_out: output.split_whitespace().count() as u64,
        }
    }
}

/// Call and token counters. All counters only ever increase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Telemetry {
    pub policy_calls: u64,
    pub policy_tokens_in: u64,
    pub policy_tokens_out: u64,
    pub supervisor_calls: u64,
    pub supervisor_tokens_in: u64,
    pub supervisor_tokens_out: u64,
}

impl Telemetry {
    pub fn record_policy(&mut self, usage: Usage) {
        self.policy_calls += 1;
        self.policy_tokens_in += usage.tokens_in;
        self.policy_tokens_out += usage.tokens_out;
    }

    pub fn record_supervisor(&mut self, usage: Usage) {
        self.supervisor_calls += 1;
        self.supervisor_tokens_in += usage.tokens_in;
        self.supervisor_tokens_out += usage.tokens_out;
    }

    pub fn merge(&mut self, other: &Telemetry) {
        self.policy_calls += other.policy_calls;
        self.policy_tokens_in += other.policy_tokens_in;
        self.policy_tokens_out += other.policy_tokens_out;
        self.supervisor_calls += other.supervisor_calls;
        self.supervisor_tokens_in += other.supervisor_tokens_in;
        self.supervisor_tokens_out += other.supervisor_tokens_out;
    }

    pub fn policy_cost(&self, pricing: &PricingTable) -> f64 {
        pricing.policy.cost(self.policy_tokens_in, self.policy_tokens_out)
    }

    pub fn cost_estimate(&self, pricing: &PricingTable) -> f64 {
        self.policy_cost(pricing)
            + pricing
                .supervisor
                .cost(self.supervisor_tokens_in, self.supervisor_tokens_out)
    }
}

/// Price per one million input/output tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub input_per_m: f64,
    pub output_per_m: f64,
}

impl Price {
    pub fn cost(&self, tokens_in: u64, tokens_out: u64) -> f64 {
        (tokens_in as f64 * self.input_per_m + tokens_out as f64 * self.output_per_m) / 1e6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingTable {
    pub policy: Price,
    pub supervisor: Price,
}

impl Default for PricingTable {
    fn default() -> Self {
        PricingTable {
            policy: Price {
                input_per_m: 0.80,
                output_per_m: 4.00,
            },
            supervisor: Price {
                input_per_m: 3.00,
                output_per_m: 15.00,
            },
        }
    }
}

/// Outcome of one search over one task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchRecord {
    pub trajectories: Vec<Trajectory>,
    pub telemetry: Telemetry,
    pub final_answer: Option<String>,
    /// Index into `trajectories` of the trajectory whose answer was selected.
    pub selected: Option<usize>,
    pub give_up: Option<GiveUpStats>,
}

impl SearchRecord {
    /// Line-delimited JSON, one line per trajectory followed by a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.trajectories {
            let line = serde_json::json!({
                "iteration": t.iteration_index,
                "terminal_kind": t.terminal_kind,
                "score": t.trajectory_score,
                "steps": t.steps,
                "bundle_fingerprints": t.contexts.iter().map(|c| c.fingerprint).collect::<Vec<_>>(),
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        let summary = serde_json::json!({
            "final_answer": self.final_answer,
            "selected": self.selected,
            "telemetry": self.telemetry,
            "give_up": self.give_up,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// Picks the best trajectory that produced an answer: highest score, ties to
/// the earliest.
pub(crate) fn select_best(trajectories: &[Trajectory]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, t) in trajectories.iter().enumerate() {
        if t.answer().is_none() {
            continue;
        }
        match best {
            Some(b) if trajectories[b].trajectory_score >= t.trajectory_score => {}
            _ => best = Some(i),
        }
    }
    best
}
