//! Deterministic stand-ins for the three model roles, driven by rule tables
//! loaded from JSON fixtures.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ModelError};
use crate::models::{
    policy_prompt, reward_prompt, AugmentKind, AugmentorModel, Generation, Policy, PolicyRequest,
    RewardModel, RewardRequest,
};
use crate::types::{checked_unit, derive_seed, fingerprint, render_steps, Action, ApologyClassifier, Usage};

/// Rules under this key apply to every task, after the task's own rules.
pub const ANY_TASK: &str = "*";

const COLLAPSE_SALT: u64 = 0xc011_a95e;

/// Condition on the rendered context bundle.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMatch {
    #[default]
    Any,
    Empty,
    Contains(String),
    Lacks(String),
    Fingerprint(u64),
}

impl ContextMatch {
    fn matches(&self, rendered: &str) -> bool {
        match self {
            ContextMatch::Any => true,
            ContextMatch::Empty => rendered.is_empty(),
            ContextMatch::Contains(s) => rendered.contains(s.as_str()),
            ContextMatch::Lacks(s) => !rendered.contains(s.as_str()),
            ContextMatch::Fingerprint(f) => fingerprint(rendered) == *f,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedAction {
    pub tool: String,
    #[serde(default)]
    pub args: String,
    #[serde(default = "one")]
    pub weight: f64,
}

/// One row of a policy script. The first matching rule wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Step index within the trajectory; `None` matches any step.
    #[serde(default)]
    pub step: Option<usize>,
    #[serde(default)]
    pub context: ContextMatch,
    /// Tool of the previous step.
    #[serde(default)]
    pub after_tool: Option<String>,
    /// Exact arguments of the previous step.
    #[serde(default)]
    pub after_args: Option<String>,
    /// Whether the previous observation was an error.
    #[serde(default)]
    pub after_error: Option<bool>,
    /// Exempts this rule from the forced apology collapse.
    #[serde(default)]
    pub resist_collapse: bool,
    pub candidates: Vec<WeightedAction>,
}

impl ScriptRule {
    fn matches(&self, request: &PolicyRequest<'_>) -> bool {
        let last = request.prefix.last();
        self.step.is_none_or(|s| s == request.prefix.len())
            && self.context.matches(&request.bundle.rendered)
            && self
                .after_tool
                .as_ref()
                .is_none_or(|t| last.is_some_and(|s| &s.action.tool_name == t))
            && self
                .after_args
                .as_ref()
                .is_none_or(|a| last.is_some_and(|s| &s.action.arguments == a))
            && self
                .after_error
                .is_none_or(|e| last.is_some_and(|s| s.observation.is_error) == e)
    }
}

fn default_apology() -> String {
    "I cannot find the answer.".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPolicyConfig {
    /// Probability that, at temperature > 0 right after an error observation,
    /// the policy gives up. The draw depends only on the prompt, so every
    /// candidate sampled from the same prompt collapses together.
    #[serde(default)]
    pub apology_collapse_prob: f64,
    #[serde(default = "default_apology")]
    pub default_apology: String,
    pub tasks: BTreeMap<String, Vec<ScriptRule>>,
}

impl Default for ScriptedPolicyConfig {
    fn default() -> Self {
        ScriptedPolicyConfig {
            apology_collapse_prob: 0.0,
            default_apology: default_apology(),
            tasks: BTreeMap::new(),
        }
    }
}

impl ScriptedPolicyConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.apology_collapse_prob) {
            return Err(ModelError::Script(format!(
                "apology_collapse_prob {} outside [0, 1]",
                self.apology_collapse_prob
            )));
        }
        for (task, rules) in &self.tasks {
            for (i, rule) in rules.iter().enumerate() {
                if rule.candidates.is_empty() {
                    return Err(ModelError::Script(format!("task {task} rule {i} has no candidates")));
                }
                if rule.candidates.iter().any(|c| !(c.weight >= 0.0 && c.weight.is_finite())) {
                    return Err(ModelError::Script(format!("task {task} rule {i} has a negative weight")));
                }
            }
        }
        Ok(())
    }

    /// Appends another script's rules. Collapse probabilities must agree
    /// unless one of them is zero.
    pub fn merge(&mut self, other: ScriptedPolicyConfig) -> Result<(), ModelError> {
        if other.apology_collapse_prob != 0.0 {
            if self.apology_collapse_prob != 0.0 && self.apology_collapse_prob != other.apology_collapse_prob {
                return Err(ModelError::Script("conflicting apology_collapse_prob values".into()));
            }
            self.apology_collapse_prob = other.apology_collapse_prob;
        }
        for (task, rules) in other.tasks {
            self.tasks.entry(task).or_default().extend(rules);
        }
        Ok(())
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Policy driven by a [`ScriptedPolicyConfig`].
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    config: ScriptedPolicyConfig,
}

impl ScriptedPolicy {
    pub fn new(config: ScriptedPolicyConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(ScriptedPolicy { config })
    }

    pub fn from_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self, Error> {
        let mut config = ScriptedPolicyConfig::default();
        for path in paths {
            config.merge(read_json(path.as_ref())?)?;
        }
        Ok(ScriptedPolicy::new(config)?)
    }

    pub fn config(&self) -> &ScriptedPolicyConfig {
        &self.config
    }

    fn rule_for(&self, request: &PolicyRequest<'_>) -> Option<&ScriptRule> {
        let own = self.config.tasks.get(request.task_id).into_iter().flatten();
        let shared = self.config.tasks.get(ANY_TASK).into_iter().flatten();
        own.chain(shared).find(|r| r.matches(request))
    }

    fn collapses(&self, request: &PolicyRequest<'_>, rule: &ScriptRule) -> bool {
        let p = self.config.apology_collapse_prob;
        let after_error = request.prefix.last().is_some_and(|s| s.observation.is_error);
        if p <= 0.0 || request.temperature <= 0.0 || !after_error || rule.resist_collapse {
            return false;
        }
        let prompt_key = fingerprint(&render_steps(request.task_prompt, request.prefix, None))
            ^ request.bundle.fingerprint();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(prompt_key, COLLAPSE_SALT));
        rng.random::<f64>() < p
    }

    fn choose<'r>(&self, candidates: &'r [WeightedAction], temperature: f64, seed: u64) -> &'r WeightedAction {
        let argmax = || {
            candidates
                .iter()
                .max_by(|a, b| {
                    a.weight
                        .total_cmp(&b.weight)
                        .then_with(|| (&b.tool, &b.args).cmp(&(&a.tool, &a.args)))
                })
                .expect("validated non-empty")
        };
        if temperature <= 0.0 {
            return argmax();
        }
        let scaled: Vec<f64> = candidates
            .iter()
            .map(|c| if c.weight > 0.0 { c.weight.powf(1.0 / temperature) } else { 0.0 })
            .collect();
        let total: f64 = scaled.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return argmax();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = rng.random::<f64>() * total;
        for (c, w) in candidates.iter().zip(&scaled) {
            if u < *w {
                return c;
            }
            u -= w;
        }
        candidates.iter().zip(&scaled).rev().find(|(_, w)| **w > 0.0).map(|(c, _)| c).unwrap()
    }
}

impl Policy for ScriptedPolicy {
    fn sample(&self, request: &PolicyRequest<'_>) -> Result<Generation<Action>, ModelError> {
        let action = match self.rule_for(request) {
            None => Action::final_answer(self.config.default_apology.clone()),
            Some(rule) if self.collapses(request, rule) => {
                Action::final_answer(self.config.default_apology.clone())
            }
            Some(rule) => {
                let c = self.choose(&rule.candidates, request.temperature, request.seed);
                Action::tool(c.tool.clone(), c.args.clone())
            }
        };
        let usage = Usage::estimate(&policy_prompt(request), &action.raw_text);
        Ok(Generation { value: action, usage })
    }
}

/// One row of a reward script. Unset fields match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRule {
    #[serde(default)]
    pub tool: Option<String>,
    #[serde(default)]
    pub args_contains: Option<String>,
    #[serde(default)]
    pub observation_contains: Option<String>,
    #[serde(default)]
    pub is_error: Option<bool>,
    #[serde(default)]
    pub apology: Option<bool>,
    pub score: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardScript {
    #[serde(default = "half")]
    pub default_score: f64,
    #[serde(default)]
    pub tasks: BTreeMap<String, Vec<RewardRule>>,
    #[serde(default)]
    pub classifier: ApologyClassifier,
}

impl Default for RewardScript {
    fn default() -> Self {
        RewardScript {
            default_score: 0.5,
            tasks: BTreeMap::new(),
            classifier: ApologyClassifier::default(),
        }
    }
}

impl RewardScript {
    pub fn validate(&self) -> Result<(), ModelError> {
        checked_unit(self.default_score)?;
        for rule in self.tasks.values().flatten() {
            checked_unit(rule.score)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: RewardScript) {
        for (task, rules) in other.tasks {
            self.tasks.entry(task).or_default().extend(rules);
        }
    }
}

/// Process reward model driven by a [`RewardScript`]. Out-of-range scores are
/// configuration errors, never clamped.
#[derive(Debug, Clone)]
pub struct ScriptedReward {
    script: RewardScript,
}

impl ScriptedReward {
    pub fn new(script: RewardScript) -> Result<Self, ModelError> {
        script.validate()?;
        Ok(ScriptedReward { script })
    }

    /// Builds without validating; out-of-range values surface at scoring time.
    pub fn unchecked(script: RewardScript) -> Self {
        ScriptedReward { script }
    }

    pub fn from_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self, Error> {
        let mut iter = paths.iter();
        let mut script: RewardScript = match iter.next() {
            Some(p) => read_json(p.as_ref())?,
            None => RewardScript::default(),
        };
        for p in iter {
            script.merge(read_json(p.as_ref())?);
        }
        Ok(ScriptedReward::new(script)?)
    }

    fn rule_matches(&self, rule: &RewardRule, request: &RewardRequest<'_>) -> bool {
        let step = request.candidate;
        rule.tool.as_ref().is_none_or(|t| &step.action.tool_name == t)
            && rule
                .args_contains
                .as_ref()
                .is_none_or(|s| step.action.arguments.contains(s.as_str()))
            && rule
                .observation_contains
                .as_ref()
                .is_none_or(|s| step.observation.content.contains(s.as_str()))
            && rule.is_error.is_none_or(|e| step.observation.is_error == e)
            && rule
                .apology
                .is_none_or(|a| self.script.classifier.is_apology(&step.action) == a)
    }
}

impl RewardModel for ScriptedReward {
    fn score(&self, request: &RewardRequest<'_>) -> Result<Generation<f64>, ModelError> {
        let own = self.script.tasks.get(request.task_id).into_iter().flatten();
        let shared = self.script.tasks.get(ANY_TASK).into_iter().flatten();
        let raw = own
            .chain(shared)
            .find(|r| self.rule_matches(r, request))
            .map_or(self.script.default_score, |r| r.score);
        let score = checked_unit(raw)?;
        let usage = Usage::estimate(&reward_prompt(request), &format!("{score}"));
        Ok(Generation { value: score, usage })
    }
}

/// Emits `text` when the trajectory text contains every listed substring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectRule {
    #[serde(default)]
    pub when_contains: Vec<String>,
    pub text: String,
}

/// Line-level regex; every match expands `template` (`$1`, `${name}`) into a fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactRule {
    pub pattern: String,
    pub template: String,
}

fn default_reflection() -> String {
    "The previous attempt did not reach a well-supported answer; inspect the available data before answering."
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentorScript {
    #[serde(default)]
    pub reflect: Vec<ReflectRule>,
    #[serde(default = "default_reflection")]
    pub default_reflection: String,
    #[serde(default)]
    pub facts: Vec<FactRule>,
}

impl Default for AugmentorScript {
    fn default() -> Self {
        AugmentorScript {
            reflect: Vec::new(),
            default_reflection: default_reflection(),
            facts: Vec::new(),
        }
    }
}

/// Rule-based reflection writer and fact extractor.
#[derive(Debug, Clone)]
pub struct ScriptedAugmentor {
    script: AugmentorScript,
    fact_rules: Vec<(Regex, String)>,
}

impl ScriptedAugmentor {
    pub fn new(script: AugmentorScript) -> Result<Self, ModelError> {
        let fact_rules = script
            .facts
            .iter()
            .map(|r| {
                Regex::new(&r.pattern)
                    .map(|re| (re, r.template.clone()))
                    .map_err(|e| ModelError::Script(format!("bad fact pattern {:?}: {e}", r.pattern)))
            })
            .collect::<Result<_, _>>()?;
        Ok(ScriptedAugmentor { script, fact_rules })
    }

    pub fn from_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self, Error> {
        let mut script = AugmentorScript::default();
        for (i, p) in paths.iter().enumerate() {
            let next: AugmentorScript = read_json(p.as_ref())?;
            if i == 0 {
                script.default_reflection = next.default_reflection;
            }
            script.reflect.extend(next.reflect);
            script.facts.extend(next.facts);
        }
        Ok(ScriptedAugmentor::new(script)?)
    }

    fn reflect(&self, text: &str) -> String {
        self.script
            .reflect
            .iter()
            .find(|r| r.when_contains.iter().all(|s| text.contains(s.as_str())))
            .map_or_else(|| self.script.default_reflection.clone(), |r| r.text.clone())
    }

    fn extract(&self, text: &str) -> String {
        let mut facts = Vec::new();
        for line in text.lines() {
            for (re, template) in &self.fact_rules {
                for caps in re.captures_iter(line) {
                    let mut fact = String::new();
                    caps.expand(template, &mut fact);
                    facts.push(fact);
                }
            }
        }
        facts.join("\n")
    }
}

impl AugmentorModel for ScriptedAugmentor {
    fn analyze(&self, kind: AugmentKind, trajectory_text: &str) -> Result<Generation<String>, ModelError> {
        let out = match kind {
            AugmentKind::Reflect => self.reflect(trajectory_text),
            AugmentKind::ExtractFacts => self.extract(trajectory_text),
        };
        let usage = Usage::estimate(trajectory_text, &out);
        Ok(Generation { value: out, usage })
    }
}
