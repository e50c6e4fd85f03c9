//! The three model roles (policy, per-step reward model, augmentor model)
//! plus the embedder used for fact deduplication.
//!
//! Every role is a `Send + Sync` trait object so one set of models can serve
//! tasks running in parallel. Scripted implementations are pure functions of
//! their inputs; the remote client talks to an OpenAI-style chat endpoint.

mod embed;
mod remote;
mod scripted;

pub use embed::{cosine, hash_embed, HashEmbedder};
pub use remote::{
    ChatClient, RemoteAugmentor, RemoteConfig, RemotePolicy, RemoteReward, Role, DEFAULT_EXTRACT_TEMPLATE,
    DEFAULT_REFLECT_TEMPLATE,
};
pub use scripted::{
    AugmentorScript, ContextMatch, FactRule, ReflectRule, RewardRule, RewardScript, ScriptRule,
    ScriptedAugmentor, ScriptedPolicy, ScriptedPolicyConfig, ScriptedReward, WeightedAction,
};

use crate::error::ModelError;
use crate::types::{render_steps, Action, ContextBundle, Step, Usage};

/// A model output together with the tokens it consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation<T> {
    pub value: T,
    pub usage: Usage,
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyRequest<'a> {
    pub task_id: &'a str,
    pub task_prompt: &'a str,
    pub prefix: &'a [Step],
    pub bundle: &'a ContextBundle,
    pub temperature: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct RewardRequest<'a> {
    pub task_id: &'a str,
    pub task_prompt: &'a str,
    pub prefix: &'a [Step],
    pub candidate: &'a Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentKind {
    Reflect,
    ExtractFacts,
}

/// Produces one action given the task, the trajectory so far and the
/// injected context.
pub trait Policy: Send + Sync {
    fn sample(&self, request: &PolicyRequest<'_>) -> Result<Generation<Action>, ModelError>;
}

/// Scores one candidate step in [0, 1]. Never sees the context bundle.
pub trait RewardModel: Send + Sync {
    fn score(&self, request: &RewardRequest<'_>) -> Result<Generation<f64>, ModelError>;
}

/// Turns trajectory text into a reflection or newline-separated facts.
pub trait AugmentorModel: Send + Sync {
    fn analyze(&self, kind: AugmentKind, trajectory_text: &str) -> Result<Generation<String>, ModelError>;
}

/// Maps text to a unit-norm vector of fixed length.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ModelError>;
}

/// Borrowed set of models used by one search.
#[derive(Clone, Copy)]
pub struct Models<'a> {
    pub policy: &'a dyn Policy,
    pub reward: &'a dyn RewardModel,
    pub augmentor: &'a dyn AugmentorModel,
    pub embedder: &'a dyn Embedder,
}

/// Prompt sent to a policy model.
pub fn policy_prompt(request: &PolicyRequest<'_>) -> String {
    let mut prompt = String::from(
        "You are a tool-use agent. Reply with exactly one action written as TOOL_NAME(arguments). \
         Use FINAL_ANSWER(answer) when done.\n",
    );
    if !request.bundle.rendered.is_empty() {
        prompt.push_str("CONTEXT:\n");
        prompt.push_str(&request.bundle.rendered);
    }
    prompt.push_str(&render_steps(request.task_prompt, request.prefix, None));
    prompt
}

/// Prompt sent to a reward model. Built only from the task and the steps, so
/// memory context cannot leak into scoring.
pub fn reward_prompt(request: &RewardRequest<'_>) -> String {
    let mut prompt = String::from(
        "Rate how much the LAST step moves the agent toward solving the task. \
         Reply with a single number between 0 and 1.\n",
    );
    prompt.push_str(&render_steps(request.task_prompt, request.prefix, None));
    prompt.push_str(&format!("LAST: {}\n", request.candidate.render_line()));
    prompt
}
