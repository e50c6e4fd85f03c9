use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ModelError;
use crate::models::{
    policy_prompt, reward_prompt, AugmentKind, AugmentorModel, Generation, Policy, PolicyRequest,
    RewardModel, RewardRequest,
};
use crate::types::{clamp_unit, Action, Telemetry, Usage};

pub const DEFAULT_REFLECT_TEMPLATE: &str = include_str!("../../fixtures/prompts/reflect.txt");
pub const DEFAULT_EXTRACT_TEMPLATE: &str = include_str!("../../fixtures/prompts/extract.txt");

/// Which telemetry bucket a client's calls are charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Policy,
    Supervisor,
}

fn default_key_env() -> String {
    "SCOPEMEM_API_KEY".to_string()
}

fn default_retries() -> u32 {
    3
}

fn default_timeout() -> u64 {
    60
}

/// Connection settings for an OpenAI-compatible chat completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full URL of the chat completions route.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    /// Attempts for transport failures. HTTP error statuses are never retried.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: default_key_env(),
            retries: default_retries(),
            timeout_secs: default_timeout(),
        }
    }
}

/// Blocking chat client with per-client telemetry.
pub struct ChatClient {
    config: RemoteConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    role: Role,
    telemetry: Mutex<Telemetry>,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .field("role", &self.role)
            .finish()
    }
}

impl ChatClient {
    /// Reads the bearer token from `config.api_key_env`. A missing variable
    /// sends no Authorization header; the endpoint then decides.
    pub fn new(config: RemoteConfig, role: Role) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        ChatClient::with_key(config, role, api_key)
    }

    pub fn with_key(config: RemoteConfig, role: Role, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        ChatClient {
            config,
            agent,
            api_key,
            role,
            telemetry: Mutex::new(Telemetry::default()),
        }
    }

    pub fn telemetry(&self) -> Telemetry {
        *self.telemetry.lock().expect("telemetry lock")
    }

    /// Sends one user message and returns the assistant reply.
    pub fn complete(&self, prompt: &str, temperature: f64) -> Result<Generation<String>, ModelError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        });
        let attempts = self.config.retries.max(1);
        let mut last_err = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
            }
            let mut request = self.agent.post(&self.config.endpoint);
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
            let response = match request.send_json(&body) {
                Ok(r) => r,
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            };
            let status = response.status().as_u16();
            let text = match response.into_body().read_to_string() {
                Ok(t) => t,
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            };
            return match status {
                200..=299 => {
                    let generation = parse_completion(&text)?;
                    let mut t = self.telemetry.lock().expect("telemetry lock");
                    match self.role {
                        Role::Policy => t.record_policy(generation.usage),
                        Role::Supervisor => t.record_supervisor(generation.usage),
                    }
                    Ok(generation)
                }
                401 | 403 => Err(ModelError::Credential { status, body: text }),
                _ => Err(ModelError::Endpoint { status, body: text }),
            };
        }
        Err(ModelError::Transport {
            attempts,
            message: last_err,
        })
    }
}

fn parse_completion(text: &str) -> Result<Generation<String>, ModelError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ModelError::Malformed("missing choices[0].message.content".into()))?;
    let tokens = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Ok(Generation {
        value: content.to_string(),
        usage: Usage {
            tokens_in: tokens("prompt_tokens"),
            tokens_out: tokens("completion_tokens"),
        },
    })
}

fn action_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([A-Z][A-Z_]*)\((.*)\)$").expect("static pattern"))
}

/// Parses `TOOL(args)` from the first non-empty line. Anything else becomes a
/// final answer carrying the whole reply.
pub(crate) fn parse_action(reply: &str) -> Action {
    let first = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let mut action = match action_pattern().captures(first) {
        Some(c) => Action::tool(&c[1], &c[2]),
        None => Action::final_answer(reply.trim()),
    };
    action.raw_text = reply.to_string();
    action
}

#[derive(Debug)]
pub struct RemotePolicy {
    client: ChatClient,
}

impl RemotePolicy {
    pub fn new(client: ChatClient) -> Self {
        RemotePolicy { client }
    }

    pub fn client(&self) -> &ChatClient {
        &self.client
    }
}

impl Policy for RemotePolicy {
    fn sample(&self, request: &PolicyRequest<'_>) -> Result<Generation<Action>, ModelError> {
        let g = self.client.complete(&policy_prompt(request), request.temperature)?;
        Ok(Generation {
            value: parse_action(&g.value),
            usage: g.usage,
        })
    }
}

#[derive(Debug)]
pub struct RemoteReward {
    client: ChatClient,
}

impl RemoteReward {
    pub fn new(client: ChatClient) -> Self {
        RemoteReward { client }
    }
}

fn first_number() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("static pattern"))
}

impl RewardModel for RemoteReward {
    fn score(&self, request: &RewardRequest<'_>) -> Result<Generation<f64>, ModelError> {
        let g = self.client.complete(&reward_prompt(request), 0.0)?;
        let score = first_number()
            .find(&g.value)
            .and_then(|m| m.as_str().parse::<f64>().ok())
            .ok_or_else(|| ModelError::Malformed(format!("no score in reply {:?}", g.value)))?;
        Ok(Generation {
            value: clamp_unit(score),
            usage: g.usage,
        })
    }
}

/// Augmentor backed by a chat endpoint. Templates substitute `{trajectory}`.
#[derive(Debug)]
pub struct RemoteAugmentor {
    client: ChatClient,
    reflect_template: String,
    extract_template: String,
}

impl RemoteAugmentor {
    pub fn new(client: ChatClient) -> Self {
        RemoteAugmentor {
            client,
            reflect_template: DEFAULT_REFLECT_TEMPLATE.to_string(),
            extract_template: DEFAULT_EXTRACT_TEMPLATE.to_string(),
        }
    }

    pub fn with_templates(mut self, reflect: impl Into<String>, extract: impl Into<String>) -> Self {
        self.reflect_template = reflect.into();
        self.extract_template = extract.into();
        self
    }
}

impl AugmentorModel for RemoteAugmentor {
    fn analyze(&self, kind: AugmentKind, trajectory_text: &str) -> Result<Generation<String>, ModelError> {
        let template = match kind {
            AugmentKind::Reflect => &self.reflect_template,
            AugmentKind::ExtractFacts => &self.extract_template,
        };
        self.client.complete(&template.replace("{trajectory}", trajectory_text), 0.0)
    }
}
