//! Shows the prompts of one batch expansion and one interleaved expansion.

use std::path::PathBuf;
use std::sync::Mutex;

use scopemem::augment::{compose, AugmentorConfig, MemoryKind, DEFAULT_DEDUP_THRESHOLD};
use scopemem::envs::TaskSet;
use scopemem::models::{
    policy_prompt, Generation, HashEmbedder, Models, Policy, PolicyRequest, ScriptedAugmentor, ScriptedPolicy,
    ScriptedReward,
};
use scopemem::search::{run_search, SearchConfig, SearchMethod};
use scopemem::types::Action;
use scopemem::ModelError;

struct Recorder<'a> {
    inner: &'a dyn Policy,
    prompts: Mutex<Vec<String>>,
}

impl Policy for Recorder<'_> {
    fn sample(&self, request: &PolicyRequest<'_>) -> Result<Generation<Action>, ModelError> {
        if request.prefix.is_empty() {
            self.prompts.lock().unwrap().push(policy_prompt(request));
        }
        self.inner.sample(request)
    }
}

fn main() -> Result<(), scopemem::Error> {
    let f = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let set = TaskSet::load(&f.join("tasks/toysql.json"))?;
    let policy = ScriptedPolicy::from_files(&[f.join("scripts/toysql.policy.json")])?;
    let reward = ScriptedReward::from_files(&[f.join("scripts/toysql.reward.json")])?;
    let augmentor = ScriptedAugmentor::new(Default::default())?;
    let embedder = HashEmbedder::default();
    let config = SearchConfig::for_method(SearchMethod::Beam);
    let task = &set.tasks[0];

    for kind in [MemoryKind::None, MemoryKind::RawSibling] {
        let recorder = Recorder {
            inner: &policy,
            prompts: Mutex::new(Vec::new()),
        };
        let models = Models {
            policy: &recorder,
            reward: &reward,
            augmentor: &augmentor,
            embedder: &embedder,
        };
        let mut stack = compose(&[AugmentorConfig::for_method(kind, config.method)], DEFAULT_DEDUP_THRESHOLD)?;
        let mut env = task.environment();
        run_search(task, env.as_mut(), models, &mut stack, &config, 1)?;
        println!("######## {}", kind.label());
        for (i, p) in recorder.prompts.into_inner().unwrap().iter().take(config.n_actions).enumerate() {
            println!("--- sibling {i}\n{p}");
        }
    }
    Ok(())
}
