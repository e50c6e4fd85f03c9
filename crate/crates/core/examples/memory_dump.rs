//! Runs Fact + Reflection best-of-N on one KG task and dumps the memory store
//! as JSON lines.
//!
//! Usage: `cargo run --example memory_dump [task-id]`

use std::path::PathBuf;

use scopemem::augment::{compose, AugmentorConfig, MemoryKind, DEFAULT_DEDUP_THRESHOLD};
use scopemem::envs::TaskSet;
use scopemem::models::{HashEmbedder, Models, ScriptedAugmentor, ScriptedPolicy, ScriptedReward};
use scopemem::search::{run_search, SearchConfig, SearchMethod};

fn main() -> Result<(), scopemem::Error> {
    let f = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let set = TaskSet::load(&f.join("tasks/toykg.json"))?;
    let policy = ScriptedPolicy::from_files(&[f.join("scripts/toykg.policy.json")])?;
    let reward = ScriptedReward::from_files(&[f.join("scripts/toykg.reward.json")])?;
    let augmentor = ScriptedAugmentor::from_files(&[f.join("scripts/toykg.augmentor.json")])?;
    let embedder = HashEmbedder::default();
    let models = Models {
        policy: &policy,
        reward: &reward,
        augmentor: &augmentor,
        embedder: &embedder,
    };
    let id = std::env::args().nth(1).unwrap_or_else(|| "kg-01".to_string());
    let task = set
        .tasks
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| scopemem::Error::UnknownTask(id.clone()))?;
    let config = SearchConfig::for_method(SearchMethod::BestOfN);
    let memory: Vec<AugmentorConfig> = [MemoryKind::Fact, MemoryKind::Reflection]
        .into_iter()
        .map(|k| AugmentorConfig::for_method(k, config.method))
        .collect();
    let mut stack = compose(&memory, DEFAULT_DEDUP_THRESHOLD)?;
    let mut env = task.environment();
    let record = run_search(task, env.as_mut(), models, &mut stack, &config, 3)?;
    print!("{}", stack.store().to_jsonl());
    eprintln!(
        "{} units; answer {:?}; correct {}",
        stack.store().len(),
        record.final_answer,
        set.key.grade(&task.id, record.final_answer.as_deref())?
    );
    Ok(())
}
