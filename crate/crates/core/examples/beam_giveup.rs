//! Beam search on a fixture where identical prompts give up together after an
//! error. Sibling memory breaks the tie and recovers.

use std::path::PathBuf;

use scopemem::augment::{compose, AugmentorConfig, MemoryKind, DEFAULT_DEDUP_THRESHOLD};
use scopemem::envs::TaskSet;
use scopemem::models::{HashEmbedder, Models, ScriptedAugmentor, ScriptedPolicy, ScriptedReward};
use scopemem::search::{run_search, SearchConfig, SearchMethod};

fn main() -> Result<(), scopemem::Error> {
    let f = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/acceptance");
    let set = TaskSet::load(&f.join("collapse.tasks.json"))?;
    let policy = ScriptedPolicy::from_files(&[f.join("collapse.policy.json")])?;
    let reward = ScriptedReward::from_files(&[f.join("collapse.reward.json")])?;
    let augmentor = ScriptedAugmentor::new(Default::default())?;
    let embedder = HashEmbedder::default();
    let models = Models {
        policy: &policy,
        reward: &reward,
        augmentor: &augmentor,
        embedder: &embedder,
    };
    let config = SearchConfig::for_method(SearchMethod::Beam);
    let task = &set.tasks[0];
    for kind in [MemoryKind::None, MemoryKind::RawSibling] {
        let mut stack = compose(&[AugmentorConfig::for_method(kind, config.method)], DEFAULT_DEDUP_THRESHOLD)?;
        let mut env = task.environment();
        let record = run_search(task, env.as_mut(), models, &mut stack, &config, 11)?;
        let g = record.give_up.unwrap_or_default();
        println!(
            "{:<12} expansions {}  all-apology {}  apology terminals {}  answer {:?}",
            kind.label(),
            g.total_expansions,
            g.all_apology_states,
            g.apology_terminals,
            record.final_answer.unwrap_or_default()
        );
    }
    Ok(())
}
