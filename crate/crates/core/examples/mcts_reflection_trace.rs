//! MCTS on a decoy-table task, printing each iteration's trajectory. With
//! reflection memory the second iteration leaves the decoy table.

use std::path::PathBuf;

use scopemem::augment::{compose, AugmentorConfig, MemoryKind, DEFAULT_DEDUP_THRESHOLD};
use scopemem::envs::TaskSet;
use scopemem::models::{HashEmbedder, Models, ScriptedAugmentor, ScriptedPolicy, ScriptedReward};
use scopemem::search::{run_search, SearchConfig, SearchMethod};

fn main() -> Result<(), scopemem::Error> {
    let f = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/acceptance");
    let set = TaskSet::load(&f.join("decoy.tasks.json"))?;
    let policy = ScriptedPolicy::from_files(&[f.join("decoy.policy.json")])?;
    let reward = ScriptedReward::from_files(&[f.join("decoy.reward.json")])?;
    let augmentor = ScriptedAugmentor::from_files(&[f.join("decoy.augmentor.json")])?;
    let embedder = HashEmbedder::default();
    let models = Models {
        policy: &policy,
        reward: &reward,
        augmentor: &augmentor,
        embedder: &embedder,
    };
    let config = SearchConfig::for_method(SearchMethod::Mcts);
    let task = &set.tasks[0];
    for kind in [MemoryKind::None, MemoryKind::Reflection] {
        println!("== {}", kind.label());
        let mut stack = compose(&[AugmentorConfig::for_method(kind, config.method)], DEFAULT_DEDUP_THRESHOLD)?;
        let mut env = task.environment();
        let record = run_search(task, env.as_mut(), models, &mut stack, &config, 5)?;
        for t in &record.trajectories {
            let reflections = t.contexts.iter().map(|c| c.reflections).max().unwrap_or(0);
            println!("iteration {} score {:.3} reflections {reflections}", t.iteration_index, t.trajectory_score);
            for s in &t.steps {
                println!("    {}", s.render_line());
            }
        }
        for r in stack.store().reflections() {
            println!("reflection: {}", r.body());
        }
        println!("answer: {:?}\n", record.final_answer.unwrap_or_default());
    }
    Ok(())
}
