//! Best-of-N on the toy SQL tasks with and without fact memory. Facts written
//! during the first attempt let later attempts skip table discovery.

use std::path::PathBuf;

use scopemem::augment::{compose, AugmentorConfig, MemoryKind, DEFAULT_DEDUP_THRESHOLD};
use scopemem::envs::TaskSet;
use scopemem::models::{HashEmbedder, Models, ScriptedAugmentor, ScriptedPolicy, ScriptedReward};
use scopemem::search::{run_search, SearchConfig, SearchMethod};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn main() -> Result<(), scopemem::Error> {
    let f = fixtures();
    let set = TaskSet::load(&f.join("tasks/toysql.json"))?;
    let policy = ScriptedPolicy::from_files(&[f.join("scripts/toysql.policy.json")])?;
    let reward = ScriptedReward::from_files(&[f.join("scripts/toysql.reward.json")])?;
    let augmentor = ScriptedAugmentor::from_files(&[f.join("scripts/toysql.augmentor.json")])?;
    let embedder = HashEmbedder::default();
    let models = Models {
        policy: &policy,
        reward: &reward,
        augmentor: &augmentor,
        embedder: &embedder,
    };
    let config = SearchConfig::for_method(SearchMethod::BestOfN);

    for kind in [MemoryKind::None, MemoryKind::Fact] {
        let (mut solved, mut steps, mut runs, mut skipped, mut later) = (0, 0, 0, 0, 0);
        for task in &set.tasks {
            let mut stack = compose(&[AugmentorConfig::for_method(kind, config.method)], DEFAULT_DEDUP_THRESHOLD)?;
            let mut env = task.environment();
            let record = run_search(task, env.as_mut(), models, &mut stack, &config, 7)?;
            let pass = record
                .trajectories
                .iter()
                .map(|t| set.key.grade(&task.id, t.answer()))
                .collect::<Result<Vec<_>, _>>()?;
            solved += pass.iter().any(|p| *p) as usize;
            for t in &record.trajectories {
                steps += t.steps.len();
                runs += 1;
                if t.iteration_index > 0 {
                    later += 1;
                    skipped += !t.uses_tool("LIST_TABLES") as usize;
                }
            }
        }
        println!(
            "{:<10} pass@5 {solved}/{}  mean steps {:.2}  discovery skipped {skipped}/{later}",
            kind.label(),
            set.tasks.len(),
            steps as f64 / runs as f64
        );
    }
    Ok(())
}
