mod common;

use common::*;
use proptest::prelude::*;
use scopemem::augment::{compose, maybe_reflect, AugmentorConfig, MemoryKind, MemoryStore, DEFAULT_DEDUP_THRESHOLD};
use scopemem::envs::TaskSet;
use scopemem::models::{cosine, hash_embed, AugmentorScript, HashEmbedder, ScriptedAugmentor, ScriptedPolicy, ScriptedReward};
use scopemem::search::{run_search, SearchConfig, SearchMethod};
use scopemem::types::{
    Action, ApologyClassifier, ContextBundle, ContextSummary, ContextUnit, Observation, Step, Telemetry, Trajectory,
};

fn scored(r: f64) -> Trajectory {
    let step = Step::new(Action::final_answer("x"), Observation::ok("FINAL_ANSWER", "")).with_reward(r);
    Trajectory::build(vec![step], vec![ContextSummary::of(&ContextBundle::empty())], 0, &ApologyClassifier::default())
        .unwrap()
}

fn fires(r: f64, models: &Scripted) -> bool {
    maybe_reflect(&scored(r), "task", &models.models(), 0.3, &mut Telemetry::default())
        .unwrap()
        .is_some()
}

fn models() -> Scripted {
    Scripted::load(
        "scripts/toysql.policy.json",
        "scripts/toysql.reward.json",
        Some("scripts/toysql.augmentor.json"),
    )
}

#[test]
fn reflection_threshold_is_strict() {
    let m = models();
    assert!(!fires(0.3, &m));
    assert!(fires(0.3 - 1e-12, &m));
    assert!(fires(0.0, &m));
    assert!(!fires(1.0, &m));
}

proptest! {
    #[test]
    fn reflection_fires_iff_below_threshold(r in 0.0f64..=1.0) {
        let m = models();
        prop_assert_eq!(fires(r, &m), r < 0.3);
    }
}

#[test]
fn sibling_units_are_never_persisted() {
    let mut store = MemoryStore::default();
    assert!(!store.offer(ContextUnit::sibling("QUERY(x) -> y", 0)));
    assert!(store.is_empty());

    let set = TaskSet::load(&fixture("tasks/toysql.json")).unwrap();
    let m = models();
    let config = SearchConfig::for_method(SearchMethod::Mcts);
    for task in &set.tasks {
        let mut stack = compose(&[AugmentorConfig::for_method(MemoryKind::RawSibling, SearchMethod::Mcts)], DEFAULT_DEDUP_THRESHOLD).unwrap();
        let mut env = task.environment();
        let record = run_search(task, env.as_mut(), m.models(), &mut stack, &config, 3).unwrap();
        assert!(stack.store().is_empty(), "{}", task.id);
        assert!(record.trajectories.iter().flat_map(|t| &t.contexts).any(|c| c.siblings > 0));
    }
}

#[test]
fn embedding_is_insensitive_to_case_and_spacing() {
    let a = hash_embed("The table 'SWAT Games' has columns: Year, Result", 256).unwrap();
    let b = hash_embed("  the TABLE  'swat games'   has columns:   year,  result ", 256).unwrap();
    assert!(cosine(&a, &b) >= 0.99);
}

#[test]
fn embedding_separates_unrelated_sentences() {
    let a = hash_embed("Norway capital Oslo population", 256).unwrap();
    let b = hash_embed("trumpet jazz musician recorded albums", 256).unwrap();
    assert!(cosine(&a, &b) <= 0.3);
}

const VOCAB: [&str; 16] = [
    "table", "games", "swat", "year", "result", "cup", "columns", "has", "the", "player", "goals", "team", "city",
    "orcas", "wins", "season",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(0usize..VOCAB.len(), 2..8).prop_map(|ix| ix.iter().map(|&i| VOCAB[i]).collect::<Vec<_>>().join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn fact_store_keeps_pairwise_cosine_below_threshold(
        stream in prop::collection::vec(sentence(), 1..20),
        threshold in 0.5f64..=1.0,
    ) {
        let mut store = MemoryStore::new(threshold).unwrap();
        for (i, s) in stream.iter().enumerate() {
            let e = hash_embed(s, 64).unwrap();
            let before: Vec<Vec<f64>> = store.facts().map(|f| f.embedding().unwrap().to_vec()).collect();
            let kept = store.offer(ContextUnit::fact(s.clone(), i, e.clone()));
            prop_assert_eq!(kept, before.iter().all(|g| cosine(&e, g) < threshold));
        }
        let facts: Vec<&[f64]> = store.facts().map(|f| f.embedding().unwrap()).collect();
        for i in 0..facts.len() {
            for j in 0..i {
                prop_assert!(cosine(facts[i], facts[j]) < threshold);
            }
        }
    }
}

#[test]
fn fact_extraction_feeds_store_through_augmentor() {
    let script: AugmentorScript = serde_json::from_str(
        r#"{"facts": [{"pattern": "SCHEMA\\(([^)]*)\\) -> columns: (.+)$", "template": "The table '$1' has columns: $2"}]}"#,
    )
    .unwrap();
    let aug = ScriptedAugmentor::new(script).unwrap();
    let policy = ScriptedPolicy::new(Default::default()).unwrap();
    let reward = ScriptedReward::new(Default::default()).unwrap();
    let embedder = HashEmbedder::default();
    let models = scopemem::models::Models { policy: &policy, reward: &reward, augmentor: &aug, embedder: &embedder };
    let mut store = MemoryStore::default();
    let text = "[0] SCHEMA(Games) -> columns: Year, Platform\n[1] SCHEMA(Games) -> columns: Year, Platform\n";
    let n = scopemem::augment::extract_facts(text, 0, &models, &mut store, &mut Telemetry::default()).unwrap();
    assert_eq!(n, 1);
    assert_eq!(store.facts().next().unwrap().body(), "The table 'Games' has columns: Year, Platform");
}
