#![allow(dead_code)]

use std::path::PathBuf;

use scopemem::augment::{compose, AugmentorConfig, MemoryKind, DEFAULT_DEDUP_THRESHOLD};
use scopemem::envs::TaskSet;
use scopemem::models::{HashEmbedder, Models, ScriptedAugmentor, ScriptedPolicy, ScriptedReward};
use scopemem::search::{run_search, GiveUpStats, SearchConfig, SearchMethod};
use scopemem::types::{SearchRecord, TerminalKind};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub struct Scripted {
    pub policy: ScriptedPolicy,
    pub reward: ScriptedReward,
    pub augmentor: ScriptedAugmentor,
    pub embedder: HashEmbedder,
}

impl Scripted {
    pub fn load(policy: &str, reward: &str, augmentor: Option<&str>) -> Scripted {
        Scripted {
            policy: ScriptedPolicy::from_files(&[fixture(policy)]).unwrap(),
            reward: ScriptedReward::from_files(&[fixture(reward)]).unwrap(),
            augmentor: match augmentor {
                Some(a) => ScriptedAugmentor::from_files(&[fixture(a)]).unwrap(),
                None => ScriptedAugmentor::new(Default::default()).unwrap(),
            },
            embedder: HashEmbedder::default(),
        }
    }

    pub fn models(&self) -> Models<'_> {
        Models {
            policy: &self.policy,
            reward: &self.reward,
            augmentor: &self.augmentor,
            embedder: &self.embedder,
        }
    }
}

pub fn search_all(
    set: &TaskSet,
    models: &Scripted,
    memory: &[MemoryKind],
    config: &SearchConfig,
    seed: u64,
) -> Vec<SearchRecord> {
    let configs: Vec<AugmentorConfig> = memory.iter().map(|&k| AugmentorConfig::for_method(k, config.method)).collect();
    set.tasks
        .iter()
        .map(|task| {
            let mut stack = compose(&configs, DEFAULT_DEDUP_THRESHOLD).unwrap();
            let mut env = task.environment();
            run_search(task, env.as_mut(), models.models(), &mut stack, config, seed).unwrap()
        })
        .collect()
}

/// Golden McNemar rows:
/// (benchmark, comparison, rescues, regressions, printed p).
pub const GOLDEN: [(&str, &str, u64, u64, &str); 23] = [
    ("WikiSQL", "BoN Refl", 5, 2, "0.453"),
    ("WikiSQL", "BoN Fact", 2, 3, "1.000"),
    ("WikiSQL", "Beam Raw", 8, 2, "0.109"),
    ("WikiSQL", "MCTS Refl", 6, 0, "0.031"),
    ("WikiSQL", "MCTS Fact", 0, 1, "1.000"),
    ("WikiSQL", "MCTS Raw", 2, 3, "1.000"),
    ("WikiSQL", "MCTS+Refl vs pass@5+Refl", 6, 2, "0.289"),
    ("WikiTQ", "BoN Refl", 4, 1, "0.375"),
    ("WikiTQ", "BoN Fact", 0, 3, "0.250"),
    ("WikiTQ", "Beam Raw", 3, 1, "0.625"),
    ("WikiTQ", "MCTS Refl", 5, 2, "0.453"),
    ("WikiTQ", "MCTS Fact", 2, 2, "1.000"),
    ("WikiTQ", "MCTS Raw", 2, 3, "1.000"),
    ("WikiTQ", "MCTS+Refl vs pass@5+Refl", 1, 2, "1.000"),
    ("KGQA", "BoN Refl", 5, 4, "1.000"),
    ("KGQA", "BoN Fact", 4, 4, "1.000"),
    ("KGQA", "Beam Raw", 17, 3, "0.003"),
    ("KGQA", "MCTS Refl", 10, 2, "0.039"),
    ("KGQA", "MCTS Raw", 10, 2, "0.039"),
    ("KGQA", "MCTS+Refl vs pass@5+Refl", 6, 5, "1.000"),
    ("KGQA", "MCTS+Refl vs MCTS+Raw", 1, 1, "1.000"),
    ("Terminal-Bench", "BoN Refl", 8, 6, "0.791"),
    ("Terminal-Bench", "BoN Fact", 5, 3, "0.727"),
];

/// Independent McNemar oracle on machine integers: returns the two-sided
/// p-value as `(numerator, denominator)` with denominator `2^(b+c)`.
pub fn mcnemar_oracle(b: u64, c: u64) -> (u128, u128) {
    let n = (b + c) as usize;
    assert!(n <= 100);
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    let tail: u128 = row[..=(b.min(c) as usize)].iter().sum();
    let den = 1u128 << n;
    ((2 * tail).min(den), den)
}

/// Thousandths rounded half up, from the oracle fraction.
pub fn oracle_thousandths(b: u64, c: u64) -> u128 {
    let (num, den) = mcnemar_oracle(b, c);
    (2000 * num + den) / (2 * den)
}

/// Reference Benjamini-Hochberg step-up: indices rejected at level q.
pub fn bh_oracle(p: &[f64], q: f64) -> Vec<usize> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));
    let mut k_max = 0;
    for (rank, &i) in order.iter().enumerate() {
        if p[i] <= (rank + 1) as f64 / m as f64 * q {
            k_max = rank + 1;
        }
    }
    let mut out: Vec<usize> = order[..k_max].to_vec();
    out.sort();
    out
}

pub struct SkipOutcome {
    pub none_skip: f64,
    pub fact_skip: f64,
    pub none_mean_len: f64,
    pub fact_mean_len: f64,
}

fn later_attempt_skip(records: &[SearchRecord]) -> f64 {
    let later: Vec<bool> = records
        .iter()
        .flat_map(|r| r.trajectories.iter().filter(|t| (1..=4).contains(&t.iteration_index)))
        .map(|t| !t.uses_tool("LIST_TABLES"))
        .collect();
    later.iter().filter(|s| **s).count() as f64 / later.len() as f64
}

fn mean_len(records: &[SearchRecord]) -> f64 {
    let lens: Vec<usize> = records.iter().flat_map(|r| r.trajectories.iter().map(|t| t.steps.len())).collect();
    lens.iter().sum::<usize>() as f64 / lens.len() as f64
}

/// Best-of-N on the shipped toy SQL tasks, with and without fact memory.
pub fn fact_skip_scenario(seed: u64) -> SkipOutcome {
    let set = TaskSet::load(&fixture("tasks/toysql.json")).unwrap();
    let models = Scripted::load(
        "scripts/toysql.policy.json",
        "scripts/toysql.reward.json",
        Some("scripts/toysql.augmentor.json"),
    );
    let config = SearchConfig::for_method(SearchMethod::BestOfN);
    let none = search_all(&set, &models, &[MemoryKind::None], &config, seed);
    let fact = search_all(&set, &models, &[MemoryKind::Fact], &config, seed);
    SkipOutcome {
        none_skip: later_attempt_skip(&none),
        fact_skip: later_attempt_skip(&fact),
        none_mean_len: mean_len(&none),
        fact_mean_len: mean_len(&fact),
    }
}

/// Beam search on the apology-collapse fixture.
pub fn collapse_scenario(memory: MemoryKind) -> GiveUpStats {
    let set = TaskSet::load(&fixture("acceptance/collapse.tasks.json")).unwrap();
    let models = Scripted::load("acceptance/collapse.policy.json", "acceptance/collapse.reward.json", None);
    let config = SearchConfig::for_method(SearchMethod::Beam);
    let records = search_all(&set, &models, &[memory], &config, 11);
    records[0].give_up.expect("beam reports give-up stats")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    Root,
    BadQuery,
    GoodQuery,
    Apology,
    Answer,
}

impl Node {
    fn reward(self) -> f64 {
        match self {
            Node::Root => 0.0,
            Node::BadQuery => 0.1,
            Node::GoodQuery => 0.8,
            Node::Apology => 0.05,
            Node::Answer => 0.9,
        }
    }

    fn terminal(self) -> bool {
        matches!(self, Node::Apology | Node::Answer)
    }
}

/// Branch table of the collapse fixture: a failing first query, then a
/// forced give-up unless an earlier sibling's give-up is visible.
fn branch(state: Node, seen: &[Node]) -> Node {
    match state {
        Node::Root => Node::BadQuery,
        Node::BadQuery if seen.contains(&Node::Apology) => Node::GoodQuery,
        Node::BadQuery => Node::Apology,
        Node::GoodQuery => Node::Answer,
        Node::Apology | Node::Answer => unreachable!(),
    }
}

/// Enumerates the collapse fixture's beam search by hand. Returns
/// (all-apology expansions, apology terminals, expansions).
pub fn collapse_oracle(interleaved: bool, width: usize, n_actions: usize) -> (usize, usize, usize) {
    let mut beams: Vec<(Vec<Node>, usize)> = vec![(vec![Node::Root], 0)];
    let (mut all_apology, mut apologies, mut expansions) = (0, 0, 0);
    let mut order = 0;
    while beams.iter().any(|(p, _)| !p.last().unwrap().terminal()) {
        let mut pool = Vec::new();
        for (path, o) in beams {
            let last = *path.last().unwrap();
            if last.terminal() {
                pool.push((path, o));
                continue;
            }
            expansions += 1;
            let mut kids: Vec<Node> = Vec::new();
            for _ in 0..n_actions {
                let seen = if interleaved { kids.clone() } else { Vec::new() };
                kids.push(branch(last, &seen));
            }
            let n_apology = kids.iter().filter(|k| **k == Node::Apology).count();
            apologies += n_apology;
            if n_apology == kids.len() {
                all_apology += 1;
            }
            for k in kids {
                let mut p = path.clone();
                p.push(k);
                order += 1;
                pool.push((p, order));
            }
        }
        let key = |p: &[Node]| {
            let scored = &p[1..];
            let mean = scored.iter().map(|n| n.reward()).sum::<f64>() / scored.len() as f64;
            (scored.last().unwrap().reward(), mean)
        };
        pool.sort_by(|a, b| {
            let (ka, kb) = (key(&a.0), key(&b.0));
            kb.0.total_cmp(&ka.0).then(kb.1.total_cmp(&ka.1)).then(a.1.cmp(&b.1))
        });
        pool.truncate(width);
        beams = pool;
    }
    (all_apology, apologies, expansions)
}

pub struct DecoyOutcome {
    pub record: SearchRecord,
    /// Iterations whose trajectory answered correctly.
    pub correct_iterations: Vec<usize>,
}

/// MCTS on the decoy-table fixture.
pub fn decoy_scenario(memory: MemoryKind) -> DecoyOutcome {
    let set = TaskSet::load(&fixture("acceptance/decoy.tasks.json")).unwrap();
    let models = Scripted::load(
        "acceptance/decoy.policy.json",
        "acceptance/decoy.reward.json",
        Some("acceptance/decoy.augmentor.json"),
    );
    let config = SearchConfig::for_method(SearchMethod::Mcts);
    let record = search_all(&set, &models, &[memory], &config, 5).remove(0);
    let task = &set.tasks[0];
    let correct_iterations = record
        .trajectories
        .iter()
        .filter(|t| t.terminal_kind == TerminalKind::Answered && set.key.grade(&task.id, t.answer()).unwrap())
        .map(|t| t.iteration_index)
        .collect();
    DecoyOutcome {
        record,
        correct_iterations,
    }
}
