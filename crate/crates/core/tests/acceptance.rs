//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any failure.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use scopemem::augment::{maybe_reflect, MemoryKind, MemoryStore};
use scopemem::cli::main_with_args;
use scopemem::matrix::{check_admissible, Rejection};
use scopemem::models::{cosine, hash_embed};
use scopemem::search::{backprop, Backprop, NodeStats, SearchMethod};
use scopemem::stats::{format_p, mcnemar_exact, mcnemar_p, significance_marker};
use scopemem::types::{
    Action, ApologyClassifier, ContextBundle, ContextSummary, ContextUnit, Observation, Step, Telemetry, Trajectory,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ac1() -> Outcome {
    for (bench, cmp, b, c, printed) in GOLDEN {
        let got = format_p(&mcnemar_exact(b, c));
        check(got == printed, format!("{bench} {cmp} ({b},{c}): {got} != {printed}"))?;
    }
    Ok(format!("{} rows exact", GOLDEN.len()))
}

fn ac2() -> Outcome {
    for (b, c, want) in [(17, 3, "**"), (6, 0, "*"), (10, 2, "*"), (8, 2, "")] {
        let got = significance_marker(mcnemar_p(b, c));
        check(got == want, format!("({b},{c}) marker {got:?} != {want:?}"))?;
    }
    Ok("4 markers".into())
}

fn ac3() -> Outcome {
    use MemoryKind::*;
    let stacks: Vec<Vec<MemoryKind>> = vec![
        vec![None],
        vec![RawSibling],
        vec![Reflection],
        vec![Fact],
        vec![Fact, Reflection],
        vec![RawSibling, Reflection],
        vec![RawSibling, Fact],
        vec![RawSibling, Reflection, Fact],
    ];
    let mut cells = 0;
    for memory in &stacks {
        for method in [SearchMethod::BestOfN, SearchMethod::Beam, SearchMethod::Mcts] {
            for serializable in [true, false] {
                let tree = method != SearchMethod::BestOfN;
                let persistent = memory.iter().any(|k| k.cross_trajectory());
                let want = if tree && !serializable {
                    Some("---")
                } else if !tree && memory.contains(&RawSibling) {
                    Some("∅")
                } else if method == SearchMethod::Beam && persistent {
                    Some("∅")
                } else {
                    Option::None
                };
                let got = check_admissible(memory, method, serializable).err().map(Rejection::placeholder);
                check(got == want, format!("{memory:?} {method:?} ser={serializable}: {got:?} != {want:?}"))?;
                cells += 1;
            }
        }
    }
    Ok(format!("{cells} cells"))
}

fn quiet(cases: u32) -> Config {
    Config {
        failure_persistence: None,
        ..Config::with_cases(cases)
    }
}

fn reflect_fires(r: f64, models: &Scripted) -> bool {
    let step = Step::new(Action::final_answer("x"), Observation::ok("FINAL_ANSWER", "")).with_reward(r);
    let t = Trajectory::build(vec![step], vec![ContextSummary::of(&ContextBundle::empty())], 0, &ApologyClassifier::default())
        .unwrap();
    maybe_reflect(&t, "task", &models.models(), 0.3, &mut Telemetry::default())
        .unwrap()
        .is_some()
}

fn ac4() -> Outcome {
    let models = Scripted::load(
        "scripts/toysql.policy.json",
        "scripts/toysql.reward.json",
        Some("scripts/toysql.augmentor.json"),
    );
    for (r, want) in [(0.3, false), (0.3 - 1e-12, true), (0.0, true), (0.95, false)] {
        check(reflect_fires(r, &models) == want, format!("reflection at r={r}"))?;
    }
    let mut store = MemoryStore::default();
    check(!store.offer(ContextUnit::sibling("A() -> b", 0)) && store.is_empty(), "sibling unit persisted")?;

    const WORDS: [&str; 12] = [
        "table", "games", "swat", "year", "result", "cup", "columns", "has", "the", "team", "wins", "season",
    ];
    let sentence = prop::collection::vec(0usize..WORDS.len(), 2..8)
        .prop_map(|ix| ix.iter().map(|&i| WORDS[i]).collect::<Vec<_>>().join(" "));
    let mut runner = TestRunner::new(quiet(1000));
    runner
        .run(&prop::collection::vec(sentence, 1..20), |stream| {
            let mut store = MemoryStore::default();
            for (i, s) in stream.iter().enumerate() {
                store.offer(ContextUnit::fact(s.clone(), i, hash_embed(s, 64).unwrap()));
            }
            let e: Vec<&[f64]> = store.facts().map(|f| f.embedding().unwrap()).collect();
            for i in 0..e.len() {
                for j in 0..i {
                    prop_assert!(cosine(e[i], e[j]) < 0.9);
                }
            }
            Ok(())
        })
        .map_err(|e| format!("dedup invariant: {e}"))?;
    Ok("strict threshold, no sibling persistence, 1000 dedup cases".into())
}

fn ac5() -> Outcome {
    use scopemem::augment::{compose, AugmentorConfig, DEFAULT_DEDUP_THRESHOLD};
    use scopemem::envs::TaskSet;
    use scopemem::models::{policy_prompt, Generation, Models, Policy, PolicyRequest};
    use scopemem::search::{run_search, SearchConfig};
    use std::sync::Mutex;

    struct Rec<'a>(&'a dyn Policy, Mutex<Vec<(usize, String)>>);
    impl Policy for Rec<'_> {
        fn sample(&self, r: &PolicyRequest<'_>) -> Result<Generation<Action>, scopemem::ModelError> {
            self.1.lock().unwrap().push((r.prefix.len(), policy_prompt(r)));
            self.0.sample(r)
        }
    }
    let records = |p: &str| {
        let mut it = p.lines().skip_while(|l| *l != "SIBLINGS:");
        it.next().map_or(0, |_| it.take_while(|l| l.starts_with("- ")).count())
    };
    let set = TaskSet::load(&fixture("tasks/toysql.json")).unwrap();
    let scripted = Scripted::load("scripts/toysql.policy.json", "scripts/toysql.reward.json", None);
    for method in [SearchMethod::Beam, SearchMethod::Mcts] {
        for memory in [MemoryKind::RawSibling, MemoryKind::None] {
            let rec = Rec(&scripted.policy, Mutex::new(Vec::new()));
            let models = Models {
                policy: &rec,
                ..scripted.models()
            };
            let config = SearchConfig::for_method(method);
            let mut stack = compose(&[AugmentorConfig::for_method(memory, method)], DEFAULT_DEDUP_THRESHOLD).unwrap();
            let task = &set.tasks[0];
            let mut env = task.environment();
            run_search(task, env.as_mut(), models, &mut stack, &config, 9).map_err(|e| e.to_string())?;
            let prompts: Vec<String> =
                rec.1.into_inner().unwrap().into_iter().filter(|(d, _)| *d == 0).map(|(_, p)| p).take(3).collect();
            if memory == MemoryKind::RawSibling {
                let counts: Vec<usize> = prompts.iter().map(|p| records(p)).collect();
                check(counts == [0, 1, 2], format!("{method:?} interleaved records {counts:?}"))?;
            } else {
                check(prompts.len() == 3 && prompts.iter().all(|p| p == &prompts[0]), format!("{method:?} batch prompts differ"))?;
            }
        }
    }
    Ok("interleaved 0/1/2 records, batch identical".into())
}

fn ac6() -> Outcome {
    let mut runner = TestRunner::new(quiet(256));
    runner
        .run(&prop::collection::vec((1usize..6, 0.0f64..=1.0), 1..60), |updates| {
            let mut nodes = vec![NodeStats::default(); 6];
            let mut seen: Vec<Vec<f64>> = vec![Vec::new(); 6];
            for (d, v) in &updates {
                let mut path: Vec<NodeStats> = nodes[..*d].iter().rev().copied().collect();
                backprop(&mut path, *v, Backprop::Cumulative, 0.5);
                for (k, n) in path.into_iter().rev().enumerate() {
                    nodes[k] = n;
                    seen[k].push(*v);
                }
            }
            for (n, vals) in nodes.iter().zip(&seen) {
                if !vals.is_empty() {
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    prop_assert!((n.q - mean).abs() < 1e-9);
                }
            }
            Ok(())
        })
        .map_err(|e| format!("cumulative mean: {e}"))?;
    let mut path = [NodeStats::default(), NodeStats::new(4, 0.2)];
    backprop(&mut path, 0.8, Backprop::Decay, 1.0);
    check((path[1].q - 0.8).abs() < 1e-12, "gamma=1 does not copy child")?;
    let mut path = [NodeStats::default(), NodeStats::default()];
    backprop(&mut path, 0.9, Backprop::Decay, 0.5);
    check((path[1].q - 0.7).abs() < 1e-12, format!("gamma=0.5 gives {}", path[1].q))?;
    Ok("cumulative = mean; decay 1.0 copies, 0.5 on (0.5, 0.9) = 0.7".into())
}

fn ac7() -> Outcome {
    let o = fact_skip_scenario(7);
    check(o.fact_skip >= 0.7, format!("fact skip {:.2}", o.fact_skip))?;
    check(o.none_skip <= 0.1, format!("no-memory skip {:.2}", o.none_skip))?;
    check(o.fact_mean_len < o.none_mean_len, format!("lengths {:.2} vs {:.2}", o.fact_mean_len, o.none_mean_len))?;
    Ok(format!(
        "skip {:.2} vs {:.2}, mean steps {:.2} vs {:.2}",
        o.fact_skip, o.none_skip, o.fact_mean_len, o.none_mean_len
    ))
}

fn ac8() -> Outcome {
    let batch = collapse_scenario(MemoryKind::None);
    let raw = collapse_scenario(MemoryKind::RawSibling);
    let (ob_all, ob_terms, _) = collapse_oracle(false, 3, 3);
    let (or_all, or_terms, _) = collapse_oracle(true, 3, 3);
    check(
        (batch.all_apology_states, batch.apology_terminals) == (ob_all, ob_terms),
        format!("no-memory {batch:?} vs oracle ({ob_all}, {ob_terms})"),
    )?;
    check(
        (raw.all_apology_states, raw.apology_terminals) == (or_all, or_terms),
        format!("raw sibling {raw:?} vs oracle ({or_all}, {or_terms})"),
    )?;
    check(raw.all_apology_states < batch.all_apology_states, "all-apology states not reduced")?;
    check(raw.apology_terminals < batch.apology_terminals, "apology terminals not reduced")?;
    Ok(format!(
        "all-apology {}→{}, apology terminals {}→{}",
        batch.all_apology_states, raw.all_apology_states, batch.apology_terminals, raw.apology_terminals
    ))
}

fn ac9() -> Outcome {
    let with = decoy_scenario(MemoryKind::Reflection);
    let first = with.record.trajectories.iter().find(|t| t.iteration_index == 0).ok_or("no iteration-0 trajectory")?;
    check(first.contexts.iter().all(|c| c.is_empty()), "iteration-0 bundle not empty")?;
    check(!with.correct_iterations.is_empty(), "reflection never reaches the answer")?;
    check(with.correct_iterations.iter().all(|&i| i >= 1), "answer reached at iteration 0")?;
    let without = decoy_scenario(MemoryKind::None);
    check(without.correct_iterations.is_empty(), "no-memory reaches the answer")?;
    Ok(format!("first correct iteration {}", with.correct_iterations[0]))
}

fn ac10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let demo = fixture("demo.toml");
    let run = |i: usize| -> Result<Vec<(String, Vec<u8>)>, String> {
        let dir = tmp.path().join(format!("r{i}"));
        let mut files = Vec::new();
        for args in [
            vec!["validate", demo.to_str().unwrap()],
            vec!["run", demo.to_str().unwrap(), "--out", dir.to_str().unwrap()],
            vec!["analyze", dir.to_str().unwrap()],
        ] {
            let (mut out, mut err) = (Vec::new(), Vec::new());
            let code = main_with_args(std::iter::once("scopemem").chain(args.iter().copied()), &mut out, &mut err);
            if code != 0 {
                return Err(format!("{} exited {code}: {}", args[0], String::from_utf8_lossy(&err)));
            }
            let text = String::from_utf8_lossy(&out).replace(dir.to_str().unwrap(), "<out>");
            files.push((args[0].to_string(), text.into_bytes()));
        }
        files.extend(read_dir_sorted(&dir));
        Ok(files)
    };
    let a = run(0)?;
    let b = run(1)?;
    check(a == b, "outputs differ between runs")?;
    Ok(format!("{} outputs and artifacts identical", a.len()))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap_or_default()))
        .collect();
    v.sort();
    v
}

fn main() {
    let criteria: [(&str, &str, Duration, fn() -> Outcome); 10] = [
        ("AC1", "McNemar golden table", Duration::from_secs(1), ac1),
        ("AC2", "significance markers", Duration::from_secs(1), ac2),
        ("AC3", "admissibility shape", Duration::from_secs(1), ac3),
        ("AC4", "augmentor pipeline contracts", Duration::from_secs(10), ac4),
        ("AC5", "expansion contracts", Duration::from_secs(5), ac5),
        ("AC6", "backprop", Duration::from_secs(5), ac6),
        ("AC7", "fact memory skips discovery", Duration::from_secs(30), ac7),
        ("AC8", "sibling memory reduces give-up", Duration::from_secs(30), ac8),
        ("AC9", "reflection escapes decoy", Duration::from_secs(10), ac9),
        ("AC10", "end-to-end determinism", Duration::from_secs(60), ac10),
    ];
    let mut failed = 0;
    for (id, name, limit, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > limit => Err(format!("{detail}; took {took:.2?} > {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {id:<4} {name} ({took:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id:<4} {name} ({took:.2?}): {why}");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
