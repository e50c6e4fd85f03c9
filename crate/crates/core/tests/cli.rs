mod common;

use std::path::Path;

use common::fixture;
use scopemem::cli::main_with_args;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("scopemem").chain(args.iter().copied());
    let code = main_with_args(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn validate_reports_each_cell() {
    let demo = fixture("demo.toml");
    let (code, out, _) = cli(&["validate", path(&demo)]);
    assert_eq!(code, 0);
    assert!(out.lines().all(|l| l.starts_with("OK")));

    let bad = fixture("inadmissible.toml");
    let (code, out, _) = cli(&["validate", path(&bad)]);
    assert_eq!(code, 2);
    assert!(out.contains("REJECT  toysql-beam-refl: CROSS_TRAJECTORY_ON_SINGLE_ROUND_BEAM"));
    assert!(out.contains("REJECT  shell-mcts-none: NON_SERIALIZABLE"));
    assert!(out.contains("[---]"));
    assert!(out.contains("OK      toykg-mcts-fact"));
}

#[test]
fn malformed_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = \"x\"\n").unwrap();
    let (code, _, err) = cli(&["validate", path(&cfg)]);
    assert_eq!(code, 2);
    assert!(err.contains("bad.toml"));
    let (code, _, _) = cli(&["frobnicate"]);
    assert_eq!(code, 2);
}

#[test]
fn run_and_analyze_are_byte_identical_across_runs() {
    let demo = fixture("demo.toml");
    let tmp = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    let mut snaps = Vec::new();
    for (i, jobs) in ["1", "1", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let (code, _, err) = cli(&["run", path(&demo), "--out", path(&out), "--jobs", jobs]);
        assert_eq!(code, 0, "{err}");
        let json = tmp.path().join(format!("report{i}.json"));
        let (code, text, err) = cli(&["analyze", path(&out), "--json", path(&json)]);
        assert_eq!(code, 0, "{err}");
        reports.push((text, std::fs::read(&json).unwrap()));
        snaps.push(snapshot(&out));
    }
    assert_eq!(snaps[0], snaps[1]);
    assert_eq!(snaps[0], snaps[2]);
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
    assert!(reports[0].0.contains("EXPERIMENT MATRIX"));
    assert!(reports[0].0.contains("MCNEMAR"));
}

#[test]
fn seed_override_changes_the_run() {
    let demo = fixture("demo.toml");
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(cli(&["run", path(&demo), "--out", path(&a), "--seed", "1"]).0, 0);
    assert_eq!(cli(&["run", path(&demo), "--out", path(&b), "--seed", "2"]).0, 0);
    let manifest = |d: &Path| std::fs::read_to_string(d.join("manifest.json")).unwrap();
    assert_ne!(manifest(&a), manifest(&b));
    assert!(manifest(&a).contains("\"seed\": 1"));
}

#[test]
fn analyze_rejects_unknown_baseline() {
    let demo = fixture("demo.toml");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(cli(&["run", path(&demo), "--out", path(&out)]).0, 0);
    let (code, _, err) = cli(&["analyze", path(&out), "--baseline", "no-such-cell"]);
    assert_eq!(code, 2);
    assert!(err.contains("no-such-cell"));
}

#[test]
fn unreachable_endpoint_fails_only_its_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture("");
    let cfg = format!(
        r#"
seed = 3
[models]
policy = ["{fx}/scripts/toysql.policy.json"]
reward = ["{fx}/scripts/toysql.reward.json"]
augmentor = ["{fx}/scripts/toysql.augmentor.json"]

[benchmarks.toysql]
tasks = "{fx}/tasks/toysql.json"

[benchmarks.toykg]
tasks = "{fx}/tasks/toykg.json"
reward = ["{fx}/scripts/toykg.reward.json"]
augmentor = ["{fx}/scripts/toykg.augmentor.json"]
policy = {{ endpoint = "http://127.0.0.1:1/v1/chat/completions", model = "m", retries = 0, timeout_secs = 2 }}

[[cells]]
id = "sql-none"
benchmark = "toysql"
memory = ["none"]

[[cells]]
id = "kg-none"
benchmark = "toykg"
memory = ["none"]
"#,
        fx = fx.to_str().unwrap().trim_end_matches('/')
    );
    let cfg_path = tmp.path().join("exp.toml");
    std::fs::write(&cfg_path, cfg).unwrap();
    let out = tmp.path().join("run");
    let (code, text, _) = cli(&["run", path(&cfg_path), "--out", path(&out)]);
    assert_eq!(code, 1);
    assert!(text.contains("kg-none") && text.contains("FAILED"));
    assert!(out.join("sql-none.verdicts.jsonl").exists());
    assert!(!out.join("kg-none.verdicts.jsonl").exists());
    let (code, report, err) = cli(&["analyze", path(&out)]);
    assert_eq!(code, 0, "{err}");
    assert!(report.contains("FAILED"));
}
