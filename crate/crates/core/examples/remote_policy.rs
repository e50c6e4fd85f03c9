//! Drives one best-of-N search with a chat-completions policy. Without an
//! endpoint argument a local stub server answers, so the example runs offline.
//!
//! Usage: `cargo run --example remote_policy [endpoint model]`
//! The bearer token is read from `SCOPEMEM_API_KEY`.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;

use scopemem::augment::AugmentorStack;
use scopemem::envs::TaskSet;
use scopemem::models::{ChatClient, HashEmbedder, Models, RemoteConfig, RemotePolicy, Role, ScriptedAugmentor, ScriptedReward};
use scopemem::search::{run_search, SearchConfig, SearchMethod};
use scopemem::types::PricingTable;

fn stub() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        let replies = ["LIST_TABLES()", "SCHEMA(Teams)", r#"QUERY((select "Teams" (City) (= Team Orcas)))"#, "Tacoma"];
        for (i, stream) in listener.incoming().flatten().enumerate() {
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).ok();
            let reply = serde_json::json!({
                "choices": [{"message": {"content": replies[i % replies.len()]}}],
                "usage": {"prompt_tokens": len / 4, "completion_tokens": 8},
            })
            .to_string();
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    url
}

fn main() -> Result<(), scopemem::Error> {
    let mut args = std::env::args().skip(1);
    let (endpoint, model) = match (args.next(), args.next()) {
        (Some(e), Some(m)) => (e, m),
        _ => (stub(), "stub".to_string()),
    };
    let f = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let set = TaskSet::load(&f.join("tasks/toysql.json"))?;
    let task = set.tasks.iter().find(|t| t.id == "sql-09").expect("fixture task");

    let policy = RemotePolicy::new(ChatClient::new(RemoteConfig::new(endpoint, model), Role::Policy));
    let reward = ScriptedReward::from_files(&[f.join("scripts/toysql.reward.json")])?;
    let augmentor = ScriptedAugmentor::new(Default::default())?;
    let embedder = HashEmbedder::default();
    let models = Models {
        policy: &policy,
        reward: &reward,
        augmentor: &augmentor,
        embedder: &embedder,
    };
    let config = SearchConfig {
        budget: 1,
        ..SearchConfig::for_method(SearchMethod::BestOfN)
    };
    let mut env = task.environment();
    let record = run_search(task, env.as_mut(), models, &mut AugmentorStack::none(), &config, 0)?;
    for s in &record.trajectories[0].steps {
        println!("{}", s.render_line());
    }
    let pricing = PricingTable::default();
    println!(
        "answer {:?} correct {}  policy tokens {}/{}  est. cost ${:.5}",
        record.final_answer,
        set.key.grade(&task.id, record.final_answer.as_deref())?,
        policy.client().telemetry().policy_tokens_in,
        policy.client().telemetry().policy_tokens_out,
        record.telemetry.cost_estimate(&pricing)
    );
    Ok(())
}
