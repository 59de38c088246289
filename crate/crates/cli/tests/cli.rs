use std::path::Path;
use std::process::{Command, Output};

fn ruledist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ruledist"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ruledist(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    ruledist(args).status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_is_deterministic_and_seed_sensitive() {
    let a = ok(&["--seed", "7", "gen", "--nodes", "3", "--rules", "5", "--count", "3"]);
    let b = ok(&["gen", "--nodes", "3", "--rules", "5", "--count", "3", "--seed", "7"]);
    let c = ok(&["--seed", "8", "gen", "--nodes", "3", "--rules", "5", "--count", "3"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 3);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("inst");
    ok(&["--seed", "7", "gen", "--nodes", "3", "--rules", "5", "--count", "3", "--out", p(&out)]);
    let first = std::fs::read_to_string(out.join("instance_0000.json")).unwrap();
    assert_eq!(first, a.lines().next().unwrap());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    std::fs::write(&cfg, r#"{"num_nodes": 2, "num_rules": 4}"#).unwrap();
    let line = ok(&["gen", "--config", p(&cfg), "--rules", "6"]);
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), 2);
    assert_eq!(v["rules"].as_array().unwrap().len(), 6);

    std::fs::write(&cfg, r#"{"num_nodez": 2}"#).unwrap();
    assert_eq!(code(&["gen", "--config", p(&cfg)]), 1);
    std::fs::write(&cfg, "{not json").unwrap();
    assert_eq!(code(&["gen", "--config", p(&cfg)]), 2);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["solve", "--method", "nope", "--instance", "x.json"]), 1);
    assert_eq!(code(&["gen", "--count", "0"]), 1);
    assert_eq!(code(&["solve", "--method", "random", "--instance", "/nonexistent/i.json"]), 2);

    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    std::fs::write(&inst, ok(&["gen", "--nodes", "2", "--rules", "3"])).unwrap();
    assert_eq!(code(&["solve", "--method", "agent", "--instance", p(&inst)]), 1);

    let garbage = dir.path().join("actor.ckpt");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    assert_eq!(code(&["solve", "--method", "agent", "--checkpoint", p(&garbage), "--instance", p(&inst)]), 2);

    let rows = dir.path().join("rows.csv");
    std::fs::write(&rows, "method,num_nodes\nfoo,bar\n").unwrap();
    assert_eq!(code(&["report", "--rows", p(&rows)]), 2);
}

#[test]
fn solve_and_oracle_print_json() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    std::fs::write(&inst, ok(&["--seed", "4", "gen", "--nodes", "3", "--rules", "6"])).unwrap();

    let mut accepted = Vec::new();
    for method in ["DR-DC", "DR-AC", "AR-DC", "AR-AC", "random", "oracle"] {
        let text = ok(&["solve", "--instance", p(&inst), "--method", method]);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let assignment = v["assignment"].as_array().unwrap();
        assert_eq!(assignment.len(), 6);
        accepted.push(assignment.iter().filter(|a| a.as_i64() != Some(-1)).count());
    }
    assert!(accepted[..5].iter().all(|a| *a <= accepted[5]));

    let report: serde_json::Value = serde_json::from_str(&ok(&["oracle", "--instance", p(&inst), "--objective", "critical"])).unwrap();
    assert_eq!(report["proven_optimal"], true);
    assert!(report["objective"].as_f64().unwrap() >= 0.0);
}

#[test]
fn train_eval_report_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let train_args = ["--seed", "2", "train", "--out", p(&run), "--steps", "3", "--batch-size", "2", "--nodes", "3", "--rules", "4", "--no-wall-time"];
    ok(&train_args);
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert!(log.starts_with("step,mean_return,actor_loss,critic_loss,mean_entropy,grad_norm_actor,grad_norm_critic,wall_ms\n"));
    assert_eq!(log.lines().count(), 4);
    let first_ckpt = std::fs::read(run.join("actor.ckpt")).unwrap();

    ok(&train_args);
    assert_eq!(std::fs::read_to_string(run.join("train_log.csv")).unwrap(), log);
    assert_eq!(std::fs::read(run.join("actor.ckpt")).unwrap(), first_ckpt);

    let rows = dir.path().join("rows.csv");
    let actor = run.join("actor.ckpt");
    ok(&["eval", "--checkpoint", p(&actor), "--nodes", "3,4", "--rules", "5", "--instances", "2", "--methods", "oracle", "--no-timing", "--out", p(&rows)]);
    let text = std::fs::read_to_string(&rows).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);
    assert!(text.lines().nth(1).unwrap().starts_with("agent,3,5,"));

    let gaps = ok(&["report", "--rows", p(&rows)]);
    assert!(gaps.starts_with("num_nodes,method,pairs,rejection_rate_gap_pp"));
    assert_eq!(gaps.lines().count(), 3);
    let timing = ok(&["report", "--rows", p(&rows), "--table", "timing"]);
    assert_eq!(timing.lines().count(), 5);

    let plots = dir.path().join("plots");
    let listed = ok(&["plotdata", "--rows", p(&rows), "--out", p(&plots)]);
    assert_eq!(listed.lines().count(), 6);
    assert_eq!(std::fs::read_to_string(plots.join("rejection_rate_nodes3.csv")).unwrap().lines().next(), Some("num_rules,agent,oracle"));
}

#[test]
fn bench_rows_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        ok(&["--seed", "11", "bench", "--nodes", "3", "--rules", "4,6", "--instances", "3", "--oracle-node-limit", "100000", "--no-timing", "--out", p(out)]);
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 2 * 3 * 6);
    assert!(!text.contains("\"agent\""));

    assert_eq!(code(&["bench", "--methods", "agent", "--instances", "1", "--out", p(&a)]), 1);
    assert_eq!(code(&["bench", "--nodes", "", "--out", p(&a)]), 1);
}
