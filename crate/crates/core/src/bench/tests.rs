use super::*;
use crate::model::ModelConfig;

fn small(methods: Vec<Method>) -> BenchConfig {
    BenchConfig {
        node_sizes: vec![3],
        rule_sizes: vec![6],
        instances_per_cell: 5,
        methods,
        record_timing: false,
        ..BenchConfig::desk()
    }
}

fn row(method: &str, n: usize, seed: u64, rejection: f64) -> BenchRow {
    BenchRow {
        method: method.into(),
        num_nodes: n,
        num_rules: 10,
        instance_seed: seed,
        rejection_rate: rejection,
        omega_max: 0.1,
        empty_nodes: 0.0,
        objective_value: 0.0,
        solve_ms: 1.0,
        proven_optimal: (method == "oracle").then_some(true),
    }
}

#[test]
fn method_labels_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.label().parse::<Method>().unwrap(), m);
    }
    assert!("cplex".parse::<Method>().is_err());
    let json = serde_json::to_string(&vec![Method::Random, Method::Heuristic(CriticalVariant::ArAc)]).unwrap();
    assert_eq!(json, r#"["random","AR-AC"]"#);
}

#[test]
fn row_count_and_determinism() {
    let cfg = small(vec![Method::Heuristic(CriticalVariant::DrDc), Method::Random]);
    let a = run_benchmark(&cfg, &[]).unwrap();
    assert_eq!(a.len(), 10);
    assert_eq!(a, run_benchmark(&cfg, &[]).unwrap());
    assert_eq!(a[0].method, "DR-DC");
    assert_eq!(a[1].method, "random");
    assert_eq!(a[0].instance_seed, a[1].instance_seed);
}

#[test]
fn adding_methods_keeps_instances() {
    let a = run_benchmark(&small(vec![Method::Random]), &[]).unwrap();
    let b = run_benchmark(&small(vec![Method::Oracle, Method::Random]), &[]).unwrap();
    let seeds_a: Vec<u64> = a.iter().map(|r| r.instance_seed).collect();
    let seeds_b: Vec<u64> = b.iter().filter(|r| r.method == "random").map(|r| r.instance_seed).collect();
    assert_eq!(seeds_a, seeds_b);
    assert_eq!(a, b.into_iter().filter(|r| r.method == "random").collect::<Vec<_>>());
}

#[test]
fn oracle_rows_are_proven_and_dominate() {
    let cfg = BenchConfig {
        oracle_time_limit_ms: 60_000,
        objective: Objective::CriticalAware,
        ..small(Method::ALL[1..].to_vec())
    };
    let rows = run_benchmark(&cfg, &[]).unwrap();
    for chunk in rows.chunks(cfg.methods.len()) {
        let oracle = chunk.iter().find(|r| r.method == "oracle").unwrap();
        assert_eq!(oracle.proven_optimal, Some(true));
        for r in chunk {
            assert!(r.objective_value <= oracle.objective_value + 1e-9, "{r:?} vs {oracle:?}");
        }
    }
}

#[test]
fn agent_needs_matching_checkpoints() {
    let cfg = BenchConfig {
        agent_seeds: 1,
        ..small(vec![Method::Agent])
    };
    assert!(matches!(run_benchmark(&cfg, &[]), Err(BenchError::Config(_))));
    let missing = PathBuf::from("/nonexistent/actor.ckpt");
    assert!(matches!(run_benchmark(&cfg, &[missing]), Err(BenchError::Config(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    let small_model = ModelConfig {
        embed_dim: 8,
        num_heads: 2,
        ..ModelConfig::desk()
    };
    Actor::<f32>::new(small_model.clone(), 1).unwrap().save(&path).unwrap();
    let rows = run_benchmark(&cfg, &[path.clone()]).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.method == "agent" && r.proven_optimal.is_none()));

    let cost = BenchConfig {
        objective: Objective::CostAware,
        ..cfg
    };
    assert!(matches!(run_benchmark(&cost, &[path]), Err(BenchError::Config(_))));
}

#[test]
fn gap_examples() {
    let mut rows = Vec::new();
    for seed in 0..4 {
        rows.push(row("oracle", 10, seed, 0.0));
        rows.push(row("same", 10, seed, 0.0));
        rows.push(row("worse", 10, seed, 0.1));
    }
    let gaps = gap_table(&rows, "oracle", Objective::Greedy).unwrap();
    assert_eq!(gaps.len(), 2);
    assert_eq!((gaps[0].method.as_str(), gaps[0].rejection_rate_gap_pp), ("same", 0.0));
    assert_eq!(gaps[1].method, "worse");
    assert!((gaps[1].rejection_rate_gap_pp - 10.0).abs() < 1e-12);
    assert_eq!(gaps[1].reference_proven_fraction, Some(1.0));
    assert!(gaps[1].omega_max_gap.is_none());

    rows.push(row("worse", 10, 99, 0.0));
    match gap_table(&rows, "oracle", Objective::Greedy) {
        Err(BenchError::MissingPairs(keys)) => assert_eq!(keys, vec!["worse@n10r10s99".to_string()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn timing_uses_largest_rule_count() {
    assert!(timing_report(&[]).is_empty());
    let mut rows = vec![row("random", 5, 0, 0.0), row("random", 5, 1, 0.0)];
    rows[1].solve_ms = 3.0;
    let mut small_cell = row("random", 5, 2, 0.0);
    small_cell.num_rules = 2;
    small_cell.solve_ms = 100.0;
    rows.push(small_cell);
    let t = timing_report(&rows);
    assert_eq!(t.len(), 1);
    assert_eq!((t[0].num_rules, t[0].samples, t[0].mean_ms, t[0].std_ms), (10, 2, 2.0, 1.0));
    assert!((t[0].per_decision_ms - 0.2).abs() < 1e-12);
}

#[test]
fn emit_round_trips_and_plot_files() {
    let dir = tempfile::tempdir().unwrap();
    let rows = run_benchmark(&small(vec![Method::Oracle, Method::Heuristic(CriticalVariant::ArDc)]), &[]).unwrap();
    for name in ["rows.csv", "rows.jsonl"] {
        let p = dir.path().join(name);
        emit(&rows, RowFormat::from_path(&p), &p).unwrap();
        assert_eq!(read_rows(&p).unwrap(), rows);
    }
    let text = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
    assert!(text.starts_with("method,num_nodes,num_rules,instance_seed,rejection_rate,omega_max,empty_nodes,objective_value,solve_ms,proven_optimal\n"));

    let sweep: Vec<BenchRow> = (1..=5).flat_map(|n| [row("a", n, 0, 0.1), row("b", n, 0, 0.2)]).collect();
    let files = plot_data(&sweep, &dir.path().join("plots")).unwrap();
    assert_eq!(files.len(), 15);
    assert_eq!(files.iter().filter(|f| f.to_string_lossy().contains("rejection_rate_")).count(), 5);
    let first = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(first, "num_rules,a,b\n10,0.1,0.2\n");
    assert!(plot_data(&[], &dir.path().join("none")).unwrap().is_empty());
}
