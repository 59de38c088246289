use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BenchError, BenchRow};
use crate::oracle::Objective;

/// Mean gap of one method against the reference at one node size. The
/// rejection-rate gap is in percentage points; the others are raw
/// differences. Positive means the method's value is larger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub num_nodes: usize,
    pub method: String,
    pub pairs: usize,
    pub rejection_rate_gap_pp: f64,
    pub omega_max_gap: Option<f64>,
    pub empty_nodes_gap: Option<f64>,
    /// Share of reference rows at this node size that were proven optimal;
    /// absent when the reference reports no proof status.
    pub reference_proven_fraction: Option<f64>,
}

fn first_seen_order<'a>(rows: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = Vec::<String>::new();
    for m in rows {
        if !seen.iter().any(|s| s == m) {
            seen.push(m.to_string());
        }
    }
    seen
}

pub fn gap_table(rows: &[BenchRow], reference: &str, objective: Objective) -> Result<Vec<GapRow>, BenchError> {
    type Key = (usize, usize, u64);
    let key = |r: &BenchRow| (r.num_nodes, r.num_rules, r.instance_seed);
    let refs: HashMap<Key, &BenchRow> = rows.iter().filter(|r| r.method == reference).map(|r| (key(r), r)).collect();

    let mut missing = BTreeSet::new();
    #[derive(Default)]
    struct Acc {
        pairs: usize,
        rejection: f64,
        omega: f64,
        empty: f64,
    }
    let mut acc: BTreeMap<(usize, String), Acc> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.method != reference) {
        let Some(base) = refs.get(&key(r)) else {
            missing.insert(format!("{}@n{}r{}s{}", r.method, r.num_nodes, r.num_rules, r.instance_seed));
            continue;
        };
        let a = acc.entry((r.num_nodes, r.method.clone())).or_default();
        a.pairs += 1;
        a.rejection += (r.rejection_rate - base.rejection_rate) * 100.0;
        a.omega += r.omega_max - base.omega_max;
        a.empty += r.empty_nodes - base.empty_nodes;
    }
    if !missing.is_empty() {
        return Err(BenchError::MissingPairs(missing.into_iter().collect()));
    }

    let mut proven: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in refs.values() {
        if let Some(p) = r.proven_optimal {
            let e = proven.entry(r.num_nodes).or_default();
            e.0 += p as usize;
            e.1 += 1;
        }
    }

    let order = first_seen_order(rows.iter().filter(|r| r.method != reference).map(|r| r.method.as_str()));
    let mut out: Vec<GapRow> = acc
        .into_iter()
        .map(|((n, method), a)| {
            let k = a.pairs as f64;
            GapRow {
                num_nodes: n,
                method,
                pairs: a.pairs,
                rejection_rate_gap_pp: a.rejection / k,
                omega_max_gap: (objective == Objective::CriticalAware).then_some(a.omega / k),
                empty_nodes_gap: (objective == Objective::CostAware).then_some(a.empty / k),
                reference_proven_fraction: proven.get(&n).map(|(p, t)| *p as f64 / *t as f64),
            }
        })
        .collect();
    out.sort_by_key(|g| (g.num_nodes, order.iter().position(|m| *m == g.method)));
    Ok(out)
}

/// Solve-time statistics per method and node size, taken at the largest
/// rule count present for that pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub num_nodes: usize,
    pub num_rules: usize,
    pub samples: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub per_decision_ms: f64,
}

pub fn timing_report(rows: &[BenchRow]) -> Vec<TimingRow> {
    let order = first_seen_order(rows.iter().map(|r| r.method.as_str()));
    let mut groups: BTreeMap<(usize, usize), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        let m = order.iter().position(|o| *o == r.method).expect("collected above");
        groups.entry((m, r.num_nodes)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((m, n), group)| {
            let largest = group.iter().map(|r| r.num_rules).max().unwrap_or(0);
            let times: Vec<f64> = group.iter().filter(|r| r.num_rules == largest).map(|r| r.solve_ms).collect();
            let k = times.len() as f64;
            let mean = times.iter().sum::<f64>() / k;
            let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / k;
            TimingRow {
                method: order[m].clone(),
                num_nodes: n,
                num_rules: largest,
                samples: times.len(),
                mean_ms: mean,
                std_ms: var.sqrt(),
                per_decision_ms: if largest > 0 { mean / largest as f64 } else { 0.0 },
            }
        })
        .collect()
}

type Kpi = fn(&BenchRow) -> f64;

const PLOT_KPIS: [(&str, Kpi); 3] = [
    ("rejection_rate", |r| r.rejection_rate),
    ("omega_max", |r| r.omega_max),
    ("empty_nodes", |r| r.empty_nodes),
];

/// One CSV per KPI and node size: `num_rules` then one mean column per
/// method. Returns the files written, in a stable order.
pub fn plot_data(rows: &[BenchRow], dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(dir)?;
    let methods = first_seen_order(rows.iter().map(|r| r.method.as_str()));
    let node_sizes: BTreeSet<usize> = rows.iter().map(|r| r.num_nodes).collect();
    let mut written = Vec::new();
    for (kpi, get) in PLOT_KPIS {
        for &n in &node_sizes {
            let mut cells: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.num_nodes == n) {
                let m = methods.iter().position(|x| *x == r.method).expect("collected above");
                let slot = cells.entry(r.num_rules).or_insert_with(|| vec![(0.0, 0); methods.len()]);
                slot[m].0 += get(r);
                slot[m].1 += 1;
            }
            let path = dir.join(format!("{kpi}_nodes{n}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec!["num_rules".to_string()];
            header.extend(methods.iter().cloned());
            w.write_record(&header)?;
            for (rules, sums) in cells {
                let mut record = vec![rules.to_string()];
                record.extend(sums.iter().map(|(s, c)| if *c == 0 { String::new() } else { (s / *c as f64).to_string() }));
                w.write_record(&record)?;
            }
            w.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}
