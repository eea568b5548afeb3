//! Oracle comparisons shared by the core integration tests and the acceptance suite.
//! Each check returns a one-line summary, or a description of the first mismatch.

use fiducial_forest::fiducial::{log_weight, normalize_weights, percentile};
use fiducial_forest::rng::make_stream;
use fiducial_forest::tree::{best_split, SPLIT_TIE_TOLERANCE};
use fiducial_forest::{Dataset, RandomStream};
use serde::Deserialize;

#[derive(Deserialize)]
struct OracleFile {
    cases: Vec<OracleCase>,
}

#[derive(Deserialize)]
struct OracleCase {
    n: usize,
    trees: Vec<OracleTree>,
}

#[derive(Deserialize)]
struct OracleTree {
    l: usize,
    sse: f64,
    log_weight: String,
    weight: String,
}

fn relative_error(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Log-weights and normalized weights against 50-digit values.
pub fn weights_match_high_precision_oracle() -> Result<String, String> {
    let text = include_str!("../data/weight_oracle.json");
    let file: OracleFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut worst_log = 0.0f64;
    let mut worst_weight = 0.0f64;
    for case in &file.cases {
        let logs: Vec<f64> = case
            .trees
            .iter()
            .map(|t| log_weight(case.n, t.l, t.sse))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let weights = normalize_weights(&logs).map_err(|e| e.to_string())?;
        for ((tree, got_log), got_weight) in case.trees.iter().zip(&logs).zip(&weights) {
            let want_log: f64 = tree.log_weight.parse().map_err(|_| "bad oracle value")?;
            let want_weight: f64 = tree.weight.parse().map_err(|_| "bad oracle value")?;
            worst_log = worst_log.max(relative_error(*got_log, want_log));
            // Weights below the smallest normal double cannot carry relative accuracy.
            if want_weight >= f64::MIN_POSITIVE {
                worst_weight = worst_weight.max(relative_error(*got_weight, want_weight));
            } else if *got_weight >= 1e-300 {
                return Err(format!("weight {got_weight:e} should be negligible"));
            }
        }
    }
    let summary = format!(
        "{} cases, worst relative error: log-weight {worst_log:.1e}, weight {worst_weight:.1e}",
        file.cases.len()
    );
    if file.cases.len() == 100 && worst_log <= 1e-10 && worst_weight <= 1e-10 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

/// Brute-force split search: every midpoint between distinct values, child
/// losses from two-pass sums, same tie rule as the library.
fn exhaustive_split(
    data: &Dataset,
    rows: &[usize],
    features: &[usize],
    min_node_size: usize,
) -> Option<(usize, f64, f64)> {
    let y = data.response();
    let loss = |subset: &[usize]| -> f64 {
        if subset.is_empty() {
            return 0.0;
        }
        let mean = subset.iter().map(|&r| y[r]).sum::<f64>() / subset.len() as f64;
        subset.iter().map(|&r| (y[r] - mean).powi(2)).sum()
    };
    let parent = loss(rows);
    let mut all = Vec::new();
    let mut sorted_features = features.to_vec();
    sorted_features.sort_unstable();
    sorted_features.dedup();
    for &f in &sorted_features {
        let mut values: Vec<f64> = rows.iter().map(|&r| data.value(r, f)).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for pair in values.windows(2) {
            let mut cut = (pair[0] + pair[1]) / 2.0;
            if cut >= pair[1] {
                cut = pair[0];
            }
            let left: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&r| data.value(r, f) <= cut)
                .collect();
            let right: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&r| data.value(r, f) > cut)
                .collect();
            if left.len() < min_node_size.max(1) || right.len() < min_node_size.max(1) {
                continue;
            }
            all.push((f, cut, parent - loss(&left) - loss(&right)));
        }
    }
    let best = all.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    if parent <= 0.0 || !(best > 1e-12 * parent) {
        return None;
    }
    all.into_iter()
        .find(|c| c.2 >= best - SPLIT_TIE_TOLERANCE * parent)
}

fn random_instance(stream: &mut RandomStream) -> (Dataset, Vec<usize>, Vec<usize>, usize) {
    let n = 2 + stream.sample_index(199);
    let p = 1 + stream.sample_index(5);
    // Coarse grids create repeated values and exact ties between candidates.
    let grid = [2, 5, 20, 1000][stream.sample_index(4)] as f64;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..p)
                .map(|_| (stream.next_unit() * grid).floor() / grid)
                .collect()
        })
        .collect();
    let response: Vec<f64> = rows
        .iter()
        .map(|r| {
            if stream.next_unit() < 0.3 {
                (r[0] * 4.0).floor()
            } else {
                10.0 * r[0] + stream.sample_normal()
            }
        })
        .collect();
    let data = Dataset::from_rows(&rows, response).unwrap();
    let subset_len = 2 + stream.sample_index(n - 1);
    let mut subset = stream.sample_without_replacement(n, subset_len).unwrap();
    subset.sort_unstable();
    let n_features = 1 + stream.sample_index(p);
    let features = stream.sample_without_replacement(p, n_features).unwrap();
    let min_node_size = 1 + stream.sample_index(4);
    (data, subset, features, min_node_size)
}

/// 500 random split searches with `n <= 200`, `p <= 5`.
pub fn best_split_matches_exhaustive_search() -> Result<String, String> {
    let mut stream = make_stream(7, &[1]);
    let mut splits_found = 0;
    for case in 0..500 {
        let (data, rows, features, min_node_size) = random_instance(&mut stream);
        let fast = best_split(&data, &rows, &features, min_node_size);
        let slow = exhaustive_split(&data, &rows, &features, min_node_size);
        match (fast, slow) {
            (None, None) => {}
            (Some(f), Some((feature, value, reduction)))
                if f.feature == feature
                    && (f.value - value).abs() <= 1e-12
                    && (f.loss_reduction - reduction).abs() <= 1e-8 * reduction.abs().max(1.0) =>
            {
                splits_found += 1;
            }
            (f, s) => return Err(format!("case {case}: library {f:?}, exhaustive {s:?}")),
        }
    }
    if splits_found > 400 {
        Ok(format!("500 instances agree ({splits_found} with a split)"))
    } else {
        Err(format!("only {splits_found} instances had a split"))
    }
}

/// Hyndman-Fan type 7 written from its definition on the 0-based order statistics.
fn type7(values: &[f64], q: f64) -> f64 {
    let mut x = values.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (x.len() - 1) as f64 * q;
    let below = h.floor() as usize;
    if below + 1 >= x.len() {
        return x[x.len() - 1];
    }
    let fraction = h - below as f64;
    if fraction == 0.0 {
        x[below]
    } else {
        x[below] + fraction * (x[below + 1] - x[below])
    }
}

/// 1000 random vectors, eight quantiles each, compared bit for bit.
pub fn percentile_matches_type7_exactly() -> Result<String, String> {
    let mut stream = make_stream(7, &[2]);
    for case in 0..1000 {
        let len = 1 + stream.sample_index(300);
        let values: Vec<f64> = (0..len).map(|_| stream.sample_normal() * 10.0).collect();
        for q in [0.0, 0.025, 0.05, 0.5, 0.95, 0.975, 1.0, stream.next_unit()] {
            let got = percentile(&values, q).map_err(|e| e.to_string())?;
            let want = type7(&values, q);
            if got.to_bits() != want.to_bits() {
                return Err(format!("vector {case}, q = {q}: {got} vs {want}"));
            }
        }
    }
    Ok("1000 vectors x 8 quantiles identical".into())
}
