//! Runs one coverage configuration and prints the three coverage records.
//!
//! cargo run --release -p fiducial-forest --example coverage_study -- xor 200 50 0.95 200

use fiducial_forest::experiments::{run_coverage_experiment, SimConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let get = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let function = get(0, "cosine").parse().expect("function");
    let mut config = SimConfig::new(
        function,
        get(1, "200").parse().unwrap(),
        get(2, "2").parse().unwrap(),
    );
    config.level = get(3, "0.95").parse().unwrap();
    config.reps = get(4, "200").parse().unwrap();
    config.master_seed = get(5, "1").parse().unwrap();
    if get(6, "projection") == "honest" {
        config.forest.sse_mode = fiducial_forest::SseMode::HonestAll;
    }
    if let Some(m) = args.get(7) {
        config.forest.min_node_size = m.parse().unwrap();
    }
    if let Some(l) = args.get(8) {
        config.forest.max_leaves = Some(l.parse().unwrap());
    }
    if let Some(m) = args.get(9) {
        config.forest.mtry = Some(m.parse().unwrap());
    }
    let report = run_coverage_experiment(&config).expect("experiment");
    for r in &report.records {
        println!(
            "{:<8} n={:<4} p={:<4} {:<17} level={:.2} coverage={:.3} (se {:.3}) width={:.3} reps={} failed={}",
            r.function.name(), r.n, r.p, r.target.name(), r.level, r.coverage, r.mc_stderr, r.mean_width, r.reps, r.failed_reps
        );
    }
    println!("runtime {} ms", report.runtime_ms);
}
