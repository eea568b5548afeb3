//! Simulation studies: synthetic test functions, interval coverage, the
//! sigma sample histogram and the concentration of fiducial mass on the
//! smallest true trees.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fiducial::{self, generate_ensemble, normalize_weights};
use crate::rng::{phase, RandomStream, StreamKey};
use crate::tree::{train_forest, ForestParams, HonestTree, Node, TreeStructure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    Cosine,
    Xor,
    And,
}

impl TestFunction {
    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Cosine => "cosine",
            TestFunction::Xor => "xor",
            TestFunction::And => "and",
        }
    }

    /// Number of leading features the function depends on.
    pub fn active_dimension(self) -> usize {
        match self {
            TestFunction::Cosine => 2,
            TestFunction::Xor | TestFunction::And => 4,
        }
    }

    pub fn eval(self, x: &[f64]) -> Result<f64> {
        if x.len() < self.active_dimension() {
            return Err(Error::InvalidInput(format!(
                "{} needs {} features, got {}",
                self.name(),
                self.active_dimension(),
                x.len()
            )));
        }
        let xor = |a: bool, b: bool| f64::from(u8::from(a ^ b));
        Ok(match self {
            TestFunction::Cosine => 3.0 * (std::f64::consts::PI * (x[0] + x[1])).cos(),
            TestFunction::Xor => 5.0 * xor(x[0] > 0.6, x[1] > 0.6) + xor(x[2] > 0.6, x[3] > 0.6),
            TestFunction::And => {
                if x[..4].iter().all(|&v| v > 0.3) {
                    10.0
                } else {
                    0.0
                }
            }
        })
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(TestFunction::Cosine),
            "xor" => Ok(TestFunction::Xor),
            "and" => Ok(TestFunction::And),
            other => Err(Error::InvalidInput(format!(
                "unknown test function `{other}`"
            ))),
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn test_function(name: &str, x: &[f64]) -> Result<f64> {
    name.parse::<TestFunction>()?.eval(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub function: TestFunction,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub reps: usize,
    pub level: f64,
    pub forest: ForestParams,
    pub draws: usize,
    pub master_seed: u64,
}

impl SimConfig {
    /// Desk-scale defaults: 200 repetitions, 500 trees, 500 draws, unit noise,
    /// 95% intervals. Trees are grown out fully (node size 1, every feature
    /// considered at each node, no leaf cap beyond the growing subsample): the
    /// sigma sample is only near the truth when the trees leave little
    /// approximation error in the residual sum of squares.
    pub fn new(function: TestFunction, n: usize, p: usize) -> Self {
        Self {
            function,
            n,
            p,
            sigma: 1.0,
            reps: 200,
            level: 0.95,
            forest: ForestParams::default()
                .with_n_trees(500)
                .with_min_node_size(1)
                .with_mtry(p.max(1))
                .with_max_leaves(n.max(1)),
            draws: 500,
            master_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < self.function.active_dimension() {
            return Err(Error::InvalidInput(format!(
                "{} needs p >= {}",
                self.function,
                self.function.active_dimension()
            )));
        }
        if self.reps == 0 {
            return Err(Error::InvalidInput("reps must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidInput(format!(
                "level {} outside (0, 1)",
                self.level
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(
                "sigma must be finite and non-negative".into(),
            ));
        }
        if self.draws == 0 {
            return Err(Error::InvalidInput("draws must be at least 1".into()));
        }
        if self.n < 8 {
            return Err(Error::InvalidInput("n must be at least 8".into()));
        }
        self.forest.validate(self.p)
    }

    fn rep_key(&self, stage: u32, rep: usize) -> StreamKey {
        StreamKey::new(self.master_seed, &[stage, rep as u32])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedRep {
    pub train: Dataset,
    pub probe: Vec<f64>,
    pub truth: f64,
    pub future: f64,
}

fn draw_point(stream: &mut RandomStream, p: usize) -> Vec<f64> {
    (0..p).map(|_| stream.next_unit()).collect()
}

/// Training data with `x ~ U(0,1)^p` and `y = f(x) + sigma z`, plus one probe
/// point with its true mean and a future response.
pub fn generate_dataset(config: &SimConfig, rep: usize) -> Result<SimulatedRep> {
    config.validate()?;
    let key = config.rep_key(phase::SIMULATION, rep);
    let mut stream = key.child(0).stream();
    let mut rows = Vec::with_capacity(config.n);
    let mut y = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let x = draw_point(&mut stream, config.p);
        y.push(config.function.eval(&x)? + config.sigma * stream.sample_normal());
        rows.push(x);
    }
    let mut probe_stream = key.child(1).stream();
    let probe = draw_point(&mut probe_stream, config.p);
    let truth = config.function.eval(&probe)?;
    let future = truth + config.sigma * probe_stream.sample_normal();
    Ok(SimulatedRep {
        train: Dataset::from_rows(&rows, y)?,
        probe,
        truth,
        future,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    ConditionalMean,
    Sigma,
    FutureResponse,
}

impl Target {
    pub const ALL: [Target; 3] = [
        Target::ConditionalMean,
        Target::Sigma,
        Target::FutureResponse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::ConditionalMean => "conditional-mean",
            Target::Sigma => "sigma",
            Target::FutureResponse => "future-response",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub function: TestFunction,
    pub n: usize,
    pub p: usize,
    pub target: Target,
    pub level: f64,
    /// Repetitions that produced an interval.
    pub reps: usize,
    pub failed_reps: usize,
    pub coverage: f64,
    /// Binomial standard error `sqrt(c (1 - c) / reps)`.
    pub mc_stderr: f64,
    pub mean_width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub records: Vec<CoverageRecord>,
    pub runtime_ms: u128,
}

impl CoverageReport {
    pub fn record(&self, target: Target) -> Option<&CoverageRecord> {
        self.records.iter().find(|r| r.target == target)
    }
}

#[derive(Clone, Copy, Debug)]
struct RepOutcome {
    hits: [bool; 3],
    widths: [f64; 3],
}

fn run_rep(config: &SimConfig, rep: usize) -> Result<RepOutcome> {
    let sim = generate_dataset(config, rep)?;
    let forest = train_forest(
        &sim.train,
        &config.forest,
        &config.rep_key(phase::FOREST, rep),
    )?;
    let ensemble = generate_ensemble(
        Arc::new(forest),
        &sim.train,
        config.draws,
        &config.rep_key(phase::ENSEMBLE, rep),
    )?;
    let ci = ensemble.confidence_interval(&sim.probe, config.level)?;
    let si = ensemble.sigma_interval(config.level)?;
    let mut pi_stream = config.rep_key(phase::PREDICTION, rep).stream();
    let pi = ensemble.prediction_interval(&sim.probe, config.level, &mut pi_stream)?;
    Ok(RepOutcome {
        hits: [
            ci.contains(sim.truth),
            si.contains(config.sigma),
            pi.contains(sim.future),
        ],
        widths: [ci.width(), si.width(), pi.width()],
    })
}

/// Coverage of the conditional-mean, sigma and future-response intervals over
/// `config.reps` independent repetitions. Repetitions with no eligible tree
/// are counted in `failed_reps` and left out of the rates.
pub fn run_coverage_experiment(config: &SimConfig) -> Result<CoverageReport> {
    config.validate()?;
    let start = Instant::now();
    let outcomes: Vec<Result<RepOutcome>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_rep(config, rep))
        .collect();
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut failed = 0;
    for outcome in outcomes {
        match outcome {
            Ok(o) => ok.push(o),
            Err(Error::NoValidModel) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if failed > 0 {
        log::warn!(
            "{failed} of {} repetitions had no eligible tree",
            config.reps
        );
    }
    let reps = ok.len();
    let records = Target::ALL
        .iter()
        .enumerate()
        .map(|(k, &target)| {
            let (coverage, mean_width) = if reps == 0 {
                (0.0, 0.0)
            } else {
                let hits = ok.iter().filter(|o| o.hits[k]).count();
                (
                    hits as f64 / reps as f64,
                    ok.iter().map(|o| o.widths[k]).sum::<f64>() / reps as f64,
                )
            };
            CoverageRecord {
                function: config.function,
                n: config.n,
                p: config.p,
                target,
                level: config.level,
                reps,
                failed_reps: failed,
                coverage,
                mc_stderr: binomial_stderr(coverage, reps),
                mean_width,
            }
        })
        .collect();
    Ok(CoverageReport {
        records,
        runtime_ms: start.elapsed().as_millis(),
    })
}

pub fn binomial_stderr(rate: f64, trials: usize) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    (rate * (1.0 - rate) / trials as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaHistogram {
    pub bins: Vec<HistogramBin>,
    pub sigmas: Vec<f64>,
    pub mean: f64,
}

/// Equal-width bins spanning `[min, max]` of `values`; the last bin is closed.
pub fn histogram(values: &[f64], n_bins: usize) -> Result<Vec<HistogramBin>> {
    if values.is_empty() || n_bins == 0 {
        return Err(Error::InvalidInput(
            "histogram needs values and at least one bin".into(),
        ));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / n_bins as f64
    } else {
        1.0
    };
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            lower: lo + k as f64 * width,
            upper: if k + 1 == n_bins {
                hi.max(lo + width)
            } else {
                lo + (k + 1) as f64 * width
            },
            count,
        })
        .collect())
}

/// Fiducial sample of sigma from one simulated data set (repetition 0).
pub fn sigma_histogram(config: &SimConfig, n_bins: usize) -> Result<SigmaHistogram> {
    let sim = generate_dataset(config, 0)?;
    let forest = train_forest(
        &sim.train,
        &config.forest,
        &config.rep_key(phase::FOREST, 0),
    )?;
    let ensemble = generate_ensemble(
        Arc::new(forest),
        &sim.train,
        config.draws,
        &config.rep_key(phase::ENSEMBLE, 0),
    )?;
    let sigmas = ensemble.sigmas();
    let mean = sigmas.iter().sum::<f64>() / sigmas.len() as f64;
    Ok(SigmaHistogram {
        bins: histogram(&sigmas, n_bins)?,
        sigmas,
        mean,
    })
}

/// Role of a candidate tree in the concentration study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateKind {
    /// True model with the fewest leaves.
    MinimalTrue,
    /// True model carrying extra, irrelevant splits.
    Overgrown,
    /// Misses or misplaces at least one split of the truth.
    Wrong,
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub name: &'static str,
    pub kind: CandidateKind,
    pub structure: TreeStructure,
}

/// Features used by the concentration study: four active plus one noise feature.
pub const CONCENTRATION_FEATURES: usize = 5;

fn split(feature: usize, value: f64, left: usize, right: usize) -> Node {
    Node::Split {
        feature,
        value,
        left,
        right,
    }
}

const LEAF: Node = Node::Leaf { leaf: 0 };

/// Chain of `x_f <= t` splits whose left children are leaves. Node `2k` is
/// the k-th split, `2k + 1` its left leaf and `2k + 2` the next split (or the
/// final leaf).
fn and_chain(features: &[usize], thresholds: &[f64]) -> Vec<Node> {
    let mut nodes = Vec::new();
    for (k, (&f, &t)) in features.iter().zip(thresholds).enumerate() {
        nodes.push(split(f, t, 2 * k + 1, 2 * k + 2));
        nodes.push(LEAF);
    }
    nodes.push(LEAF);
    nodes
}

/// Replace leaf `at` of `nodes` with a split on `(feature, value)`.
fn graft(mut nodes: Vec<Node>, at: usize, feature: usize, value: f64) -> Vec<Node> {
    let left = nodes.len();
    nodes[at] = split(feature, value, left, left + 1);
    nodes.push(LEAF);
    nodes.push(LEAF);
    nodes
}

/// Candidate family for the AND function: two minimal true trees (five leaves,
/// different split orders), true trees with two and three irrelevant extra
/// splits, and several wrong trees.
pub fn and_candidates() -> Vec<Candidate> {
    let build = |nodes: Vec<Node>| TreeStructure::from_nodes(nodes).expect("valid candidate");
    let minimal = and_chain(&[0, 1, 2, 3], &[0.3; 4]);
    let last_leaf = minimal.len() - 1;
    vec![
        Candidate {
            name: "minimal",
            kind: CandidateKind::MinimalTrue,
            structure: build(minimal.clone()),
        },
        Candidate {
            name: "minimal-reordered",
            kind: CandidateKind::MinimalTrue,
            structure: build(and_chain(&[3, 2, 1, 0], &[0.3; 4])),
        },
        Candidate {
            name: "overgrown-2",
            kind: CandidateKind::Overgrown,
            structure: build(graft(graft(minimal.clone(), last_leaf, 4, 0.5), 1, 4, 0.5)),
        },
        Candidate {
            name: "overgrown-3",
            kind: CandidateKind::Overgrown,
            structure: build(graft(
                graft(graft(minimal.clone(), last_leaf, 4, 0.5), 1, 4, 0.5),
                3,
                0,
                0.7,
            )),
        },
        Candidate {
            name: "missing-x4",
            kind: CandidateKind::Wrong,
            structure: build(and_chain(&[0, 1, 2], &[0.3; 3])),
        },
        Candidate {
            name: "shifted-x1",
            kind: CandidateKind::Wrong,
            structure: build(and_chain(&[0, 1, 2, 3], &[0.4, 0.3, 0.3, 0.3])),
        },
        Candidate {
            name: "noise-for-x4",
            kind: CandidateKind::Wrong,
            structure: build(and_chain(&[0, 1, 2, 4], &[0.3; 4])),
        },
        Candidate {
            name: "stump",
            kind: CandidateKind::Wrong,
            structure: TreeStructure::single_leaf(),
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationTrace {
    pub sample_sizes: Vec<usize>,
    /// Total normalized weight on the minimal true trees at each sample size.
    pub masses: Vec<f64>,
}

/// Weights of `candidates` on `data`, with leaf values fitted as within-leaf
/// means over every row.
pub fn candidate_weights(candidates: &[Candidate], data: &Dataset) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..data.n_rows()).collect();
    let log_weights = candidates
        .iter()
        .map(|c| {
            let tree = HonestTree::estimate(c.structure.clone(), data, vec![], all.clone())?;
            fiducial::log_weight(data.n_rows(), tree.leaf_count(), tree.sse)
        })
        .collect::<Result<Vec<_>>>()?;
    normalize_weights(&log_weights)
}

/// Mass on the minimal true AND trees, for data simulated at each sample size
/// with unit noise.
pub fn minimal_tree_mass_trace(sample_sizes: &[usize], seed: u64) -> Result<ConcentrationTrace> {
    if sample_sizes.is_empty() || sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "sample sizes must be non-empty and increasing".into(),
        ));
    }
    let candidates = and_candidates();
    let max_leaves = candidates
        .iter()
        .map(|c| c.structure.leaf_count())
        .max()
        .unwrap_or(1);
    if sample_sizes[0] < max_leaves + 3 {
        return Err(Error::InvalidInput(format!(
            "sample sizes must be at least {}",
            max_leaves + 3
        )));
    }
    let masses = sample_sizes
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut stream = StreamKey::new(seed, &[phase::CONCENTRATION, k as u32]).stream();
            let mut rows = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let x = draw_point(&mut stream, CONCENTRATION_FEATURES);
                y.push(TestFunction::And.eval(&x)? + stream.sample_normal());
                rows.push(x);
            }
            let data = Dataset::from_rows(&rows, y)?;
            let weights = candidate_weights(&candidates, &data)?;
            Ok(candidates
                .iter()
                .zip(&weights)
                .filter(|(c, _)| c.kind == CandidateKind::MinimalTrue)
                .map(|(_, w)| w)
                .sum::<f64>()
                .min(1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConcentrationTrace {
        sample_sizes: sample_sizes.to_vec(),
        masses,
    })
}
