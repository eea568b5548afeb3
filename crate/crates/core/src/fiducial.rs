//! Fiducial tree weights, ensemble generation and interval estimates.
//!
//! Every tree `T` of an honest forest gets the unnormalized log weight
//!
//! ```text
//! log R(T) = lgamma((n - l - 1) / 2) - (l / 2) ln n
//!            - ((n - l) / 2 - 1) ln SSE - ((n - l) / 2) ln pi
//! ```
//!
//! where `l` is the leaf count. An ensemble draw picks a tree with probability
//! proportional to `R(T)`, draws `sigma^2 = SSE / chi2(n - l)`, and refreshes the
//! leaf values from a `floor(n/4)` resample of the rows that did not grow the
//! tree, plus `sigma * z` noise per leaf.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{phase, RandomStream, StreamKey};
use crate::tree::{check_point, train_forest, ForestParams, HonestForest, HonestTree};

pub fn log_weight(n: usize, l: usize, sse: f64) -> Result<f64> {
    if n < l + 3 {
        return Err(Error::InvalidDof(format!(
            "need n - l - 1 >= 2, got n = {n}, l = {l}"
        )));
    }
    if !(sse > 0.0) || !sse.is_finite() {
        return Err(Error::DegenerateFit { sse, floor: 0.0 });
    }
    let (n_f, l_f) = (n as f64, l as f64);
    let free = n_f - l_f;
    Ok(ln_gamma((free - 1.0) / 2.0)
        - l_f / 2.0 * n_f.ln()
        - (free / 2.0 - 1.0) * sse.ln()
        - free / 2.0 * std::f64::consts::PI.ln())
}

/// Smallest SSE a tree may have and still be weighted; below it the weight
/// diverges and the fit is treated as degenerate.
pub fn sse_floor(n: usize, response_variance: f64) -> f64 {
    1e-12 * n as f64 * response_variance.max(1e-30)
}

/// Softmax with max-subtraction.
pub fn normalize_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.is_empty() {
        return Err(Error::InvalidInput("no log weights to normalize".into()));
    }
    if log_weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidInput("log weights must be finite".into()));
    }
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = shifted.iter().sum();
    Ok(shifted.into_iter().map(|w| w / total).collect())
}

/// Normalized weights over the trees eligible for sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiducialWeights {
    /// Forest index of each eligible tree.
    pub tree_indices: Vec<usize>,
    pub log_weights: Vec<f64>,
    pub weights: Vec<f64>,
    /// Trees left out because of too many leaves or a degenerate SSE.
    pub excluded: Vec<usize>,
}

impl FiducialWeights {
    /// Normalized weight of forest tree `tree`, zero when excluded.
    pub fn weight_of(&self, tree: usize) -> f64 {
        self.tree_indices
            .iter()
            .position(|&t| t == tree)
            .map_or(0.0, |k| self.weights[k])
    }
}

fn tree_log_weight(tree: &HonestTree, n: usize, floor: f64) -> Result<f64> {
    if tree.sse <= floor {
        return Err(Error::DegenerateFit {
            sse: tree.sse,
            floor,
        });
    }
    log_weight(n, tree.leaf_count(), tree.sse)
}

pub fn compute_weights(forest: &HonestForest, data: &Dataset) -> Result<FiducialWeights> {
    let n = data.n_rows();
    let floor = sse_floor(n, data.response_variance());
    let per_tree: Vec<Option<f64>> = forest
        .trees
        .par_iter()
        .map(|t| tree_log_weight(t, n, floor).ok())
        .collect();
    let mut weights = FiducialWeights {
        tree_indices: Vec::new(),
        log_weights: Vec::new(),
        weights: Vec::new(),
        excluded: Vec::new(),
    };
    for (i, w) in per_tree.into_iter().enumerate() {
        match w {
            Some(w) => {
                weights.tree_indices.push(i);
                weights.log_weights.push(w);
            }
            None => weights.excluded.push(i),
        }
    }
    if weights.tree_indices.is_empty() {
        return Err(Error::NoValidModel);
    }
    if !weights.excluded.is_empty() {
        log::warn!(
            "{} of {} trees excluded from fiducial weighting (degenerate SSE or too many leaves)",
            weights.excluded.len(),
            forest.trees.len()
        );
    }
    weights.weights = normalize_weights(&weights.log_weights)?;
    Ok(weights)
}

/// Store each tree's log weight on the tree itself (`None` when ineligible).
pub fn assign_log_weights(forest: &mut HonestForest, data: &Dataset) {
    let n = data.n_rows();
    let floor = sse_floor(n, data.response_variance());
    for tree in &mut forest.trees {
        tree.log_weight = tree_log_weight(tree, n, floor).ok();
    }
}

/// `sqrt(sse / c)` with `c ~ chi2(n - l)`.
pub fn draw_sigma(stream: &mut RandomStream, sse: f64, n: usize, l: usize) -> Result<f64> {
    if n < l + 3 {
        return Err(Error::InvalidDof(format!(
            "need n - l >= 3, got n = {n}, l = {l}"
        )));
    }
    if !(sse > 0.0) || !sse.is_finite() {
        return Err(Error::DegenerateFit { sse, floor: 0.0 });
    }
    let c = stream.sample_chi_square((n - l) as u64)?;
    Ok((sse / c.max(f64::MIN_POSITIVE)).sqrt())
}

/// Rows available for resampling a tree's leaves: everything not used to grow it.
pub fn resample_pool(tree: &HonestTree, n_rows: usize) -> Vec<usize> {
    let mut grown = vec![false; n_rows];
    for &r in &tree.grow_rows {
        grown[r] = true;
    }
    (0..n_rows).filter(|&r| !grown[r]).collect()
}

/// Fresh leaf values: means of a `floor(n/4)` draw from `pool` (with ancestor
/// fallback for empty leaves) plus independent `sigma * z` per leaf.
pub fn resample_leaves(
    tree: &HonestTree,
    data: &Dataset,
    pool: &[usize],
    sigma: f64,
    stream: &mut RandomStream,
) -> Result<Vec<f64>> {
    let take = data.n_rows() / 4;
    if pool.len() < take || take == 0 {
        return Err(Error::InsufficientData(format!(
            "resample pool has {} rows, need {take}",
            pool.len()
        )));
    }
    debug_assert!(tree.grow_rows.iter().all(|r| !pool.contains(r)));
    let picks = stream.sample_without_replacement(pool.len(), take)?;
    let rows: Vec<usize> = picks.into_iter().map(|i| pool[i]).collect();
    let (mut values, _) = tree.structure.leaf_means(data, &rows)?;
    for v in &mut values {
        *v += sigma * stream.sample_normal();
    }
    Ok(values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiducialDraw {
    pub tree_index: usize,
    pub leaf_values: Vec<f64>,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Clone, Debug)]
pub struct FiducialEnsemble {
    forest: Arc<HonestForest>,
    draws: Vec<FiducialDraw>,
    weights: FiducialWeights,
}

/// Run the fiducial sampler: `m` draws, draw `i` using stream `key/i`.
pub fn generate_ensemble(
    forest: Arc<HonestForest>,
    data: &Dataset,
    m: usize,
    key: &StreamKey,
) -> Result<FiducialEnsemble> {
    if m == 0 {
        return Err(Error::InvalidInput(
            "ensemble needs at least one draw".into(),
        ));
    }
    if forest.n_rows != data.n_rows() || forest.n_features != data.n_features() {
        return Err(Error::InvalidInput(
            "forest was trained on a dataset of a different shape".into(),
        ));
    }
    let weights = compute_weights(&forest, data)?;
    let n = data.n_rows();
    let pools: Vec<Option<Vec<usize>>> = (0..forest.trees.len())
        .map(|t| {
            weights
                .tree_indices
                .contains(&t)
                .then(|| resample_pool(&forest.trees[t], n))
        })
        .collect();
    let draws = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut stream = key.child(i as u32).stream();
            let k = stream.sample_categorical(&weights.weights)?;
            let tree_index = weights.tree_indices[k];
            let tree = &forest.trees[tree_index];
            let sigma = draw_sigma(&mut stream, tree.sse, n, tree.leaf_count())?;
            let pool = pools[tree_index]
                .as_deref()
                .expect("eligible trees have a pool");
            let leaf_values = resample_leaves(tree, data, pool, sigma, &mut stream)?;
            Ok(FiducialDraw {
                tree_index,
                leaf_values,
                sigma,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FiducialEnsemble {
        forest,
        draws,
        weights,
    })
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("level {level} outside (0, 1)")))
    }
}

impl FiducialEnsemble {
    /// Reassemble an ensemble from stored parts, validating every draw.
    pub fn from_parts(
        forest: Arc<HonestForest>,
        draws: Vec<FiducialDraw>,
        weights: FiducialWeights,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidInput("ensemble has no draws".into()));
        }
        for d in &draws {
            let tree = forest.trees.get(d.tree_index).ok_or_else(|| {
                Error::InvalidInput(format!("draw references tree {}", d.tree_index))
            })?;
            if d.leaf_values.len() != tree.leaf_count()
                || d.leaf_values.iter().any(|v| !v.is_finite())
                || !(d.sigma > 0.0)
            {
                return Err(Error::InvalidInput(format!(
                    "invalid draw for tree {}",
                    d.tree_index
                )));
            }
        }
        Ok(Self {
            forest,
            draws,
            weights,
        })
    }

    pub fn forest(&self) -> &Arc<HonestForest> {
        &self.forest
    }

    pub fn draws(&self) -> &[FiducialDraw] {
        &self.draws
    }

    pub fn weights(&self) -> &FiducialWeights {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.sigma).collect()
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.forest.n_features {
            return Err(Error::InvalidInput(format!(
                "expected {} features, got {}",
                self.forest.n_features,
                x.len()
            )));
        }
        check_point(x, None)
    }

    /// Resampled-tree prediction of every draw at `x`.
    pub fn draw_predictions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        Ok(self
            .draws
            .iter()
            .map(|d| d.leaf_values[self.forest.trees[d.tree_index].structure.route(x)])
            .collect())
    }

    pub fn point_estimate(&self, x: &[f64]) -> Result<f64> {
        let preds = self.draw_predictions(x)?;
        Ok(preds.iter().sum::<f64>() / preds.len() as f64)
    }

    pub fn confidence_interval(&self, x: &[f64], level: f64) -> Result<Interval> {
        check_level(level)?;
        equal_tailed(self.draw_predictions(x)?, level)
    }

    /// Interval for a future response at `x`: percentiles of each draw's
    /// prediction plus `sigma * z`, with one fresh `z` per draw from `stream`.
    pub fn prediction_interval(
        &self,
        x: &[f64],
        level: f64,
        stream: &mut RandomStream,
    ) -> Result<Interval> {
        check_level(level)?;
        let values = self
            .draw_predictions(x)?
            .into_iter()
            .zip(&self.draws)
            .map(|(pred, d)| pred + d.sigma * stream.sample_normal())
            .collect();
        equal_tailed(values, level)
    }

    pub fn sigma_interval(&self, level: f64) -> Result<Interval> {
        check_level(level)?;
        equal_tailed(self.sigmas(), level)
    }

    /// Point estimate, confidence interval and prediction interval at `x`.
    pub fn predict(&self, x: &[f64], level: f64, stream: &mut RandomStream) -> Result<Prediction> {
        Ok(Prediction {
            point: self.point_estimate(x)?,
            confidence: self.confidence_interval(x, level)?,
            prediction: self.prediction_interval(x, level, stream)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub point: f64,
    pub confidence: Interval,
    pub prediction: Interval,
}

/// Train a forest on `data` and draw `draws` fiducial samples, with the forest
/// and the sampler on separate streams derived from `master_seed`.
pub fn fit_ensemble(
    data: &Dataset,
    params: &ForestParams,
    draws: usize,
    master_seed: u64,
) -> Result<FiducialEnsemble> {
    let forest = train_forest(data, params, &StreamKey::new(master_seed, &[phase::FOREST]))?;
    generate_ensemble(
        Arc::new(forest),
        data,
        draws,
        &StreamKey::new(master_seed, &[phase::ENSEMBLE]),
    )
}

/// Stream for the prediction-interval noise of the point labelled `row`.
pub fn prediction_key(master_seed: u64, row: u64) -> StreamKey {
    StreamKey::new(
        master_seed,
        &[phase::PREDICTION, (row >> 32) as u32, row as u32],
    )
}

fn equal_tailed(mut values: Vec<f64>, level: f64) -> Result<Interval> {
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval {
        lower: percentile_sorted(&values, tail)?,
        upper: percentile_sorted(&values, 1.0 - tail)?,
        level,
    })
}

/// Linear-interpolation percentile on 1-based rank `h = (m - 1) q + 1`
/// (Hyndman-Fan type 7).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("percentile of NaN values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, q)
}

/// As [`percentile`], for input already sorted ascending.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidInput("percentile of an empty vector".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!("quantile {q} outside [0, 1]")));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        return Ok(sorted[lo.min(sorted.len() - 1)]);
    }
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}
