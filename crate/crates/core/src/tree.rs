//! Greedy regression trees, honest leaf estimation and the honest forest.
//!
//! A tree is grown on one subsample and its leaf values are estimated on a
//! second, disjoint subsample. A leaf that receives no estimation rows takes
//! the mean of the nearest ancestor whose subtree does receive rows.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{RandomStream, StreamKey};

/// Reductions smaller than this fraction of the node's own squared error are
/// treated as rounding noise.
const MIN_RELATIVE_REDUCTION: f64 = 1e-12;

/// Candidates whose reduction is within this fraction of the node's squared
/// error of the best one are ties; the first in (feature, value) order wins.
pub const SPLIT_TIE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub value: f64,
    pub loss_reduction: f64,
}

/// Best squared-error split of `rows` over `candidate_features`.
///
/// Split points are midpoints between consecutive distinct values. Both
/// children must hold at least `min_node_size` rows. Ties resolve to the
/// lowest feature index, then the smallest split value.
pub fn best_split(
    data: &Dataset,
    rows: &[usize],
    candidate_features: &[usize],
    min_node_size: usize,
) -> Option<Split> {
    let n = rows.len();
    let min_node_size = min_node_size.max(1);
    if n < 2 || n < 2 * min_node_size {
        return None;
    }
    let y = data.response();
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    let node_sse: f64 = rows.iter().map(|&r| (y[r] - mean).powi(2)).sum();
    if node_sse <= 0.0 {
        return None;
    }

    let mut features = candidate_features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut candidates: Vec<Split> = Vec::new();
    let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &feature in &features {
        let column = data.column(feature);
        order.clear();
        order.extend(rows.iter().map(|&r| (column[r], y[r] - mean)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = order.iter().map(|o| o.1).sum();
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += order[i].1;
            let (here, next) = (order[i].0, order[i + 1].0);
            if here == next {
                continue;
            }
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_left < min_node_size || n_right < min_node_size {
                continue;
            }
            let right_sum = total - left_sum;
            let reduction = left_sum * left_sum / n_left as f64
                + right_sum * right_sum / n_right as f64
                - total * total / n as f64;
            candidates.push(Split {
                feature,
                value: midpoint(here, next),
                loss_reduction: reduction,
            });
        }
    }

    let best = candidates
        .iter()
        .map(|c| c.loss_reduction)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(best > MIN_RELATIVE_REDUCTION * node_sse) {
        return None;
    }
    let tolerance = SPLIT_TIE_TOLERANCE * node_sse;
    candidates
        .into_iter()
        .find(|c| c.loss_reduction >= best - tolerance)
}

/// Midpoint of two ordered distinct values that routes `lo` left and `hi` right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: usize,
    },
}

/// Binary split structure. Node 0 is the root and every child has a larger
/// index than its parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeStructure {
    nodes: Vec<Node>,
    parents: Vec<Option<usize>>,
    leaf_nodes: Vec<usize>,
}

impl TreeStructure {
    pub fn single_leaf() -> Self {
        Self {
            nodes: vec![Node::Leaf { leaf: 0 }],
            parents: vec![None],
            leaf_nodes: vec![0],
        }
    }

    /// Build a structure from nodes in parent-before-child order. Leaf
    /// numbers are assigned in node order.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("tree has no nodes".into()));
        }
        let mut parents = vec![None; nodes.len()];
        let mut seen = vec![false; nodes.len()];
        seen[0] = true;
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Split {
                value, left, right, ..
            } = *node
            {
                if !value.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "node {i} has a non-finite split"
                    )));
                }
                for child in [left, right] {
                    if child <= i || child >= nodes.len() || seen[child] {
                        return Err(Error::InvalidInput(format!(
                            "node {i} has invalid child {child}"
                        )));
                    }
                    seen[child] = true;
                    parents[child] = Some(i);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("tree has unreachable nodes".into()));
        }
        let mut leaf_nodes = Vec::new();
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, node)| match node {
                Node::Leaf { .. } => {
                    leaf_nodes.push(i);
                    Node::Leaf {
                        leaf: leaf_nodes.len() - 1,
                    }
                }
                split => split,
            })
            .collect();
        Ok(Self {
            nodes,
            parents,
            leaf_nodes,
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Leaf reached by the point whose feature `j` is `value_of(j)`.
    /// Goes left iff the feature is `<=` the split value.
    #[inline]
    pub fn route_with(&self, value_of: impl Fn(usize) -> f64) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { leaf } => return leaf,
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    at = if value_of(feature) <= value {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn route(&self, x: &[f64]) -> usize {
        self.route_with(|j| x[j])
    }

    pub fn route_row(&self, data: &Dataset, row: usize) -> usize {
        self.route_with(|j| data.value(row, j))
    }

    /// Per-leaf response means over `rows`, with nearest-ancestor fallback
    /// for leaves that receive none. Returns `(values, counts)`.
    pub fn leaf_means(&self, data: &Dataset, rows: &[usize]) -> Result<(Vec<f64>, Vec<usize>)> {
        if rows.is_empty() {
            return Err(Error::InsufficientData(
                "no rows to estimate leaf values".into(),
            ));
        }
        let y = data.response();
        let mut sums = vec![0.0; self.nodes.len()];
        let mut counts = vec![0usize; self.nodes.len()];
        for &r in rows {
            let node = self.leaf_nodes[self.route_row(data, r)];
            sums[node] += y[r];
            counts[node] += 1;
        }
        let leaf_counts: Vec<usize> = self.leaf_nodes.iter().map(|&n| counts[n]).collect();
        for i in (1..self.nodes.len()).rev() {
            let parent = self.parents[i].expect("non-root node has a parent");
            sums[parent] += sums[i];
            counts[parent] += counts[i];
        }
        let values = self
            .leaf_nodes
            .iter()
            .map(|&leaf_node| {
                let mut at = leaf_node;
                while counts[at] == 0 {
                    at = self.parents[at].expect("root holds at least one row");
                }
                sums[at] / counts[at] as f64
            })
            .collect();
        Ok((values, leaf_counts))
    }
}

/// How a tree's SSE (the statistic behind its fiducial weight and the sigma
/// draws) is computed over the `n` training rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SseMode {
    /// Residuals against the tree's honest leaf values.
    HonestAll,
    /// Residuals against each leaf's mean over all rows routed to it, i.e.
    /// `||y - H_T y||^2` for the tree's projection matrix `H_T`.
    #[default]
    Projection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_node_size: usize,
    /// Features tried per node; `None` means `ceil(sqrt(p))`.
    pub mtry: Option<usize>,
    /// Leaf cap; `None` means `floor(n/10) + 1`. Always capped at `n - 4`.
    pub max_leaves: Option<usize>,
    #[serde(default)]
    pub sse_mode: SseMode,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            min_node_size: 5,
            mtry: None,
            max_leaves: None,
            sse_mode: SseMode::default(),
        }
    }
}

impl ForestParams {
    pub fn with_n_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    pub fn with_min_node_size(mut self, min_node_size: usize) -> Self {
        self.min_node_size = min_node_size;
        self
    }

    pub fn with_mtry(mut self, mtry: usize) -> Self {
        self.mtry = Some(mtry);
        self
    }

    pub fn with_max_leaves(mut self, max_leaves: usize) -> Self {
        self.max_leaves = Some(max_leaves);
        self
    }

    pub fn with_sse_mode(mut self, sse_mode: SseMode) -> Self {
        self.sse_mode = sse_mode;
        self
    }

    pub fn effective_mtry(&self, p: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
            .clamp(1, p.max(1))
    }

    /// Leaf cap for a forest trained on `n` rows. Keeps `n - l - 1 >= 3`.
    pub fn effective_max_leaves(&self, n: usize) -> usize {
        let requested = self.max_leaves.unwrap_or(n / 10 + 1);
        requested.min(n.saturating_sub(4)).max(1)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidInput("n_trees must be at least 1".into()));
        }
        if self.min_node_size == 0 {
            return Err(Error::InvalidInput(
                "min_node_size must be at least 1".into(),
            ));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > p {
                return Err(Error::InvalidInput(format!("mtry {m} outside 1..={p}")));
            }
        }
        if self.max_leaves == Some(0) {
            return Err(Error::InvalidInput("max_leaves must be at least 1".into()));
        }
        Ok(())
    }
}

struct Frontier {
    node: usize,
    rows: Vec<usize>,
    split: Option<Split>,
}

/// Grow a tree on `grow_rows`, expanding the frontier node with the largest
/// loss reduction first until no node can be split or `max_leaves` is hit.
/// Each node draws its own `mtry` candidate features from `stream`.
pub fn grow_tree(
    data: &Dataset,
    grow_rows: &[usize],
    min_node_size: usize,
    mtry: usize,
    max_leaves: usize,
    stream: &mut RandomStream,
) -> Result<TreeStructure> {
    if grow_rows.is_empty() {
        return Err(Error::InsufficientData("no rows to grow a tree".into()));
    }
    let p = data.n_features();
    let mtry = mtry.clamp(1, p);
    let evaluate = |rows: &[usize], stream: &mut RandomStream| -> Result<Option<Split>> {
        let features = stream.sample_without_replacement(p, mtry)?;
        Ok(best_split(data, rows, &features, min_node_size))
    };

    let mut nodes = vec![Node::Leaf { leaf: 0 }];
    let root_split = evaluate(grow_rows, stream)?;
    let mut frontier = vec![Frontier {
        node: 0,
        rows: grow_rows.to_vec(),
        split: root_split,
    }];
    let mut leaves = 1;
    while leaves < max_leaves {
        // Largest reduction first; earliest node on ties.
        let pick = frontier
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.split.map(|s| (i, s.loss_reduction, f.node)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)));
        let Some((at, _, _)) = pick else { break };
        let entry = frontier.swap_remove(at);
        let split = entry.split.expect("picked entries have a split");
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = entry
            .rows
            .iter()
            .partition(|&&r| data.value(r, split.feature) <= split.value);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { leaf: 0 });
        nodes.push(Node::Leaf { leaf: 0 });
        nodes[entry.node] = Node::Split {
            feature: split.feature,
            value: split.value,
            left,
            right,
        };
        leaves += 1;
        let left_split = evaluate(&left_rows, stream)?;
        let right_split = evaluate(&right_rows, stream)?;
        frontier.push(Frontier {
            node: left,
            rows: left_rows,
            split: left_split,
        });
        frontier.push(Frontier {
            node: right,
            rows: right_rows,
            split: right_split,
        });
    }
    TreeStructure::from_nodes(nodes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HonestTree {
    pub structure: TreeStructure,
    pub leaf_values: Vec<f64>,
    /// Estimation rows per leaf; zero for leaves using the ancestor fallback.
    pub leaf_counts: Vec<usize>,
    pub grow_rows: Vec<usize>,
    pub estimate_rows: Vec<usize>,
    pub sse: f64,
    /// Unnormalized log fiducial weight; `None` until assigned, or when the
    /// tree is not eligible.
    pub log_weight: Option<f64>,
}

impl HonestTree {
    /// Tree with the given structure and leaf values estimated on
    /// `estimate_rows`; `sse` is the honest SSE over every row of `data`.
    pub fn estimate(
        structure: TreeStructure,
        data: &Dataset,
        grow_rows: Vec<usize>,
        estimate_rows: Vec<usize>,
    ) -> Result<Self> {
        Self::estimate_with(
            structure,
            data,
            grow_rows,
            estimate_rows,
            SseMode::HonestAll,
        )
    }

    pub fn estimate_with(
        structure: TreeStructure,
        data: &Dataset,
        grow_rows: Vec<usize>,
        estimate_rows: Vec<usize>,
        sse_mode: SseMode,
    ) -> Result<Self> {
        let (leaf_values, leaf_counts) = structure.leaf_means(data, &estimate_rows)?;
        let mut tree = Self {
            structure,
            leaf_values,
            leaf_counts,
            grow_rows,
            estimate_rows,
            sse: 0.0,
            log_weight: None,
        };
        tree.sse = match sse_mode {
            SseMode::HonestAll => tree_sse(&tree, data),
            SseMode::Projection => projection_sse(&tree.structure, data),
        };
        Ok(tree)
    }

    pub fn leaf_count(&self) -> usize {
        self.structure.leaf_count()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.structure.max_feature())?;
        Ok(self.leaf_values[self.structure.route(x)])
    }

    pub fn predict_row(&self, data: &Dataset, row: usize) -> f64 {
        self.leaf_values[self.structure.route_row(data, row)]
    }
}

pub(crate) fn check_point(x: &[f64], max_feature: Option<usize>) -> Result<()> {
    if let Some(j) = max_feature {
        if x.len() <= j {
            return Err(Error::InvalidInput(format!(
                "point has {} features, tree uses feature {j}",
                x.len()
            )));
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("point has non-finite entries".into()));
    }
    Ok(())
}

pub fn estimate_leaves(
    structure: &TreeStructure,
    data: &Dataset,
    estimate_rows: &[usize],
) -> Result<(Vec<f64>, Vec<usize>)> {
    structure.leaf_means(data, estimate_rows)
}

/// Sum of squared errors of the tree's honest predictions over all rows of `data`.
pub fn tree_sse(tree: &HonestTree, data: &Dataset) -> f64 {
    let y = data.response();
    (0..data.n_rows())
        .map(|r| (y[r] - tree.predict_row(data, r)).powi(2))
        .sum()
}

/// Within-leaf sum of squares of all rows of `data`.
pub fn projection_sse(structure: &TreeStructure, data: &Dataset) -> f64 {
    let y = data.response();
    let l = structure.leaf_count();
    let mut sums = vec![0.0; l];
    let mut counts = vec![0usize; l];
    let leaves: Vec<usize> = (0..data.n_rows())
        .map(|r| structure.route_row(data, r))
        .collect();
    for (r, &leaf) in leaves.iter().enumerate() {
        sums[leaf] += y[r];
        counts[leaf] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    leaves
        .iter()
        .enumerate()
        .map(|(r, &leaf)| (y[r] - means[leaf]).powi(2))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HonestForest {
    pub trees: Vec<HonestTree>,
    pub params: ForestParams,
    pub n_rows: usize,
    pub n_features: usize,
}

/// Train `params.n_trees` honest trees. Tree `t` draws its disjoint grow and
/// estimation subsamples of `floor(n/4)` rows each from the stream `key/t`.
pub fn train_forest(
    data: &Dataset,
    params: &ForestParams,
    key: &StreamKey,
) -> Result<HonestForest> {
    let n = data.n_rows();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "honest forests need at least 8 rows, got {n}"
        )));
    }
    let p = data.n_features();
    params.validate(p)?;
    let quarter = n / 4;
    let mtry = params.effective_mtry(p);
    let max_leaves = params.effective_max_leaves(n);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut stream = key.child(t as u32).stream();
            let mut sample = stream.sample_without_replacement(n, 2 * quarter)?;
            let estimate_rows = sample.split_off(quarter);
            let grow_rows = sample;
            debug_assert!(disjoint(&grow_rows, &estimate_rows));
            let structure = grow_tree(
                data,
                &grow_rows,
                params.min_node_size,
                mtry,
                max_leaves,
                &mut stream,
            )?;
            HonestTree::estimate_with(structure, data, grow_rows, estimate_rows, params.sse_mode)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HonestForest {
        trees,
        params: params.clone(),
        n_rows: n,
        n_features: p,
    })
}

fn disjoint(a: &[usize], b: &[usize]) -> bool {
    let set: HashSet<_> = a.iter().collect();
    b.iter().all(|r| !set.contains(r))
}

impl HonestForest {
    /// Equal-weight average of the honest trees.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if self.trees.is_empty() {
            return Err(Error::NoValidModel);
        }
        if x.len() != self.n_features {
            return Err(Error::InvalidInput(format!(
                "expected {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        check_point(x, None)?;
        let total: f64 = self
            .trees
            .iter()
            .map(|t| t.leaf_values[t.structure.route(x)])
            .sum();
        Ok(total / self.trees.len() as f64)
    }
}

pub fn forest_predict(forest: &HonestForest, x: &[f64]) -> Result<f64> {
    forest.predict(x)
}
