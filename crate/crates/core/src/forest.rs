//! Honest quantile forests with two split criteria: a pseudo-outcome Gini
//! criterion that targets pilot quantiles, and the classic mean-squared-error
//! criterion with weighted-ECDF quantile prediction.
//!
//! Trees are grown breadth-first. At every node the responses are relabeled
//! against the node's own pilot quantiles, so the split search is a
//! classification problem even though prediction is a quantile lookup.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::FeatureMatrix;
use crate::numeric::{empirical_quantile_type1, mix_seed};

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, ForestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitCriterion {
    /// Relabel responses against node-level pilot quantiles and minimize
    /// leaf-size-weighted Gini impurity.
    QuantileGini,
    /// Variance-reduction splits on the raw responses.
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    /// subsample share per tree, drawn without replacement
    pub sample_fraction: f64,
    /// split the subsample 50/50: one half chooses splits, the other fills leaves
    pub honesty: bool,
    /// candidate columns per node; None = ceil(sqrt(p))
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    /// None = grow until the size/improvement rules stop; importance
    /// reporting uses a cap of 5
    pub max_depth: Option<usize>,
    /// pilot quantile levels τ for the Gini criterion, strictly increasing
    pub pilot_levels: Vec<f64>,
    pub criterion: SplitCriterion,
    pub seed: u64,
}

impl ForestConfig {
    /// Defaults for a prediction forest targeting level `alpha`.
    pub fn quantile_gini(alpha: f64) -> Self {
        Self {
            num_trees: 500,
            sample_fraction: 0.5,
            honesty: true,
            mtry: None,
            min_node_size: 5,
            max_depth: None,
            pilot_levels: vec![alpha],
            criterion: SplitCriterion::QuantileGini,
            seed: 0,
        }
    }

    /// Meinshausen-style forest: MSE splits, in-bag leaf filling.
    pub fn mse() -> Self {
        Self {
            num_trees: 500,
            sample_fraction: 0.5,
            honesty: false,
            mtry: None,
            min_node_size: 5,
            max_depth: None,
            pilot_levels: Vec::new(),
            criterion: SplitCriterion::Mse,
            seed: 0,
        }
    }

    fn validate(&self, n_rows: usize, n_cols: usize) -> Result<()> {
        if self.num_trees == 0 {
            return Err(ForestError::InvalidConfig("num_trees must be positive".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(ForestError::InvalidConfig(format!(
                "sample_fraction {} outside (0, 1]",
                self.sample_fraction
            )));
        }
        if self.min_node_size == 0 {
            return Err(ForestError::InvalidConfig("min_node_size must be positive".into()));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > n_cols {
                return Err(ForestError::InvalidConfig(format!("mtry {m} outside 1..={n_cols}")));
            }
        }
        if self.criterion == SplitCriterion::QuantileGini {
            if self.pilot_levels.is_empty() {
                return Err(ForestError::InvalidConfig("pilot_levels must be nonempty".into()));
            }
            if !self.pilot_levels.windows(2).all(|w| w[0] < w[1])
                || self.pilot_levels.iter().any(|&t| t <= 0.0 || t >= 1.0)
            {
                return Err(ForestError::InvalidConfig(
                    "pilot_levels must be strictly increasing within (0, 1)".into(),
                ));
            }
        }
        if n_rows < 2 * self.min_node_size {
            return Err(ForestError::InsufficientData(format!(
                "need at least {} rows, got {n_rows}",
                2 * self.min_node_size
            )));
        }
        if n_cols == 0 {
            return Err(ForestError::InsufficientData("matrix has no covariates".into()));
        }
        Ok(())
    }

    fn effective_mtry(&self, n_cols: usize) -> usize {
        self.mtry.unwrap_or_else(|| (n_cols as f64).sqrt().ceil() as usize).min(n_cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal { split_var: usize, split_value: f64, left: usize, right: usize },
    /// estimation-half rows (global row indices); may be empty under honesty,
    /// in which case the tree abstains for queries reaching it
    Leaf { member_rows: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// arena with the root at index 0
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    fn leaf_for(&self, x: &[f64]) -> &TreeNode {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                TreeNode::Internal { split_var, split_value, left, right } => {
                    idx = if x[*split_var] <= *split_value { *left } else { *right };
                }
                leaf @ TreeNode::Leaf { .. } => return leaf,
            }
        }
    }

    /// (split_var, layer) for every internal node; the root split is layer 1.
    fn split_layers(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, 1usize)];
        while let Some((idx, layer)) = stack.pop() {
            if let TreeNode::Internal { split_var, left, right, .. } = &self.nodes[idx] {
                out.push((*split_var, layer));
                stack.push((*left, layer + 1));
                stack.push((*right, layer + 1));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileForest {
    pub trees: Vec<Tree>,
    pub config: ForestConfig,
    /// training responses, indexed by the leaves' member rows
    pub responses: Vec<f64>,
    pub covariate_names: Vec<String>,
}

/// Per-covariate depth-weighted split shares.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
}

impl ImportanceReport {
    /// (name, weight) pairs sorted by descending weight.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut pairs: Vec<(String, f64)> =
            self.names.iter().cloned().zip(self.weights.iter().copied()).collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        pairs
    }
}

/// Relabel responses by how many node-level pilot quantiles they strictly
/// exceed. θ_k is the type-1 empirical τ_k-quantile of `responses`.
pub fn pseudo_outcomes(responses: &[f64], levels: &[f64]) -> Vec<u32> {
    debug_assert!(!responses.is_empty());
    let thresholds: Vec<f64> =
        levels.iter().map(|&t| empirical_quantile_type1(responses, t)).collect();
    responses
        .iter()
        .map(|&r| thresholds.iter().filter(|&&th| r > th).count() as u32)
        .collect()
}

/// Leaf-size-weighted Gini impurity of a two-way split.
pub fn gini_split_loss(left_labels: &[u32], right_labels: &[u32]) -> Result<f64> {
    if left_labels.is_empty() || right_labels.is_empty() {
        return Err(ForestError::InvalidSplit("both sides must be nonempty".into()));
    }
    let gini = |labels: &[u32]| {
        let max = *labels.iter().max().unwrap() as usize;
        let mut counts = vec![0usize; max + 1];
        for &l in labels {
            counts[l as usize] += 1;
        }
        let n = labels.len() as f64;
        1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
    };
    let (nl, nr) = (left_labels.len() as f64, right_labels.len() as f64);
    Ok((nl * gini(left_labels) + nr * gini(right_labels)) / (nl + nr))
}

struct SplitCandidate {
    loss: f64,
    column: usize,
    value: f64,
}

/// Gini loss scan along one sorted column. Counts make the arithmetic exact,
/// so tie-breaking by scan order is deterministic.
fn best_gini_split(
    sorted: &[(f64, u32)],
    n_classes: usize,
    min_node_size: usize,
) -> Option<(f64, f64)> {
    let n = sorted.len();
    let mut right_counts = vec![0u32; n_classes];
    for &(_, label) in sorted {
        right_counts[label as usize] += 1;
    }
    let mut left_counts = vec![0u32; n_classes];
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        let label = sorted[i].1 as usize;
        left_counts[label] += 1;
        right_counts[label] -= 1;
        let n_left = i + 1;
        let n_right = n - n_left;
        if n_left < min_node_size || n_right < min_node_size {
            continue;
        }
        if sorted[i].0 >= sorted[i + 1].0 {
            continue; // not a boundary between distinct values
        }
        let sum_sq = |counts: &[u32]| {
            counts.iter().map(|&c| c as f64 * c as f64).sum::<f64>()
        };
        let loss = (n_left as f64 - sum_sq(&left_counts) / n_left as f64
            + n_right as f64
            - sum_sq(&right_counts) / n_right as f64)
            / n as f64;
        if best.map_or(true, |(b, _)| loss < b) {
            best = Some((loss, 0.5 * (sorted[i].0 + sorted[i + 1].0)));
        }
    }
    best
}

/// Variance-reduction scan: minimizes the pooled within-child SSE per row.
fn best_mse_split(sorted: &[(f64, f64)], min_node_size: usize) -> Option<(f64, f64)> {
    let n = sorted.len();
    let total_sum: f64 = sorted.iter().map(|&(_, y)| y).sum();
    let total_sq: f64 = sorted.iter().map(|&(_, y)| y * y).sum();
    let mut left_sum = 0.0;
    let mut left_sq = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        let y = sorted[i].1;
        left_sum += y;
        left_sq += y * y;
        let n_left = i + 1;
        let n_right = n - n_left;
        if n_left < min_node_size || n_right < min_node_size {
            continue;
        }
        if sorted[i].0 >= sorted[i + 1].0 {
            continue;
        }
        let sse_left = (left_sq - left_sum * left_sum / n_left as f64).max(0.0);
        let right_sum = total_sum - left_sum;
        let sse_right =
            (total_sq - left_sq - right_sum * right_sum / n_right as f64).max(0.0);
        let loss = (sse_left + sse_right) / n as f64;
        if best.map_or(true, |(b, _)| loss < b) {
            best = Some((loss, 0.5 * (sorted[i].0 + sorted[i + 1].0)));
        }
    }
    best
}

fn parent_impurity(
    responses: &[f64],
    rows: &[u32],
    labels: Option<&[u32]>,
    n_classes: usize,
) -> f64 {
    let n = rows.len() as f64;
    match labels {
        Some(labels) => {
            let mut counts = vec![0.0f64; n_classes];
            for &r in rows {
                counts[labels[r as usize] as usize] += 1.0;
            }
            1.0 - counts.iter().map(|&c| (c / n) * (c / n)).sum::<f64>()
        }
        None => {
            let (mut sum, mut sq) = (0.0, 0.0);
            for &r in rows {
                let y = responses[r as usize];
                sum += y;
                sq += y * y;
            }
            (sq - sum * sum / n).max(0.0) / n
        }
    }
}

fn build_tree(matrix: &FeatureMatrix, config: &ForestConfig, tree_index: usize) -> Tree {
    let n = matrix.n_rows();
    let p = matrix.n_cols();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, tree_index as u64));

    let sample_size = ((config.sample_fraction * n as f64).floor() as usize).clamp(2, n);
    let mut all_rows: Vec<u32> = (0..n as u32).collect();
    all_rows.shuffle(&mut rng);
    let subsample = &all_rows[..sample_size];
    let (split_rows, est_rows): (Vec<u32>, Vec<u32>) = if config.honesty {
        let half = sample_size.div_ceil(2);
        (subsample[..half].to_vec(), subsample[half..].to_vec())
    } else {
        (subsample.to_vec(), subsample.to_vec())
    };

    let mtry = config.effective_mtry(p);
    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { member_rows: Vec::new() }];
    let mut queue: std::collections::VecDeque<(usize, Vec<u32>, usize)> =
        std::collections::VecDeque::new();
    queue.push_back((0, split_rows, 0));
    let mut column_pool: Vec<usize> = (0..p).collect();

    while let Some((node_idx, rows, depth)) = queue.pop_front() {
        let splittable = rows.len() >= 2 * config.min_node_size
            && config.max_depth.map_or(true, |d| depth < d);
        if !splittable {
            nodes[node_idx] = TreeNode::Leaf { member_rows: rows };
            continue;
        }

        // pilot quantiles and pseudo-outcomes are recomputed from this
        // node's own rows
        let (labels, n_classes) = if config.criterion == SplitCriterion::QuantileGini {
            let node_responses: Vec<f64> =
                rows.iter().map(|&r| matrix.target[r as usize]).collect();
            let node_labels = pseudo_outcomes(&node_responses, &config.pilot_levels);
            let mut labels = vec![0u32; n];
            for (&r, &l) in rows.iter().zip(node_labels.iter()) {
                labels[r as usize] = l;
            }
            (Some(labels), config.pilot_levels.len() + 1)
        } else {
            (None, 0)
        };

        column_pool.shuffle(&mut rng);
        let mut candidates: Vec<usize> = column_pool[..mtry].to_vec();
        candidates.sort_unstable();

        let impurity = parent_impurity(&matrix.target, &rows, labels.as_deref(), n_classes);
        let mut best: Option<SplitCandidate> = None;
        for &col in &candidates {
            let column = &matrix.columns[col];
            let found = match &labels {
                Some(labels) => {
                    let mut sorted: Vec<(f64, u32)> = rows
                        .iter()
                        .map(|&r| (column[r as usize], labels[r as usize]))
                        .collect();
                    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                    best_gini_split(&sorted, n_classes, config.min_node_size)
                }
                None => {
                    let mut sorted: Vec<(f64, f64)> = rows
                        .iter()
                        .map(|&r| (column[r as usize], matrix.target[r as usize]))
                        .collect();
                    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                    best_mse_split(&sorted, config.min_node_size)
                }
            };
            if let Some((loss, value)) = found {
                if best.as_ref().map_or(true, |b| loss < b.loss) {
                    best = Some(SplitCandidate { loss, column: col, value });
                }
            }
        }

        match best {
            Some(split) if split.loss < impurity => {
                let column = &matrix.columns[split.column];
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
                    rows.iter().partition(|&&r| column[r as usize] <= split.value);
                let left_idx = nodes.len();
                nodes.push(TreeNode::Leaf { member_rows: Vec::new() });
                let right_idx = nodes.len();
                nodes.push(TreeNode::Leaf { member_rows: Vec::new() });
                nodes[node_idx] = TreeNode::Internal {
                    split_var: split.column,
                    split_value: split.value,
                    left: left_idx,
                    right: right_idx,
                };
                queue.push_back((left_idx, left_rows, depth + 1));
                queue.push_back((right_idx, right_rows, depth + 1));
            }
            _ => {
                nodes[node_idx] = TreeNode::Leaf { member_rows: rows };
            }
        }
    }

    let mut tree = Tree { nodes };
    fill_leaves(&mut tree, matrix, &est_rows);
    tree
}

/// Replace leaf membership with the estimation-half rows routed down the
/// fixed structure. Some leaves may end up empty.
fn fill_leaves(tree: &mut Tree, matrix: &FeatureMatrix, est_rows: &[u32]) {
    let mut membership: Vec<Vec<u32>> = vec![Vec::new(); tree.nodes.len()];
    for &row in est_rows {
        let mut idx = 0;
        loop {
            match &tree.nodes[idx] {
                TreeNode::Internal { split_var, split_value, left, right } => {
                    idx = if matrix.columns[*split_var][row as usize] <= *split_value {
                        *left
                    } else {
                        *right
                    };
                }
                TreeNode::Leaf { .. } => break,
            }
        }
        membership[idx].push(row);
    }
    for (idx, node) in tree.nodes.iter_mut().enumerate() {
        if let TreeNode::Leaf { member_rows } = node {
            let mut members = std::mem::take(&mut membership[idx]);
            members.sort_unstable();
            *member_rows = members;
        }
    }
}

/// Grow a forest. Trees are built in parallel with per-tree RNG streams
/// derived from (seed, tree index), so the result does not depend on
/// scheduling.
pub fn fit_forest(matrix: &FeatureMatrix, config: &ForestConfig) -> Result<QuantileForest> {
    config.validate(matrix.n_rows(), matrix.n_cols())?;
    let trees: Vec<Tree> = (0..config.num_trees)
        .into_par_iter()
        .map(|i| build_tree(matrix, config, i))
        .collect();
    Ok(QuantileForest {
        trees,
        config: config.clone(),
        responses: matrix.target.clone(),
        covariate_names: matrix.names.clone(),
    })
}

impl QuantileForest {
    pub fn n_rows(&self) -> usize {
        self.responses.len()
    }

    /// Similarity weights of `x` over the training rows: per tree, each
    /// member of x's leaf gets 1/leaf_size; trees whose leaf is empty
    /// abstain and the mass is renormalized over the rest.
    pub fn predict_weights(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n_rows();
        let mut acc = vec![0.0f64; n];
        let mut active = 0usize;
        for tree in &self.trees {
            if let TreeNode::Leaf { member_rows } = tree.leaf_for(x) {
                if member_rows.is_empty() {
                    continue;
                }
                active += 1;
                let w = 1.0 / member_rows.len() as f64;
                for &row in member_rows {
                    acc[row as usize] += w;
                }
            }
        }
        if active == 0 {
            return vec![1.0 / n as f64; n];
        }
        let inv = 1.0 / active as f64;
        for w in &mut acc {
            *w *= inv;
        }
        acc
    }

    /// Left-continuous inverse of the weighted empirical CDF over the
    /// training responses.
    pub fn predict_quantile(&self, x: &[f64], alpha: f64) -> f64 {
        debug_assert!(alpha > 0.0 && alpha < 1.0);
        let weights = self.predict_weights(x);
        let mut pairs: Vec<(f64, f64)> = self
            .responses
            .iter()
            .zip(weights.iter())
            .filter(|(_, &w)| w > 0.0)
            .map(|(&y, &w)| (y, w))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut cum = 0.0;
        for (y, w) in &pairs {
            cum += w;
            if cum >= alpha - 1e-10 {
                return *y;
            }
        }
        pairs.last().map(|(y, _)| *y).unwrap_or(f64::NAN)
    }

    /// Depth-weighted split frequencies. Layer l gets weight
    /// l^(−decay) / Σ_{j=1..d_max} j^(−decay); layers without splits have
    /// their weight renormalized over the nonempty layers.
    pub fn variable_importance(&self, d_max: usize, decay: f64) -> ImportanceReport {
        let p = self.covariate_names.len();
        let mut counts = vec![vec![0u64; p]; d_max];
        for tree in &self.trees {
            for (var, layer) in tree.split_layers() {
                if layer <= d_max {
                    counts[layer - 1][var] += 1;
                }
            }
        }
        let norm: f64 = (1..=d_max).map(|l| (l as f64).powf(-decay)).sum();
        let mut weights = vec![0.0f64; p];
        let mut used_weight = 0.0;
        for (layer_idx, layer_counts) in counts.iter().enumerate() {
            let total: u64 = layer_counts.iter().sum();
            if total == 0 {
                continue;
            }
            let w_l = ((layer_idx + 1) as f64).powf(-decay) / norm;
            used_weight += w_l;
            for (j, &c) in layer_counts.iter().enumerate() {
                weights[j] += w_l * c as f64 / total as f64;
            }
        }
        if used_weight > 0.0 {
            for w in &mut weights {
                *w /= used_weight;
            }
        }
        ImportanceReport { names: self.covariate_names.clone(), weights }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ForestFile { format_version: FOREST_FORMAT_VERSION, forest: self.clone() };
        serde_json::to_string(&file).map_err(|e| ForestError::Serialization(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: ForestFile =
            serde_json::from_str(json).map_err(|e| ForestError::Serialization(e.to_string()))?;
        if file.format_version != FOREST_FORMAT_VERSION {
            return Err(ForestError::Serialization(format!(
                "unsupported forest format version {}",
                file.format_version
            )));
        }
        Ok(file.forest)
    }
}

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format_version: u32,
    forest: QuantileForest,
}
