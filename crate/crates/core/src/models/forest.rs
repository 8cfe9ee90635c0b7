//! Bagged multi-output CART regression trees.

use serde::{Deserialize, Serialize};

use super::{check_training_set, FeatureRow, Normalization, TargetRow};
use crate::eq::BAND_COUNT;
use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::par::Exec;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub tree_count: usize,
    /// Nodes with at most this many samples become leaves.
    pub leaf_size: usize,
    /// Non-constant candidate features examined per node.
    pub max_features: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 100,
            leaf_size: 5,
            // ceil(sqrt(17))
            max_features: 5,
            bootstrap: true,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: TargetRow,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Flat node list with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, z: &FeatureRow) -> TargetRow {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if z[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Shape("tree has no nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { value } => {
                    if value.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Shape(format!("leaf {i} is not finite")));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    // children strictly after the parent rules out cycles
                    if *feature >= FEATURE_DIM
                        || !threshold.is_finite()
                        || *left <= i
                        || *right <= i
                        || *left >= self.nodes.len()
                        || *right >= self.nodes.len()
                    {
                        return Err(Error::Shape(format!("split node {i} is malformed")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub tree_count: usize,
    pub norm: Normalization,
}

impl ForestModel {
    pub(crate) fn predict_normalized(&self, z: &FeatureRow) -> TargetRow {
        let mut sum = [0.0; BAND_COUNT];
        for tree in &self.trees {
            let p = tree.predict(z);
            sum.iter_mut().zip(&p).for_each(|(s, v)| *s += v);
        }
        sum.map(|s| s / self.trees.len() as f64)
    }

    pub fn predict_row(&self, row: &FeatureRow) -> TargetRow {
        self.predict_normalized(&self.norm.apply(row))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.norm.validate()?;
        if self.trees.is_empty() || self.trees.len() != self.tree_count {
            return Err(Error::Shape(format!(
                "forest lists tree_count {} but holds {} trees",
                self.tree_count,
                self.trees.len()
            )));
        }
        self.trees.iter().try_for_each(RegressionTree::validate)
    }
}

pub fn train_forest(x: &[FeatureRow], y: &[TargetRow], config: &ForestConfig) -> Result<ForestModel> {
    train_forest_with(x, y, config, Exec::default())
}

/// Trees are fitted independently (tree `t` uses seed `config.seed + t`),
/// so the result is the same for every execution strategy.
pub fn train_forest_with(x: &[FeatureRow], y: &[TargetRow], config: &ForestConfig, exec: Exec) -> Result<ForestModel> {
    check_training_set(x, y)?;
    if config.tree_count == 0 || config.leaf_size == 0 || config.max_features == 0 {
        return Err(Error::invalid(
            "tree count, leaf size and max features must be positive",
        ));
    }
    let norm = if x.len() >= 2 {
        Normalization::fit(x)?
    } else {
        Normalization {
            mean: vec![0.0; FEATURE_DIM],
            std: vec![1.0; FEATURE_DIM],
        }
    };
    let z = norm.apply_all(x);
    let trees = exec.map_range(config.tree_count, |t| {
        let mut rng = SplitMix64::new(config.seed.wrapping_add(t as u64));
        let rows: Vec<usize> = if config.bootstrap {
            (0..z.len()).map(|_| rng.below(z.len())).collect()
        } else {
            (0..z.len()).collect()
        };
        TreeBuilder {
            z: &z,
            y,
            config,
            rng,
            nodes: Vec::new(),
        }
        .build(rows)
    });
    Ok(ForestModel {
        trees,
        tree_count: config.tree_count,
        norm,
    })
}

struct TreeBuilder<'a> {
    z: &'a [FeatureRow],
    y: &'a [TargetRow],
    config: &'a ForestConfig,
    rng: SplitMix64,
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    sse: f64,
}

impl TreeBuilder<'_> {
    fn build(mut self, rows: Vec<usize>) -> RegressionTree {
        // (node slot, rows) work list; children are pushed after their parent
        self.nodes.push(Node::Leaf {
            value: [0.0; BAND_COUNT],
        });
        let mut stack = vec![(0usize, rows)];
        while let Some((slot, rows)) = stack.pop() {
            match self.best_split(&rows) {
                Some(split) => {
                    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&r| self.z[r][split.feature] <= split.threshold);
                    let left = self.nodes.len();
                    let right = left + 1;
                    self.nodes.push(Node::Leaf {
                        value: [0.0; BAND_COUNT],
                    });
                    self.nodes.push(Node::Leaf {
                        value: [0.0; BAND_COUNT],
                    });
                    self.nodes[slot] = Node::Split {
                        feature: split.feature,
                        threshold: split.threshold,
                        left,
                        right,
                    };
                    stack.push((right, right_rows));
                    stack.push((left, left_rows));
                }
                None => {
                    self.nodes[slot] = Node::Leaf {
                        value: self.mean(&rows),
                    }
                }
            }
        }
        RegressionTree { nodes: self.nodes }
    }

    fn mean(&self, rows: &[usize]) -> TargetRow {
        let mut sum = [0.0; BAND_COUNT];
        for &r in rows {
            sum.iter_mut().zip(&self.y[r]).for_each(|(s, v)| *s += v);
        }
        sum.map(|s| s / rows.len() as f64)
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        let first = self.y[rows[0]];
        rows.iter().all(|&r| self.y[r] == first)
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<SplitChoice> {
        if rows.len() <= self.config.leaf_size || self.is_pure(rows) {
            return None;
        }
        let mut features: [usize; FEATURE_DIM] = std::array::from_fn(|i| i);
        self.rng.shuffle(&mut features);

        let mut best: Option<SplitChoice> = None;
        let mut examined = 0;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for &f in &features {
            if examined == self.config.max_features {
                break;
            }
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (self.z[r][f], r)));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if sorted[0].0 == sorted[sorted.len() - 1].0 {
                continue;
            }
            examined += 1;
            if let Some(c) = self.scan_feature(f, &sorted) {
                if best.as_ref().is_none_or(|b| c.sse < b.sse) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// Lowest total within-child sum of squares over thresholds on one
    /// feature, summed across all outputs.
    fn scan_feature(&self, feature: usize, sorted: &[(f64, usize)]) -> Option<SplitChoice> {
        let n = sorted.len();
        let mut total = [0.0; BAND_COUNT];
        let mut total_sq = 0.0;
        for &(_, r) in sorted {
            for (t, v) in total.iter_mut().zip(&self.y[r]) {
                *t += v;
                total_sq += v * v;
            }
        }
        let mut left = [0.0; BAND_COUNT];
        let mut best: Option<SplitChoice> = None;
        for i in 0..n - 1 {
            let (value, r) = sorted[i];
            for (l, v) in left.iter_mut().zip(&self.y[r]) {
                *l += v;
            }
            let next = sorted[i + 1].0;
            if next == value {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = (n - i - 1) as f64;
            let mut sse = total_sq;
            for k in 0..BAND_COUNT {
                let right = total[k] - left[k];
                sse -= left[k] * left[k] / nl + right * right / nr;
            }
            if best.as_ref().is_none_or(|b| sse < b.sse) {
                let mid = value + (next - value) / 2.0;
                let threshold = if mid < next { mid } else { value };
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    sse,
                });
            }
        }
        best
    }
}
