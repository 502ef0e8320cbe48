//! Bagged CART regression trees with variance-reduction splits, bootstrap
//! resampling and per-split feature subsampling of ⌈d/3⌉ candidates. Tree
//! depth is chosen from a grid by k-fold cross-validated MSE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::numeric::derive_seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth_grid: Vec<u32>,
    pub cv_folds: usize,
    pub seed: u64,
}

impl ForestConfig {
    /// Defaults (200 trees, depth grid {2,3,4,6,8}, 5-fold CV) around a
    /// mandatory seed.
    pub fn new(seed: u64) -> Self {
        Self {
            n_trees: 200,
            max_depth_grid: vec![2, 3, 4, 6, 8],
            cv_folds: 5,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestRegressor {
    pub trees: Vec<Tree>,
    pub max_depth: u32,
    pub n_features: usize,
}

impl ForestRegressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        s / self.trees.len() as f64
    }
}

const MIN_SPLIT: usize = 2;

/// Fit a forest. Deterministic given `config.seed`: per-tree RNG streams are
/// derived from the seed and tree index, independent of scheduling.
pub fn forest_fit(rows: &[Vec<f64>], targets: &[f64], config: &ForestConfig) -> Result<ForestRegressor> {
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: targets.len(),
        });
    }
    if rows.len() < 20 {
        return Err(Error::InsufficientData {
            got: rows.len(),
            needed: 20,
        });
    }
    let d = rows[0].len();
    let max_depth = if config.max_depth_grid.len() == 1 {
        config.max_depth_grid[0]
    } else {
        select_depth_cv(rows, targets, config)
    };
    Ok(grow_forest(rows, targets, d, max_depth, config))
}

fn select_depth_cv(rows: &[Vec<f64>], targets: &[f64], config: &ForestConfig) -> u32 {
    let n = rows.len();
    let folds = config.cv_folds.max(2).min(n);
    // deterministic shuffled fold assignment
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, b"cv-shuffle"));
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let fold_of: Vec<usize> = {
        let mut f = vec![0; n];
        for (rank, &idx) in order.iter().enumerate() {
            f[idx] = rank % folds;
        }
        f
    };

    let mut best = (config.max_depth_grid[0], f64::INFINITY);
    for &depth in &config.max_depth_grid {
        let mut sq_err = 0.0;
        let mut count = 0usize;
        for fold in 0..folds {
            let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            let test_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            if train_idx.len() < MIN_SPLIT || test_idx.is_empty() {
                continue;
            }
            let tr_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| rows[i].clone()).collect();
            let tr_y: Vec<f64> = train_idx.iter().map(|&i| targets[i]).collect();
            // a smaller forest is enough to rank depths
            let cv_cfg = ForestConfig {
                n_trees: (config.n_trees / 4).max(25),
                seed: derive_seed(config.seed, format!("cv:{depth}:{fold}").as_bytes()),
                ..config.clone()
            };
            let forest = grow_forest(&tr_rows, &tr_y, rows[0].len(), depth, &cv_cfg);
            for &i in &test_idx {
                let e = forest.predict(&rows[i]) - targets[i];
                sq_err += e * e;
                count += 1;
            }
        }
        let mse = sq_err / count.max(1) as f64;
        if mse < best.1 {
            best = (depth, mse);
        }
    }
    best.0
}

fn grow_forest(
    rows: &[Vec<f64>],
    targets: &[f64],
    d: usize,
    max_depth: u32,
    config: &ForestConfig,
) -> ForestRegressor {
    let mtry = d.div_ceil(3).max(1);
    let trees = map_indexed(config.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, format!("tree:{t}").as_bytes()));
        let n = rows.len();
        let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        grow_tree(rows, targets, &indices, d, mtry, max_depth, &mut rng)
    });
    ForestRegressor {
        trees,
        max_depth,
        n_features: d,
    }
}

fn grow_tree(
    rows: &[Vec<f64>],
    targets: &[f64],
    indices: &[usize],
    d: usize,
    mtry: usize,
    max_depth: u32,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let mut nodes = Vec::new();
    build_node(rows, targets, indices, d, mtry, max_depth, rng, &mut nodes);
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn build_node(
    rows: &[Vec<f64>],
    targets: &[f64],
    indices: &[usize],
    d: usize,
    mtry: usize,
    depth_left: u32,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let mean = indices.iter().map(|&i| targets[i]).sum::<f64>() / indices.len() as f64;
    if depth_left == 0 || indices.len() < MIN_SPLIT {
        nodes.push(Node::Leaf(mean));
        return nodes.len() - 1;
    }

    // feature subsample without replacement
    let mut features: Vec<usize> = (0..d).collect();
    for i in 0..mtry.min(d) {
        let j = rng.gen_range(i..d);
        features.swap(i, j);
    }
    features.truncate(mtry.min(d));

    let best = features
        .iter()
        .filter_map(|&f| best_split_on(rows, targets, indices, f).map(|(t, sse)| (f, t, sse)))
        .min_by(|a, b| a.2.partial_cmp(&b.2).unwrap());

    let Some((feature, threshold, _)) = best else {
        nodes.push(Node::Leaf(mean));
        return nodes.len() - 1;
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        indices.iter().partition(|&&i| rows[i][feature] <= threshold);
    if left_idx.is_empty() || right_idx.is_empty() {
        nodes.push(Node::Leaf(mean));
        return nodes.len() - 1;
    }

    let me = nodes.len();
    nodes.push(Node::Leaf(0.0)); // placeholder
    let left = build_node(rows, targets, &left_idx, d, mtry, depth_left - 1, rng, nodes);
    let right = build_node(rows, targets, &right_idx, d, mtry, depth_left - 1, rng, nodes);
    nodes[me] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    me
}

/// Best split of `indices` on `feature`, minimizing the summed SSE of the
/// two children. Returns `(threshold, sse)`; `None` when the feature is
/// constant on this node.
fn best_split_on(
    rows: &[Vec<f64>],
    targets: &[f64],
    indices: &[usize],
    feature: usize,
) -> Option<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = indices
        .iter()
        .map(|&i| (rows[i][feature], targets[i]))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = pairs.len();
    let total_sum: f64 = pairs.iter().map(|p| p.1).sum();
    let total_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();

    let mut left_sum = 0.0;
    let mut left_sq = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        left_sum += pairs[i].1;
        left_sq += pairs[i].1 * pairs[i].1;
        if pairs[i].0 == pairs[i + 1].0 {
            continue; // cannot cut between equal values
        }
        let nl = (i + 1) as f64;
        let nr = (n - i - 1) as f64;
        let sse = (left_sq - left_sum * left_sum / nl)
            + ((total_sq - left_sq) - (total_sum - left_sum).powi(2) / nr);
        if best.map_or(true, |(_, b)| sse < b) {
            best = Some((0.5 * (pairs[i].0 + pairs[i + 1].0), sse));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_targets_predict_the_constant() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let y = vec![3.25; 30];
        let f = forest_fit(&rows, &y, &ForestConfig::new(1)).unwrap();
        for r in &rows {
            assert!((f.predict(r) - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn single_tree_depth_one_recovers_leaf_means() {
        // 4 points, binary separable on feature 0: left mean 1.5, right mean 7.0
        let rows = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let y = vec![1.0, 2.0, 6.0, 8.0];
        let mut nodes = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        build_node(&rows, &y, &[0, 1, 2, 3], 1, 1, 1, &mut rng, &mut nodes);
        let tree = Tree { nodes };
        assert!((tree.predict(&[0.5]) - 1.5).abs() < 1e-12);
        assert!((tree.predict(&[10.5]) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_is_deterministic() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 2.0 + r[1]).collect();
        let cfg = ForestConfig {
            n_trees: 30,
            ..ForestConfig::new(42)
        };
        let a = forest_fit(&rows, &y, &cfg).unwrap();
        let b = forest_fit(&rows, &y, &cfg).unwrap();
        for r in rows.iter().take(10) {
            assert_eq!(a.predict(r), b.predict(r));
        }
        let c = forest_fit(&rows, &y, &ForestConfig { seed: 43, ..cfg }).unwrap();
        assert!(rows.iter().any(|r| a.predict(r) != c.predict(r)));
    }

    #[test]
    fn rejects_tiny_datasets() {
        let rows = vec![vec![1.0]; 10];
        let y = vec![0.0; 10];
        assert!(matches!(
            forest_fit(&rows, &y, &ForestConfig::new(0)),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn depth_grid_cv_picks_a_grid_member() {
        let rows: Vec<Vec<f64>> = (0..80).map(|i| vec![i as f64 / 80.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
        let cfg = ForestConfig {
            n_trees: 40,
            max_depth_grid: vec![1, 3],
            ..ForestConfig::new(9)
        };
        let f = forest_fit(&rows, &y, &cfg).unwrap();
        assert!(cfg.max_depth_grid.contains(&f.max_depth));
        // a step function is captured at depth 1 already
        assert!((f.predict(&[0.1]) - 0.0).abs() < 0.1);
        assert!((f.predict(&[0.9]) - 1.0).abs() < 0.1);
    }
}
