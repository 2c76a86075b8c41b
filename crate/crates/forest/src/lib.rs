//! Random-forest regression (CART trees, bootstrap sampling, per-node
//! feature subsampling) plus the molecular-weight and ligand-bias baseline
//! assemblies.

mod baselines;
mod tree;

pub use baselines::{ligand_bias_model, molecular_weight_model, TrainedTabularModel};
pub use tree::{RegressionTree, TreeNode};

use affbench_rng::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("feature width mismatch: model expects {want}, got {got}")]
    WidthMismatch { want: usize, got: usize },
    #[error("rows ({rows}) and labels ({labels}) differ")]
    RowLabelMismatch { rows: usize, labels: usize },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Features(#[from] affbench_core::featkit::FeatError),
}

pub type Result<T> = std::result::Result<T, ForestError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_estimators: usize,
    /// Fraction of features examined per split, ⌈max_features·p⌉.
    pub max_features: f64,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub rng_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_estimators: 500,
            max_features: 1.0 / 3.0,
            min_samples_leaf: 1,
            bootstrap: true,
            max_depth: None,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub n_features: usize,
    pub trees: Vec<RegressionTree>,
}

/// Fits `n_estimators` CART regression trees on bootstrap samples.
///
/// Rows are first brought into a canonical lexicographic order so the fit
/// depends only on the data multiset and the seed, never on input row
/// order. Per-tree RNG streams derive from (seed, tree index), making the
/// parallel fit independent of scheduling.
pub fn fit_forest(x: &[Vec<f64>], y: &[f64], config: &ForestConfig) -> Result<ForestModel> {
    if x.is_empty() {
        return Err(ForestError::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(ForestError::RowLabelMismatch {
            rows: x.len(),
            labels: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(ForestError::TooFewRows { need: 2, got: x.len() });
    }
    if config.n_estimators == 0 {
        return Err(ForestError::BadConfig("n_estimators must be ≥ 1".into()));
    }
    if !(0.0..=1.0).contains(&config.max_features) || config.max_features == 0.0 {
        return Err(ForestError::BadConfig(format!(
            "max_features {} outside (0, 1]",
            config.max_features
        )));
    }
    let width = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != width) {
        return Err(ForestError::WidthMismatch {
            want: width,
            got: bad.len(),
        });
    }

    // canonical row order: lexicographic over features, then label
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        for c in 0..width {
            match x[a][c].total_cmp(&x[b][c]) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        y[a].total_cmp(&y[b])
    });
    let xs: Vec<&[f64]> = order.iter().map(|&i| x[i].as_slice()).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let n_split_features = if width == 0 {
        0
    } else {
        ((config.max_features * width as f64).ceil() as usize).clamp(1, width)
    };

    let trees: Vec<RegressionTree> = (0..config.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng =
                affbench_rng::Xoshiro256::seed_from(derive_seed(config.rng_seed, t as u64));
            let rows: Vec<usize> = if config.bootstrap {
                (0..xs.len()).map(|_| rng.next_below(xs.len())).collect()
            } else {
                (0..xs.len()).collect()
            };
            tree::grow(
                &xs,
                &ys,
                rows,
                n_split_features,
                config.min_samples_leaf,
                config.max_depth,
                &mut rng,
            )
        })
        .collect();

    Ok(ForestModel {
        config: config.clone(),
        n_features: width,
        trees,
    })
}

/// Mean prediction over all trees.
pub fn predict(model: &ForestModel, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    for row in x {
        if row.len() != model.n_features {
            return Err(ForestError::WidthMismatch {
                want: model.n_features,
                got: row.len(),
            });
        }
    }
    Ok(x.iter()
        .map(|row| {
            let total: f64 = model.trees.iter().map(|t| t.predict(row)).sum();
            total / model.trees.len() as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use affbench_rng::Xoshiro256;

    fn single_tree_config(seed: u64) -> ForestConfig {
        ForestConfig {
            n_estimators: 1,
            max_features: 1.0,
            bootstrap: false,
            rng_seed: seed,
            ..Default::default()
        }
    }

    #[test]
    fn constant_labels_constant_predictions() {
        let x: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64, (k * 3 % 7) as f64]).collect();
        let y = vec![4.25; 10];
        let model = fit_forest(&x, &y, &ForestConfig { n_estimators: 5, ..Default::default() }).unwrap();
        for p in predict(&model, &x).unwrap() {
            assert_eq!(p, 4.25);
        }
    }

    #[test]
    fn step_function_fit_exactly_by_one_tree() {
        // CART oracle on an 8-point step fixture: full depth reproduces train
        let x: Vec<Vec<f64>> = (0..8).map(|k| vec![k as f64]).collect();
        let y = vec![1.0, 1.0, 1.0, 1.0, 5.0, 5.0, 5.0, 5.0];
        let model = fit_forest(&x, &y, &single_tree_config(0)).unwrap();
        assert_eq!(predict(&model, &x).unwrap(), y);
    }

    #[test]
    fn same_seed_identical_different_seed_differs() {
        let mut rng = Xoshiro256::seed_from(1);
        let x: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.next_range(0.0, 1.0)).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0 + r[1] - r[2]).collect();
        let cfg = |seed| ForestConfig {
            n_estimators: 10,
            rng_seed: seed,
            ..Default::default()
        };
        let a = fit_forest(&x, &y, &cfg(7)).unwrap();
        let b = fit_forest(&x, &y, &cfg(7)).unwrap();
        let c = fit_forest(&x, &y, &cfg(8)).unwrap();
        assert_eq!(predict(&a, &x).unwrap(), predict(&b, &x).unwrap());
        assert_ne!(predict(&a, &x).unwrap(), predict(&c, &x).unwrap());
    }

    #[test]
    fn row_order_does_not_matter() {
        let mut rng = Xoshiro256::seed_from(2);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..2).map(|_| rng.next_range(0.0, 1.0)).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] - 3.0 * r[1]).collect();
        let cfg = ForestConfig {
            n_estimators: 8,
            rng_seed: 5,
            ..Default::default()
        };
        let base = fit_forest(&x, &y, &cfg).unwrap();

        let mut perm: Vec<usize> = (0..30).collect();
        rng.shuffle(&mut perm);
        let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let shuffled = fit_forest(&xp, &yp, &cfg).unwrap();
        assert_eq!(base, shuffled);
    }

    #[test]
    fn two_leaf_trees_average() {
        let model = ForestModel {
            config: ForestConfig::default(),
            n_features: 1,
            trees: vec![
                RegressionTree {
                    nodes: vec![TreeNode::Leaf { value: 1.0 }],
                },
                RegressionTree {
                    nodes: vec![TreeNode::Leaf { value: 3.0 }],
                },
            ],
        };
        assert_eq!(predict(&model, &[vec![0.0]]).unwrap(), vec![2.0]);
    }

    #[test]
    fn beats_mean_predictor_on_linear_data() {
        let mut rng = Xoshiro256::seed_from(3);
        let x: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| rng.next_range(-1.0, 1.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 2.0 * r[0] - r[1] + 0.5 * r[2] + 0.05 * rng.next_normal())
            .collect();
        let model = fit_forest(
            &x,
            &y,
            &ForestConfig {
                n_estimators: 50,
                ..Default::default()
            },
        )
        .unwrap();
        let preds = predict(&model, &x).unwrap();
        let mean_y: f64 = y.iter().sum::<f64>() / y.len() as f64;
        let forest_mse: f64 =
            preds.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64;
        let mean_mse: f64 = y.iter().map(|t| (t - mean_y).powi(2)).sum::<f64>() / y.len() as f64;
        assert!(forest_mse < mean_mse, "forest {forest_mse} vs mean {mean_mse}");
    }

    #[test]
    fn forest_mse_at_most_average_tree_mse() {
        let mut rng = Xoshiro256::seed_from(4);
        let x: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.next_range(0.0, 1.0)).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| (6.0 * r[0]).sin() + r[1]).collect();
        let model = fit_forest(
            &x,
            &y,
            &ForestConfig {
                n_estimators: 20,
                ..Default::default()
            },
        )
        .unwrap();
        let forest_preds = predict(&model, &x).unwrap();
        let forest_mse: f64 = forest_preds
            .iter()
            .zip(&y)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / y.len() as f64;
        let avg_tree_mse: f64 = model
            .trees
            .iter()
            .map(|t| {
                x.iter()
                    .zip(&y)
                    .map(|(r, yv)| (t.predict(r) - yv).powi(2))
                    .sum::<f64>()
                    / y.len() as f64
            })
            .sum::<f64>()
            / model.trees.len() as f64;
        assert!(forest_mse <= avg_tree_mse + 1e-12);
    }

    #[test]
    fn thresholds_lie_strictly_between_observed_values() {
        let mut rng = Xoshiro256::seed_from(6);
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| (rng.next_range(0.0, 10.0)).round()).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r.iter().sum()).collect();
        let model = fit_forest(
            &x,
            &y,
            &ForestConfig {
                n_estimators: 10,
                ..Default::default()
            },
        )
        .unwrap();
        for tree in &model.trees {
            for node in &tree.nodes {
                if let TreeNode::Split { feature, threshold, .. } = node {
                    let below = x.iter().any(|r| r[*feature] < *threshold);
                    let above = x.iter().any(|r| r[*feature] > *threshold);
                    assert!(below && above, "threshold {threshold} outside data range");
                }
            }
        }
    }

    #[test]
    fn width_mismatch_is_error() {
        let x = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let y = vec![0.0, 1.0];
        let model = fit_forest(&x, &y, &single_tree_config(0)).unwrap();
        assert!(matches!(
            predict(&model, &[vec![1.0]]),
            Err(ForestError::WidthMismatch { want: 2, got: 1 })
        ));
    }

    #[test]
    fn empty_and_tiny_sets_rejected() {
        assert!(matches!(
            fit_forest(&[], &[], &ForestConfig::default()),
            Err(ForestError::EmptyTrainingSet)
        ));
        assert!(matches!(
            fit_forest(&[vec![1.0]], &[1.0], &ForestConfig::default()),
            Err(ForestError::TooFewRows { .. })
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let x: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64]).collect();
        let y: Vec<f64> = (0..10).map(|k| (k % 3) as f64).collect();
        let model = fit_forest(
            &x,
            &y,
            &ForestConfig {
                n_estimators: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: ForestModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }
}
