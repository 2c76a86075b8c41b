//! CART regression tree: variance-reduction splits, midpoint thresholds.

use affbench_rng::Xoshiro256;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Node 0 is the root; children reference later indices.
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Best variance-reduction split over `features` for the rows in `ids`.
/// Thresholds are midpoints between adjacent distinct values; ties resolve
/// to the lowest feature index, then the lowest threshold (features arrive
/// sorted ascending, candidate thresholds ascend within a feature).
fn best_split(
    x: &[&[f64]],
    y: &[f64],
    ids: &[usize],
    features: &[usize],
    min_samples_leaf: usize,
) -> Option<BestSplit> {
    let n = ids.len();
    let total_sum: f64 = ids.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = ids.iter().map(|&i| y[i] * y[i]).sum();
    let parent_sse = total_sq - total_sum * total_sum / n as f64;

    let mut best: Option<BestSplit> = None;
    let mut scratch: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &feature in features {
        scratch.clear();
        scratch.extend(ids.iter().map(|&i| (x[i][feature], y[i])));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for pos in 1..n {
            let (v_prev, y_prev) = scratch[pos - 1];
            left_sum += y_prev;
            left_sq += y_prev * y_prev;
            let v_here = scratch[pos].0;
            if v_here == v_prev {
                continue; // identical values cannot be separated
            }
            if pos < min_samples_leaf || n - pos < min_samples_leaf {
                continue;
            }
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let left_sse = left_sq - left_sum * left_sum / pos as f64;
            let right_sse = right_sq - right_sum * right_sum / (n - pos) as f64;
            let gain = parent_sse - left_sse - right_sse;
            let threshold = 0.5 * (v_prev + v_here);
            let better = match &best {
                None => gain > 1e-12,
                Some(b) => gain > b.gain + 1e-12,
            };
            if better {
                best = Some(BestSplit {
                    gain,
                    feature,
                    threshold,
                });
            }
        }
    }
    best
}

/// Grows a full tree over the given (possibly bootstrapped) row ids.
pub(crate) fn grow(
    x: &[&[f64]],
    y: &[f64],
    root_rows: Vec<usize>,
    n_split_features: usize,
    min_samples_leaf: usize,
    max_depth: Option<usize>,
    rng: &mut Xoshiro256,
) -> RegressionTree {
    let width = x.first().map(|r| r.len()).unwrap_or(0);
    let mut nodes: Vec<TreeNode> = Vec::new();
    // (node slot, rows, depth)
    let mut pending: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    nodes.push(TreeNode::Leaf { value: 0.0 });
    pending.push((0, root_rows, 1));

    while let Some((slot, rows, depth)) = pending.pop() {
        let mean: f64 = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
        let depth_ok = max_depth.map(|d| depth < d).unwrap_or(true);
        let split = if depth_ok && rows.len() >= 2 * min_samples_leaf.max(1) && width > 0 {
            let mut features = rng.sample_indices(width, n_split_features.min(width));
            features.sort_unstable();
            best_split(x, y, &rows, &features, min_samples_leaf)
        } else {
            None
        };
        match split {
            Some(s) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| x[i][s.feature] <= s.threshold);
                let left = nodes.len();
                nodes.push(TreeNode::Leaf { value: 0.0 });
                let right = nodes.len();
                nodes.push(TreeNode::Leaf { value: 0.0 });
                nodes[slot] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
                // push right first so the left subtree is built first (stable layout)
                pending.push((right, right_rows, depth + 1));
                pending.push((left, left_rows, depth + 1));
            }
            None => {
                nodes[slot] = TreeNode::Leaf { value: mean };
            }
        }
    }
    RegressionTree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_split_on_obvious_boundary() {
        let rows: Vec<Vec<f64>> = (0..6).map(|k| vec![k as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let y = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
        let mut rng = Xoshiro256::seed_from(0);
        let tree = grow(&refs, &y, (0..6).collect(), 1, 1, None, &mut rng);
        assert_eq!(tree.predict(&[1.0]), 0.0);
        assert_eq!(tree.predict(&[4.0]), 10.0);
        // boundary midpoint at 2.5
        assert_eq!(tree.predict(&[2.4]), 0.0);
        assert_eq!(tree.predict(&[2.6]), 10.0);
    }

    #[test]
    fn constant_labels_single_leaf() {
        let rows: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let y = [2.0; 5];
        let mut rng = Xoshiro256::seed_from(0);
        let tree = grow(&refs, &y, (0..5).collect(), 1, 1, None, &mut rng);
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict(&[99.0]), 2.0);
    }

    #[test]
    fn max_depth_caps_growth() {
        let rows: Vec<Vec<f64>> = (0..32).map(|k| vec![k as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let y: Vec<f64> = (0..32).map(|k| k as f64).collect();
        let mut rng = Xoshiro256::seed_from(0);
        let tree = grow(&refs, &y, (0..32).collect(), 1, 1, Some(3), &mut rng);
        assert!(tree.depth() <= 3);
    }
}
