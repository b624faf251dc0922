//! Regression trees: leaf weights, split scoring, exact greedy enumeration,
//! and level-wise growth.

use serde::{Deserialize, Serialize};

use super::loss::GradientPair;
use super::train::TrainConfig;
use super::GbtError;
use crate::scalar::Scalar;

/// Gradient statistics of one node's instance set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct NodeStats<S: Scalar> {
    /// Sum of first derivatives over the node's instances.
    pub g: S,
    /// Sum of second derivatives over the node's instances.
    pub h: S,
    pub count: usize,
}

impl<S: Scalar> NodeStats<S> {
    pub fn from_pairs<'a, I: IntoIterator<Item = &'a GradientPair<S>>>(pairs: I) -> Self {
        let mut stats = Self {
            g: S::zero(),
            h: S::zero(),
            count: 0,
        };
        for p in pairs {
            stats.g += p.g;
            stats.h += p.h;
            stats.count += 1;
        }
        stats
    }
}

/// Optimal leaf weight `-G / (H + lambda)` for the node's statistics.
pub fn leaf_weight<S: Scalar>(g: S, h: S, lambda: S) -> Result<S, GbtError> {
    let denom = h + lambda;
    if denom <= S::zero() {
        return Err(GbtError::DegenerateNode);
    }
    Ok(-g / denom)
}

/// Regularized gain of splitting a node into `(G_L, H_L)` and `(G_R, H_R)`:
/// half the improvement of the children's scores over the parent's, minus
/// the per-leaf penalty `gamma`.
pub fn split_gain<S: Scalar>(g_l: S, h_l: S, g_r: S, h_r: S, lambda: S, gamma: S) -> S {
    let half = S::from_config(0.5);
    let parent_g = g_l + g_r;
    let parent_h = h_l + h_r;
    half * (g_l * g_l / (h_l + lambda) + g_r * g_r / (h_r + lambda)
        - parent_g * parent_g / (parent_h + lambda))
        - gamma
}

/// Winning split of an exact greedy enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SplitCandidate<S: Scalar> {
    pub feature: usize,
    pub threshold: S,
    /// Where rows with a missing feature value are routed.
    pub default_left: bool,
    pub gain: S,
}

/// One node of a trained tree. Split thresholds sit at midpoints of adjacent
/// distinct observed values; rows compare with `value < threshold` and
/// missing values follow `default_left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub enum TreeNode<S: Scalar> {
    Split {
        feature: usize,
        threshold: S,
        default_left: bool,
        /// Realized gain of this split; feeds feature importance.
        gain: S,
        left: Box<TreeNode<S>>,
        right: Box<TreeNode<S>>,
    },
    Leaf {
        weight: S,
    },
}

impl<S: Scalar> TreeNode<S> {
    /// Score one row; missing cells are NaN.
    pub fn predict(&self, row: &[S]) -> S {
        match self {
            TreeNode::Leaf { weight } => *weight,
            TreeNode::Split {
                feature,
                threshold,
                default_left,
                left,
                right,
                ..
            } => {
                let x = row[*feature];
                let go_left = if x.is_nan() { *default_left } else { x < *threshold };
                if go_left {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn split_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.split_count() + right.split_count(),
        }
    }

    /// Sum of squared leaf weights, the `||w||^2` term of the penalty.
    pub fn weight_norm_sq(&self) -> S {
        match self {
            TreeNode::Leaf { weight } => *weight * *weight,
            TreeNode::Split { left, right, .. } => left.weight_norm_sq() + right.weight_norm_sq(),
        }
    }

    /// Visit every split as `(feature, realized gain)`.
    pub fn for_each_split(&self, f: &mut impl FnMut(usize, S)) {
        if let TreeNode::Split {
            feature,
            gain,
            left,
            right,
            ..
        } = self
        {
            f(*feature, *gain);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }
}

/// Midpoint threshold between two adjacent distinct values, nudged to the
/// upper value when rounding would otherwise leave the lower value on the
/// right side of the `value < threshold` test.
fn boundary_threshold<S: Scalar>(lower: S, upper: S) -> S {
    let half = S::from_config(0.5);
    let mid = (lower + upper) * half;
    if lower < mid {
        mid
    } else {
        upper
    }
}

/// Scan one feature's value-sorted `(value, g, h)` triples for the best
/// boundary. Candidates are visited threshold-ascending with the
/// missing-rows-left variant first, and only a strictly larger gain replaces
/// the incumbent, so ties resolve to the lowest threshold and to routing
/// missing values left.
fn scan_sorted_feature<S: Scalar>(
    feature: usize,
    sorted: &[(S, S, S)],
    g_missing: S,
    h_missing: S,
    g_total: S,
    h_total: S,
    lambda: S,
    gamma: S,
    min_child_weight: S,
) -> Option<SplitCandidate<S>> {
    let mut best: Option<SplitCandidate<S>> = None;
    let mut prefix_g = S::zero();
    let mut prefix_h = S::zero();
    for i in 0..sorted.len().saturating_sub(1) {
        let (value, g, h) = sorted[i];
        prefix_g += g;
        prefix_h += h;
        let next_value = sorted[i + 1].0;
        if value == next_value {
            continue;
        }
        let threshold = boundary_threshold(value, next_value);
        for default_left in [true, false] {
            let g_l = if default_left { prefix_g + g_missing } else { prefix_g };
            let h_l = if default_left { prefix_h + h_missing } else { prefix_h };
            let g_r = g_total - g_l;
            let h_r = h_total - h_l;
            if h_l < min_child_weight || h_r < min_child_weight {
                continue;
            }
            if h_l + lambda <= S::zero() || h_r + lambda <= S::zero() {
                continue;
            }
            let gain = split_gain(g_l, h_l, g_r, h_r, lambda, gamma);
            if best.map_or(true, |b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature,
                    threshold,
                    default_left,
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > S::zero())
}

/// Dense instance storage with per-column value order, shared by the
/// standalone split ops and the trainer.
pub(crate) struct FrameStore<S: Scalar> {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major values, NaN where missing.
    dense: Vec<S>,
    /// Per column: row ids holding a value, ascending by value.
    sorted: Vec<Vec<u32>>,
    /// Per column: row ids with a missing value.
    missing: Vec<Vec<u32>>,
}

impl<S: Scalar> FrameStore<S> {
    pub fn from_rows(rows: &[&[S]]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut dense = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols, "ragged instance rows");
            dense.extend_from_slice(row);
        }
        Self::from_dense(dense, n_rows, n_cols)
    }

    pub fn from_dense(dense: Vec<S>, n_rows: usize, n_cols: usize) -> Self {
        let mut sorted = Vec::with_capacity(n_cols);
        let mut missing = Vec::with_capacity(n_cols);
        for j in 0..n_cols {
            let mut present: Vec<u32> = Vec::new();
            let mut absent: Vec<u32> = Vec::new();
            for i in 0..n_rows {
                if dense[i * n_cols + j].is_nan() {
                    absent.push(i as u32);
                } else {
                    present.push(i as u32);
                }
            }
            present.sort_unstable_by(|a, b| {
                dense[*a as usize * n_cols + j]
                    .partial_cmp(&dense[*b as usize * n_cols + j])
                    .unwrap()
            });
            sorted.push(present);
            missing.push(absent);
        }
        Self {
            n_rows,
            n_cols,
            dense,
            sorted,
            missing,
        }
    }

    #[inline]
    pub fn value(&self, row: u32, col: usize) -> S {
        self.dense[row as usize * self.n_cols + col]
    }
}

const NO_NODE: u32 = u32::MAX;

struct LevelNode<S: Scalar> {
    arena_idx: usize,
    rows: Vec<u32>,
    g: S,
    h: S,
    depth: usize,
}

enum ArenaNode<S: Scalar> {
    Pending,
    Leaf(S),
    Split {
        candidate: SplitCandidate<S>,
        left: usize,
        right: usize,
    },
}

/// Level-wise exact greedy growth over a prepared [`FrameStore`].
pub(crate) fn grow_in_store<S: Scalar>(
    store: &FrameStore<S>,
    pairs: &[GradientPair<S>],
    member_rows: &[u32],
    columns: &[usize],
    config: &TrainConfig,
) -> TreeNode<S> {
    assert!(!member_rows.is_empty(), "cannot grow a tree on an empty instance set");
    let lambda = S::from_config(config.lambda);
    let gamma = S::from_config(config.gamma);
    let mcw = S::from_config(config.min_child_weight);

    let mut arena: Vec<ArenaNode<S>> = vec![ArenaNode::Pending];
    let root_stats = NodeStats::from_pairs(member_rows.iter().map(|r| &pairs[*r as usize]));
    let mut level: Vec<LevelNode<S>> = vec![LevelNode {
        arena_idx: 0,
        rows: member_rows.to_vec(),
        g: root_stats.g,
        h: root_stats.h,
        depth: 0,
    }];
    let mut node_of_row: Vec<u32> = vec![NO_NODE; store.n_rows];

    while !level.is_empty() {
        // Nodes at the depth limit become leaves without a scan.
        let (candidates_in, leaves_out): (Vec<LevelNode<S>>, Vec<LevelNode<S>>) =
            level.into_iter().partition(|n| n.depth < config.max_depth);
        for node in leaves_out {
            arena[node.arena_idx] = ArenaNode::Leaf(safe_leaf_weight(node.g, node.h, lambda));
        }
        if candidates_in.is_empty() {
            break;
        }

        for (slot, node) in candidates_in.iter().enumerate() {
            for &row in &node.rows {
                node_of_row[row as usize] = slot as u32;
            }
        }

        // One pass per feature over the presorted column, distributing
        // triples to the nodes of this level in value order.
        let mut best: Vec<Option<SplitCandidate<S>>> = vec![None; candidates_in.len()];
        let mut bufs: Vec<Vec<(S, S, S)>> = candidates_in
            .iter()
            .map(|n| Vec::with_capacity(n.rows.len()))
            .collect();
        for &col in columns {
            for buf in &mut bufs {
                buf.clear();
            }
            let mut miss_g: Vec<S> = vec![S::zero(); candidates_in.len()];
            let mut miss_h: Vec<S> = vec![S::zero(); candidates_in.len()];
            for &row in &store.sorted[col] {
                let slot = node_of_row[row as usize];
                if slot != NO_NODE {
                    let p = pairs[row as usize];
                    bufs[slot as usize].push((store.value(row, col), p.g, p.h));
                }
            }
            for &row in &store.missing[col] {
                let slot = node_of_row[row as usize];
                if slot != NO_NODE {
                    let p = pairs[row as usize];
                    miss_g[slot as usize] += p.g;
                    miss_h[slot as usize] += p.h;
                }
            }
            for (slot, node) in candidates_in.iter().enumerate() {
                let candidate = scan_sorted_feature(
                    col,
                    &bufs[slot],
                    miss_g[slot],
                    miss_h[slot],
                    node.g,
                    node.h,
                    lambda,
                    gamma,
                    mcw,
                );
                if let Some(c) = candidate {
                    // Columns ascend, so only a strictly larger gain replaces.
                    if best[slot].map_or(true, |b| c.gain > b.gain) {
                        best[slot] = Some(c);
                    }
                }
            }
        }

        let mut next_level: Vec<LevelNode<S>> = Vec::new();
        for (slot, node) in candidates_in.into_iter().enumerate() {
            for &row in &node.rows {
                node_of_row[row as usize] = NO_NODE;
            }
            match best[slot] {
                None => {
                    arena[node.arena_idx] =
                        ArenaNode::Leaf(safe_leaf_weight(node.g, node.h, lambda));
                }
                Some(candidate) => {
                    let mut left_rows = Vec::new();
                    let mut right_rows = Vec::new();
                    let (mut gl, mut hl) = (S::zero(), S::zero());
                    for &row in &node.rows {
                        let x = store.value(row, candidate.feature);
                        let go_left = if x.is_nan() {
                            candidate.default_left
                        } else {
                            x < candidate.threshold
                        };
                        if go_left {
                            let p = pairs[row as usize];
                            gl += p.g;
                            hl += p.h;
                            left_rows.push(row);
                        } else {
                            right_rows.push(row);
                        }
                    }
                    let left_idx = arena.len();
                    arena.push(ArenaNode::Pending);
                    let right_idx = arena.len();
                    arena.push(ArenaNode::Pending);
                    arena[node.arena_idx] = ArenaNode::Split {
                        candidate,
                        left: left_idx,
                        right: right_idx,
                    };
                    next_level.push(LevelNode {
                        arena_idx: left_idx,
                        rows: left_rows,
                        g: gl,
                        h: hl,
                        depth: node.depth + 1,
                    });
                    next_level.push(LevelNode {
                        arena_idx: right_idx,
                        rows: right_rows,
                        g: node.g - gl,
                        h: node.h - hl,
                        depth: node.depth + 1,
                    });
                }
            }
        }
        level = next_level;
    }

    assemble(&arena, 0)
}

fn safe_leaf_weight<S: Scalar>(g: S, h: S, lambda: S) -> S {
    let denom = h + lambda;
    if denom > S::zero() {
        -g / denom
    } else {
        S::zero()
    }
}

fn assemble<S: Scalar>(arena: &[ArenaNode<S>], idx: usize) -> TreeNode<S> {
    match &arena[idx] {
        ArenaNode::Pending => unreachable!("unfinished tree node"),
        ArenaNode::Leaf(weight) => TreeNode::Leaf { weight: *weight },
        ArenaNode::Split {
            candidate,
            left,
            right,
        } => TreeNode::Split {
            feature: candidate.feature,
            threshold: candidate.threshold,
            default_left: candidate.default_left,
            gain: candidate.gain,
            left: Box::new(assemble(arena, *left)),
            right: Box::new(assemble(arena, *right)),
        },
    }
}

/// Exact greedy enumeration over every candidate feature: evaluates the gain
/// at every boundary between adjacent distinct values with missing rows
/// routed to whichever side scores higher. Ties break to the lowest feature
/// index, then the lowest threshold, then routing missing left. Returns
/// `None` when no candidate has positive gain or every candidate violates
/// the minimum child weight.
pub fn find_best_split<S: Scalar>(
    rows: &[&[S]],
    pairs: &[GradientPair<S>],
    columns: &[usize],
    config: &TrainConfig,
) -> Option<SplitCandidate<S>> {
    assert!(!rows.is_empty(), "cannot split an empty instance set");
    assert_eq!(rows.len(), pairs.len(), "one gradient pair per row");
    let store = FrameStore::from_rows(rows);
    let lambda = S::from_config(config.lambda);
    let gamma = S::from_config(config.gamma);
    let mcw = S::from_config(config.min_child_weight);
    let totals = NodeStats::from_pairs(pairs.iter());

    let mut best: Option<SplitCandidate<S>> = None;
    for &col in columns {
        let triples: Vec<(S, S, S)> = store.sorted[col]
            .iter()
            .map(|&r| {
                let p = pairs[r as usize];
                (store.value(r, col), p.g, p.h)
            })
            .collect();
        let (mut g_miss, mut h_miss) = (S::zero(), S::zero());
        for &r in &store.missing[col] {
            g_miss += pairs[r as usize].g;
            h_miss += pairs[r as usize].h;
        }
        if let Some(c) = scan_sorted_feature(
            col, &triples, g_miss, h_miss, totals.g, totals.h, lambda, gamma, mcw,
        ) {
            if best.map_or(true, |b| c.gain > b.gain) {
                best = Some(c);
            }
        }
    }
    best
}

/// Grow one tree on an explicit instance set, using the given feature subset.
pub fn grow_tree<S: Scalar>(
    rows: &[&[S]],
    pairs: &[GradientPair<S>],
    columns: &[usize],
    config: &TrainConfig,
) -> TreeNode<S> {
    assert_eq!(rows.len(), pairs.len(), "one gradient pair per row");
    let store = FrameStore::from_rows(rows);
    let members: Vec<u32> = (0..rows.len() as u32).collect();
    grow_in_store(&store, pairs, &members, columns, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbt::LossKind;

    fn pair(g: f64, h: f64) -> GradientPair<f64> {
        GradientPair { g, h }
    }

    fn base_config() -> TrainConfig {
        TrainConfig {
            lambda: 0.0,
            gamma: 0.0,
            min_child_weight: 0.0,
            max_depth: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn leaf_weight_formula() {
        assert_eq!(leaf_weight(0.0, 5.0, 1.0).unwrap(), 0.0);
        assert_eq!(leaf_weight(-3.0, 2.0, 1.0).unwrap(), 1.0);
        assert_eq!(leaf_weight(1.0, 0.0, 1.0).unwrap(), -1.0);
        assert!(leaf_weight(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn split_gain_examples() {
        assert_eq!(split_gain(2.0, 2.0, 2.0, 2.0, 0.0, 0.0), 0.0);
        assert!((split_gain::<f64>(1.0, 1.0, -1.0, 1.0, 1.0, 0.0) - 0.5).abs() < 1e-15);
        assert!((split_gain::<f64>(1.0, 1.0, -1.0, 1.0, 1.0, 0.6) - (-0.1)).abs() < 1e-15);
    }

    #[test]
    fn single_distinct_value_yields_no_split() {
        let rows: Vec<Vec<f64>> = vec![vec![3.0], vec![3.0], vec![3.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let pairs = vec![pair(1.0, 1.0), pair(-2.0, 1.0), pair(0.5, 1.0)];
        assert!(find_best_split(&refs, &pairs, &[0], &base_config()).is_none());
    }

    #[test]
    fn gamma_above_any_gain_prunes() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let pairs = vec![pair(1.0, 1.0), pair(-1.0, 1.0)];
        let mut config = base_config();
        assert!(find_best_split(&refs, &pairs, &[0], &config).is_some());
        config.gamma = 1e9;
        assert!(find_best_split(&refs, &pairs, &[0], &config).is_none());
    }

    #[test]
    fn separable_gradients_split_at_midpoint() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0], vec![2.0], vec![10.0], vec![11.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let pairs = vec![pair(1.0, 1.0), pair(1.0, 1.0), pair(-1.0, 1.0), pair(-1.0, 1.0)];
        let best = find_best_split(&refs, &pairs, &[0], &base_config()).unwrap();
        assert_eq!(best.feature, 0);
        assert_eq!(best.threshold, 6.0);
        // 0.5 * (4/2 + 4/2 - 0) = 2.
        assert!((best.gain - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missing_rows_route_to_richer_side() {
        // Missing row carries positive gradient; grouping it with the other
        // positive gradients scores higher.
        let rows: Vec<Vec<f64>> = vec![
            vec![1.0],
            vec![2.0],
            vec![10.0],
            vec![f64::NAN],
        ];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let pairs = vec![pair(1.0, 1.0), pair(1.0, 1.0), pair(-3.0, 1.0), pair(1.0, 1.0)];
        let best = find_best_split(&refs, &pairs, &[0], &base_config()).unwrap();
        assert!(best.default_left);
        assert_eq!(best.threshold, 6.0);
    }

    #[test]
    fn min_child_weight_blocks_thin_children() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let pairs = vec![pair(5.0, 1.0), pair(1.0, 1.0), pair(1.0, 1.0), pair(-7.0, 1.0)];
        let mut config = base_config();
        config.min_child_weight = 2.0;
        let best = find_best_split(&refs, &pairs, &[0], &config).unwrap();
        // Boundary 1|2 and 3|4 leave a child with h = 1 < 2.
        assert_eq!(best.threshold, 2.5);
    }

    #[test]
    fn stump_on_separable_data() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 0.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let pairs: Vec<GradientPair<f64>> = (0..8)
            .map(|i| pair(if i < 4 { 1.0 } else { -1.0 }, 1.0))
            .collect();
        let mut config = base_config();
        config.max_depth = 1;
        let tree = grow_tree(&refs, &pairs, &[0, 1], &config);
        assert_eq!(tree.split_count(), 1);
        assert_eq!(tree.leaf_count(), 2);
        assert_eq!(tree.predict(&[0.0, 0.0]), -1.0);
        assert_eq!(tree.predict(&[7.0, 0.0]), 1.0);
    }

    #[test]
    fn identical_rows_become_leaf() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0]; 5];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let pairs: Vec<GradientPair<f64>> = (0..5).map(|i| pair(i as f64 - 2.0, 1.0)).collect();
        let tree = grow_tree(&refs, &pairs, &[0, 1], &base_config());
        assert_eq!(tree.leaf_count(), 1);
    }

    #[test]
    fn leaf_weight_kills_residual_for_pure_node() {
        // Squared error on identical labels: one boosting step with lr 1 and
        // lambda 0 lands exactly on the label mean.
        let rows: Vec<Vec<f64>> = vec![vec![1.0], vec![1.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let y = 3.0;
        let y_hat = 0.0;
        let pairs: Vec<GradientPair<f64>> = (0..2)
            .map(|_| super::super::loss::grad_hess(LossKind::SquaredError, y, y_hat))
            .collect();
        let tree = grow_tree(&refs, &pairs, &[0], &base_config());
        assert_eq!(tree.predict(&[1.0]), 3.0);
    }

    #[test]
    fn gain_decomposition_consistent() {
        // parent objective - children objective = gain + gamma.
        let (gl, hl, gr, hr, lambda, gamma) = (1.3, 2.0, -0.7, 3.0, 0.5, 0.25);
        let score = |g: f64, h: f64| -0.5 * g * g / (h + lambda);
        let parent = score(gl + gr, hl + hr);
        let children = score(gl, hl) + score(gr, hr);
        let gain = split_gain(gl, hl, gr, hr, lambda, gamma);
        assert!((parent - children - (gain + gamma)).abs() < 1e-10);
    }
}
