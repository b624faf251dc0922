//! Boosting loop, trained ensembles, and their serialized form.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{grad_hess, loss_value, sigmoid, GradientPair, LossKind};
use super::tree::{grow_in_store, FrameStore, TreeNode};
use super::GbtError;
use crate::features::FeatureMatrix;
use crate::scalar::Scalar;

/// Training hyperparameters. The six fields up to `colsample_bytree` are the
/// ones the genetic tuner searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Per-leaf complexity penalty, `>= 0`.
    pub gamma: f64,
    /// L2 penalty on leaf weights, `>= 0`.
    pub lambda: f64,
    pub max_depth: usize,
    /// Fraction of rows drawn (without replacement) per tree, in `(0, 1]`.
    pub subsample: f64,
    /// Shrinkage applied to every tree's contribution, in `(0, 1]`.
    pub learning_rate: f64,
    /// Minimum hessian sum allowed in a child, `>= 0`.
    pub min_child_weight: f64,
    /// Fraction of columns drawn per tree, in `(0, 1]`.
    pub colsample_bytree: f64,
    /// Number of boosting rounds.
    pub rounds: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            lambda: 1.0,
            max_depth: 4,
            subsample: 1.0,
            learning_rate: 0.1,
            min_child_weight: 1.0,
            colsample_bytree: 1.0,
            rounds: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GbtError> {
        let complain = |msg: String| Err(GbtError::BadConfig(msg));
        if !(self.gamma >= 0.0) {
            return complain(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.lambda >= 0.0) {
            return complain(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.max_depth < 1 {
            return complain("max_depth must be >= 1".into());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return complain(format!("subsample must be in (0, 1], got {}", self.subsample));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return complain(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            ));
        }
        if !(self.min_child_weight >= 0.0) {
            return complain(format!(
                "min_child_weight must be >= 0, got {}",
                self.min_child_weight
            ));
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return complain(format!(
                "colsample_bytree must be in (0, 1], got {}",
                self.colsample_bytree
            ));
        }
        Ok(())
    }
}

/// Additive ensemble of regression trees with shrinkage.
///
/// The prediction is `base_score + learning_rate * sum(tree outputs)`; the
/// logistic loss additionally maps that margin through the sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Ensemble<S: Scalar> {
    pub trees: Vec<TreeNode<S>>,
    pub learning_rate: S,
    pub base_score: S,
    pub loss: LossKind,
    pub feature_names: Vec<String>,
}

impl<S: Scalar> Ensemble<S> {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Raw margin for one row (missing cells are NaN).
    pub fn predict_margin(&self, row: &[S]) -> Result<S, GbtError> {
        if row.len() != self.n_features() {
            return Err(GbtError::WidthMismatch {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        let mut total = S::zero();
        for tree in &self.trees {
            total += tree.predict(row);
        }
        Ok(self.base_score + self.learning_rate * total)
    }

    /// Regression value, or probability of the positive class under the
    /// logistic loss.
    pub fn predict(&self, row: &[S]) -> Result<S, GbtError> {
        let margin = self.predict_margin(row)?;
        Ok(match self.loss {
            LossKind::SquaredError => margin,
            LossKind::Logistic => sigmoid(margin),
        })
    }

    pub fn predict_matrix(&self, matrix: &FeatureMatrix<S>) -> Result<Vec<S>, GbtError> {
        (0..matrix.rows()).map(|i| self.predict(matrix.row(i))).collect()
    }

    /// Total realized split gain per feature; unused features map to zero.
    pub fn importance(&self) -> BTreeMap<String, S> {
        let mut gains = vec![S::zero(); self.n_features()];
        for tree in &self.trees {
            tree.for_each_split(&mut |feature, gain| gains[feature] += gain);
        }
        self.feature_names
            .iter()
            .cloned()
            .zip(gains)
            .collect()
    }

    /// Features ranked by total gain, descending, ties by column order.
    pub fn importance_ranking(&self) -> Vec<(String, S)> {
        let mut gains = vec![S::zero(); self.n_features()];
        for tree in &self.trees {
            tree.for_each_split(&mut |feature, gain| gains[feature] += gain);
        }
        let mut ranked: Vec<(usize, S)> = gains.into_iter().enumerate().collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        ranked
            .into_iter()
            .map(|(j, gain)| (self.feature_names[j].clone(), gain))
            .collect()
    }

    /// Regularized objective on a dataset: the loss over all rows plus
    /// `gamma * leaves + lambda/2 * ||effective leaf weights||^2` per tree,
    /// where effective weights carry the shrinkage.
    pub fn objective(
        &self,
        matrix: &FeatureMatrix<S>,
        labels: &[S],
        gamma: f64,
        lambda: f64,
    ) -> Result<S, GbtError> {
        let gamma = S::from_config(gamma);
        let lambda = S::from_config(lambda);
        let half = S::from_config(0.5);
        let eta2 = self.learning_rate * self.learning_rate;
        let mut total = S::zero();
        for (i, &y) in labels.iter().enumerate() {
            let margin = self.predict_margin(matrix.row(i))?;
            total += loss_value(self.loss, y, margin);
        }
        for tree in &self.trees {
            total += gamma * S::from_usize(tree.leaf_count()).unwrap()
                + half * lambda * eta2 * tree.weight_norm_sq();
        }
        Ok(total)
    }

    pub fn to_json(&self) -> Result<String, GbtError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, GbtError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Per-round bookkeeping kept alongside a trained ensemble.
#[derive(Debug, Clone)]
pub struct TrainTrace<S: Scalar> {
    /// Regularized objective after each round; index 0 is the bare base
    /// score, so the vector has `rounds + 1` entries.
    pub objective: Vec<S>,
    /// Row indices each tree was fit on.
    pub row_samples: Vec<Vec<u32>>,
    /// Column indices each tree could split on.
    pub col_samples: Vec<Vec<usize>>,
}

fn base_score<S: Scalar>(labels: &[S], loss: LossKind) -> S {
    let n = S::from_usize(labels.len()).unwrap();
    let mean = labels.iter().copied().sum::<S>() / n;
    match loss {
        LossKind::SquaredError => mean,
        LossKind::Logistic => {
            let eps = S::from_config(1e-7);
            let p = mean.max(eps).min(S::one() - eps);
            (p / (S::one() - p)).ln()
        }
    }
}

fn validate_labels<S: Scalar>(labels: &[S], loss: LossKind) -> Result<(), GbtError> {
    for &y in labels {
        if !y.is_finite() {
            return Err(GbtError::BadLabels(""));
        }
        if loss == LossKind::Logistic && y != S::zero() && y != S::one() {
            return Err(GbtError::BadLabels(" and in {0, 1} for the logistic loss"));
        }
    }
    Ok(())
}

fn sample_count(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64).round() as usize).clamp(1, total)
}

/// Fit `config.rounds` trees by greedy second-order boosting.
///
/// Each round recomputes gradients at the current margins, draws the row and
/// column subsamples, grows one tree, and shrinks it into the prediction.
/// Identical inputs produce identical ensembles.
pub fn train<S: Scalar>(
    matrix: &FeatureMatrix<S>,
    labels: &[S],
    config: &TrainConfig,
    loss: LossKind,
) -> Result<Ensemble<S>, GbtError> {
    train_with_trace(matrix, labels, config, loss).map(|(ensemble, _)| ensemble)
}

/// [`train`], also returning the objective trace and per-tree samples.
pub fn train_with_trace<S: Scalar>(
    matrix: &FeatureMatrix<S>,
    labels: &[S],
    config: &TrainConfig,
    loss: LossKind,
) -> Result<(Ensemble<S>, TrainTrace<S>), GbtError> {
    config.validate()?;
    let m = matrix.rows();
    let n = matrix.cols();
    if m == 0 || n == 0 {
        return Err(GbtError::EmptyMatrix);
    }
    if labels.len() != m {
        return Err(GbtError::LabelMismatch {
            rows: m,
            labels: labels.len(),
        });
    }
    validate_labels(labels, loss)?;

    let mut dense = Vec::with_capacity(m * n);
    for i in 0..m {
        dense.extend_from_slice(matrix.row(i));
    }
    let store = FrameStore::from_dense(dense, m, n);

    let base = base_score(labels, loss);
    let eta = S::from_config(config.learning_rate);
    let mut margins = vec![base; m];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut ensemble = Ensemble {
        trees: Vec::with_capacity(config.rounds),
        learning_rate: eta,
        base_score: base,
        loss,
        feature_names: matrix.columns().to_vec(),
    };
    let mut trace = TrainTrace {
        objective: Vec::with_capacity(config.rounds + 1),
        row_samples: Vec::with_capacity(config.rounds),
        col_samples: Vec::with_capacity(config.rounds),
    };

    let gamma = S::from_config(config.gamma);
    let lambda = S::from_config(config.lambda);
    let half = S::from_config(0.5);
    let mut omega = S::zero();
    let objective_at = |margins: &[S], omega: S| {
        let mut total = omega;
        for (i, &y) in labels.iter().enumerate() {
            total += loss_value(loss, y, margins[i]);
        }
        total
    };
    trace.objective.push(objective_at(&margins, omega));

    let all_rows: Vec<u32> = (0..m as u32).collect();
    let all_cols: Vec<usize> = (0..n).collect();

    for _ in 0..config.rounds {
        let pairs: Vec<GradientPair<S>> = labels
            .iter()
            .zip(&margins)
            .map(|(&y, &y_hat)| grad_hess(loss, y, y_hat))
            .collect();

        let rows: Vec<u32> = if config.subsample < 1.0 {
            let k = sample_count(config.subsample, m);
            let mut drawn = rand::seq::index::sample(&mut rng, m, k).into_vec();
            drawn.sort_unstable();
            drawn.into_iter().map(|i| i as u32).collect()
        } else {
            all_rows.clone()
        };
        let cols: Vec<usize> = if config.colsample_bytree < 1.0 {
            let k = sample_count(config.colsample_bytree, n);
            let mut drawn = rand::seq::index::sample(&mut rng, n, k).into_vec();
            drawn.sort_unstable();
            drawn
        } else {
            all_cols.clone()
        };

        let tree = grow_in_store(&store, &pairs, &rows, &cols, config);
        for i in 0..m {
            margins[i] += eta * tree.predict(matrix.row(i));
        }
        omega += gamma * S::from_usize(tree.leaf_count()).unwrap()
            + half * lambda * eta * eta * tree.weight_norm_sq();
        trace.objective.push(objective_at(&margins, omega));
        trace.row_samples.push(rows);
        trace.col_samples.push(cols);
        ensemble.trees.push(tree);
    }

    Ok((ensemble, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{EventKey, FiscalQuarter};

    fn key(i: usize) -> EventKey {
        EventKey {
            company: format!("C{i:04}").as_str().into(),
            quarter: FiscalQuarter::new(2018, 1).unwrap(),
        }
    }

    fn matrix_from(rows: Vec<Vec<Option<f64>>>, cols: usize) -> FeatureMatrix<f64> {
        let keys: Vec<EventKey> = (0..rows.len()).map(key).collect();
        let names: Vec<String> = (0..cols).map(|j| format!("f{j}")).collect();
        FeatureMatrix::from_rows(keys, names, rows)
    }

    fn step_data(n: usize) -> (FeatureMatrix<f64>, Vec<f64>) {
        // y = 1 if x0 > 0 else -1, x1 is noise-free filler.
        let rows: Vec<Vec<Option<f64>>> = (0..n)
            .map(|i| {
                let x0 = i as f64 - (n as f64 - 1.0) / 2.0;
                vec![Some(x0), Some((i % 3) as f64)]
            })
            .collect();
        let labels: Vec<f64> = (0..n)
            .map(|i| {
                if (i as f64 - (n as f64 - 1.0) / 2.0) > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        (matrix_from(rows, 2), labels)
    }

    #[test]
    fn zero_rounds_predicts_base_score() {
        let (matrix, labels) = step_data(10);
        let config = TrainConfig {
            rounds: 0,
            ..TrainConfig::default()
        };
        let model = train(&matrix, &labels, &config, LossKind::SquaredError).unwrap();
        assert!(model.trees.is_empty());
        let mean = labels.iter().sum::<f64>() / labels.len() as f64;
        assert_eq!(model.predict(matrix.row(0)).unwrap(), mean);
    }

    #[test]
    fn overfits_noiseless_step() {
        let (matrix, labels) = step_data(40);
        let config = TrainConfig {
            rounds: 50,
            max_depth: 2,
            learning_rate: 0.3,
            lambda: 0.0,
            min_child_weight: 0.0,
            ..TrainConfig::default()
        };
        let model = train(&matrix, &labels, &config, LossKind::SquaredError).unwrap();
        let preds = model.predict_matrix(&matrix).unwrap();
        let mse: f64 = preds
            .iter()
            .zip(&labels)
            .map(|(p, y)| (p - y).powi(2))
            .sum::<f64>()
            / labels.len() as f64;
        assert!(mse < 1e-6, "mse {mse}");
    }

    #[test]
    fn training_is_deterministic() {
        let (matrix, labels) = step_data(30);
        let config = TrainConfig {
            rounds: 20,
            subsample: 0.7,
            colsample_bytree: 0.5,
            seed: 42,
            ..TrainConfig::default()
        };
        let a = train(&matrix, &labels, &config, LossKind::SquaredError).unwrap();
        let b = train(&matrix, &labels, &config, LossKind::SquaredError).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn objective_trace_matches_standalone_objective() {
        let (matrix, labels) = step_data(24);
        let config = TrainConfig {
            rounds: 15,
            gamma: 0.1,
            lambda: 2.0,
            learning_rate: 0.2,
            ..TrainConfig::default()
        };
        let (model, trace) =
            train_with_trace(&matrix, &labels, &config, LossKind::SquaredError).unwrap();
        let recomputed = model
            .objective(&matrix, &labels, config.gamma, config.lambda)
            .unwrap();
        let traced = *trace.objective.last().unwrap();
        assert!((recomputed - traced).abs() < 1e-9, "{recomputed} vs {traced}");
    }

    #[test]
    fn logistic_predicts_probabilities() {
        let (matrix, _) = step_data(20);
        let labels: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let config = TrainConfig {
            rounds: 30,
            learning_rate: 0.3,
            ..TrainConfig::default()
        };
        let model = train(&matrix, &labels, &config, LossKind::Logistic).unwrap();
        let preds = model.predict_matrix(&matrix).unwrap();
        assert!(preds.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(preds[0] < 0.5 && preds[19] > 0.5);
    }

    #[test]
    fn logistic_rejects_bad_labels() {
        let (matrix, _) = step_data(4);
        let labels = vec![0.0, 1.0, 2.0, 1.0];
        let config = TrainConfig::default();
        assert!(train(&matrix, &labels, &config, LossKind::Logistic).is_err());
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let (matrix, labels) = step_data(8);
        let config = TrainConfig {
            rounds: 2,
            ..TrainConfig::default()
        };
        let model = train(&matrix, &labels, &config, LossKind::SquaredError).unwrap();
        assert!(model.predict(&[1.0]).is_err());
        assert!(model.predict(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn missing_feature_follows_default_direction() {
        // Rows with x0 missing share labels with the high side, so the
        // trained default direction must route NaN there.
        let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
        let mut labels = Vec::new();
        for i in 0..12 {
            rows.push(vec![Some(i as f64), Some(0.0)]);
            labels.push(if i < 6 { -1.0 } else { 1.0 });
        }
        for _ in 0..4 {
            rows.push(vec![None, Some(0.0)]);
            labels.push(1.0);
        }
        let matrix = matrix_from(rows, 2);
        let config = TrainConfig {
            rounds: 10,
            max_depth: 2,
            learning_rate: 0.5,
            lambda: 0.0,
            min_child_weight: 0.0,
            ..TrainConfig::default()
        };
        let model = train(&matrix, &labels, &config, LossKind::SquaredError).unwrap();
        let pred = model.predict(&[f64::NAN, 0.0]).unwrap();
        assert!(pred > 0.5, "missing row should land on the +1 side, got {pred}");
    }

    #[test]
    fn importance_sums_split_gains() {
        let (matrix, labels) = step_data(30);
        let config = TrainConfig {
            rounds: 12,
            max_depth: 2,
            ..TrainConfig::default()
        };
        let model = train(&matrix, &labels, &config, LossKind::SquaredError).unwrap();
        let importance = model.importance();
        // All signal sits in f0.
        assert!(importance["f0"] > 0.0);
        let manual: f64 = model
            .trees
            .iter()
            .map(|t| {
                let mut total = 0.0;
                t.for_each_split(&mut |f, g| {
                    if f == 0 {
                        total += g;
                    }
                });
                total
            })
            .sum();
        assert!((importance["f0"] - manual).abs() < 1e-12);
    }

    #[test]
    fn leaf_only_ensemble_has_zero_importance() {
        let rows: Vec<Vec<Option<f64>>> = vec![vec![Some(1.0)]; 6];
        let matrix = matrix_from(rows, 1);
        let labels = vec![2.0; 6];
        let config = TrainConfig {
            rounds: 3,
            ..TrainConfig::default()
        };
        let model = train(&matrix, &labels, &config, LossKind::SquaredError).unwrap();
        assert!(model.importance().values().all(|g| *g == 0.0));
    }

    #[test]
    fn serialization_round_trip_preserves_predictions() {
        let (matrix, labels) = step_data(30);
        let config = TrainConfig {
            rounds: 25,
            subsample: 0.8,
            seed: 7,
            ..TrainConfig::default()
        };
        let model = train(&matrix, &labels, &config, LossKind::SquaredError).unwrap();
        let restored = Ensemble::from_json(&model.to_json().unwrap()).unwrap();
        for i in 0..matrix.rows() {
            let a = model.predict(matrix.row(i)).unwrap();
            let b = restored.predict(matrix.row(i)).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
