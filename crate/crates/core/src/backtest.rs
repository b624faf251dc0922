//! Walk-forward evaluation: direction accuracy, portfolio ranking, feature
//! occurrence, and the delayed-entry tactic.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{build_matrix, BuildStats, FeatureMatrix, FeatureSpec};
use crate::gbt::{self, GbtError, LossKind, TrainConfig};
use crate::market::{car_window, resolve_t0, EventKey, FiscalQuarter, RawDataset};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("selector matches no events")]
    EmptyTest,
    #[error("need at least {needed} events, got {got}")]
    TooFewEvents { needed: usize, got: usize },
    #[error("window {window} exceeds {len} ranked events")]
    WindowTooLarge { window: usize, len: usize },
    #[error("inputs must have equal lengths")]
    LengthMismatch,
    #[error("need at least one run")]
    NoRuns,
    #[error(transparent)]
    Train(#[from] GbtError),
    #[error(transparent)]
    Features(#[from] crate::features::FeatureError),
}

/// Which events form the out-of-sample test period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeriodSelector {
    /// All events with this fiscal year.
    Year(i32),
    /// All events with this fiscal quarter tag.
    Quarter(FiscalQuarter),
    /// All events announcing on this date.
    Date(NaiveDate),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSelector {
    pub period: PeriodSelector,
    /// Restrict both sides to one sector when set.
    pub sector: Option<String>,
}

/// Strict temporal split: test events match the selector, training events
/// are everything announced strictly before the earliest test announcement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub selector: SplitSelector,
    /// Row indices into the study set.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-event metadata carried alongside the feature matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRow {
    pub key: EventKey,
    pub announce_date: NaiveDate,
    pub sector: String,
    pub t0: NaiveDate,
}

/// Feature matrix plus the labels every study consumes, row-aligned.
#[derive(Debug, Clone)]
pub struct StudySet<S: Scalar> {
    pub matrix: FeatureMatrix<S>,
    pub rows: Vec<EventRow>,
    /// Cumulative abnormal return over days 1..=horizon after t0.
    pub car: Vec<S>,
    /// Cumulative abnormal return over days 2..=horizon (the post-day-one
    /// window).
    pub car_from_t1: Vec<S>,
    /// Raw one-day stock return from t0 to t1.
    pub day_one: Vec<S>,
    pub horizon: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyBuildStats {
    pub features: BuildStats,
    /// Matrix rows dropped because the label window ran out of price data.
    pub rows_dropped_no_label: usize,
}

impl<S: Scalar> StudySet<S> {
    /// Build the matrix and all label columns from a raw dataset. Rows whose
    /// post-announcement window is not fully covered by prices are dropped
    /// and counted.
    pub fn build(
        raw: &RawDataset<S>,
        spec: &FeatureSpec,
        horizon: usize,
    ) -> Result<(Self, StudyBuildStats), BacktestError> {
        let (full_matrix, feature_stats) = build_matrix(raw, spec)?;
        let mut stats = StudyBuildStats {
            features: feature_stats,
            rows_dropped_no_label: 0,
        };

        let mut keep: Vec<usize> = Vec::with_capacity(full_matrix.rows());
        let mut rows = Vec::new();
        let mut car = Vec::new();
        let mut car_from_t1 = Vec::new();
        let mut day_one = Vec::new();

        for (i, key) in full_matrix.row_keys().iter().enumerate() {
            let event = raw
                .events
                .iter()
                .find(|e| e.key() == *key)
                .expect("matrix rows come from events");
            let Ok(t0) = resolve_t0(event.announce_date, event.timing, &raw.calendar) else {
                stats.rows_dropped_no_label += 1;
                continue;
            };
            let stock = raw
                .price_series(&event.company)
                .expect("event companies have prices");
            let full = car_window(stock, &raw.index, t0, 1, horizon, &raw.calendar);
            let tail = car_window(stock, &raw.index, t0, 2, horizon, &raw.calendar);
            let first_date = raw.calendar.offset(t0, 1);
            let (Ok(full), Ok(tail), Ok(first_date)) = (full, tail, first_date) else {
                stats.rows_dropped_no_label += 1;
                continue;
            };
            let Ok(d1) = stock.one_day_return(&raw.calendar, first_date) else {
                stats.rows_dropped_no_label += 1;
                continue;
            };
            keep.push(i);
            rows.push(EventRow {
                key: key.clone(),
                announce_date: event.announce_date,
                sector: event.sector.clone(),
                t0,
            });
            car.push(full);
            car_from_t1.push(tail);
            day_one.push(d1);
        }

        Ok((
            Self {
                matrix: full_matrix.select_rows(&keep),
                rows,
                car,
                car_from_t1,
                day_one,
                horizon,
            },
            stats,
        ))
    }

    /// Classification labels: 1 for a non-negative CAR, else 0.
    pub fn direction_labels(&self) -> Vec<S> {
        self.car
            .iter()
            .map(|c| if *c >= S::zero() { S::one() } else { S::zero() })
            .collect()
    }

    pub fn split(&self, selector: &SplitSelector) -> Result<SplitPlan, BacktestError> {
        walk_forward_split(&self.rows, selector)
    }
}

/// Partition rows into a walk-forward train/test plan.
pub fn walk_forward_split(
    rows: &[EventRow],
    selector: &SplitSelector,
) -> Result<SplitPlan, BacktestError> {
    let in_sector = |row: &EventRow| {
        selector
            .sector
            .as_ref()
            .map_or(true, |s| row.sector == *s)
    };
    let matches = |row: &EventRow| match &selector.period {
        PeriodSelector::Year(y) => row.key.quarter.year == *y,
        PeriodSelector::Quarter(q) => row.key.quarter == *q,
        PeriodSelector::Date(d) => row.announce_date == *d,
    };

    let test: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| in_sector(r) && matches(r))
        .map(|(i, _)| i)
        .collect();
    if test.is_empty() {
        return Err(BacktestError::EmptyTest);
    }
    let earliest = test
        .iter()
        .map(|&i| rows[i].announce_date)
        .min()
        .expect("non-empty test");
    let train: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| in_sector(r) && r.announce_date < earliest)
        .map(|(i, _)| i)
        .collect();
    Ok(SplitPlan {
        selector: selector.clone(),
        train,
        test,
    })
}

/// Accuracy of repeated direction forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub runs: usize,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl DirectionReport {
    fn from_accuracies(accuracies: Vec<f64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let min = accuracies.iter().copied().fold(f64::INFINITY, f64::min);
        let max = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            runs: accuracies.len(),
            accuracies,
            mean,
            std: var.sqrt(),
            min,
            max,
        }
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("run,accuracy\n");
        for (i, a) in self.accuracies.iter().enumerate() {
            out.push_str(&format!("{i},{a}\n"));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "direction study: {} runs, mean accuracy {:.4}, std {:.4}, min {:.4}, max {:.4}",
            self.runs, self.mean, self.std, self.min, self.max
        )
    }
}

/// Ranked out-of-sample forecast of one regression run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RankedForecast<S: Scalar> {
    pub keys: Vec<EventKey>,
    pub predicted: Vec<S>,
    pub actual: Vec<S>,
}

/// Moving-window portfolio curve: point `i` is the mean actual CAR of the
/// stocks ranked `i..i+w-1` by predicted CAR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PortfolioCurve<S: Scalar> {
    pub window: usize,
    /// `(start_rank, mean actual CAR)`, ranks 1-based.
    pub points: Vec<(usize, S)>,
}

impl<S: Scalar> PortfolioCurve<S> {
    pub fn csv(&self) -> String {
        let mut out = String::from("start_rank,mean_actual_car\n");
        for (rank, value) in &self.points {
            out.push_str(&format!("{rank},{value}\n"));
        }
        out
    }
}

/// Top-window, population, and bottom-window mean actual CARs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct QuantileReport<S: Scalar> {
    pub window: usize,
    pub top: S,
    pub average: S,
    pub bottom: S,
}

impl<S: Scalar> QuantileReport<S> {
    pub fn csv(&self) -> String {
        format!(
            "window,top,average,bottom\n{},{},{},{}\n",
            self.window, self.top, self.average, self.bottom
        )
    }

    pub fn summary(&self) -> String {
        format!(
            "quantile stats (w={}): top {:.4}, average {:.4}, bottom {:.4}",
            self.window,
            self.top.to_report(),
            self.average.to_report(),
            self.bottom.to_report()
        )
    }
}

/// Indices of events ranked by predicted value descending, ties by key.
fn rank_descending<S: Scalar>(predicted: &[S], keys: &[EventKey]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..predicted.len()).collect();
    order.sort_by(|&a, &b| {
        predicted[b]
            .partial_cmp(&predicted[a])
            .unwrap()
            .then_with(|| keys[a].cmp(&keys[b]))
    });
    order
}

/// Slide a w-stock window down the prediction-ranked list.
pub fn moving_portfolio<S: Scalar>(
    predicted: &[S],
    actual: &[S],
    keys: &[EventKey],
    window: usize,
) -> Result<PortfolioCurve<S>, BacktestError> {
    if predicted.len() != actual.len() || predicted.len() != keys.len() {
        return Err(BacktestError::LengthMismatch);
    }
    if window == 0 || predicted.len() < window {
        return Err(BacktestError::WindowTooLarge {
            window,
            len: predicted.len(),
        });
    }
    let order = rank_descending(predicted, keys);
    let w = S::from_usize(window).unwrap();
    let points = (0..=order.len() - window)
        .map(|i| {
            let mean = order[i..i + window]
                .iter()
                .map(|&j| actual[j])
                .sum::<S>()
                / w;
            (i + 1, mean)
        })
        .collect();
    Ok(PortfolioCurve { window, points })
}

/// Mean actual CAR of the best-w, all, and worst-w predicted events.
pub fn quantile_stats<S: Scalar>(
    predicted: &[S],
    actual: &[S],
    keys: &[EventKey],
    window: usize,
) -> Result<QuantileReport<S>, BacktestError> {
    if predicted.len() != actual.len() || predicted.len() != keys.len() {
        return Err(BacktestError::LengthMismatch);
    }
    if window == 0 || predicted.len() < 2 * window {
        return Err(BacktestError::TooFewEvents {
            needed: 2 * window.max(1),
            got: predicted.len(),
        });
    }
    let order = rank_descending(predicted, keys);
    let w = S::from_usize(window).unwrap();
    let mean_of = |ids: &[usize]| ids.iter().map(|&j| actual[j]).sum::<S>() / w;
    let top = mean_of(&order[..window]);
    let bottom = mean_of(&order[order.len() - window..]);
    let average = actual.iter().copied().sum::<S>() / S::from_usize(actual.len()).unwrap();
    Ok(QuantileReport {
        window,
        top,
        average,
        bottom,
    })
}

/// Most frequent features at each importance rank over repeated runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceTable {
    pub runs: usize,
    pub positions: Vec<RankOccurrence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOccurrence {
    /// 1-based importance rank (F1 is the strongest feature).
    pub rank: usize,
    /// Up to the three most frequent feature names with occurrence counts,
    /// sorted by count descending then name.
    pub top: Vec<(String, usize)>,
}

impl OccurrenceTable {
    pub fn csv(&self) -> String {
        let mut out = String::from("rank,feature,count\n");
        for position in &self.positions {
            for (name, count) in &position.top {
                out.push_str(&format!("F{},{},{}\n", position.rank, name, count));
            }
        }
        out
    }
}

/// How the delayed-entry filter treats stocks whose day-one move agrees with
/// the predicted 30-day direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TacticMode {
    /// Keep the stocks whose day-one move opposes the prediction (bet that
    /// the forecast drift wins out over the initial reaction).
    KeepOpposite,
    /// Keep the agreeing stocks instead.
    DropOpposite,
}

/// Outcome of the delayed-entry inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticReport {
    pub before: usize,
    /// Step 1: events whose day-one move sits inside the dead zone.
    pub excluded: usize,
    /// Step 3: survivors removed by the agreement filter.
    pub filtered_out: usize,
    /// Events the tactic actually trades.
    pub after: usize,
    /// Accuracy of the model's full-window direction on all test events.
    pub model_accuracy: f64,
    /// Accuracy of applying the full-window prediction to the post-day-one
    /// window without any filtering.
    pub naive_accuracy: f64,
    /// Accuracy of the inferred post-day-one direction on the kept events;
    /// `None` when nothing survives the filters.
    pub inferred_accuracy: Option<f64>,
    pub epsilon: f64,
    pub mode: TacticMode,
}

impl TacticReport {
    pub fn csv(&self) -> String {
        format!(
            "before,excluded,filtered_out,after,model_accuracy,naive_accuracy,inferred_accuracy\n{},{},{},{},{},{},{}\n",
            self.before,
            self.excluded,
            self.filtered_out,
            self.after,
            self.model_accuracy,
            self.naive_accuracy,
            self.inferred_accuracy.map(|a| a.to_string()).unwrap_or_default()
        )
    }

    pub fn summary(&self) -> String {
        format!(
            "tactic: {} events before filtering, {} after (excluded {}, filtered {}), model {:.4}, naive {:.4}, inferred {}",
            self.before,
            self.after,
            self.excluded,
            self.filtered_out,
            self.model_accuracy,
            self.naive_accuracy,
            self.inferred_accuracy
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "undefined".into())
        )
    }
}

/// Per-event inputs to the delayed-entry inference.
pub struct TacticInputs<'a, S: Scalar> {
    /// Model's predicted full-window direction (true = up).
    pub predicted_up: &'a [bool],
    /// Raw day-one stock move.
    pub day_one_move: &'a [S],
    /// Realized full-window direction.
    pub actual_full_up: &'a [bool],
    /// Realized post-day-one direction.
    pub actual_tail_up: &'a [bool],
}

/// Delayed-entry inference: drop dead-zone events, filter survivors by
/// day-one agreement with the prediction, and infer the post-day-one
/// direction to be the predicted full-window direction.
pub fn tactic_infer<S: Scalar>(
    inputs: &TacticInputs<'_, S>,
    epsilon: f64,
    mode: TacticMode,
) -> Result<TacticReport, BacktestError> {
    let n = inputs.predicted_up.len();
    if inputs.day_one_move.len() != n
        || inputs.actual_full_up.len() != n
        || inputs.actual_tail_up.len() != n
    {
        return Err(BacktestError::LengthMismatch);
    }
    let eps = S::from_config(epsilon);

    let mut excluded = 0;
    let mut filtered_out = 0;
    let mut kept = 0;
    let mut kept_correct = 0;
    let mut model_correct = 0;
    let mut naive_correct = 0;

    for i in 0..n {
        if inputs.predicted_up[i] == inputs.actual_full_up[i] {
            model_correct += 1;
        }
        if inputs.predicted_up[i] == inputs.actual_tail_up[i] {
            naive_correct += 1;
        }
        if inputs.day_one_move[i].abs() <= eps {
            excluded += 1;
            continue;
        }
        let day_one_up = inputs.day_one_move[i] > S::zero();
        let agrees = day_one_up == inputs.predicted_up[i];
        let keep = match mode {
            TacticMode::KeepOpposite => !agrees,
            TacticMode::DropOpposite => agrees,
        };
        if !keep {
            filtered_out += 1;
            continue;
        }
        kept += 1;
        if inputs.predicted_up[i] == inputs.actual_tail_up[i] {
            kept_correct += 1;
        }
    }

    Ok(TacticReport {
        before: n,
        excluded,
        filtered_out,
        after: kept,
        model_accuracy: model_correct as f64 / n.max(1) as f64,
        naive_accuracy: naive_correct as f64 / n.max(1) as f64,
        inferred_accuracy: (kept > 0).then(|| kept_correct as f64 / kept as f64),
        epsilon,
        mode,
    })
}

impl<S: Scalar> StudySet<S> {
    fn train_on_plan(
        &self,
        plan: &SplitPlan,
        labels: &[S],
        matrix: &FeatureMatrix<S>,
        config: &TrainConfig,
        loss: LossKind,
    ) -> Result<gbt::Ensemble<S>, BacktestError> {
        let train_matrix = matrix.select_rows(&plan.train);
        let train_labels: Vec<S> = plan.train.iter().map(|&i| labels[i]).collect();
        Ok(gbt::train(&train_matrix, &train_labels, config, loss)?)
    }

    /// Repeated direction forecasts: each run trains a fresh classifier with
    /// seed `config.seed + run` and scores sign accuracy on the test rows.
    pub fn direction_study(
        &self,
        plan: &SplitPlan,
        config: &TrainConfig,
        runs: usize,
    ) -> Result<DirectionReport, BacktestError> {
        self.direction_study_with_labels(plan, config, runs, &self.direction_labels())
    }

    /// [`StudySet::direction_study`] with caller-supplied 0/1 labels, used
    /// for shuffled-label controls.
    pub fn direction_study_with_labels(
        &self,
        plan: &SplitPlan,
        config: &TrainConfig,
        runs: usize,
        labels: &[S],
    ) -> Result<DirectionReport, BacktestError> {
        if runs == 0 {
            return Err(BacktestError::NoRuns);
        }
        if labels.len() != self.matrix.rows() {
            return Err(BacktestError::LengthMismatch);
        }
        // Runs are independent with positionally derived seeds, so parallel
        // execution cannot change the report.
        let accuracies: Vec<f64> = (0..runs)
            .into_par_iter()
            .map(|run| {
                let mut run_config = config.clone();
                run_config.seed = config.seed.wrapping_add(run as u64);
                let model = self.train_on_plan(
                    plan,
                    labels,
                    &self.matrix,
                    &run_config,
                    LossKind::Logistic,
                )?;
                let mut correct = 0usize;
                for &i in &plan.test {
                    let p = model.predict(self.matrix.row(i))?;
                    let up = p >= S::from_config(0.5);
                    let actual_up = labels[i] == S::one();
                    if up == actual_up {
                        correct += 1;
                    }
                }
                Ok(correct as f64 / plan.test.len() as f64)
            })
            .collect::<Result<_, BacktestError>>()?;
        Ok(DirectionReport::from_accuracies(accuracies))
    }

    /// One regression run: train on the plan, predict the test events'
    /// CAR levels, and return them ranked-ready.
    pub fn rank_forecast(
        &self,
        plan: &SplitPlan,
        config: &TrainConfig,
    ) -> Result<RankedForecast<S>, BacktestError> {
        let model =
            self.train_on_plan(plan, &self.car, &self.matrix, config, LossKind::SquaredError)?;
        let mut keys = Vec::with_capacity(plan.test.len());
        let mut predicted = Vec::with_capacity(plan.test.len());
        let mut actual = Vec::with_capacity(plan.test.len());
        for &i in &plan.test {
            keys.push(self.rows[i].key.clone());
            predicted.push(model.predict(self.matrix.row(i))?);
            actual.push(self.car[i]);
        }
        Ok(RankedForecast {
            keys,
            predicted,
            actual,
        })
    }

    /// Tally which features occupy each of the top-k importance ranks over
    /// repeated classifier runs; report the three most frequent per rank.
    pub fn occurrence_study(
        &self,
        plan: &SplitPlan,
        config: &TrainConfig,
        runs: usize,
        top_k: usize,
    ) -> Result<OccurrenceTable, BacktestError> {
        if runs == 0 {
            return Err(BacktestError::NoRuns);
        }
        let labels = self.direction_labels();
        let rankings: Vec<Vec<String>> = (0..runs)
            .into_par_iter()
            .map(|run| {
                let mut run_config = config.clone();
                run_config.seed = config.seed.wrapping_add(run as u64);
                let model = self.train_on_plan(
                    plan,
                    &labels,
                    &self.matrix,
                    &run_config,
                    LossKind::Logistic,
                )?;
                Ok(model
                    .importance_ranking()
                    .into_iter()
                    .take(top_k)
                    .map(|(name, _)| name)
                    .collect())
            })
            .collect::<Result<_, BacktestError>>()?;
        let mut tallies: Vec<std::collections::BTreeMap<String, usize>> =
            vec![Default::default(); top_k];
        for ranking in rankings {
            for (position, name) in ranking.into_iter().enumerate() {
                *tallies[position].entry(name).or_insert(0) += 1;
            }
        }
        let positions = tallies
            .into_iter()
            .enumerate()
            .map(|(i, tally)| {
                let mut counts: Vec<(String, usize)> = tally.into_iter().collect();
                counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                counts.truncate(3);
                RankOccurrence {
                    rank: i + 1,
                    top: counts,
                }
            })
            .collect();
        Ok(OccurrenceTable { runs, positions })
    }

    /// Delayed-entry study: retrain with the day-one direction appended to
    /// the input space, then run the exclusion/agreement filters and infer
    /// the post-day-one direction.
    pub fn tactic_study(
        &self,
        plan: &SplitPlan,
        config: &TrainConfig,
        epsilon: f64,
        mode: TacticMode,
    ) -> Result<TacticReport, BacktestError> {
        let mut matrix = self.matrix.clone();
        let day_one_direction: Vec<S> = self
            .day_one
            .iter()
            .map(|d| {
                if *d > S::zero() {
                    S::one()
                } else if *d < S::zero() {
                    -S::one()
                } else {
                    S::zero()
                }
            })
            .collect();
        matrix.push_column("Day1_Move_Direction".to_string(), &day_one_direction);

        let labels = self.direction_labels();
        let model = self.train_on_plan(plan, &labels, &matrix, config, LossKind::Logistic)?;

        let half = S::from_config(0.5);
        let mut predicted_up = Vec::with_capacity(plan.test.len());
        let mut day_one_move = Vec::with_capacity(plan.test.len());
        let mut actual_full_up = Vec::with_capacity(plan.test.len());
        let mut actual_tail_up = Vec::with_capacity(plan.test.len());
        for &i in &plan.test {
            predicted_up.push(model.predict(matrix.row(i))? >= half);
            day_one_move.push(self.day_one[i]);
            actual_full_up.push(self.car[i] >= S::zero());
            actual_tail_up.push(self.car_from_t1[i] >= S::zero());
        }
        tactic_infer(
            &TacticInputs {
                predicted_up: &predicted_up,
                day_one_move: &day_one_move,
                actual_full_up: &actual_full_up,
                actual_tail_up: &actual_tail_up,
            },
            epsilon,
            mode,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::CompanyId;

    fn key(name: &str) -> EventKey {
        EventKey {
            company: CompanyId::from(name),
            quarter: FiscalQuarter::new(2018, 1).unwrap(),
        }
    }

    fn keys(n: usize) -> Vec<EventKey> {
        (0..n).map(|i| key(&format!("C{i:03}"))).collect()
    }

    fn row(name: &str, quarter: &str, date: &str, sector: &str) -> EventRow {
        EventRow {
            key: EventKey {
                company: CompanyId::from(name),
                quarter: quarter.parse().unwrap(),
            },
            announce_date: date.parse().unwrap(),
            sector: sector.to_string(),
            t0: date.parse().unwrap(),
        }
    }

    #[test]
    fn year_selector_splits_strictly() {
        let rows = vec![
            row("A", "2013Q4", "2014-01-20", "Tech"),
            row("A", "2014Q1", "2014-04-20", "Tech"),
            row("B", "2014Q4", "2015-01-21", "Energy"),
            row("B", "2015Q1", "2015-04-21", "Energy"),
            row("A", "2015Q2", "2015-07-20", "Tech"),
            row("B", "2016Q1", "2016-04-20", "Energy"),
        ];
        let plan = walk_forward_split(
            &rows,
            &SplitSelector {
                period: PeriodSelector::Year(2015),
                sector: None,
            },
        )
        .unwrap();
        assert_eq!(plan.test, vec![3, 4]);
        assert_eq!(plan.train, vec![0, 1, 2]);
        let earliest = rows[3].announce_date;
        for &i in &plan.train {
            assert!(rows[i].announce_date < earliest);
        }
    }

    #[test]
    fn date_selector_picks_one_day() {
        let rows = vec![
            row("A", "2018Q3", "2018-10-25", "Tech"),
            row("B", "2018Q3", "2018-10-25", "Energy"),
            row("C", "2018Q3", "2018-10-26", "Tech"),
            row("D", "2018Q2", "2018-07-25", "Tech"),
        ];
        let plan = walk_forward_split(
            &rows,
            &SplitSelector {
                period: PeriodSelector::Date("2018-10-25".parse().unwrap()),
                sector: None,
            },
        )
        .unwrap();
        assert_eq!(plan.test, vec![0, 1]);
        assert_eq!(plan.train, vec![3]);
    }

    #[test]
    fn sector_filter_restricts_both_sides() {
        let rows = vec![
            row("A", "2016Q1", "2016-04-20", "Financial"),
            row("B", "2016Q1", "2016-04-20", "Tech"),
            row("A", "2017Q1", "2017-04-20", "Financial"),
            row("B", "2017Q1", "2017-04-20", "Tech"),
        ];
        let plan = walk_forward_split(
            &rows,
            &SplitSelector {
                period: PeriodSelector::Year(2017),
                sector: Some("Financial".into()),
            },
        )
        .unwrap();
        assert_eq!(plan.test, vec![2]);
        assert_eq!(plan.train, vec![0]);
    }

    #[test]
    fn empty_test_errors() {
        let rows = vec![row("A", "2016Q1", "2016-04-20", "Tech")];
        assert!(matches!(
            walk_forward_split(
                &rows,
                &SplitSelector {
                    period: PeriodSelector::Year(2030),
                    sector: None,
                },
            ),
            Err(BacktestError::EmptyTest)
        ));
    }

    #[test]
    fn perfect_ranking_gives_consecutive_means() {
        let predicted = [5.0, 4.0, 3.0, 2.0, 1.0];
        let actual = [5.0, 4.0, 3.0, 2.0, 1.0];
        let curve = moving_portfolio(&predicted, &actual, &keys(5), 3).unwrap();
        let values: Vec<f64> = curve.points.iter().map(|(_, v)| *v).collect();
        assert_eq!(values, vec![4.0, 3.0, 2.0]);
        assert_eq!(curve.points[0].0, 1);
    }

    #[test]
    fn constant_actuals_give_flat_curve() {
        let predicted = [3.0, 1.0, 2.0, 0.5];
        let actual = [7.0; 4];
        let curve = moving_portfolio(&predicted, &actual, &keys(4), 2).unwrap();
        assert!(curve.points.iter().all(|(_, v)| *v == 7.0));
    }

    #[test]
    fn anti_ranked_predictions_rise() {
        let predicted = [1.0, 2.0, 3.0, 4.0];
        let actual = [4.0, 3.0, 2.0, 1.0];
        let curve = moving_portfolio(&predicted, &actual, &keys(4), 2).unwrap();
        let values: Vec<f64> = curve.points.iter().map(|(_, v)| *v).collect();
        for pair in values.windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn descending_ranked_curve_never_rises_when_predictions_equal_actuals() {
        let actual = [0.4, -0.2, 1.5, 0.9, -1.0, 0.3, 0.0, 2.0];
        let curve = moving_portfolio(&actual, &actual, &keys(8), 3).unwrap();
        for pair in curve.points.windows(2) {
            assert!(pair[1].1 <= pair[0].1);
        }
    }

    #[test]
    fn window_one_curve_mean_equals_population_mean() {
        // Exactly representable values keep both sums exact.
        let predicted = [4.0, 1.0, 3.0, 2.0];
        let actual = [8.0, 2.0, 6.0, 4.0];
        let curve = moving_portfolio(&predicted, &actual, &keys(4), 1).unwrap();
        let curve_mean: f64 =
            curve.points.iter().map(|(_, v)| *v).sum::<f64>() / curve.points.len() as f64;
        let population: f64 = actual.iter().sum::<f64>() / actual.len() as f64;
        assert_eq!(curve_mean, population);
    }

    #[test]
    fn quantile_stats_perfect_ranking() {
        let predicted = [3.0, 1.0, -1.0, -3.0];
        let actual = [3.0, 1.0, -1.0, -3.0];
        let report = quantile_stats(&predicted, &actual, &keys(4), 1).unwrap();
        assert_eq!(report.top, 3.0);
        assert_eq!(report.average, 0.0);
        assert_eq!(report.bottom, -3.0);
        assert!(report.top >= report.bottom);
    }

    #[test]
    fn quantile_needs_two_windows() {
        let v = [1.0, 2.0, 3.0];
        assert!(quantile_stats(&v, &v, &keys(3), 2).is_err());
    }

    #[test]
    fn random_predictions_leave_quantiles_near_population_mean() {
        // Permutation oracle: averaging top/bottom means over many seeded
        // shuffles converges to the population mean.
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let actual: Vec<f64> = (0..40).map(|i| (i as f64 * 0.73).sin()).collect();
        let population: f64 = actual.iter().sum::<f64>() / actual.len() as f64;
        let ks = keys(40);
        let mut top_sum = 0.0;
        let mut bottom_sum = 0.0;
        let trials = 1000;
        for seed in 0..trials {
            let mut predicted: Vec<f64> = (0..40).map(|i| i as f64).collect();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            predicted.shuffle(&mut rng);
            let report = quantile_stats(&predicted, &actual, &ks, 10).unwrap();
            top_sum += report.top;
            bottom_sum += report.bottom;
        }
        let top_mean = top_sum / trials as f64;
        let bottom_mean = bottom_sum / trials as f64;
        assert!((top_mean - population).abs() < 0.05);
        assert!((bottom_mean - population).abs() < 0.05);
    }

    #[test]
    fn tactic_counts_partition_population() {
        let predicted_up = [true, true, false, true, false, true];
        let day_one = [0.0002, 0.01, -0.01, -0.02, 0.03, 0.0001];
        let full_up = [true, true, false, true, false, false];
        let tail_up = [true, false, false, true, true, true];
        for mode in [TacticMode::KeepOpposite, TacticMode::DropOpposite] {
            let report = tactic_infer(
                &TacticInputs {
                    predicted_up: &predicted_up,
                    day_one_move: &day_one,
                    actual_full_up: &full_up,
                    actual_tail_up: &tail_up,
                },
                0.0005,
                mode,
            )
            .unwrap();
            assert_eq!(report.before, 6);
            assert_eq!(report.excluded, 2);
            assert_eq!(
                report.excluded + report.filtered_out + report.after,
                report.before
            );
        }
    }

    #[test]
    fn tactic_keep_opposite_keeps_disagreeing_day_one() {
        let predicted_up = [true, true];
        let day_one = [-0.01, 0.01]; // first opposes the up prediction
        let full_up = [true, true];
        let tail_up = [true, false];
        let report = tactic_infer(
            &TacticInputs {
                predicted_up: &predicted_up,
                day_one_move: &day_one,
                actual_full_up: &full_up,
                actual_tail_up: &tail_up,
            },
            0.0005,
            TacticMode::KeepOpposite,
        )
        .unwrap();
        assert_eq!(report.after, 1);
        assert_eq!(report.filtered_out, 1);
        // The kept event's tail direction matches the prediction.
        assert_eq!(report.inferred_accuracy, Some(1.0));
    }

    #[test]
    fn tactic_with_no_survivors_flags_undefined_accuracy() {
        let predicted_up = [true];
        let day_one = [0.0001];
        let report = tactic_infer(
            &TacticInputs {
                predicted_up: &predicted_up,
                day_one_move: &day_one,
                actual_full_up: &[true],
                actual_tail_up: &[true],
            },
            0.0005,
            TacticMode::KeepOpposite,
        )
        .unwrap();
        assert_eq!(report.after, 0);
        assert_eq!(report.inferred_accuracy, None);
    }
}
