//! Feature engineering: per-event vectors, per-company winsorization and
//! standardization, and the stacked training matrix.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{resolve_t0, EarningsEvent, EventKey, RawDataset};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("need at least {needed} closes, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("no non-missing values to standardize")]
    EmptyInput,
    #[error("winsor limits must satisfy 0 <= lower < upper <= 1, got ({0}, {1})")]
    BadLimits(f64, f64),
    #[error("moving-average windows must satisfy long > short >= 1, got ({short}, {long})")]
    BadWindows { short: usize, long: usize },
    #[error("invalid feature spec: {0}")]
    BadSpec(String),
    #[error("rsi period must be at least 1")]
    BadPeriod,
}

/// Surprise feature names, matching the occurrence-report vocabulary.
pub const SURPRISE_NOW: &str = "EPS_EarningsSurprise";
pub const SURPRISE_DIFF_PREV: &str = "EPS_Earnings_Surprise_Backward_Diff";
pub const SURPRISE_DIFF_AVG3: &str = "EPS_Earnings_Surprise_Backward_Ave_Diff";

/// Momentum feature names.
pub const RSI_9: &str = "RSI_9";
pub const RSI_30: &str = "RSI_30";
pub const MA_5_50: &str = "MA_5_50";
pub const MA_5_200: &str = "MA_5_200";
pub const MA_50_200: &str = "MA_50_200";
pub const MOMENTUM_FEATURES: [&str; 5] = [RSI_9, RSI_30, MA_5_50, MA_5_200, MA_50_200];

pub const SHORT_INTEREST: &str = "Short_Interest_Ratio";

const Q_CHANGE: &str = "_Q_Change";
const Y_CHANGE: &str = "_Y_Change";

/// Fundamental metrics carried on each earnings report.
///
/// One duplicated table entry in the source vocabulary is collapsed, leaving
/// 28 distinct metrics.
pub const BASE_METRICS: [&str; 28] = [
    "Cash",
    "Cash_from_Operating_Activities",
    "Cost_of_Revenue",
    "Current_Ratio",
    "Dividend_Payout_Ratio",
    "Dividend_Yield",
    "Free_Cash_Flow",
    "Gross_Profit",
    "Income_from_Continued_Operations",
    "Inventory_Turnover",
    "Net_Debt_to_EBIT",
    "Net_Income",
    "Operating_Expenses",
    "Operating_Income",
    "Operating_Margin",
    "Price_to_Book_Ratio",
    "Price_to_Cashflow_Ratio",
    "Price_to_Sales_Ratio",
    "Quick_Ratio",
    "Return_On_Assets",
    "Return_On_Common_Equity",
    "Revenue",
    "Short_Term_Debt",
    "Total_Asset",
    "Total_Debt_to_Total_Assets",
    "Total_Debt_to_Total_Equity",
    "Total_Inventory",
    "Total_Liabilities",
];

/// Which features to build and how to clean them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Base fundamental metric names; each also gets a quarterly-change and a
    /// yearly-change column.
    pub base_metrics: Vec<String>,
    /// Winsorization quantiles applied per company, `0 <= lower < upper <= 1`.
    pub winsor_lower: f64,
    pub winsor_upper: f64,
    /// Feature names standardized per company after winsorization.
    pub standardize: BTreeSet<String>,
    /// Rows missing more than this fraction of features are dropped.
    pub max_missing_fraction: f64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        let base_metrics: Vec<String> = BASE_METRICS.iter().map(|s| s.to_string()).collect();
        let standardize = level_scale_features(&base_metrics);
        Self {
            base_metrics,
            winsor_lower: 0.01,
            winsor_upper: 0.99,
            standardize,
            max_missing_fraction: 0.5,
        }
    }
}

/// The base metrics plus their change columns: the features whose scale is
/// company-specific. Surprise, momentum, and short-interest features are
/// already comparable across companies and stay raw.
pub fn level_scale_features(base_metrics: &[String]) -> BTreeSet<String> {
    let mut set = BTreeSet::new();
    for m in base_metrics {
        set.insert(m.clone());
        set.insert(format!("{m}{Q_CHANGE}"));
        set.insert(format!("{m}{Y_CHANGE}"));
    }
    set
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(0.0..=1.0).contains(&self.winsor_lower)
            || !(0.0..=1.0).contains(&self.winsor_upper)
            || self.winsor_lower >= self.winsor_upper
        {
            return Err(FeatureError::BadLimits(self.winsor_lower, self.winsor_upper));
        }
        let mut seen = BTreeSet::new();
        for m in &self.base_metrics {
            if !seen.insert(m.as_str()) {
                return Err(FeatureError::BadSpec(format!("duplicate base metric `{m}`")));
            }
        }
        let names: BTreeSet<String> = self.column_names().into_iter().collect();
        for s in &self.standardize {
            if !names.contains(s) {
                return Err(FeatureError::BadSpec(format!(
                    "standardize set names unknown feature `{s}`"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.max_missing_fraction) {
            return Err(FeatureError::BadSpec(
                "max_missing_fraction must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Deterministic column order of the built matrix.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(3 * self.base_metrics.len() + 9);
        names.extend(self.base_metrics.iter().cloned());
        names.extend(self.base_metrics.iter().map(|m| format!("{m}{Q_CHANGE}")));
        names.extend(self.base_metrics.iter().map(|m| format!("{m}{Y_CHANGE}")));
        names.push(SURPRISE_NOW.to_string());
        names.push(SURPRISE_DIFF_PREV.to_string());
        names.push(SURPRISE_DIFF_AVG3.to_string());
        names.extend(MOMENTUM_FEATURES.iter().map(|s| s.to_string()));
        names.push(SHORT_INTEREST.to_string());
        names
    }
}

/// Rectangular feature matrix with row keys, column names, and a missing mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct FeatureMatrix<S: Scalar> {
    row_keys: Vec<EventKey>,
    columns: Vec<String>,
    /// Row-major values; missing cells hold NaN.
    values: Vec<S>,
    /// `true` where a value is present.
    mask: Vec<bool>,
}

impl<S: Scalar> FeatureMatrix<S> {
    pub fn from_rows(
        row_keys: Vec<EventKey>,
        columns: Vec<String>,
        rows: Vec<Vec<Option<S>>>,
    ) -> Self {
        let n = columns.len();
        let mut values = Vec::with_capacity(rows.len() * n);
        let mut mask = Vec::with_capacity(rows.len() * n);
        for row in &rows {
            assert_eq!(row.len(), n, "ragged feature row");
            for cell in row {
                match cell {
                    Some(v) => {
                        values.push(*v);
                        mask.push(true);
                    }
                    None => {
                        values.push(S::nan());
                        mask.push(false);
                    }
                }
            }
        }
        Self {
            row_keys,
            columns,
            values,
            mask,
        }
    }

    pub fn rows(&self) -> usize {
        self.row_keys.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row_keys(&self) -> &[EventKey] {
        &self.row_keys
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<S> {
        let i = row * self.cols() + col;
        self.mask[i].then(|| self.values[i])
    }

    /// Raw row slice; missing cells are NaN.
    pub fn row(&self, row: usize) -> &[S] {
        let n = self.cols();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn is_present(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.cols() + col]
    }

    /// Sub-matrix with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let n = self.cols();
        let mut values = Vec::with_capacity(rows.len() * n);
        let mut mask = Vec::with_capacity(rows.len() * n);
        let mut row_keys = Vec::with_capacity(rows.len());
        for &r in rows {
            row_keys.push(self.row_keys[r].clone());
            values.extend_from_slice(&self.values[r * n..(r + 1) * n]);
            mask.extend_from_slice(&self.mask[r * n..(r + 1) * n]);
        }
        Self {
            row_keys,
            columns: self.columns.clone(),
            values,
            mask,
        }
    }

    /// Append a fully present column.
    pub fn push_column(&mut self, name: String, column: &[S]) {
        assert_eq!(column.len(), self.rows(), "column length mismatch");
        let n = self.cols();
        let mut values = Vec::with_capacity(self.rows() * (n + 1));
        let mut mask = Vec::with_capacity(self.rows() * (n + 1));
        for r in 0..self.rows() {
            values.extend_from_slice(&self.values[r * n..(r + 1) * n]);
            mask.extend_from_slice(&self.mask[r * n..(r + 1) * n]);
            values.push(column[r]);
            mask.push(true);
        }
        self.columns.push(name);
        self.values = values;
        self.mask = mask;
    }
}

/// Difference between a quarter's value and the value `lag` quarters earlier;
/// missing when the lagged quarter has no observation.
pub fn delta_feature<S: Scalar>(
    series: &BTreeMap<crate::market::FiscalQuarter, S>,
    quarter: crate::market::FiscalQuarter,
    lag: u32,
) -> Option<S> {
    let now = series.get(&quarter)?;
    let then = series.get(&quarter.minus_quarters(lag))?;
    Some(*now - *then)
}

/// The three earnings-surprise features for one quarter of one company.
///
/// `surprises` maps each quarter to reported EPS minus consensus EPS. The
/// prior-average difference needs all three preceding quarters.
pub fn surprise_features<S: Scalar>(
    surprises: &BTreeMap<crate::market::FiscalQuarter, S>,
    quarter: crate::market::FiscalQuarter,
) -> (Option<S>, Option<S>, Option<S>) {
    let s_now = surprises.get(&quarter).copied();
    let s_prev = surprises.get(&quarter.minus_quarters(1)).copied();
    let diff_prev = match (s_now, s_prev) {
        (Some(now), Some(prev)) => Some(now - prev),
        _ => None,
    };
    let diff_avg3 = s_now.and_then(|now| {
        let mut total = S::zero();
        for lag in 1..=3 {
            total += *surprises.get(&quarter.minus_quarters(lag))?;
        }
        Some(now - total / S::from_config(3.0))
    });
    (s_now, diff_prev, diff_avg3)
}

/// Relative strength index over the last `period` one-day changes, using
/// simple averages of gains and losses. All-gain series score 100, all-loss
/// 0, and a flat series 50.
pub fn rsi<S: Scalar>(closes: &[S], period: usize) -> Result<S, FeatureError> {
    if period == 0 {
        return Err(FeatureError::BadPeriod);
    }
    if closes.len() < period + 1 {
        return Err(FeatureError::InsufficientHistory {
            needed: period + 1,
            got: closes.len(),
        });
    }
    let tail = &closes[closes.len() - period - 1..];
    let mut gains = S::zero();
    let mut losses = S::zero();
    for pair in tail.windows(2) {
        let change = pair[1] - pair[0];
        if change > S::zero() {
            gains += change;
        } else {
            losses += -change;
        }
    }
    let hundred = S::from_config(100.0);
    if losses == S::zero() && gains == S::zero() {
        return Ok(S::from_config(50.0));
    }
    if losses == S::zero() {
        return Ok(hundred);
    }
    if gains == S::zero() {
        return Ok(S::zero());
    }
    let rs = (gains / S::from_usize(period).unwrap()) / (losses / S::from_usize(period).unwrap());
    Ok(hundred - hundred / (S::one() + rs))
}

/// Ratio of the short-window close average to the long-window close average.
pub fn ma_ratio<S: Scalar>(
    closes: &[S],
    short_window: usize,
    long_window: usize,
) -> Result<S, FeatureError> {
    if short_window == 0 || long_window <= short_window {
        return Err(FeatureError::BadWindows {
            short: short_window,
            long: long_window,
        });
    }
    if closes.len() < long_window {
        return Err(FeatureError::InsufficientHistory {
            needed: long_window,
            got: closes.len(),
        });
    }
    let mean_of = |n: usize| {
        let tail = &closes[closes.len() - n..];
        let total: S = tail.iter().copied().sum();
        total / S::from_usize(n).unwrap()
    };
    Ok(mean_of(short_window) / mean_of(long_window))
}

/// Nearest-rank percentile of the sorted non-missing values.
fn nearest_rank_percentile<S: Scalar>(sorted: &[S], q: f64) -> S {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Clamp each non-missing value into the `[P_lower, P_upper]` nearest-rank
/// percentile band of the non-missing values. Missing entries pass through.
pub fn winsorize<S: Scalar>(
    values: &[Option<S>],
    lower_q: f64,
    upper_q: f64,
) -> Result<Vec<Option<S>>, FeatureError> {
    if !(0.0..=1.0).contains(&lower_q) || !(0.0..=1.0).contains(&upper_q) || lower_q >= upper_q {
        return Err(FeatureError::BadLimits(lower_q, upper_q));
    }
    let mut present: Vec<S> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Ok(values.to_vec());
    }
    present.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = nearest_rank_percentile(&present, lower_q);
    let hi = nearest_rank_percentile(&present, upper_q);
    Ok(values
        .iter()
        .map(|cell| cell.map(|v| v.max(lo).min(hi)))
        .collect())
}

/// Center and scale the non-missing values to mean 0 and population standard
/// deviation 1; a zero-variance input maps to all zeros.
pub fn standardize<S: Scalar>(values: &[Option<S>]) -> Result<Vec<Option<S>>, FeatureError> {
    let present: Vec<S> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let n = S::from_usize(present.len()).unwrap();
    let mean = present.iter().copied().sum::<S>() / n;
    let var = present
        .iter()
        .map(|v| (*v - mean) * (*v - mean))
        .sum::<S>()
        / n;
    let std = var.sqrt();
    Ok(values
        .iter()
        .map(|cell| {
            cell.map(|v| {
                if std == S::zero() {
                    S::zero()
                } else {
                    (v - mean) / std
                }
            })
        })
        .collect())
}

/// Counters emitted by [`build_matrix`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    /// Rows dropped for exceeding the missing-fraction threshold.
    pub rows_dropped_missing: usize,
    /// Events skipped because announcement timing could not be resolved to a
    /// trading day within the calendar.
    pub events_unresolvable: usize,
}

/// Per-company engineered features, cleaned and stacked across companies in
/// (company, quarter) order.
pub fn build_matrix<S: Scalar>(
    raw: &RawDataset<S>,
    spec: &FeatureSpec,
) -> Result<(FeatureMatrix<S>, BuildStats), FeatureError> {
    spec.validate()?;
    let columns = spec.column_names();
    let mut stats = BuildStats::default();

    // Group events per company in quarter order.
    let mut by_company: BTreeMap<&crate::market::CompanyId, Vec<&EarningsEvent<S>>> =
        BTreeMap::new();
    for event in &raw.events {
        by_company.entry(&event.company).or_default().push(event);
    }
    for events in by_company.values_mut() {
        events.sort_by_key(|e| e.quarter);
    }

    let mut row_keys = Vec::new();
    let mut rows: Vec<Vec<Option<S>>> = Vec::new();

    for (company, events) in &by_company {
        let mut fundamentals: BTreeMap<&str, BTreeMap<crate::market::FiscalQuarter, S>> =
            BTreeMap::new();
        let mut surprises: BTreeMap<crate::market::FiscalQuarter, S> = BTreeMap::new();
        for event in events {
            for (metric, value) in &event.fundamentals {
                fundamentals
                    .entry(metric.as_str())
                    .or_default()
                    .insert(event.quarter, *value);
            }
            if let (Some(rep), Some(cons)) = (event.reported_eps, event.consensus_eps) {
                surprises.insert(event.quarter, rep - cons);
            }
        }

        let prices = raw.price_series(company);
        let short = raw.short_interest.get(*company);

        let mut company_rows: Vec<Vec<Option<S>>> = Vec::with_capacity(events.len());
        let mut company_keys: Vec<EventKey> = Vec::with_capacity(events.len());

        for event in events {
            let t0 = match resolve_t0(event.announce_date, event.timing, &raw.calendar) {
                Ok(t0) => t0,
                Err(_) => {
                    stats.events_unresolvable += 1;
                    continue;
                }
            };

            let mut row: Vec<Option<S>> = Vec::with_capacity(columns.len());
            for metric in &spec.base_metrics {
                row.push(
                    fundamentals
                        .get(metric.as_str())
                        .and_then(|s| s.get(&event.quarter).copied()),
                );
            }
            for metric in &spec.base_metrics {
                row.push(
                    fundamentals
                        .get(metric.as_str())
                        .and_then(|s| delta_feature(s, event.quarter, 1)),
                );
            }
            for metric in &spec.base_metrics {
                row.push(
                    fundamentals
                        .get(metric.as_str())
                        .and_then(|s| delta_feature(s, event.quarter, 4)),
                );
            }
            let (s_now, s_prev, s_avg3) = surprise_features(&surprises, event.quarter);
            row.push(s_now);
            row.push(s_prev);
            row.push(s_avg3);

            // Momentum indicators use closes through t0.
            let window =
                |n: usize| prices.and_then(|p| p.window_through(&raw.calendar, t0, n));
            row.push(window(10).and_then(|w| rsi(&w, 9).ok()));
            row.push(window(31).and_then(|w| rsi(&w, 30).ok()));
            row.push(window(50).and_then(|w| ma_ratio(&w, 5, 50).ok()));
            row.push(window(200).and_then(|w| ma_ratio(&w, 5, 200).ok()));
            row.push(window(200).and_then(|w| ma_ratio(&w, 50, 200).ok()));

            // Latest short-interest observation on or before t0.
            row.push(short.and_then(|obs| {
                obs.range(..=t0).next_back().map(|(_, ratio)| *ratio)
            }));

            debug_assert_eq!(row.len(), columns.len());
            company_rows.push(row);
            company_keys.push(event.key());
        }

        // Winsorize every column within the company, then standardize the
        // selected columns.
        for (c, name) in columns.iter().enumerate() {
            let column: Vec<Option<S>> = company_rows.iter().map(|r| r[c]).collect();
            let column = winsorize(&column, spec.winsor_lower, spec.winsor_upper)?;
            let column = if spec.standardize.contains(name)
                && column.iter().any(|v| v.is_some())
            {
                standardize(&column)?
            } else {
                column
            };
            for (r, cell) in column.into_iter().enumerate() {
                company_rows[r][c] = cell;
            }
        }

        for (key, row) in company_keys.into_iter().zip(company_rows) {
            let missing = row.iter().filter(|c| c.is_none()).count();
            if (missing as f64) > spec.max_missing_fraction * columns.len() as f64 {
                stats.rows_dropped_missing += 1;
                continue;
            }
            row_keys.push(key);
            rows.push(row);
        }
    }

    Ok((FeatureMatrix::from_rows(row_keys, columns, rows), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::FiscalQuarter;

    fn q(s: &str) -> FiscalQuarter {
        s.parse().unwrap()
    }

    fn opt(values: &[f64]) -> Vec<Option<f64>> {
        values.iter().map(|v| Some(*v)).collect()
    }

    #[test]
    fn delta_feature_quarterly_and_yearly() {
        let mut series = BTreeMap::new();
        series.insert(q("2018Q1"), 10.0);
        series.insert(q("2018Q2"), 12.0);
        series.insert(q("2017Q3"), 5.0);
        series.insert(q("2018Q3"), 9.0);
        assert_eq!(delta_feature(&series, q("2018Q2"), 1), Some(2.0));
        assert_eq!(delta_feature(&series, q("2018Q3"), 4), Some(4.0));
        // Absent predecessor.
        assert_eq!(delta_feature(&series, q("2018Q1"), 1), None);
    }

    #[test]
    fn surprise_features_definitions() {
        let mut s: BTreeMap<FiscalQuarter, f64> = BTreeMap::new();
        s.insert(q("2018Q1"), 0.01);
        s.insert(q("2018Q2"), 0.02);
        s.insert(q("2018Q3"), 0.03);
        s.insert(q("2018Q4"), 0.05);
        let (now, prev, avg3) = surprise_features(&s, q("2018Q4"));
        assert_eq!(now, Some(0.05));
        assert!((prev.unwrap() - 0.02).abs() < 1e-12);
        // Preceding three surprises average 0.02.
        assert!((avg3.unwrap() - 0.03).abs() < 1e-12);
        // History too short for the average difference.
        let (_, _, missing_avg) = surprise_features(&s, q("2018Q3"));
        assert_eq!(missing_avg, None);

        let mut two: BTreeMap<FiscalQuarter, f64> = BTreeMap::new();
        two.insert(q("2018Q3"), 0.02);
        two.insert(q("2018Q4"), 0.05);
        let (_, prev, _) = surprise_features(&two, q("2018Q4"));
        assert!((prev.unwrap() - 0.03).abs() < 1e-12);
    }

    #[test]
    fn surprise_now_is_reported_minus_consensus() {
        let mut s: BTreeMap<FiscalQuarter, f64> = BTreeMap::new();
        s.insert(q("2018Q4"), 0.55 - 0.50);
        let (now, _, _) = surprise_features(&s, q("2018Q4"));
        assert!((now.unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn rsi_extremes_and_balance() {
        let rising: Vec<f64> = (0..10).map(|i| 100.0 + i as f64).collect();
        assert_eq!(rsi(&rising, 9).unwrap(), 100.0);
        let falling: Vec<f64> = (0..10).map(|i| 100.0 - i as f64).collect();
        assert_eq!(rsi(&falling, 9).unwrap(), 0.0);
        // Alternating +1/-1 moves, even period so gains and losses balance.
        let alternating: Vec<f64> = (0..11)
            .map(|i| if i % 2 == 0 { 100.0 } else { 101.0 })
            .collect();
        assert!((rsi(&alternating, 10).unwrap() - 50.0).abs() < 1e-12);
        assert!(rsi(&rising[..5], 9).is_err());
    }

    #[test]
    fn flat_series_rsi_is_50() {
        let flat = vec![100.0f64; 10];
        assert_eq!(rsi(&flat, 9).unwrap(), 50.0);
    }

    #[test]
    fn ma_ratio_examples() {
        let constant = vec![7.0f64; 60];
        assert_eq!(ma_ratio(&constant, 5, 50).unwrap(), 1.0);

        let closes = [1.0f64, 1.0, 1.0, 1.0, 3.0];
        let got = ma_ratio(&closes, 1, 5).unwrap();
        assert!((got - 3.0 / 1.4).abs() < 1e-12);

        let rising: Vec<f64> = (1..=60).map(|i| i as f64).collect();
        assert!(ma_ratio(&rising, 5, 50).unwrap() > 1.0);
        assert!(ma_ratio(&rising[..40], 5, 50).is_err());
        assert!(ma_ratio(&rising, 50, 5).is_err());
    }

    #[test]
    fn winsorize_full_range_is_identity() {
        // Limits (0, 1) select the minimum and maximum ranks.
        let v = opt(&[1.0, 2.0, 3.0]);
        let out = winsorize(&v, 0.0, 1.0).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn winsorize_constant_unchanged() {
        let v = opt(&[5.0; 7]);
        assert_eq!(winsorize(&v, 0.2, 0.8).unwrap(), v);
    }

    #[test]
    fn winsorize_matches_sort_and_clamp_oracle() {
        // Independent oracle: sort, pick ceil(q*n) ranks, clamp.
        let cases: Vec<Vec<f64>> = vec![
            vec![1.0, 2.0, 3.0, 4.0, 100.0],
            (1..=20).map(|i| i as f64).chain([1000.0]).collect(),
            vec![-5.0, 0.0, 0.5, 0.25, 9.0, 2.0, 2.0, 7.0, -3.0],
        ];
        for values in cases {
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            let rank = |q: f64| sorted[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
            let (lo, hi) = (rank(0.05), rank(0.95));
            let expect: Vec<Option<f64>> =
                values.iter().map(|v| Some(v.clamp(lo, hi))).collect();
            let got = winsorize(&opt(&values), 0.05, 0.95).unwrap();
            assert_eq!(got, expect, "input {values:?}");
        }
        // The 21-point case genuinely clamps both tails.
        let long: Vec<f64> = (1..=20).map(|i| i as f64).chain([1000.0]).collect();
        let out = winsorize(&opt(&long), 0.05, 0.95).unwrap();
        assert_eq!(out[0], Some(2.0));
        assert_eq!(out[20], Some(20.0));
    }

    #[test]
    fn winsorize_passes_missing_through() {
        let v = vec![Some(1.0), None, Some(100.0), Some(2.0), None];
        let out = winsorize(&v, 0.05, 0.95).unwrap();
        assert_eq!(out[1], None);
        assert_eq!(out[4], None);
        assert_eq!(out.len(), v.len());
    }

    #[test]
    fn winsorize_all_missing_is_identity() {
        let v: Vec<Option<f64>> = vec![None, None];
        assert_eq!(winsorize(&v, 0.1, 0.9).unwrap(), v);
    }

    #[test]
    fn standardize_hand_computed() {
        let out = standardize(&opt(&[1.0, 2.0, 3.0])).unwrap();
        let expect = [-1.224745, 0.0, 1.224745];
        for (got, want) in out.iter().zip(expect) {
            assert!((got.unwrap() - want).abs() < 1e-6);
        }
    }

    #[test]
    fn standardize_constant_is_zeros() {
        let out = standardize(&opt(&[4.0; 5])).unwrap();
        assert!(out.iter().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn standardize_moments_are_normalized() {
        let values = opt(&[3.0, -1.0, 7.5, 0.2, 11.0, -4.4]);
        let out = standardize(&values).unwrap();
        let xs: Vec<f64> = out.iter().flatten().copied().collect();
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn standardize_empty_errors() {
        assert!(standardize::<f64>(&[]).is_err());
        assert!(standardize::<f64>(&[None, None]).is_err());
    }

    #[test]
    fn column_count_formula() {
        // 29 metrics: 29 base + 29 quarterly + 29 yearly + 3 surprise
        // + 5 momentum + 1 short interest = 96.
        let metrics: Vec<String> = (0..29).map(|i| format!("M{i:02}")).collect();
        let spec = FeatureSpec {
            standardize: level_scale_features(&metrics),
            base_metrics: metrics,
            ..FeatureSpec::default()
        };
        assert_eq!(spec.column_names().len(), 96);
        // The default vocabulary collapses one duplicated table entry.
        assert_eq!(FeatureSpec::default().column_names().len(), 93);
    }

    #[test]
    fn default_spec_validates() {
        FeatureSpec::default().validate().unwrap();
    }
}
