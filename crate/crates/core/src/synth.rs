//! Synthetic market bundles with a planted, recoverable drift signal.
//!
//! Prices are built from target abnormal returns so that every event's
//! post-announcement CAR equals a chosen linear combination of that event's
//! engineered features plus noise. Recovering the signal end to end is what
//! the pipeline's claims are tested against.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{CalendarError, TradingCalendar};
use crate::features::{
    BASE_METRICS, MOMENTUM_FEATURES, SURPRISE_DIFF_AVG3, SURPRISE_DIFF_PREV, SURPRISE_NOW,
    SHORT_INTEREST,
};
use crate::market::{
    AnnounceTiming, CompanyId, EarningsEvent, EventKey, FiscalQuarter, PriceSeries, RawDataset,
};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    BadConfig(String),
    #[error("signal weights cannot target price-derived feature `{0}`")]
    UnsupportedSignalFeature(String),
    #[error(transparent)]
    Calendar(#[from] CalendarError),
}

/// When the planted abnormal drift begins relative to the announcement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftTiming {
    /// Uniform drift over trading days 1..=horizon after t0.
    FromT0,
    /// The true drift starts at t1. Day one carries a planted pre-move that
    /// opposes, overshoots, or sits out the drift, so delayed-entry
    /// inference has something real to exploit.
    FromT1,
}

/// EPS surprise draw: sign is fair, magnitude uniform on
/// `[0.25, 1.0] * SURPRISE_SCALE`.
pub const SURPRISE_SCALE: f64 = 0.1;
const SURPRISE_MIN_MAG: f64 = 0.25;
const SURPRISE_MAX_MAG: f64 = 1.0;

/// Standard deviation of the drawn surprise feature, for sizing noise
/// relative to a unit weight on [`SURPRISE_NOW`].
pub const SURPRISE_SIGNAL_STD: f64 = 0.066_143_782_776_614_77;

const SECTORS: [&str; 9] = [
    "Industrial",
    "Basic Materials",
    "Consumer Cyclical",
    "Consumer Non-Cyclical",
    "Financial",
    "Technology",
    "Communications",
    "Energy",
    "Utilities",
];

/// Trading days of price history before the first announcement; covers the
/// longest momentum window with margin.
const WARMUP_DAYS: usize = 220;
/// Trading days between consecutive quarterly announcements.
const QUARTER_SPACING: usize = 63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub companies: usize,
    pub quarters: usize,
    /// Engineered feature name -> weight on the planted 30-day CAR. Only
    /// fundamentals-derived features can carry weight; price-derived
    /// momentum features would be circular.
    pub signal_weights: BTreeMap<String, f64>,
    /// Standard deviation of the zero-mean noise added to each target CAR.
    pub noise_std: f64,
    pub drift_timing: DriftTiming,
    pub seed: u64,
    /// Post-announcement window length in trading days.
    pub horizon: usize,
    /// Daily volatility of the market-proxy random walk.
    pub index_daily_vol: f64,
    /// Fundamental metrics to emit.
    pub base_metrics: Vec<String>,
    /// Fiscal year of the first generated quarter.
    pub start_year: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mut signal_weights = BTreeMap::new();
        signal_weights.insert(SURPRISE_NOW.to_string(), 1.0);
        Self {
            companies: 20,
            quarters: 8,
            signal_weights,
            noise_std: 0.0,
            drift_timing: DriftTiming::FromT0,
            seed: 0,
            horizon: 30,
            index_daily_vol: 0.002,
            base_metrics: BASE_METRICS.iter().map(|s| s.to_string()).collect(),
            start_year: 2011,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.companies < 2 {
            return Err(SynthError::BadConfig("need at least 2 companies".into()));
        }
        if self.quarters == 0 {
            return Err(SynthError::BadConfig("need at least 1 quarter".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(SynthError::BadConfig("noise_std must be >= 0".into()));
        }
        if self.horizon == 0 || self.horizon + 1 >= QUARTER_SPACING {
            return Err(SynthError::BadConfig(format!(
                "horizon must be in 1..{}",
                QUARTER_SPACING - 1
            )));
        }
        for name in self.signal_weights.keys() {
            if MOMENTUM_FEATURES.contains(&name.as_str()) {
                return Err(SynthError::UnsupportedSignalFeature(name.clone()));
            }
        }
        Ok(())
    }
}

/// What the generator actually planted, for oracle-style assertions.
#[derive(Debug, Clone, Default)]
pub struct PlantedTruth {
    /// Engineered fundamentals-derived features per event (only present ones).
    pub features: BTreeMap<EventKey, BTreeMap<String, f64>>,
    /// Target 30-day CAR per event, noise included.
    pub targets: BTreeMap<EventKey, f64>,
    /// Planted abnormal move over day one (zero under `FromT0` spreads
    /// `target / horizon` instead).
    pub day_one: BTreeMap<EventKey, f64>,
}

fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 over the pair keeps per-company streams independent of
    // company count and iteration order.
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

struct CompanyDraws {
    fundamentals: Vec<Vec<f64>>, // [metric][quarter]
    consensus: Vec<f64>,
    surprise: Vec<f64>,
    short_interest: Vec<f64>, // one value per observation slot
    initial_price: f64,
    noise: Vec<f64>,
    class_draw: Vec<f64>,
}

fn draw_company(config: &SynthConfig, company_idx: usize, short_slots: usize) -> CompanyDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, company_idx as u64 + 1));
    let q = config.quarters;

    let fundamentals = config
        .base_metrics
        .iter()
        .map(|_| {
            let mut walk = Vec::with_capacity(q);
            let mut level = 100.0 + 20.0 * normal(&mut rng);
            for _ in 0..q {
                walk.push(level);
                level += 5.0 * normal(&mut rng);
            }
            walk
        })
        .collect();

    let consensus: Vec<f64> = (0..q).map(|_| 1.0 + 0.2 * normal(&mut rng)).collect();
    let surprise: Vec<f64> = (0..q)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let mag = rng.gen_range(SURPRISE_MIN_MAG..=SURPRISE_MAX_MAG);
            sign * mag * SURPRISE_SCALE
        })
        .collect();

    let mut short_interest = Vec::with_capacity(short_slots);
    let mut ratio: f64 = rng.gen_range(0.5..5.0);
    for _ in 0..short_slots {
        short_interest.push(ratio.max(0.0));
        ratio += 0.3 * normal(&mut rng);
    }

    let initial_price = rng.gen_range(20.0..200.0);
    let noise: Vec<f64> = (0..q).map(|_| normal(&mut rng)).collect();
    let class_draw: Vec<f64> = (0..q).map(|_| rng.gen::<f64>()).collect();

    CompanyDraws {
        fundamentals,
        consensus,
        surprise,
        short_interest,
        initial_price,
        noise,
        class_draw,
    }
}

/// Build a raw dataset plus the planted truth table.
pub fn generate_with_truth<S: Scalar>(
    config: &SynthConfig,
) -> Result<(RawDataset<S>, PlantedTruth), SynthError> {
    config.validate()?;
    let horizon = config.horizon;
    let total_days = WARMUP_DAYS + config.quarters * QUARTER_SPACING + horizon + 10;

    let start = NaiveDate::from_ymd_opt(2010, 6, 1).expect("valid date");
    // Weekday calendar long enough for `total_days` trading days.
    let approx_end = start + chrono::Days::new((total_days as f64 * 1.46) as u64 + 14);
    let calendar = TradingCalendar::weekdays(start, approx_end)?;
    let days = calendar.days();
    assert!(days.len() >= total_days, "calendar shorter than planned");

    // Market proxy: random walk of daily returns.
    let mut index_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
    let mut index_closes = Vec::with_capacity(days.len());
    let mut level = 1000.0;
    index_closes.push(level);
    for _ in 1..days.len() {
        level *= 1.0 + config.index_daily_vol * normal(&mut index_rng);
        index_closes.push(level);
    }
    // Recomputed per-day returns keep stock minus index differences exact.
    let index_returns: Vec<f64> = (0..days.len())
        .map(|t| {
            if t == 0 {
                0.0
            } else {
                index_closes[t] / index_closes[t - 1] - 1.0
            }
        })
        .collect();

    let short_slot_days: Vec<usize> = (0..days.len()).step_by(10).collect();

    let mut truth = PlantedTruth::default();
    let mut prices = BTreeMap::new();
    let mut short_interest = BTreeMap::new();
    let mut events = Vec::new();

    for c in 0..config.companies {
        let company = CompanyId(format!("C{c:04}"));
        let draws = draw_company(config, c, short_slot_days.len());
        let stagger = c % 5;

        // Per-quarter engineered truth from the drawn fundamentals.
        let mut company_truth: Vec<BTreeMap<String, f64>> = Vec::with_capacity(config.quarters);
        for q in 0..config.quarters {
            let mut feats = BTreeMap::new();
            for (m, metric) in config.base_metrics.iter().enumerate() {
                let walk = &draws.fundamentals[m];
                feats.insert(metric.clone(), walk[q]);
                if q >= 1 {
                    feats.insert(format!("{metric}_Q_Change"), walk[q] - walk[q - 1]);
                }
                if q >= 4 {
                    feats.insert(format!("{metric}_Y_Change"), walk[q] - walk[q - 4]);
                }
            }
            // Surprise features recomputed exactly as the pipeline will see
            // them: differences of the emitted reported/consensus numbers.
            let s = |i: usize| (draws.consensus[i] + draws.surprise[i]) - draws.consensus[i];
            feats.insert(SURPRISE_NOW.to_string(), s(q));
            if q >= 1 {
                feats.insert(SURPRISE_DIFF_PREV.to_string(), s(q) - s(q - 1));
            }
            if q >= 3 {
                let avg = (s(q - 1) + s(q - 2) + s(q - 3)) / 3.0;
                feats.insert(SURPRISE_DIFF_AVG3.to_string(), s(q) - avg);
            }
            company_truth.push(feats);
        }

        // Announcement schedule and short-interest slots come before prices
        // because the day-one feature needs t0 indices.
        let mut quarter_slots = Vec::with_capacity(config.quarters);
        for q in 0..config.quarters {
            let announce_idx = WARMUP_DAYS + q * QUARTER_SPACING + stagger;
            let timing = [
                AnnounceTiming::AfterClose,
                AnnounceTiming::BeforeOpen,
                AnnounceTiming::Intraday,
            ][(c + q) % 3];
            let t0_idx = match timing {
                AnnounceTiming::AfterClose => announce_idx,
                AnnounceTiming::BeforeOpen | AnnounceTiming::Intraday => announce_idx - 1,
            };
            quarter_slots.push((announce_idx, timing, t0_idx));
        }

        // Short-interest truth: the latest observation on or before t0.
        let company_short: BTreeMap<NaiveDate, f64> = short_slot_days
            .iter()
            .enumerate()
            .map(|(slot, &day)| (days[day], draws.short_interest[slot]))
            .collect();

        // Planted daily abnormal returns.
        let mut abnormal = vec![0.0f64; days.len()];
        for q in 0..config.quarters {
            let (_, _, t0_idx) = quarter_slots[q];
            let feats = &mut company_truth[q];
            let si_slot = short_slot_days.iter().rev().find(|&&d| d <= t0_idx);
            if let Some(&d) = si_slot {
                let slot = short_slot_days.iter().position(|&x| x == d).unwrap();
                feats.insert(SHORT_INTEREST.to_string(), draws.short_interest[slot]);
            }

            let mut target = 0.0;
            for (name, weight) in &config.signal_weights {
                if let Some(x) = feats.get(name) {
                    target += weight * x;
                }
            }
            target += config.noise_std * draws.noise[q];

            match config.drift_timing {
                DriftTiming::FromT0 => {
                    let per_day = target / horizon as f64;
                    for d in 1..=horizon {
                        abnormal[t0_idx + d] = per_day;
                    }
                    truth
                        .day_one
                        .insert(event_key(&company, config, q), per_day);
                }
                DriftTiming::FromT1 => {
                    // Three planted regimes: drift opposed by a small day-one
                    // reversal, drift fully consumed by a day-one overshoot,
                    // or no day-one move at all.
                    let u = draws.class_draw[q];
                    let day_one = if u < 0.3 {
                        -0.3 * target
                    } else if u < 0.8 {
                        1.3 * target
                    } else {
                        0.0
                    };
                    abnormal[t0_idx + 1] = day_one;
                    let per_day = (target - day_one) / (horizon - 1) as f64;
                    for d in 2..=horizon {
                        abnormal[t0_idx + d] = per_day;
                    }
                    truth
                        .day_one
                        .insert(event_key(&company, config, q), day_one);
                }
            }
            truth
                .targets
                .insert(event_key(&company, config, q), target);
        }

        // Prices accumulate abnormal-plus-index daily returns.
        let mut series = PriceSeries::new(company.clone());
        let mut px = draws.initial_price;
        series.insert(days[0], S::from_config(px));
        for t in 1..days.len() {
            let r = abnormal[t] + index_returns[t];
            px *= 1.0 + r;
            series.insert(days[t], S::from_config(px));
        }

        for q in 0..config.quarters {
            let (announce_idx, timing, _) = quarter_slots[q];
            let quarter = fiscal(config, q);
            let fundamentals: BTreeMap<String, S> = config
                .base_metrics
                .iter()
                .enumerate()
                .map(|(m, name)| (name.clone(), S::from_config(draws.fundamentals[m][q])))
                .collect();
            events.push(EarningsEvent {
                company: company.clone(),
                sector: SECTORS[c % SECTORS.len()].to_string(),
                quarter,
                announce_date: days[announce_idx],
                timing,
                reported_eps: Some(S::from_config(draws.consensus[q] + draws.surprise[q])),
                consensus_eps: Some(S::from_config(draws.consensus[q])),
                fundamentals,
                short_interest_ratio: company_truth[q]
                    .get(SHORT_INTEREST)
                    .map(|v| S::from_config(*v)),
            });
        }

        for (q, feats) in company_truth.into_iter().enumerate() {
            truth.features.insert(event_key(&company, config, q), feats);
        }
        prices.insert(company.clone(), series);
        short_interest.insert(
            company,
            company_short
                .into_iter()
                .map(|(d, v)| (d, S::from_config(v)))
                .collect(),
        );
    }

    let index = {
        let mut series = PriceSeries::new(CompanyId::from("INDEX"));
        for (t, day) in days.iter().enumerate() {
            series.insert(*day, S::from_config(index_closes[t]));
        }
        series
    };

    Ok((
        RawDataset {
            calendar,
            prices,
            index,
            events,
            short_interest,
        },
        truth,
    ))
}

/// Build a raw dataset with the planted signal (truth table discarded).
pub fn generate<S: Scalar>(config: &SynthConfig) -> Result<RawDataset<S>, SynthError> {
    generate_with_truth(config).map(|(raw, _)| raw)
}

fn fiscal(config: &SynthConfig, q: usize) -> FiscalQuarter {
    FiscalQuarter::new(config.start_year + (q / 4) as i32, (q % 4) as u8 + 1)
        .expect("quarter index in range")
}

fn event_key(company: &CompanyId, config: &SynthConfig, q: usize) -> EventKey {
    EventKey {
        company: company.clone(),
        quarter: fiscal(config, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{car_label, resolve_t0};

    fn small_config() -> SynthConfig {
        SynthConfig {
            companies: 4,
            quarters: 6,
            base_metrics: vec!["Revenue".into(), "Net_Income".into()],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = small_config();
        let (a, _) = generate_with_truth::<f64>(&config).unwrap();
        let (b, _) = generate_with_truth::<f64>(&config).unwrap();
        assert_eq!(a.events.len(), b.events.len());
        let pa = a.prices.values().next().unwrap();
        let pb = b.prices.values().next().unwrap();
        assert!(pa.iter().zip(pb.iter()).all(|(x, y)| x == y));
    }

    #[test]
    fn per_company_streams_stable_under_count_change() {
        let mut config = small_config();
        let (small, _) = generate_with_truth::<f64>(&config).unwrap();
        config.companies = 6;
        let (large, _) = generate_with_truth::<f64>(&config).unwrap();
        let c0 = CompanyId::from("C0000");
        let a: Vec<(chrono::NaiveDate, f64)> = small.prices[&c0].iter().collect();
        let b: Vec<(chrono::NaiveDate, f64)> = large.prices[&c0].iter().collect();
        assert_eq!(a, b);
        let ea: Vec<_> = small.events.iter().filter(|e| e.company == c0).collect();
        let eb: Vec<_> = large.events.iter().filter(|e| e.company == c0).collect();
        assert_eq!(ea.len(), eb.len());
        for (x, y) in ea.iter().zip(&eb) {
            assert_eq!(x.reported_eps, y.reported_eps);
            assert_eq!(x.announce_date, y.announce_date);
        }
    }

    #[test]
    fn noiseless_car_sign_matches_planted_surprise() {
        let config = SynthConfig {
            companies: 5,
            quarters: 5,
            noise_std: 0.0,
            drift_timing: DriftTiming::FromT0,
            base_metrics: vec!["Revenue".into()],
            ..SynthConfig::default()
        };
        let (raw, truth) = generate_with_truth::<f64>(&config).unwrap();
        for event in &raw.events {
            let key = event.key();
            let t0 = resolve_t0(event.announce_date, event.timing, &raw.calendar).unwrap();
            let label = car_label(
                key.clone(),
                &raw.prices[&event.company],
                &raw.index,
                t0,
                config.horizon,
                &raw.calendar,
            )
            .unwrap();
            let s_now = truth.features[&key][SURPRISE_NOW];
            assert_eq!(
                label.car > 0.0,
                s_now > 0.0,
                "event {key}: car {} vs surprise {s_now}",
                label.car
            );
            let target = truth.targets[&key];
            assert!((label.car - target).abs() < 1e-10);
        }
    }

    #[test]
    fn from_t1_day_one_decomposition_holds() {
        let config = SynthConfig {
            companies: 6,
            quarters: 4,
            drift_timing: DriftTiming::FromT1,
            base_metrics: vec!["Revenue".into()],
            ..SynthConfig::default()
        };
        let (raw, truth) = generate_with_truth::<f64>(&config).unwrap();
        for event in &raw.events {
            let key = event.key();
            let t0 = resolve_t0(event.announce_date, event.timing, &raw.calendar).unwrap();
            let stock = &raw.prices[&event.company];
            let day1 = crate::market::car_window(stock, &raw.index, t0, 1, 1, &raw.calendar)
                .unwrap();
            assert!((day1 - truth.day_one[&key]).abs() < 1e-10);
            let rest = crate::market::car_window(
                stock,
                &raw.index,
                t0,
                2,
                config.horizon,
                &raw.calendar,
            )
            .unwrap();
            assert!((day1 + rest - truth.targets[&key]).abs() < 1e-9);
        }
    }

    #[test]
    fn momentum_weights_rejected() {
        let mut config = small_config();
        config.signal_weights.insert("RSI_9".into(), 1.0);
        assert!(matches!(
            generate::<f64>(&config),
            Err(SynthError::UnsupportedSignalFeature(_))
        ));
    }
}
