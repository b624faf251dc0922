//! Market data model: price series, earnings events, and abnormal-return labels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{CalendarError, TradingCalendar};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("input is not finite")]
    NonFinite,
    #[error("price history for {company} does not cover {date} (needed for the return window)")]
    Coverage { company: CompanyId, date: NaiveDate },
    #[error(transparent)]
    Calendar(#[from] CalendarError),
    #[error("horizon must be at least 1")]
    EmptyWindow,
}

/// Company identifier (ticker or any stable label).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CompanyId(pub String);

impl fmt::Display for CompanyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CompanyId {
    fn from(s: &str) -> Self {
        CompanyId(s.to_string())
    }
}

/// Fiscal quarter tag, e.g. `2018Q3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FiscalQuarter {
    pub year: i32,
    pub quarter: u8,
}

impl FiscalQuarter {
    pub fn new(year: i32, quarter: u8) -> Option<Self> {
        (1..=4).contains(&quarter).then_some(Self { year, quarter })
    }

    /// The quarter `n` quarters earlier.
    pub fn minus_quarters(self, n: u32) -> Self {
        let total = self.year as i64 * 4 + (self.quarter as i64 - 1) - n as i64;
        Self {
            year: total.div_euclid(4) as i32,
            quarter: (total.rem_euclid(4) + 1) as u8,
        }
    }
}

impl fmt::Display for FiscalQuarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

#[derive(Debug, Error)]
#[error("invalid fiscal quarter tag `{0}` (expected e.g. 2018Q3)")]
pub struct ParseQuarterError(String);

impl FromStr for FiscalQuarter {
    type Err = ParseQuarterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, q) = s
            .split_once(['Q', 'q'])
            .ok_or_else(|| ParseQuarterError(s.to_string()))?;
        let year: i32 = y.trim().parse().map_err(|_| ParseQuarterError(s.to_string()))?;
        let quarter: u8 = q.trim().parse().map_err(|_| ParseQuarterError(s.to_string()))?;
        FiscalQuarter::new(year, quarter).ok_or_else(|| ParseQuarterError(s.to_string()))
    }
}

impl TryFrom<String> for FiscalQuarter {
    type Error = ParseQuarterError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<FiscalQuarter> for String {
    fn from(q: FiscalQuarter) -> String {
        q.to_string()
    }
}

/// Row key of the training matrix: one announcement of one company.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventKey {
    pub company: CompanyId,
    pub quarter: FiscalQuarter,
}

impl fmt::Display for EventKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.company, self.quarter)
    }
}

/// When during the announce date the numbers hit the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnnounceTiming {
    /// Before the market opened (`BMO`).
    BeforeOpen,
    /// After the market closed (`AMC`).
    AfterClose,
    /// During trading hours (`INTRA`).
    Intraday,
}

impl AnnounceTiming {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BMO" => Some(Self::BeforeOpen),
            "AMC" => Some(Self::AfterClose),
            "INTRA" => Some(Self::Intraday),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Self::BeforeOpen => "BMO",
            Self::AfterClose => "AMC",
            Self::Intraday => "INTRA",
        }
    }
}

/// Closing prices of one instrument, keyed by trading date.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PriceSeries<S: Scalar> {
    pub company: CompanyId,
    closes: BTreeMap<NaiveDate, S>,
}

impl<S: Scalar> PriceSeries<S> {
    pub fn new(company: CompanyId) -> Self {
        Self {
            company,
            closes: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, date: NaiveDate, close: S) {
        self.closes.insert(date, close);
    }

    pub fn close(&self, date: NaiveDate) -> Option<S> {
        self.closes.get(&date).copied()
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, S)> + '_ {
        self.closes.iter().map(|(d, c)| (*d, *c))
    }

    /// Closes at the `n` trading days up to and including `date`.
    pub fn window_through(
        &self,
        calendar: &TradingCalendar,
        date: NaiveDate,
        n: usize,
    ) -> Option<Vec<S>> {
        let end = calendar.index_of(date)?;
        if end + 1 < n {
            return None;
        }
        calendar.days()[end + 1 - n..=end]
            .iter()
            .map(|d| self.close(*d))
            .collect()
    }

    fn close_or_coverage(&self, date: NaiveDate) -> Result<S, MarketError> {
        self.close(date).ok_or(MarketError::Coverage {
            company: self.company.clone(),
            date,
        })
    }

    /// One-day simple return ending at `date`.
    pub fn one_day_return(
        &self,
        calendar: &TradingCalendar,
        date: NaiveDate,
    ) -> Result<S, MarketError> {
        let prev = calendar.prev_trading_day(date)?;
        let c0 = self.close_or_coverage(prev)?;
        let c1 = self.close_or_coverage(date)?;
        Ok(c1 / c0 - S::one())
    }
}

/// One (company, fiscal quarter) earnings announcement.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct EarningsEvent<S: Scalar> {
    pub company: CompanyId,
    pub sector: String,
    pub quarter: FiscalQuarter,
    pub announce_date: NaiveDate,
    pub timing: AnnounceTiming,
    pub reported_eps: Option<S>,
    pub consensus_eps: Option<S>,
    /// Reported fundamentals, keyed by metric name. Absent key = missing.
    pub fundamentals: BTreeMap<String, S>,
    pub short_interest_ratio: Option<S>,
}

impl<S: Scalar> EarningsEvent<S> {
    pub fn key(&self) -> EventKey {
        EventKey {
            company: self.company.clone(),
            quarter: self.quarter,
        }
    }
}

/// Abnormal-return label over a post-announcement window.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CarLabel<S: Scalar> {
    pub key: EventKey,
    pub t0: NaiveDate,
    pub horizon: usize,
    pub car: S,
    /// `+1` or `-1`; zero cumulative return maps to `+1`.
    pub direction: i8,
}

/// Validated bundle of everything the pipeline consumes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RawDataset<S: Scalar> {
    pub calendar: TradingCalendar,
    pub prices: BTreeMap<CompanyId, PriceSeries<S>>,
    /// Market proxy used for expected returns.
    pub index: PriceSeries<S>,
    pub events: Vec<EarningsEvent<S>>,
    /// Short-interest observations per company, keyed by observation date.
    pub short_interest: BTreeMap<CompanyId, BTreeMap<NaiveDate, S>>,
}

impl<S: Scalar> RawDataset<S> {
    pub fn price_series(&self, company: &CompanyId) -> Option<&PriceSeries<S>> {
        self.prices.get(company)
    }
}

/// Last tradable close before the information in an announcement is public.
///
/// After-close events keep the announce date itself (falling back to the
/// nearest prior trading day when the announcement lands on a non-trading
/// day); before-open and intraday events step back to the previous close.
pub fn resolve_t0(
    announce_date: NaiveDate,
    timing: AnnounceTiming,
    calendar: &TradingCalendar,
) -> Result<NaiveDate, CalendarError> {
    match timing {
        AnnounceTiming::AfterClose => calendar.on_or_before(announce_date).map_err(|_| {
            CalendarError::NoPriorTradingDay(announce_date)
        }),
        AnnounceTiming::BeforeOpen | AnnounceTiming::Intraday => {
            calendar.prev_trading_day(announce_date)
        }
    }
}

/// One-day abnormal return: actual return minus the market proxy's return.
pub fn abnormal_return<S: Scalar>(stock_return: S, index_return: S) -> Result<S, MarketError> {
    if !stock_return.is_finite() || !index_return.is_finite() {
        return Err(MarketError::NonFinite);
    }
    Ok(stock_return - index_return)
}

fn sign_of<S: Scalar>(x: S) -> i8 {
    if x < S::zero() {
        -1
    } else {
        1
    }
}

/// Cumulative abnormal return over trading days `from_day..=to_day` after `t0`
/// (day offsets are 1-based; day 1 is the first close after `t0`).
pub fn car_window<S: Scalar>(
    stock: &PriceSeries<S>,
    index: &PriceSeries<S>,
    t0: NaiveDate,
    from_day: usize,
    to_day: usize,
    calendar: &TradingCalendar,
) -> Result<S, MarketError> {
    if from_day == 0 || to_day < from_day {
        return Err(MarketError::EmptyWindow);
    }
    let mut total = S::zero();
    for day in from_day..=to_day {
        let date = calendar.offset(t0, day)?;
        let r_stock = stock.one_day_return(calendar, date)?;
        let r_index = index.one_day_return(calendar, date)?;
        total += abnormal_return(r_stock, r_index)?;
    }
    Ok(total)
}

/// CAR label for a full post-announcement window of `horizon` trading days.
pub fn car_label<S: Scalar>(
    key: EventKey,
    stock: &PriceSeries<S>,
    index: &PriceSeries<S>,
    t0: NaiveDate,
    horizon: usize,
    calendar: &TradingCalendar,
) -> Result<CarLabel<S>, MarketError> {
    let car = car_window(stock, index, t0, 1, horizon, calendar)?;
    Ok(CarLabel {
        key,
        t0,
        horizon,
        car,
        direction: sign_of(car),
    })
}
