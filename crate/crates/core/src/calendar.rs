//! Trading calendar: the ordered set of dates on which closes exist.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CalendarError {
    #[error("date {0} is before the first trading day {1}")]
    BeforeStart(NaiveDate, NaiveDate),
    #[error("no trading day strictly before {0}")]
    NoPriorTradingDay(NaiveDate),
    #[error("calendar exhausted: needed {steps} trading days after {from}, have {available}")]
    Exhausted {
        from: NaiveDate,
        steps: usize,
        available: usize,
    },
    #[error("calendar dates must be strictly increasing (offending date {0})")]
    NotIncreasing(NaiveDate),
    #[error("calendar is empty")]
    Empty,
}

/// Strictly increasing sequence of trading dates.
///
/// Supports total "previous trading day" and "n-th trading day after" lookups
/// within its range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingCalendar {
    days: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(mut days: Vec<NaiveDate>) -> Result<Self, CalendarError> {
        if days.is_empty() {
            return Err(CalendarError::Empty);
        }
        days.dedup();
        for pair in days.windows(2) {
            if pair[1] <= pair[0] {
                return Err(CalendarError::NotIncreasing(pair[1]));
            }
        }
        Ok(Self { days })
    }

    /// Weekday-only calendar covering `[start, end]`, for synthetic data.
    pub fn weekdays(start: NaiveDate, end: NaiveDate) -> Result<Self, CalendarError> {
        let days = start
            .iter_days()
            .take_while(|d| *d <= end)
            .filter(|d| {
                use chrono::Datelike;
                d.weekday().number_from_monday() <= 5
            })
            .collect();
        Self::new(days)
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn first(&self) -> NaiveDate {
        self.days[0]
    }

    pub fn last(&self) -> NaiveDate {
        *self.days.last().unwrap()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.days.binary_search(&date).is_ok()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.days.binary_search(&date).ok()
    }

    /// Latest trading day `<= date`.
    pub fn on_or_before(&self, date: NaiveDate) -> Result<NaiveDate, CalendarError> {
        match self.days.binary_search(&date) {
            Ok(i) => Ok(self.days[i]),
            Err(0) => Err(CalendarError::BeforeStart(date, self.first())),
            Err(i) => Ok(self.days[i - 1]),
        }
    }

    /// Latest trading day strictly `< date`.
    pub fn prev_trading_day(&self, date: NaiveDate) -> Result<NaiveDate, CalendarError> {
        let i = match self.days.binary_search(&date) {
            Ok(i) => i,
            Err(i) => i,
        };
        if i == 0 {
            return Err(CalendarError::NoPriorTradingDay(date));
        }
        Ok(self.days[i - 1])
    }

    /// The `n`-th trading day after `date` (`n = 0` returns `date` itself).
    ///
    /// `date` must itself be a trading day.
    pub fn offset(&self, date: NaiveDate, n: usize) -> Result<NaiveDate, CalendarError> {
        let i = self
            .index_of(date)
            .ok_or(CalendarError::NoPriorTradingDay(date))?;
        let j = i + n;
        if j >= self.days.len() {
            return Err(CalendarError::Exhausted {
                from: date,
                steps: n,
                available: self.days.len() - 1 - i,
            });
        }
        Ok(self.days[j])
    }
}
