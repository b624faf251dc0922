//! CSV bundle ingest and export.
//!
//! A bundle is four UTF-8 CSV files with header rows; blank cells mean
//! missing. The market calendar is the index file's date column.
//!
//! - `prices.csv`: `company_id,date,close`
//! - `index.csv`: `date,close`
//! - `fundamentals.csv`: `company_id,fiscal_quarter,announce_date,
//!   announce_timing,reported_eps,consensus_eps[,sector],<metric columns>`
//!   with timing one of `BMO`, `AMC`, `INTRA`
//! - `short_interest.csv`: `company_id,date,ratio`

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{CalendarError, TradingCalendar};
use crate::market::{
    AnnounceTiming, CompanyId, EarningsEvent, EventKey, FiscalQuarter, PriceSeries, RawDataset,
};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: expected header starting `{expected}`, got `{got}`")]
    Header {
        path: PathBuf,
        expected: String,
        got: String,
    },
    #[error("{path} row {row}: {message}")]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("duplicate event {key} in {path} row {row}")]
    DuplicateEvent {
        key: EventKey,
        path: PathBuf,
        row: usize,
    },
    #[error(transparent)]
    Calendar(#[from] CalendarError),
}

/// File locations of one bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundlePaths {
    pub prices: PathBuf,
    pub index: PathBuf,
    pub fundamentals: PathBuf,
    pub short_interest: PathBuf,
}

impl BundlePaths {
    /// Conventional file names inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            prices: dir.join("prices.csv"),
            index: dir.join("index.csv"),
            fundamentals: dir.join("fundamentals.csv"),
            short_interest: dir.join("short_interest.csv"),
        }
    }
}

/// Row-validation outcomes of one ingest run. Structural problems (missing
/// files, malformed headers, duplicate events) error out instead.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub events_accepted: usize,
    pub events_dropped: usize,
    /// Drop counts keyed by reason.
    pub drop_reasons: BTreeMap<String, usize>,
}

impl IngestStats {
    fn drop(&mut self, reason: &str) {
        self.events_dropped += 1;
        *self.drop_reasons.entry(reason.to_string()).or_insert(0) += 1;
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file)))
}

fn check_header(path: &Path, got: &csv::StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    let have: Vec<&str> = got.iter().collect();
    if have.len() < expected.len() || &have[..expected.len()] != expected {
        return Err(IngestError::Header {
            path: path.to_path_buf(),
            expected: expected.join(","),
            got: have.join(","),
        });
    }
    Ok(())
}

fn row_err(path: &Path, row: usize, message: impl Into<String>) -> IngestError {
    IngestError::Row {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn csv_err(path: &Path, source: csv::Error) -> IngestError {
    IngestError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_date(path: &Path, row: usize, cell: &str) -> Result<NaiveDate, IngestError> {
    cell.parse()
        .map_err(|_| row_err(path, row, format!("invalid date `{cell}`")))
}

fn parse_positive(path: &Path, row: usize, cell: &str, what: &str) -> Result<f64, IngestError> {
    let value: f64 = cell
        .parse()
        .map_err(|_| row_err(path, row, format!("invalid {what} `{cell}`")))?;
    if !value.is_finite() || value <= 0.0 {
        return Err(row_err(path, row, format!("{what} must be positive, got {value}")));
    }
    Ok(value)
}

fn read_index<S: Scalar>(
    path: &Path,
) -> Result<(TradingCalendar, PriceSeries<S>), IngestError> {
    let mut reader = open_reader(path)?;
    check_header(path, reader.headers().map_err(|e| csv_err(path, e))?, &["date", "close"])?;
    let mut closes: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_err(path, e))?;
        let date = parse_date(path, row, &record[0])?;
        let close = parse_positive(path, row, &record[1], "close")?;
        if closes.insert(date, close).is_some() {
            return Err(row_err(path, row, format!("duplicate index date {date}")));
        }
    }
    let calendar = TradingCalendar::new(closes.keys().copied().collect())?;
    let mut series = PriceSeries::new(CompanyId::from("INDEX"));
    for (date, close) in closes {
        series.insert(date, S::from_config(close));
    }
    Ok((calendar, series))
}

fn read_prices<S: Scalar>(
    path: &Path,
    calendar: &TradingCalendar,
) -> Result<BTreeMap<CompanyId, PriceSeries<S>>, IngestError> {
    let mut reader = open_reader(path)?;
    check_header(
        path,
        reader.headers().map_err(|e| csv_err(path, e))?,
        &["company_id", "date", "close"],
    )?;
    let mut prices: BTreeMap<CompanyId, PriceSeries<S>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_err(path, e))?;
        let company = CompanyId(record[0].to_string());
        let date = parse_date(path, row, &record[1])?;
        if !calendar.contains(date) {
            return Err(row_err(path, row, format!("{date} is not an index trading day")));
        }
        let close = parse_positive(path, row, &record[2], "close")?;
        prices
            .entry(company.clone())
            .or_insert_with(|| PriceSeries::new(company))
            .insert(date, S::from_config(close));
    }
    Ok(prices)
}

fn read_short_interest<S: Scalar>(
    path: &Path,
) -> Result<BTreeMap<CompanyId, BTreeMap<NaiveDate, S>>, IngestError> {
    let mut reader = open_reader(path)?;
    check_header(
        path,
        reader.headers().map_err(|e| csv_err(path, e))?,
        &["company_id", "date", "ratio"],
    )?;
    let mut out: BTreeMap<CompanyId, BTreeMap<NaiveDate, S>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_err(path, e))?;
        let company = CompanyId(record[0].to_string());
        let date = parse_date(path, row, &record[1])?;
        let ratio: f64 = record[2]
            .parse()
            .map_err(|_| row_err(path, row, format!("invalid ratio `{}`", &record[2])))?;
        if !ratio.is_finite() || ratio < 0.0 {
            return Err(row_err(path, row, format!("ratio must be >= 0, got {ratio}")));
        }
        out.entry(company)
            .or_default()
            .insert(date, S::from_config(ratio));
    }
    Ok(out)
}

const FUNDAMENTALS_PREFIX: [&str; 6] = [
    "company_id",
    "fiscal_quarter",
    "announce_date",
    "announce_timing",
    "reported_eps",
    "consensus_eps",
];

struct FundamentalsLayout {
    sector_col: Option<usize>,
    metric_cols: Vec<(usize, String)>,
}

fn fundamentals_layout(path: &Path, header: &csv::StringRecord) -> Result<FundamentalsLayout, IngestError> {
    check_header(path, header, &FUNDAMENTALS_PREFIX)?;
    let mut sector_col = None;
    let mut metric_cols = Vec::new();
    for (i, name) in header.iter().enumerate().skip(FUNDAMENTALS_PREFIX.len()) {
        if name == "sector" {
            sector_col = Some(i);
        } else {
            metric_cols.push((i, name.to_string()));
        }
    }
    Ok(FundamentalsLayout {
        sector_col,
        metric_cols,
    })
}

fn read_events<S: Scalar>(
    path: &Path,
    calendar: &TradingCalendar,
    prices: &BTreeMap<CompanyId, PriceSeries<S>>,
    stats: &mut IngestStats,
) -> Result<Vec<EarningsEvent<S>>, IngestError> {
    let mut reader = open_reader(path)?;
    let layout = fundamentals_layout(path, reader.headers().map_err(|e| csv_err(path, e))?)?;
    let mut seen: BTreeSet<EventKey> = BTreeSet::new();
    let mut events = Vec::new();

    'rows: for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_err(path, e))?;
        let company = CompanyId(record[0].to_string());

        let quarter: FiscalQuarter = match record[1].parse() {
            Ok(q) => q,
            Err(_) => {
                stats.drop("bad_fiscal_quarter");
                continue;
            }
        };
        let key = EventKey {
            company: company.clone(),
            quarter,
        };
        if !seen.insert(key.clone()) {
            return Err(IngestError::DuplicateEvent {
                key,
                path: path.to_path_buf(),
                row,
            });
        }

        let announce_date: NaiveDate = match record[2].parse() {
            Ok(d) => d,
            Err(_) => {
                stats.drop("bad_announce_date");
                continue;
            }
        };
        if announce_date < calendar.first() || announce_date > calendar.last() {
            stats.drop("announce_outside_calendar");
            continue;
        }
        let timing = match AnnounceTiming::parse(&record[3]) {
            Some(t) => t,
            None => {
                stats.drop("missing_timing");
                continue;
            }
        };
        if !prices.contains_key(&company) {
            stats.drop("no_price_series");
            continue;
        }

        let parse_optional = |cell: &str, _what: &str| -> Result<Option<S>, ()> {
            if cell.is_empty() {
                return Ok(None);
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(S::from_config(v))),
                _ => Err(()),
            }
        };

        let reported_eps = match parse_optional(&record[4], "reported_eps") {
            Ok(v) => v,
            Err(()) => {
                stats.drop("bad_number");
                continue;
            }
        };
        let consensus_eps = match parse_optional(&record[5], "consensus_eps") {
            Ok(v) => v,
            Err(()) => {
                stats.drop("bad_number");
                continue;
            }
        };

        let sector = layout
            .sector_col
            .map(|c| record[c].to_string())
            .unwrap_or_default();

        let mut fundamentals = BTreeMap::new();
        for (col, name) in &layout.metric_cols {
            match parse_optional(&record[*col], name) {
                Ok(Some(v)) => {
                    fundamentals.insert(name.clone(), v);
                }
                Ok(None) => {}
                Err(()) => {
                    stats.drop("bad_number");
                    continue 'rows;
                }
            }
        }

        events.push(EarningsEvent {
            company,
            sector,
            quarter,
            announce_date,
            timing,
            reported_eps,
            consensus_eps,
            fundamentals,
            short_interest_ratio: None,
        });
        stats.events_accepted += 1;
    }
    Ok(events)
}

/// Read and validate a full bundle. Events failing row-level validation are
/// dropped and counted; structural problems abort with an error.
pub fn ingest<S: Scalar>(
    paths: &BundlePaths,
) -> Result<(RawDataset<S>, IngestStats), IngestError> {
    let mut stats = IngestStats::default();
    let (calendar, index) = read_index(&paths.index)?;
    let prices = read_prices(&paths.prices, &calendar)?;
    let mut events = read_events(&paths.fundamentals, &calendar, &prices, &mut stats)?;
    let short_interest = read_short_interest(&paths.short_interest)?;

    // Attach each event's latest short-interest reading on or before the
    // announce date so the raw record is self-contained.
    for event in &mut events {
        if let Some(series) = short_interest.get(&event.company) {
            event.short_interest_ratio = series
                .range(..=event.announce_date)
                .next_back()
                .map(|(_, v)| *v);
        }
    }

    Ok((
        RawDataset {
            calendar,
            prices,
            index,
            events,
            short_interest,
        },
        stats,
    ))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>, IngestError> {
    let file = File::create(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(BufWriter::new(file))
}

/// Write a dataset back out as the four-file bundle (the exact format
/// [`ingest`] reads).
pub fn write_bundle<S: Scalar>(
    raw: &RawDataset<S>,
    dir: &Path,
) -> Result<BundlePaths, IngestError> {
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let paths = BundlePaths::in_dir(dir);

    let mut index = create_writer(&paths.index)?;
    writeln!(index, "date,close").map_err(|source| IngestError::Io {
        path: paths.index.clone(),
        source,
    })?;
    for (date, close) in raw.index.iter() {
        writeln!(index, "{date},{close}").map_err(|source| IngestError::Io {
            path: paths.index.clone(),
            source,
        })?;
    }

    let mut prices = create_writer(&paths.prices)?;
    writeln!(prices, "company_id,date,close").map_err(|source| IngestError::Io {
        path: paths.prices.clone(),
        source,
    })?;
    for (company, series) in &raw.prices {
        for (date, close) in series.iter() {
            writeln!(prices, "{company},{date},{close}").map_err(|source| IngestError::Io {
                path: paths.prices.clone(),
                source,
            })?;
        }
    }

    let metric_names: BTreeSet<&str> = raw
        .events
        .iter()
        .flat_map(|e| e.fundamentals.keys().map(|k| k.as_str()))
        .collect();
    let mut fundamentals = create_writer(&paths.fundamentals)?;
    let mut header = FUNDAMENTALS_PREFIX.join(",");
    header.push_str(",sector");
    for name in &metric_names {
        header.push(',');
        header.push_str(name);
    }
    writeln!(fundamentals, "{header}").map_err(|source| IngestError::Io {
        path: paths.fundamentals.clone(),
        source,
    })?;
    let mut ordered: Vec<&EarningsEvent<S>> = raw.events.iter().collect();
    ordered.sort_by_key(|e| e.key());
    for event in ordered {
        let mut line = format!(
            "{},{},{},{},{},{}",
            event.company,
            event.quarter,
            event.announce_date,
            event.timing.code(),
            event.reported_eps.map(|v| v.to_string()).unwrap_or_default(),
            event.consensus_eps.map(|v| v.to_string()).unwrap_or_default(),
        );
        line.push(',');
        line.push_str(&event.sector);
        for name in &metric_names {
            line.push(',');
            if let Some(v) = event.fundamentals.get(*name) {
                line.push_str(&v.to_string());
            }
        }
        writeln!(fundamentals, "{line}").map_err(|source| IngestError::Io {
            path: paths.fundamentals.clone(),
            source,
        })?;
    }

    let mut short = create_writer(&paths.short_interest)?;
    writeln!(short, "company_id,date,ratio").map_err(|source| IngestError::Io {
        path: paths.short_interest.clone(),
        source,
    })?;
    for (company, series) in &raw.short_interest {
        for (date, ratio) in series {
            writeln!(short, "{company},{date},{ratio}").map_err(|source| IngestError::Io {
                path: paths.short_interest.clone(),
                source,
            })?;
        }
    }

    Ok(paths)
}
