//! Time-series ingestion, validation and windowing.
//!
//! CSV is the only input format: a `date` column in `YYYY-MM-DD` form and
//! either four price columns (`open,high,low,close`) or a single `value`
//! column. Values are written back with Rust's shortest round-trip float
//! formatting, so a write/read cycle is bit-exact.

use std::{fmt, fs::File, io::Write, path::Path, str::FromStr};

use chrono::NaiveDate;
use thiserror::Error;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("cannot open {path}: {reason}")]
    MissingFile { path: String, reason: String },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("rejected rows: {}", format_rejections(.0))]
    RejectedRows(Vec<RowRejection>),
    #[error("duplicate dates: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    DuplicateDates(Vec<NaiveDate>),
    #[error("timestamps are not strictly increasing at index {0}")]
    NonMonotone(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("series needs at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("channel lengths differ: {0}")]
    Misaligned(String),
    #[error("split needs {needed} points (fit {fit} + horizon {horizon}) but series has {len}")]
    SplitTooLong {
        fit: usize,
        horizon: usize,
        needed: usize,
        len: usize,
    },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// One CSV line that could not be ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct RowRejection {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

fn format_rejections(rows: &[RowRejection]) -> String {
    rows.iter()
        .map(|r| format!("line {}: {}", r.line, r.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Price channel of an OHLC bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Open,
    High,
    Low,
    Close,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Open, Channel::High, Channel::Low, Channel::Close];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Open => "open",
            Channel::High => "high",
            Channel::Low => "low",
            Channel::Close => "close",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(Channel::Open),
            "high" => Ok(Channel::High),
            "low" => Ok(Channel::Low),
            "close" | "value" => Ok(Channel::Close),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

fn check_dates(timestamps: &[NaiveDate]) -> Result<(), DataError> {
    match timestamps.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(DataError::NonMonotone(i + 1)),
        None => Ok(()),
    }
}

fn check_finite(values: &[f64]) -> Result<(), DataError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(DataError::NonFinite(i)),
        None => Ok(()),
    }
}

/// A dated univariate price sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    timestamps: Vec<NaiveDate>,
    values: Vec<f64>,
    channel: Channel,
    name: String,
}

impl Series {
    /// Validates and builds a series of at least two points.
    pub fn new(
        timestamps: Vec<NaiveDate>,
        values: Vec<f64>,
        channel: Channel,
        name: impl Into<String>,
    ) -> Result<Self, DataError> {
        if values.len() < 2 {
            return Err(DataError::TooShort {
                needed: 2,
                got: values.len(),
            });
        }
        Self::window(timestamps, values, channel, name.into())
    }

    /// Builds a series with synthetic consecutive daily dates starting at
    /// 2000-01-01. Handy for tests and generated data.
    pub fn from_values(values: Vec<f64>, name: impl Into<String>) -> Result<Self, DataError> {
        let timestamps = synthetic_dates(values.len());
        Self::new(timestamps, values, Channel::Close, name)
    }

    // Sub-windows (e.g. a one-step test horizon) may hold a single point.
    fn window(
        timestamps: Vec<NaiveDate>,
        values: Vec<f64>,
        channel: Channel,
        name: String,
    ) -> Result<Self, DataError> {
        if timestamps.len() != values.len() {
            return Err(DataError::Misaligned(format!(
                "{} timestamps vs {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if values.is_empty() {
            return Err(DataError::TooShort { needed: 1, got: 0 });
        }
        check_dates(&timestamps)?;
        check_finite(&values)?;
        Ok(Self {
            timestamps,
            values,
            channel,
            name,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same timestamps, new values (e.g. a denoised copy).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, DataError> {
        Self::window(
            self.timestamps.clone(),
            values,
            self.channel,
            self.name.clone(),
        )
    }

    /// Contiguous sub-window `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self, DataError> {
        if start >= end || end > self.len() {
            return Err(DataError::InvalidSplit(format!(
                "slice {start}..{end} outside 0..{}",
                self.len()
            )));
        }
        Self::window(
            self.timestamps[start..end].to_vec(),
            self.values[start..end].to_vec(),
            self.channel,
            self.name.clone(),
        )
    }
}

pub(crate) fn synthetic_dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    (0..n)
        .map(|i| start + chrono::Duration::days(i as i64))
        .collect()
}

/// Four aligned price channels.
#[derive(Debug, Clone, PartialEq)]
pub struct OhlcFrame {
    timestamps: Vec<NaiveDate>,
    open: Vec<f64>,
    high: Vec<f64>,
    low: Vec<f64>,
    close: Vec<f64>,
    warnings: Vec<String>,
}

impl OhlcFrame {
    /// Validates alignment, ordering and finiteness. Rows where
    /// `low ≤ min(open, close) ≤ max(open, close) ≤ high` fails are kept
    /// but recorded in [`OhlcFrame::warnings`].
    pub fn new(
        timestamps: Vec<NaiveDate>,
        open: Vec<f64>,
        high: Vec<f64>,
        low: Vec<f64>,
        close: Vec<f64>,
    ) -> Result<Self, DataError> {
        let n = timestamps.len();
        for (name, ch) in [("open", &open), ("high", &high), ("low", &low), ("close", &close)] {
            if ch.len() != n {
                return Err(DataError::Misaligned(format!(
                    "{name} has {} rows, expected {n}",
                    ch.len()
                )));
            }
            check_finite(ch)?;
        }
        if n == 0 {
            return Err(DataError::TooShort { needed: 1, got: 0 });
        }
        check_dates(&timestamps)?;
        let warnings = (0..n)
            .filter(|&i| {
                let (lo, hi) = (open[i].min(close[i]), open[i].max(close[i]));
                !(low[i] <= lo && hi <= high[i])
            })
            .map(|i| format!("{}: bar outside its low/high range", timestamps[i]))
            .collect();
        Ok(Self {
            timestamps,
            open,
            high,
            low,
            close,
            warnings,
        })
    }

    /// A frame whose four channels all equal `values` (flat bars).
    pub fn from_univariate(timestamps: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self, DataError> {
        Self::new(
            timestamps,
            values.clone(),
            values.clone(),
            values.clone(),
            values,
        )
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn values(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Open => &self.open,
            Channel::High => &self.high,
            Channel::Low => &self.low,
            Channel::Close => &self.close,
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn series(&self, channel: Channel) -> Result<Series, DataError> {
        Series::window(
            self.timestamps.clone(),
            self.values(channel).to_vec(),
            channel,
            channel.name().to_string(),
        )
    }

    /// Row `i` as `[open, high, low, close]`.
    pub fn bar(&self, i: usize) -> [f64; 4] {
        [self.open[i], self.high[i], self.low[i], self.close[i]]
    }

    /// Rows `[0, end)`.
    pub fn prefix(&self, end: usize) -> Result<Self, DataError> {
        if end == 0 || end > self.len() {
            return Err(DataError::InvalidSplit(format!(
                "prefix of {end} rows from a {}-row frame",
                self.len()
            )));
        }
        Self::new(
            self.timestamps[..end].to_vec(),
            self.open[..end].to_vec(),
            self.high[..end].to_vec(),
            self.low[..end].to_vec(),
            self.close[..end].to_vec(),
        )
    }

    /// Writes `date,open,high,low,close` with round-trip float formatting.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = File::create(path)?;
        self.write_csv_to(&mut out)
    }

    pub fn write_csv_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "date,open,high,low,close")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.timestamps[i].format(DATE_FORMAT),
                self.open[i],
                self.high[i],
                self.low[i],
                self.close[i]
            )?;
        }
        Ok(())
    }
}

/// Which CSV columns to read.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub date_column: String,
    /// Either one column (copied to all four channels) or four columns
    /// in open, high, low, close order.
    pub value_columns: Vec<String>,
}

impl CsvSchema {
    pub fn ohlc() -> Self {
        Self {
            date_column: "date".into(),
            value_columns: ["open", "high", "low", "close"].map(String::from).to_vec(),
        }
    }

    pub fn univariate() -> Self {
        Self {
            date_column: "date".into(),
            value_columns: vec!["value".into()],
        }
    }

    /// Picks OHLC when the header has all four price columns, otherwise the
    /// single `value` column.
    pub fn detect(headers: &[&str]) -> Self {
        let has = |c: &str| headers.contains(&c);
        if ["open", "high", "low", "close"].iter().all(|c| has(c)) {
            Self::ohlc()
        } else if has("value") {
            Self::univariate()
        } else if has("close") {
            Self {
                date_column: "date".into(),
                value_columns: vec!["close".into()],
            }
        } else {
            Self::univariate()
        }
    }
}

/// Reads a CSV into a validated frame, sorted by date.
pub fn load_csv(path: impl AsRef<Path>, schema: Option<&CsvSchema>) -> Result<OhlcFrame, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DataError::MissingFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    read_csv(file, schema)
}

/// Like [`load_csv`] but from any reader.
pub fn read_csv<R: std::io::Read>(reader: R, schema: Option<&CsvSchema>) -> Result<OhlcFrame, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    let header_names: Vec<&str> = headers.iter().collect();
    let schema = schema.cloned().unwrap_or_else(|| CsvSchema::detect(&header_names));
    if schema.value_columns.len() != 1 && schema.value_columns.len() != 4 {
        return Err(DataError::Csv(format!(
            "schema needs 1 or 4 value columns, got {}",
            schema.value_columns.len()
        )));
    }
    let find = |name: &str| {
        header_names
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let date_idx = find(&schema.date_column)?;
    let value_idx = schema
        .value_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    let mut rejected = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let date = record
            .get(date_idx)
            .and_then(|d| NaiveDate::parse_from_str(d, DATE_FORMAT).ok());
        let Some(date) = date else {
            rejected.push(RowRejection {
                line,
                reason: format!("unparseable date `{}`", record.get(date_idx).unwrap_or("")),
            });
            continue;
        };
        let mut values = Vec::with_capacity(value_idx.len());
        let mut bad = None;
        for (&idx, col) in value_idx.iter().zip(&schema.value_columns) {
            let raw = record.get(idx).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    bad = Some(format!("invalid {col} value `{raw}`"));
                    break;
                }
            }
        }
        match bad {
            Some(reason) => rejected.push(RowRejection { line, reason }),
            None => rows.push((date, values)),
        }
    }
    if !rejected.is_empty() {
        return Err(DataError::RejectedRows(rejected));
    }
    rows.sort_by_key(|(d, _)| *d);
    let mut dups: Vec<NaiveDate> = rows
        .windows(2)
        .filter(|w| w[0].0 == w[1].0)
        .map(|w| w[0].0)
        .collect();
    dups.dedup();
    if !dups.is_empty() {
        return Err(DataError::DuplicateDates(dups));
    }
    let timestamps: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
    let column = |k: usize| -> Vec<f64> {
        rows.iter()
            .map(|(_, v)| if v.len() == 1 { v[0] } else { v[k] })
            .collect()
    };
    OhlcFrame::new(timestamps, column(0), column(1), column(2), column(3))
}

/// Fit/test window lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    /// Points used to build the model.
    pub fit_length: usize,
    /// Out-of-sample forecast length.
    pub horizon: usize,
}

impl SplitSpec {
    pub fn new(fit_length: usize, horizon: usize) -> Result<Self, DataError> {
        if fit_length == 0 || horizon == 0 {
            return Err(DataError::InvalidSplit(
                "fit_length and horizon must be positive".into(),
            ));
        }
        Ok(Self {
            fit_length,
            horizon,
        })
    }

    pub fn window_len(&self) -> usize {
        self.fit_length + self.horizon
    }

    pub fn check(&self, len: usize) -> Result<(), DataError> {
        if self.window_len() > len {
            return Err(DataError::SplitTooLong {
                fit: self.fit_length,
                horizon: self.horizon,
                needed: self.window_len(),
                len,
            });
        }
        Ok(())
    }
}

/// Splits off the last `horizon` points as the test window and the
/// `fit_length` points before them as the fit window.
pub fn split(series: &Series, spec: SplitSpec) -> Result<(Series, Series), DataError> {
    split_ending_at(series, spec, series.len())
}

/// As [`split`], with the test window ending (exclusive) at `end`.
pub fn split_ending_at(series: &Series, spec: SplitSpec, end: usize) -> Result<(Series, Series), DataError> {
    spec.check(end.min(series.len()))?;
    if end > series.len() {
        return Err(DataError::InvalidSplit(format!(
            "window end {end} beyond series length {}",
            series.len()
        )));
    }
    let cut = end - spec.horizon;
    let start = cut - spec.fit_length;
    Ok((series.slice(start, cut)?, series.slice(cut, end)?))
}
