use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
    Unknown,
}

impl Side {
    /// Feature encoding: buy = +1, sell = -1, unknown = 0.
    pub fn code(self) -> f64 {
        match self {
            Side::Buy => 1.0,
            Side::Sell => -1.0,
            Side::Unknown => 0.0,
        }
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "B" | "BUY" => Ok(Side::Buy),
            "S" | "SELL" => Ok(Side::Sell),
            "U" | "UNKNOWN" | "" => Ok(Side::Unknown),
            other => Err(format!("unknown side {other:?} (expected B, S or U)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    /// Milliseconds since midnight or since the epoch.
    pub timestamp: u64,
    pub volume: f64,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickSeries {
    pub instrument: String,
    pub records: Vec<TickRecord>,
}

impl TickSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Time of day in milliseconds after local midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimeOfDay(u32);

impl TimeOfDay {
    pub fn from_hms(h: u32, m: u32, s: u32) -> Option<Self> {
        (h < 24 && m < 60 && s < 60).then(|| TimeOfDay((h * 3600 + m * 60 + s) * 1000))
    }

    pub fn millis(self) -> u32 {
        self.0
    }
}

impl FromStr for TimeOfDay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad time of day {s:?} (expected HH:MM[:SS])"));
        let parts: Vec<u32> = s
            .split(':')
            .map(|p| p.trim().parse::<u32>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match parts.as_slice() {
            [h, m] => TimeOfDay::from_hms(*h, *m, 0),
            [h, m, sec] => TimeOfDay::from_hms(*h, *m, *sec),
            _ => None,
        }
        .ok_or_else(bad)
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.0 / 1000;
        write!(f, "{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
    }
}

/// Unit of the timestamp column; records always store milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    Ms,
    S,
}

impl TimeUnit {
    pub fn millis(self) -> u64 {
        match self {
            TimeUnit::Ms => 1,
            TimeUnit::S => 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub instrument: String,
    /// Trades stamped earlier in the day than this are pre-market and dropped.
    pub session_open: Option<TimeOfDay>,
    /// Added to every timestamp before taking the time of day, e.g. +8h for
    /// epoch timestamps of an exchange at UTC+8.
    pub utc_offset_ms: i64,
    pub units: TimeUnit,
    pub delimiter: u8,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            instrument: String::new(),
            session_open: None,
            utc_offset_ms: 0,
            units: TimeUnit::Ms,
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedTicks {
    pub series: TickSeries,
    pub dropped_premarket: usize,
}

/// Reads `timestamp_ms,price,volume,side` rows. A non-numeric first row is
/// taken as a header. Rows must already be in non-decreasing timestamp order.
pub fn parse_ticks<R: Read>(input: R, opts: &ParseOptions) -> Result<ParsedTicks> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(opts.delimiter)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut records = Vec::new();
    let mut dropped = 0usize;
    let mut last_ts: Option<u64> = None;

    for (k, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(k + 1, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = row.position().map_or(k + 1, |p| p.line() as usize);
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        if k == 0 && row.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let rec = parse_row(&row, line, opts.units)?;
        if let Some(prev) = last_ts {
            if rec.timestamp < prev {
                return Err(Error::Parse {
                    line,
                    msg: format!("timestamp {} precedes previous {}", rec.timestamp, prev),
                });
            }
        }
        last_ts = Some(rec.timestamp);

        if let Some(open) = opts.session_open {
            let tod = (rec.timestamp as i64 + opts.utc_offset_ms).rem_euclid(DAY_MS);
            if tod < open.millis() as i64 {
                dropped += 1;
                continue;
            }
        }
        records.push(rec);
    }

    Ok(ParsedTicks {
        series: TickSeries { instrument: opts.instrument.clone(), records },
        dropped_premarket: dropped,
    })
}

fn parse_row(row: &csv::StringRecord, line: usize, units: TimeUnit) -> Result<TickRecord> {
    let err = |msg: String| Error::Parse { line, msg };
    if row.len() < 4 {
        return Err(err(format!(
            "expected 4 fields (timestamp,price,volume,side), found {}",
            row.len()
        )));
    }
    let timestamp = row[0]
        .parse::<u64>()
        .ok()
        .and_then(|t| t.checked_mul(units.millis()))
        .ok_or_else(|| err(format!("timestamp {:?} is not a nonnegative integer", &row[0])))?;
    let volume = row[2]
        .parse::<f64>()
        .map_err(|_| err(format!("volume {:?} is not numeric", &row[2])))?;
    if !(volume >= 0.0) || !volume.is_finite() {
        return Err(err(format!("volume {volume} must be finite and nonnegative")));
    }
    let side = row[3].parse::<Side>().map_err(err)?;
    Ok(TickRecord { timestamp, volume, side })
}
