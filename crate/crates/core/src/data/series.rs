use std::io::{Read, Write};

use super::scaling::ScalingStats;
use super::ticks::{Side, TickRecord, TickSeries};
use crate::error::{Error, Result};

pub const VOLUME_COLUMN: usize = 1;
pub const SIDE_COLUMN: usize = 2;

/// Dense row-major matrix of per-duration features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_cols == 0 || data.len() % n_cols != 0 {
            return Err(Error::Shape(format!(
                "{} values do not fill rows of {} columns",
                data.len(),
                n_cols
            )));
        }
        Ok(FeatureMatrix { n_cols, data })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.n_cols).copied()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Durations in seconds with an optional aligned feature matrix whose
/// columns are `[duration, volume, side_code]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationSeries {
    pub durations: Vec<f64>,
    pub features: Option<FeatureMatrix>,
    pub scaling: Option<ScalingStats>,
}

impl DurationSeries {
    pub fn new(durations: Vec<f64>) -> Result<Self> {
        let s = DurationSeries { durations, features: None, scaling: None };
        s.validate()?;
        Ok(s)
    }

    pub fn with_features(durations: Vec<f64>, features: FeatureMatrix) -> Result<Self> {
        let s = DurationSeries { durations, features: Some(features), scaling: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.durations.iter().position(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "duration {} at index {} is not a positive finite number",
                self.durations[k], k
            )));
        }
        if let Some(f) = &self.features {
            if f.n_rows() != self.durations.len() {
                return Err(Error::Shape(format!(
                    "{} feature rows for {} durations",
                    f.n_rows(),
                    self.durations.len()
                )));
            }
            if f.column(0).zip(&self.durations).any(|(a, &b)| a != b) {
                return Err(Error::InvalidSeries(
                    "feature column 0 must equal the durations".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.as_ref().map_or(1, FeatureMatrix::n_cols)
    }

    /// Drops auxiliary features, keeping only the durations.
    pub fn univariate(&self) -> DurationSeries {
        DurationSeries { durations: self.durations.clone(), features: None, scaling: self.scaling.clone() }
    }

    /// Model input rows: the feature matrix, or the durations as one column.
    pub fn input_rows(&self) -> (&[f64], usize) {
        match &self.features {
            Some(f) => (f.as_slice(), f.n_cols()),
            None => (&self.durations, 1),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DurationOptions {
    /// Collapse trades sharing a timestamp into one record.
    pub merge_same_timestamp: bool,
    /// Drop durations longer than this many seconds.
    pub max_duration: Option<f64>,
}

impl DurationOptions {
    pub fn merged() -> Self {
        DurationOptions { merge_same_timestamp: true, max_duration: None }
    }
}

fn merge_group(group: &[TickRecord]) -> TickRecord {
    let volume = group.iter().map(|r| r.volume).sum();
    let max = group.iter().map(|r| r.volume).fold(f64::NEG_INFINITY, f64::max);
    let mut sides = group.iter().filter(|r| r.volume == max).map(|r| r.side);
    let first = sides.next().unwrap_or(Side::Unknown);
    let side = if sides.all(|s| s == first) { first } else { Side::Unknown };
    TickRecord { timestamp: group[0].timestamp, volume, side }
}

/// Extracts `Δt_{k} = (t_{k+1} - t_k) / 1000` seconds. Feature row `k` holds
/// the duration and the volume and side of the trade that ends it.
pub fn compute_durations(ticks: &TickSeries, opts: &DurationOptions) -> Result<DurationSeries> {
    let records: Vec<TickRecord> = if opts.merge_same_timestamp {
        ticks
            .records
            .chunk_by(|a, b| a.timestamp == b.timestamp)
            .map(merge_group)
            .collect()
    } else {
        ticks.records.clone()
    };
    if records.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} trade records, need at least 2",
            records.len()
        )));
    }

    let mut durations = Vec::with_capacity(records.len() - 1);
    let mut data = Vec::with_capacity(3 * (records.len() - 1));
    for (k, pair) in records.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        if b.timestamp < a.timestamp {
            return Err(Error::InvalidSeries(format!("timestamps decrease at record {}", k + 1)));
        }
        let d = (b.timestamp - a.timestamp) as f64 / 1000.0;
        if d == 0.0 {
            return Err(Error::InvalidSeries(format!(
                "zero duration between records {} and {} (enable same-timestamp merging)",
                k,
                k + 1
            )));
        }
        if opts.max_duration.is_some_and(|m| d > m) {
            continue;
        }
        durations.push(d);
        data.extend_from_slice(&[d, b.volume, b.side.code()]);
    }
    if durations.is_empty() {
        return Err(Error::InsufficientData("every duration was filtered out".into()));
    }
    DurationSeries::with_features(durations, FeatureMatrix::new(3, data)?)
}

/// A duration file as read back from disk.
#[derive(Debug, Clone)]
pub struct SeriesFile {
    pub series: DurationSeries,
    pub latent_mu: Option<Vec<f64>>,
}

/// Writes `index,duration[,volume,side_code][,mu]` rows.
pub fn write_series<W: Write>(
    out: W,
    series: &DurationSeries,
    latent_mu: Option<&[f64]>,
) -> Result<()> {
    if let Some(mu) = latent_mu {
        if mu.len() != series.len() {
            return Err(Error::Shape(format!("{} mu values for {} durations", mu.len(), series.len())));
        }
    }
    let io = |e: std::io::Error| Error::io("<series output>", e);
    let mut w = std::io::BufWriter::new(out);
    let feats = series.features.as_ref().filter(|f| f.n_cols() >= 3);
    let mut header = String::from("index,duration");
    if feats.is_some() {
        header.push_str(",volume,side_code");
    }
    if latent_mu.is_some() {
        header.push_str(",mu");
    }
    writeln!(w, "{header}").map_err(io)?;
    for (i, d) in series.durations.iter().enumerate() {
        write!(w, "{i},{d}").map_err(io)?;
        if let Some(f) = feats {
            let row = f.row(i);
            write!(w, ",{},{}", row[VOLUME_COLUMN], row[SIDE_COLUMN]).map_err(io)?;
        }
        if let Some(mu) = latent_mu {
            write!(w, ",{}", mu[i]).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_series<R: Read>(input: R) -> Result<SeriesFile> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let dur = col("duration").ok_or(Error::Parse { line: 1, msg: "missing duration column".into() })?;
    let vol = col("volume");
    let side = col("side_code");
    let mu_col = col("mu");
    if vol.is_some() != side.is_some() {
        return Err(Error::Parse { line: 1, msg: "volume and side_code must appear together".into() });
    }

    let mut durations = Vec::new();
    let mut feats = Vec::new();
    let mut mu = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let num = |j: usize, what: &str| -> Result<f64> {
            row.get(j)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse { line, msg: format!("bad {what} value") })
        };
        let d = num(dur, "duration")?;
        durations.push(d);
        if let (Some(v), Some(s)) = (vol, side) {
            feats.extend_from_slice(&[d, num(v, "volume")?, num(s, "side_code")?]);
        }
        if let Some(m) = mu_col {
            mu.push(num(m, "mu")?);
        }
    }
    let series = if vol.is_some() {
        DurationSeries::with_features(durations, FeatureMatrix::new(3, feats)?)?
    } else {
        DurationSeries::new(durations)?
    };
    Ok(SeriesFile { series, latent_mu: mu_col.map(|_| mu) })
}
