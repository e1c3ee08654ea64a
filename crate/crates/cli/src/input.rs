//! Resolution of flags against the config file, and input loading.

use std::fs;
use std::path::{Path, PathBuf};

use acdnet_core::data::{
    compute_durations, parse_ticks, read_series, DurationOptions, DurationSeries, ParseOptions, Splits, TimeOfDay,
    TimeUnit,
};

use crate::config::ExperimentConfig;
use crate::{CliError, CommonArgs, DataArgs};

pub(crate) const DEFAULT_OUTPUT_DIR: &str = "out";

/// Flags merged over the config file.
#[derive(Debug, Clone)]
pub(crate) struct Context {
    pub cfg: ExperimentConfig,
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub units: TimeUnit,
    pub jobs: usize,
}

impl Context {
    pub fn new(common: &CommonArgs) -> Result<Self, CliError> {
        let cfg = match &common.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let jobs = common.jobs.or(cfg.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        Ok(Context {
            input: common.input.clone().or_else(|| cfg.data.input.clone()),
            output_dir: common
                .output_dir
                .clone()
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            seed: common.seed.or(cfg.seed).unwrap_or(0),
            units: common.units.map(Into::into).or(cfg.data.units).unwrap_or_default(),
            jobs,
            cfg,
        })
    }

    pub fn require_input(&self) -> Result<&Path, CliError> {
        self.input.as_deref().ok_or_else(|| CliError::Usage("an input file is required (--input)".into()))
    }

    pub fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", self.jobs)))
    }
}

/// How to read the input and split it.
#[derive(Debug, Clone)]
pub(crate) struct DataPlan {
    pub path: PathBuf,
    pub instrument: String,
    pub parse: ParseOptions,
    pub durations: DurationOptions,
    pub test_fraction: f64,
    pub train_ratio: (f64, f64),
}

fn parse_ratio(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("train ratio {s:?} must look like 8:2"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

impl DataPlan {
    /// Validates every data setting without touching the file.
    pub fn resolve(ctx: &Context, args: &DataArgs) -> Result<Self, CliError> {
        let path = ctx.require_input()?.to_path_buf();
        let data = &ctx.cfg.data;
        let instrument = args.instrument.clone().or_else(|| data.instrument.clone()).unwrap_or_else(|| {
            path.file_stem().map_or_else(|| "series".to_string(), |s| s.to_string_lossy().into_owned())
        });
        let session_open = match args.session_open.as_ref().or(data.session_open.as_ref()) {
            Some(s) => Some(s.parse::<TimeOfDay>().map_err(|e| CliError::Usage(e.to_string()))?),
            None => None,
        };
        let offset_min = args.utc_offset_minutes.or(data.utc_offset_minutes).unwrap_or(0);
        let merge = !args.no_merge && data.merge_same_timestamp.unwrap_or(true);
        let max_duration = args.max_duration.or(data.max_duration);
        if max_duration.is_some_and(|m| !(m > 0.0)) {
            return Err(CliError::Usage("--max-duration must be positive".into()));
        }
        let test_fraction = args.test_fraction.unwrap_or(ctx.cfg.split.test_fraction);
        let train_ratio = match &args.train_ratio {
            Some(s) => parse_ratio(s)?,
            None => (ctx.cfg.split.train_ratio[0], ctx.cfg.split.train_ratio[1]),
        };
        // Checks the split settings on a nominal length.
        Splits::new(1000, test_fraction, train_ratio).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(DataPlan {
            path,
            parse: ParseOptions {
                instrument: instrument.clone(),
                session_open,
                utc_offset_ms: offset_min * 60_000,
                units: ctx.units,
                ..ParseOptions::default()
            },
            instrument,
            durations: DurationOptions { merge_same_timestamp: merge, max_duration },
            test_fraction,
            train_ratio,
        })
    }

    pub fn load(&self) -> Result<LoadedData, CliError> {
        let text = fs::read_to_string(&self.path).map_err(|e| acdnet_core::Error::Io {
            path: self.path.clone(),
            source: e,
        })?;
        let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        let is_series = first.split(',').any(|f| f.trim() == "duration");
        let (series, latent_mu, dropped) = if is_series {
            let file = read_series(text.as_bytes())?;
            (file.series, file.latent_mu, 0)
        } else {
            let parsed = parse_ticks(text.as_bytes(), &self.parse)?;
            (compute_durations(&parsed.series, &self.durations)?, None, parsed.dropped_premarket)
        };
        let splits = Splits::new(series.len(), self.test_fraction, self.train_ratio)?;
        Ok(LoadedData { series, latent_mu, dropped_premarket: dropped, splits })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LoadedData {
    /// Original units.
    pub series: DurationSeries,
    pub latent_mu: Option<Vec<f64>>,
    pub dropped_premarket: usize,
    pub splits: Splits,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_parsing() {
        assert_eq!(parse_ratio("8:2").unwrap(), (8.0, 2.0));
        assert_eq!(parse_ratio(" 3 : 1 ").unwrap(), (3.0, 1.0));
        assert!(parse_ratio("8/2").is_err());
        assert!(parse_ratio("a:2").is_err());
    }
}
