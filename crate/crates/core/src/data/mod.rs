//! Tick parsing, duration extraction, splitting, scaling, windowing and
//! descriptive diagnostics.

mod scaling;
mod series;
mod split;
mod stats;
mod ticks;
mod window;

pub use scaling::{apply_scaling, fit_scaling, invert_mean, ScalingStats};
pub use series::{
    compute_durations, read_series, write_series, DurationOptions, DurationSeries, FeatureMatrix,
    SeriesFile, SIDE_COLUMN, VOLUME_COLUMN,
};
pub use split::{split_series, Splits};
pub use stats::{acf, pacf, summarize, Summary};
pub use ticks::{parse_ticks, ParseOptions, ParsedTicks, Side, TickRecord, TickSeries, TimeOfDay, TimeUnit};
pub use window::{make_windows, Window, WindowSet};
