use std::ops::Range;

use super::series::DurationSeries;
use crate::error::{Error, Result};

/// `T` consecutive input rows (lags `T..1`) and the duration that follows.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    /// Row-major, `timesteps` rows of `n_features` values, oldest first.
    pub inputs: &'a [f64],
    pub n_features: usize,
    pub target: f64,
    pub origin_index: usize,
    pub log_mu_seed: f64,
}

impl Window<'_> {
    pub fn timesteps(&self) -> usize {
        self.inputs.len() / self.n_features
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.inputs[t * self.n_features..(t + 1) * self.n_features]
    }
}

/// Borrowed view of every window of a series; one per target index in
/// `[T, N)`, optionally restricted to a sub-range of targets.
#[derive(Debug, Clone)]
pub struct WindowSet<'a> {
    rows: &'a [f64],
    n_features: usize,
    targets: &'a [f64],
    timesteps: usize,
    log_mu_seed: f64,
    target_range: Range<usize>,
}

pub fn make_windows(series: &DurationSeries, timesteps: usize, log_mu_seed: f64) -> Result<WindowSet<'_>> {
    if timesteps == 0 {
        return Err(Error::InvalidArgument("window length must be positive".into()));
    }
    if series.len() <= timesteps {
        return Err(Error::InsufficientData(format!(
            "series of length {} is too short for windows of {} steps",
            series.len(),
            timesteps
        )));
    }
    let (rows, n_features) = series.input_rows();
    Ok(WindowSet {
        rows,
        n_features,
        targets: &series.durations,
        timesteps,
        log_mu_seed,
        target_range: timesteps..series.len(),
    })
}

impl<'a> WindowSet<'a> {
    pub fn len(&self) -> usize {
        self.target_range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_range.is_empty()
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn target_range(&self) -> Range<usize> {
        self.target_range.clone()
    }

    /// The `k`-th window of this set.
    pub fn get(&self, k: usize) -> Window<'a> {
        let i = self.target_range.start + k;
        assert!(i < self.target_range.end, "window {k} out of range");
        let nf = self.n_features;
        Window {
            inputs: &self.rows[(i - self.timesteps) * nf..i * nf],
            n_features: nf,
            target: self.targets[i],
            origin_index: i,
            log_mu_seed: self.log_mu_seed,
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = Window<'a>> + '_ {
        (0..self.len()).map(move |k| self.get(k))
    }

    /// Windows whose targets fall in `targets` (clipped to the available ones).
    pub fn restrict(&self, targets: Range<usize>) -> Result<WindowSet<'a>> {
        let start = targets.start.max(self.target_range.start);
        let end = targets.end.min(self.target_range.end);
        if targets.end > self.targets.len() {
            return Err(Error::InvalidArgument(format!(
                "target range {targets:?} exceeds series length {}",
                self.targets.len()
            )));
        }
        Ok(WindowSet { target_range: start..end.max(start), ..self.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> DurationSeries {
        DurationSeries::new((1..=n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn window_count() {
        let s = ramp(52);
        let w = make_windows(&s, 50, 0.0).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.get(0).origin_index, 50);
        assert_eq!(w.get(1).origin_index, 51);
    }

    #[test]
    fn alignment_on_ramp() {
        let s = ramp(20);
        let w = make_windows(&s, 5, 0.0).unwrap();
        for win in w.iter() {
            let i = win.origin_index;
            assert_eq!(win.timesteps(), 5);
            assert_eq!(*win.inputs.last().unwrap(), i as f64);
            assert_eq!(win.target, (i + 1) as f64);
            assert!(!win.inputs.contains(&win.target));
        }
    }

    #[test]
    fn too_short() {
        assert!(make_windows(&ramp(50), 50, 0.0).is_err());
    }

    #[test]
    fn restrict_clips_to_available_targets() {
        let s = ramp(30);
        let w = make_windows(&s, 10, 0.0).unwrap();
        let r = w.restrict(0..15).unwrap();
        assert_eq!(r.target_range(), 10..15);
        assert_eq!(r.get(0).origin_index, 10);
        assert!(w.restrict(20..40).is_err());
    }
}
