use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::series::DurationSeries;
use crate::error::{Error, Result};

/// Contiguous train / validation / test index ranges, in time order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    /// The last `floor(n * test_fraction)` observations form the test set;
    /// the rest is cut `train:validation` by `ratio`, train first.
    pub fn new(n: usize, test_fraction: f64, ratio: (f64, f64)) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test fraction {test_fraction} must lie strictly between 0 and 1"
            )));
        }
        if !(ratio.0 > 0.0 && ratio.1 > 0.0) || !ratio.0.is_finite() || !ratio.1.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "train:validation ratio {}:{} must be positive",
                ratio.0, ratio.1
            )));
        }
        let n_test = floor_count(n as f64 * test_fraction);
        let rest = n - n_test.min(n);
        let n_train = floor_count(rest as f64 * ratio.0 / (ratio.0 + ratio.1)).min(rest);
        let n_val = rest - n_train;
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(Error::InsufficientData(format!(
                "split of {n} observations leaves an empty set (train {n_train}, validation {n_val}, test {n_test})"
            )));
        }
        Ok(Splits {
            train: 0..n_train,
            validation: n_train..n_train + n_val,
            test: n_train + n_val..n,
        })
    }

    pub fn len(&self) -> usize {
        self.test.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// Tolerates representation error such as 0.29 * 100 = 28.999999999999996.
fn floor_count(x: f64) -> usize {
    (x * (1.0 + 1e-12) + 1e-9).floor() as usize
}

pub fn split_series(series: &DurationSeries, test_fraction: f64, ratio: (f64, f64)) -> Result<Splits> {
    Splits::new(series.len(), test_fraction, ratio)
}
