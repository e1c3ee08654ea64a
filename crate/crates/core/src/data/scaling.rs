use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::series::{DurationSeries, SIDE_COLUMN};
use crate::error::{Error, Result};

const STD_FLOOR: f64 = 1e-12;

/// Training-set statistics: durations are scaled to unit mean, auxiliary
/// feature columns z-scored; the side code is left as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub duration_mean: f64,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

pub fn fit_scaling(series: &DurationSeries, train: Range<usize>) -> Result<ScalingStats> {
    if train.is_empty() || train.end > series.len() {
        return Err(Error::InvalidArgument(format!(
            "training range {train:?} is empty or exceeds series length {}",
            series.len()
        )));
    }
    let n = train.len() as f64;
    let duration_mean = series.durations[train.clone()].iter().sum::<f64>() / n;

    let (feature_means, feature_stds) = match &series.features {
        Some(f) => (0..f.n_cols())
            .map(|j| {
                let col: Vec<f64> = f.column(j).skip(train.start).take(train.len()).collect();
                let m = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
                (m, var.sqrt().max(STD_FLOOR))
            })
            .unzip(),
        None => (vec![], vec![]),
    };
    Ok(ScalingStats { duration_mean, feature_means, feature_stds })
}

pub fn apply_scaling(series: &DurationSeries, stats: &ScalingStats) -> Result<DurationSeries> {
    let dm = stats.duration_mean;
    let mut out = series.clone();
    for d in &mut out.durations {
        *d /= dm;
    }
    if let Some(f) = &mut out.features {
        let nc = f.n_cols();
        if stats.feature_means.len() != nc || stats.feature_stds.len() != nc {
            return Err(Error::Shape(format!(
                "scaling stats for {} columns applied to {} columns",
                stats.feature_means.len(),
                nc
            )));
        }
        for row in f.as_mut_slice().chunks_exact_mut(nc) {
            row[0] /= dm;
            for j in 1..nc {
                if j != SIDE_COLUMN {
                    row[j] = (row[j] - stats.feature_means[j]) / stats.feature_stds[j];
                }
            }
        }
    }
    out.scaling = Some(stats.clone());
    Ok(out)
}

/// Maps a conditional mean from scaled space back to original units.
pub fn invert_mean(scaled_mu: f64, stats: &ScalingStats) -> f64 {
    scaled_mu * stats.duration_mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMatrix;

    fn with_volume(d: &[f64], v: &[f64]) -> DurationSeries {
        let data = d.iter().zip(v).flat_map(|(&d, &v)| [d, v, 1.0]).collect();
        DurationSeries::with_features(d.to_vec(), FeatureMatrix::new(3, data).unwrap()).unwrap()
    }

    #[test]
    fn unit_mean_scaling() {
        let s = DurationSeries::new(vec![1.0, 2.0, 3.0]).unwrap();
        let st = fit_scaling(&s, 0..3).unwrap();
        assert_eq!(st.duration_mean, 2.0);
        let scaled = apply_scaling(&s, &st).unwrap();
        assert_eq!(scaled.durations, vec![0.5, 1.0, 1.5]);
        assert_eq!(invert_mean(0.5, &st), 1.0);
        let m = scaled.durations.iter().sum::<f64>() / 3.0;
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_volume_floors_std() {
        let s = with_volume(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]);
        let st = fit_scaling(&s, 0..3).unwrap();
        assert_eq!(st.feature_stds[1], STD_FLOOR);
        let scaled = apply_scaling(&s, &st).unwrap();
        assert!(scaled.features.unwrap().column(1).all(|v| v == 0.0));
    }

    #[test]
    fn side_code_untouched() {
        let s = with_volume(&[1.0, 2.0], &[1.0, 3.0]);
        let st = fit_scaling(&s, 0..2).unwrap();
        let f = apply_scaling(&s, &st).unwrap().features.unwrap();
        assert_eq!(f.row(0), &[2.0 / 3.0, -1.0, 1.0]);
    }

    #[test]
    fn no_test_leakage() {
        let a = DurationSeries::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DurationSeries::new(vec![1.0, 2.0, 3.0, 400.0]).unwrap();
        assert_eq!(fit_scaling(&a, 0..3).unwrap(), fit_scaling(&b, 0..3).unwrap());
    }

    #[test]
    fn empty_range_rejected() {
        let s = DurationSeries::new(vec![1.0]).unwrap();
        assert!(fit_scaling(&s, 0..0).is_err());
    }
}
