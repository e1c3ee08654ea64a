//! One-step-ahead predictions from a trained hybrid model.

use std::borrow::Cow;
use std::ops::Range;

use rayon::prelude::*;

use super::model::{forward_ws, model_inputs, Workspace};
use super::spec::Variant;
use super::train::TrainedModel;
use crate::acd::{time_at_risk, Tail};
use crate::data::{apply_scaling, invert_mean, make_windows, DurationSeries};
use crate::error::{Error, Result};

const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Indices of the predicted durations.
    pub range: Range<usize>,
    /// Conditional means in original units.
    pub mu_hat: Vec<f64>,
    /// `ln μ̂` in scaled space.
    pub log_mu_hat: Vec<f64>,
    /// Attention weights per prediction, oldest step first.
    pub attention: Option<Vec<Vec<f64>>>,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.mu_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_hat.is_empty()
    }
}

/// Scales `series` with the model's statistics unless it already carries
/// them.
fn scaled<'a>(model: &TrainedModel, series: &'a DurationSeries) -> Result<Cow<'a, DurationSeries>> {
    match &series.scaling {
        None => Ok(Cow::Owned(apply_scaling(series, &model.scaling)?)),
        Some(s) if *s == model.scaling => Ok(Cow::Borrowed(series)),
        Some(_) => Err(Error::InvalidArgument("series was scaled with different statistics than the model".into())),
    }
}

/// Predicts `μ_i` for every `i` in `range` from the `T` preceding rows.
/// `series` is in original units, or scaled with the model's own statistics.
pub fn predict_series(model: &TrainedModel, series: &DurationSeries, range: Range<usize>) -> Result<Prediction> {
    let spec = &model.spec;
    series.validate()?;
    if range.start < spec.timesteps || range.end > series.len() || range.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "prediction range {range:?} must be non-empty, start at or after {} and end by {}",
            spec.timesteps,
            series.len()
        )));
    }
    let scaled = scaled(model, series)?;
    let inputs = model_inputs(spec, &scaled)?;
    let windows = make_windows(&inputs, spec.timesteps, 0.0)?.restrict(range.clone())?;
    let with_attention = spec.variant == Variant::AttnLstmAcd;
    let idx: Vec<usize> = (0..windows.len()).collect();
    let chunks: Vec<Result<Vec<(f64, Option<Vec<f64>>)>>> = idx
        .par_chunks(PREDICT_CHUNK)
        .map_init(
            || Workspace::new(spec),
            |ws, ks| {
                ks.iter()
                    .map(|&k| {
                        let w = windows.get(k);
                        let l = forward_ws(spec, &model.params, &w, w.log_mu_seed, ws)?;
                        Ok((l, with_attention.then(|| ws.attention_weights().to_vec())))
                    })
                    .collect()
            },
        )
        .collect();

    let mut pred = Prediction {
        range,
        mu_hat: Vec::with_capacity(windows.len()),
        log_mu_hat: Vec::with_capacity(windows.len()),
        attention: with_attention.then(|| Vec::with_capacity(windows.len())),
    };
    for chunk in chunks {
        for (l, a) in chunk? {
            let mu = invert_mean(l.exp(), &model.scaling);
            if !(mu > 0.0) || !mu.is_finite() {
                return Err(Error::Numeric(format!("predicted mean {mu} is not positive and finite")));
            }
            pred.log_mu_hat.push(l);
            pred.mu_hat.push(mu);
            if let (Some(rows), Some(a)) = (&mut pred.attention, a) {
                rows.push(a);
            }
        }
    }
    Ok(pred)
}

/// Time-at-risk at probability `alpha` for every prediction in `range`.
pub fn quantile_series(
    model: &TrainedModel,
    series: &DurationSeries,
    range: Range<usize>,
    alpha: f64,
    tail: Tail,
) -> Result<Vec<f64>> {
    let pred = predict_series(model, series, range)?;
    pred.mu_hat.iter().map(|&mu| time_at_risk(mu, alpha, tail)).collect()
}
