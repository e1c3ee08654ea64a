//! Minibatch SGD with periodic validation and early stopping.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{accumulate_windows, forward_ws, model_inputs, nll_term, NetParams, Workspace};
use super::spec::{HybridModelSpec, TrainConfig};
use crate::data::{make_windows, DurationSeries, ScalingStats, Splits, Window};
use crate::error::Error;
use crate::nn::{sgd_update, ParamSet};
use crate::rng::SeededRng;

/// Windows per parallel work item. Fixed so that the summation order, and
/// therefore every bit of the result, is independent of the thread count.
const BATCH_CHUNK: usize = 25;
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: u64,
    /// Mean batch NLL over the steps since the previous evaluation.
    pub train_nll: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: HybridModelSpec,
    pub config: TrainConfig,
    pub params: NetParams,
    pub scaling: ScalingStats,
    pub history: Vec<HistoryEntry>,
    /// Step of the evaluation whose weights are stored; 0 means the
    /// initialization was never improved upon or evaluated.
    pub best_step: u64,
    pub best_val_nll: f64,
    pub steps_run: u64,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Setup(#[from] Error),

    /// The loss or a gradient became non-finite. `checkpoint` holds the best
    /// weights seen before the failure.
    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String, checkpoint: Box<TrainedModel> },
}

impl From<TrainError> for Error {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Setup(e) => e,
            e @ TrainError::Diverged { .. } => Error::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    Improved,
    NoImprovement,
    /// `patience` consecutive evaluations without improvement.
    Stop,
}

/// Tracks the best validation loss; improvement means strictly lower.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_step: u64,
    misses: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_step: 0, misses: 0 }
    }

    pub fn observe(&mut self, step: u64, val_nll: f64) -> Observation {
        if val_nll < self.best {
            self.best = val_nll;
            self.best_step = step;
            self.misses = 0;
            Observation::Improved
        } else {
            self.misses += 1;
            if self.misses >= self.patience {
                Observation::Stop
            } else {
                Observation::NoImprovement
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_step(&self) -> u64 {
        self.best_step
    }
}

/// Mean NLL over `windows`, reduced in a fixed chunk order.
pub(crate) fn mean_nll(spec: &HybridModelSpec, params: &NetParams, windows: &[Window<'_>]) -> crate::Result<f64> {
    let partial: Vec<crate::Result<f64>> = windows
        .par_chunks(EVAL_CHUNK)
        .map_init(
            || Workspace::new(spec),
            |ws, chunk| {
                let mut sum = 0.0;
                for w in chunk {
                    sum += nll_term(forward_ws(spec, params, w, w.log_mu_seed, ws)?, w.target);
                }
                Ok(sum)
            },
        )
        .collect();
    let mut total = 0.0;
    for p in partial {
        total += p?;
    }
    let mean = total / windows.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Numeric(format!("mean NLL is {mean}")));
    }
    Ok(mean)
}

fn batch_gradient(
    spec: &HybridModelSpec,
    params: &NetParams,
    batch: &[Window<'_>],
    grads: &mut NetParams,
) -> crate::Result<f64> {
    let partial: Vec<crate::Result<(f64, NetParams)>> = batch
        .par_chunks(BATCH_CHUNK)
        .map_init(
            || Workspace::new(spec),
            |ws, chunk| {
                let mut g = params.zeroed();
                let loss = accumulate_windows(spec, params, chunk.iter().copied(), ws, &mut g)?;
                Ok((loss, g))
            },
        )
        .collect();
    grads.fill(0.0);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for p in partial {
        let (l, g) = p?;
        loss += l;
        grads.add_scaled(&g, scale);
    }
    let mean = loss * scale;
    if !mean.is_finite() {
        return Err(Error::Numeric(format!("batch NLL is {mean}")));
    }
    Ok(mean)
}

/// Trains a hybrid model on a scaled series (see
/// [`apply_scaling`](crate::data::apply_scaling)).
///
/// Training windows are those whose target lies in `splits.train`;
/// validation windows those whose target lies in `splits.validation`.
pub fn train(
    spec: &HybridModelSpec,
    series: &DurationSeries,
    splits: &Splits,
    config: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    spec.validate()?;
    config.validate()?;
    let scaling = series
        .scaling
        .clone()
        .ok_or_else(|| Error::InvalidArgument("training requires a scaled series".into()))?;
    if splits.len() != series.len() {
        return Err(Error::Shape(format!("splits cover {} rows, series has {}", splits.len(), series.len())).into());
    }
    let inputs = model_inputs(spec, series)?;
    let all = make_windows(&inputs, spec.timesteps, 0.0)?;
    let train_windows: Vec<Window<'_>> = all.restrict(splits.train.clone())?.iter().collect();
    let val_windows: Vec<Window<'_>> = all.restrict(splits.validation.clone())?.iter().collect();
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} training and {} validation windows of length {}",
            train_windows.len(),
            val_windows.len(),
            spec.timesteps
        ))
        .into());
    }

    let mut rng = SeededRng::new(config.seed);
    let mut params = NetParams::init(spec, &mut rng);
    let mut grads = params.zeroed();
    let mut model = TrainedModel {
        spec: spec.clone(),
        config: config.clone(),
        params: params.clone(),
        scaling,
        history: Vec::new(),
        best_step: 0,
        best_val_nll: f64::INFINITY,
        steps_run: 0,
    };
    let mut stopper = EarlyStopping::new(config.patience);
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut train_sum = 0.0;
    let mut since_eval = 0u64;

    let diverged = |model: &TrainedModel, step: u64, e: Error| TrainError::Diverged {
        step,
        reason: e.to_string(),
        checkpoint: Box::new(TrainedModel { steps_run: step, ..model.clone() }),
    };

    for step in 0..config.max_steps {
        batch.clear();
        batch.extend((0..config.batch_size).map(|_| train_windows[rng.index(train_windows.len())]));
        let loss = batch_gradient(spec, &params, &batch, &mut grads).map_err(|e| diverged(&model, step, e))?;
        sgd_update(&mut params, &grads, step, &config.schedule).map_err(|e| diverged(&model, step, e))?;
        train_sum += loss;
        since_eval += 1;

        let done = step + 1;
        if done % config.eval_every == 0 || done == config.max_steps {
            let val = mean_nll(spec, &params, &val_windows).map_err(|e| diverged(&model, done, e))?;
            model.history.push(HistoryEntry { step: done, train_nll: train_sum / since_eval as f64, val_nll: val });
            train_sum = 0.0;
            since_eval = 0;
            model.steps_run = done;
            match stopper.observe(done, val) {
                Observation::Improved => {
                    model.params.clone_from(&params);
                    model.best_step = done;
                    model.best_val_nll = val;
                }
                Observation::NoImprovement => {}
                Observation::Stop => break,
            }
        }
    }
    if model.best_step == 0 {
        model.best_val_nll = mean_nll(spec, &model.params, &val_windows)?;
    }
    Ok(model)
}

impl TrainedModel {
    /// Mean NLL of the stored weights over the windows targeting `range`.
    pub fn evaluate_nll(&self, series: &DurationSeries, range: std::ops::Range<usize>) -> crate::Result<f64> {
        let inputs = model_inputs(&self.spec, series)?;
        let windows: Vec<Window<'_>> =
            make_windows(&inputs, self.spec.timesteps, 0.0)?.restrict(range)?.iter().collect();
        if windows.is_empty() {
            return Err(Error::InsufficientData("no windows in range".into()));
        }
        mean_nll(&self.spec, &self.params, &windows)
    }
}
