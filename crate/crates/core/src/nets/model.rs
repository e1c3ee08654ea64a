//! Forward and backward passes of the hybrid models over one window.
//!
//! At step `t` the LSTM sees `x_t = [features_t, ln μ̂_t]`, where `ln μ̂_1`
//! is the window seed and later values are the dense head applied to the
//! previous hidden state. LSTM-ACD predicts with `dense(h_T)`;
//! Attention-LSTM-ACD with `dense(Σ_k α_k h_k)`.

use std::borrow::Cow;

use super::spec::{HybridModelSpec, Variant};
use crate::data::{DurationSeries, Window};
use crate::error::{Error, Result};
use crate::nn::attention::{attention_backward_into, attention_forward_into, AttentionCache};
use crate::nn::dense::{dense_backward_into, dense_forward_into, DenseCache, DenseScratch};
use crate::nn::lstm::{lstm_step_backward, lstm_step_into, LstmStepCache};
use crate::nn::params::{Block, BlockMut, ParamSet};
use crate::nn::{AttentionParams, DenseParams, LstmWeights};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub lstm: LstmWeights,
    pub attn: Option<AttentionParams>,
    pub dense: DenseParams,
}

impl NetParams {
    pub fn zeros(spec: &HybridModelSpec) -> Self {
        NetParams {
            lstm: LstmWeights::zeros(spec.hidden, spec.lstm_input()),
            attn: spec.attention_size.map(|a| AttentionParams::zeros(a, spec.hidden)),
            dense: DenseParams::zeros(&[spec.hidden, spec.dense_hidden, 1]),
        }
    }

    /// Glorot-uniform weights drawn in block order (LSTM, attention, dense).
    pub fn init(spec: &HybridModelSpec, rng: &mut SeededRng) -> Self {
        NetParams {
            lstm: LstmWeights::glorot(spec.hidden, spec.lstm_input(), rng),
            attn: spec.attention_size.map(|a| AttentionParams::glorot(a, spec.hidden, rng)),
            dense: DenseParams::glorot(&[spec.hidden, spec.dense_hidden, 1], rng),
        }
    }

    pub fn check(&self, spec: &HybridModelSpec) -> Result<()> {
        let expect = NetParams::zeros(spec);
        let dims = |p: &NetParams| p.blocks().into_iter().map(|b| (b.name, b.dims)).collect::<Vec<_>>();
        if dims(self) != dims(&expect) {
            return Err(Error::Shape("parameters do not match the model architecture".into()));
        }
        Ok(())
    }
}

impl ParamSet for NetParams {
    fn blocks(&self) -> Vec<Block<'_>> {
        let mut b = self.lstm.blocks();
        if let Some(a) = &self.attn {
            b.extend(a.blocks());
        }
        b.extend(self.dense.blocks());
        b
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let mut b = self.lstm.blocks_mut();
        if let Some(a) = &mut self.attn {
            b.extend(a.blocks_mut());
        }
        b.extend(self.dense.blocks_mut());
        b
    }
}

/// Reusable buffers for one window's forward and backward pass.
#[derive(Debug, Clone)]
pub struct Workspace {
    steps: Vec<LstmStepCache>,
    heads: Vec<DenseCache>,
    final_head: DenseCache,
    attn: AttentionCache,
    /// Hidden states, row-major `T × H`.
    hidden: Vec<f64>,
    x: Vec<f64>,
    zeros: Vec<f64>,
    d_hidden: Vec<f64>,
    dh: Vec<f64>,
    dc: Vec<f64>,
    dconcat: Vec<f64>,
    d_context: Vec<f64>,
    scratch: DenseScratch,
}

impl Workspace {
    pub fn new(spec: &HybridModelSpec) -> Self {
        let (t, h) = (spec.timesteps, spec.hidden);
        Workspace {
            steps: vec![LstmStepCache::new(h, spec.lstm_input()); t],
            heads: vec![DenseCache::default(); t],
            final_head: DenseCache::default(),
            attn: AttentionCache::default(),
            hidden: vec![0.0; t * h],
            x: vec![0.0; spec.lstm_input()],
            zeros: vec![0.0; h],
            d_hidden: vec![0.0; t * h],
            dh: vec![0.0; h],
            dc: vec![0.0; h],
            dconcat: vec![0.0; h + spec.lstm_input()],
            d_context: vec![0.0; h],
            scratch: DenseScratch::default(),
        }
    }

    /// Per-step `ln μ̂` from the dense head after the last forward pass.
    pub fn trace(&self) -> impl Iterator<Item = f64> + '_ {
        self.heads.iter().map(|c| c.output()[0])
    }

    pub fn attention_weights(&self) -> &[f64] {
        &self.attn.weights
    }
}

fn check_window(spec: &HybridModelSpec, window: &Window<'_>) -> Result<()> {
    if window.n_features != spec.input_features || window.timesteps() != spec.timesteps {
        return Err(Error::Shape(format!(
            "window of {} steps x {} features for a model of {} x {}",
            window.timesteps(),
            window.n_features,
            spec.timesteps,
            spec.input_features
        )));
    }
    Ok(())
}

/// Runs one window through the model, returning the final `ln μ̂`.
pub(crate) fn forward_ws(
    spec: &HybridModelSpec,
    params: &NetParams,
    window: &Window<'_>,
    log_mu_seed: f64,
    ws: &mut Workspace,
) -> Result<f64> {
    let (h, nf) = (spec.hidden, spec.input_features);
    let mut feedback = log_mu_seed;
    for t in 0..spec.timesteps {
        ws.x[..nf].copy_from_slice(window.row(t));
        ws.x[nf] = feedback;
        let (done, rest) = ws.steps.split_at_mut(t);
        let (h_prev, c_prev) = match done.last() {
            Some(prev) => (prev.h(), prev.c()),
            None => (&ws.zeros[..], &ws.zeros[..]),
        };
        lstm_step_into(&params.lstm, &ws.x, h_prev, c_prev, &mut rest[0]);
        let ht = rest[0].h();
        ws.hidden[t * h..(t + 1) * h].copy_from_slice(ht);
        dense_forward_into(&params.dense, ht, &mut ws.heads[t]);
        feedback = ws.heads[t].output()[0];
        if !feedback.is_finite() {
            return Err(Error::Numeric(format!("non-finite activation at step {}", t + 1)));
        }
    }
    match spec.variant {
        Variant::LstmAcd => Ok(feedback),
        Variant::AttnLstmAcd => {
            let attn = params.attn.as_ref().ok_or_else(|| Error::Shape("missing attention parameters".into()))?;
            attention_forward_into(attn, &ws.hidden, &mut ws.attn);
            dense_forward_into(&params.dense, &ws.attn.context, &mut ws.final_head);
            let out = ws.final_head.output()[0];
            if !out.is_finite() {
                return Err(Error::Numeric("non-finite output after attention".into()));
            }
            Ok(out)
        }
    }
}

/// Accumulates `d_out · ∂(ln μ̂)/∂θ` into `grads` for the window last passed
/// to [`forward_ws`].
pub(crate) fn backward_ws(spec: &HybridModelSpec, params: &NetParams, ws: &mut Workspace, d_out: f64, grads: &mut NetParams) {
    let (h, nf, steps) = (spec.hidden, spec.input_features, spec.timesteps);
    ws.d_hidden.fill(0.0);
    match spec.variant {
        Variant::LstmAcd => {
            let last = &mut ws.d_hidden[(steps - 1) * h..];
            dense_backward_into(&params.dense, &ws.heads[steps - 1], &[d_out], &mut grads.dense, last, &mut ws.scratch);
        }
        Variant::AttnLstmAcd => {
            let attn = params.attn.as_ref().expect("attention variant has attention parameters");
            let g_attn = grads.attn.as_mut().expect("attention variant has attention gradients");
            ws.d_context.fill(0.0);
            dense_backward_into(&params.dense, &ws.final_head, &[d_out], &mut grads.dense, &mut ws.d_context, &mut ws.scratch);
            attention_backward_into(attn, &ws.hidden, &ws.attn, &ws.d_context, g_attn, &mut ws.d_hidden);
        }
    }

    ws.dc.fill(0.0);
    let mut dh_next = vec![0.0; h];
    let mut d_feedback = 0.0;
    for t in (0..steps).rev() {
        for r in 0..h {
            ws.dh[r] = ws.d_hidden[t * h + r] + dh_next[r];
        }
        // h_t also produced the feedback input of step t+1
        if t + 1 < steps && d_feedback != 0.0 {
            dense_backward_into(&params.dense, &ws.heads[t], &[d_feedback], &mut grads.dense, &mut ws.dh, &mut ws.scratch);
        }
        lstm_step_backward(&params.lstm, &ws.steps[t], &ws.dh, &mut ws.dc, &mut grads.lstm, &mut ws.dconcat);
        dh_next.copy_from_slice(&ws.dconcat[..h]);
        d_feedback = ws.dconcat[h + nf];
    }
}

/// The series as the model consumes it: univariate models see only the
/// duration column.
pub(crate) fn model_inputs<'a>(spec: &HybridModelSpec, series: &'a DurationSeries) -> Result<Cow<'a, DurationSeries>> {
    match (spec.input_features, series.n_features()) {
        (a, b) if a == b => Ok(Cow::Borrowed(series)),
        (1, _) => Ok(Cow::Owned(series.univariate())),
        (a, b) => Err(Error::Shape(format!("model expects {a} input features, series has {b}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    pub log_mu: f64,
    /// Attention weights over the window's steps, oldest first.
    pub attention: Option<Vec<f64>>,
    /// Per-step `ln μ̂` produced by the dense head.
    pub trace: Vec<f64>,
}

pub fn forward_window(
    spec: &HybridModelSpec,
    params: &NetParams,
    window: &Window<'_>,
    log_mu_seed: f64,
) -> Result<WindowOutput> {
    spec.validate()?;
    params.check(spec)?;
    check_window(spec, window)?;
    let mut ws = Workspace::new(spec);
    let log_mu = forward_ws(spec, params, window, log_mu_seed, &mut ws)?;
    Ok(WindowOutput {
        log_mu,
        attention: (spec.variant == Variant::AttnLstmAcd).then(|| ws.attention_weights().to_vec()),
        trace: ws.trace().collect(),
    })
}

/// `mean_i [l_i + y_i e^{−l_i}]`, the exponential NLL parameterized by
/// `l = ln μ̂`.
pub fn batch_nll(log_mu_hats: &[f64], targets: &[f64]) -> Result<f64> {
    if log_mu_hats.len() != targets.len() || targets.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            log_mu_hats.len(),
            targets.len()
        )));
    }
    let total: f64 = log_mu_hats.iter().zip(targets).map(|(&l, &y)| nll_term(l, y)).sum();
    let mean = total / targets.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Numeric(format!("batch NLL is {mean}")));
    }
    Ok(mean)
}

#[inline]
pub fn nll_term(log_mu: f64, target: f64) -> f64 {
    log_mu + target * (-log_mu).exp()
}

/// `∂/∂l [l + y e^{−l}] = 1 − y e^{−l}`
#[inline]
pub fn nll_term_grad(log_mu: f64, target: f64) -> f64 {
    1.0 - target * (-log_mu).exp()
}

/// Summed NLL and summed gradient over `windows`, in order.
pub(crate) fn accumulate_windows<'a>(
    spec: &HybridModelSpec,
    params: &NetParams,
    windows: impl Iterator<Item = Window<'a>>,
    ws: &mut Workspace,
    grads: &mut NetParams,
) -> Result<f64> {
    let mut loss = 0.0;
    for w in windows {
        let l = forward_ws(spec, params, &w, w.log_mu_seed, ws)?;
        loss += nll_term(l, w.target);
        backward_ws(spec, params, ws, nll_term_grad(l, w.target), grads);
    }
    Ok(loss)
}

/// Mean NLL over a batch and its gradient with respect to every parameter.
pub fn batch_loss_and_grad(spec: &HybridModelSpec, params: &NetParams, windows: &[Window<'_>]) -> Result<(f64, NetParams)> {
    spec.validate()?;
    params.check(spec)?;
    if windows.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for w in windows {
        check_window(spec, w)?;
    }
    let mut ws = Workspace::new(spec);
    let mut grads = params.zeroed();
    let loss = accumulate_windows(spec, params, windows.iter().copied(), &mut ws, &mut grads)?;
    let n = windows.len() as f64;
    let mut mean_grads = grads.zeroed();
    mean_grads.add_scaled(&grads, 1.0 / n);
    Ok((loss / n, mean_grads))
}

/// Mean NLL over a batch without gradients.
pub fn batch_loss(spec: &HybridModelSpec, params: &NetParams, windows: &[Window<'_>]) -> Result<f64> {
    let mut ws = Workspace::new(spec);
    let mut logs = Vec::with_capacity(windows.len());
    for w in windows {
        check_window(spec, w)?;
        logs.push(forward_ws(spec, params, w, w.log_mu_seed, &mut ws)?);
    }
    let targets: Vec<f64> = windows.iter().map(|w| w.target).collect();
    batch_nll(&logs, &targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, FeatureMatrix};
    use crate::nn::gradcheck::{check_gradients, numeric_gradient};

    fn small_spec(variant: Variant, features: usize) -> HybridModelSpec {
        HybridModelSpec {
            timesteps: 5,
            hidden: 3,
            attention_size: (variant == Variant::AttnLstmAcd).then_some(2),
            ..HybridModelSpec::new(variant, features)
        }
    }

    fn series(n: usize, features: bool, seed: u64) -> DurationSeries {
        let mut rng = SeededRng::new(seed);
        let d: Vec<f64> = (0..n).map(|_| 0.05 + rng.exponential()).collect();
        if features {
            let data = d.iter().flat_map(|&x| [x, rng.standard_normal(), if rng.coin() { 1.0 } else { -1.0 }]).collect();
            DurationSeries::with_features(d, FeatureMatrix::new(3, data).unwrap()).unwrap()
        } else {
            DurationSeries::new(d).unwrap()
        }
    }

    #[test]
    fn zero_weights_predict_unit_mean() {
        for variant in [Variant::LstmAcd, Variant::AttnLstmAcd] {
            let spec = small_spec(variant, 1);
            let s = series(12, false, 1);
            let w = make_windows(&s, 5, 0.0).unwrap();
            let out = forward_window(&spec, &NetParams::zeros(&spec), &w.get(0), 0.0).unwrap();
            assert_eq!(out.log_mu, 0.0);
            assert!(out.trace.iter().all(|&l| l == 0.0));
            if let Some(a) = out.attention {
                assert!(a.iter().all(|x| (x - 0.2).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn input_width_checked() {
        let spec = small_spec(Variant::LstmAcd, 3);
        let s = series(12, false, 2);
        let w = make_windows(&s, 5, 0.0).unwrap();
        assert!(matches!(forward_window(&spec, &NetParams::zeros(&spec), &w.get(0), 0.0), Err(Error::Shape(_))));
    }

    #[test]
    fn nll_identities() {
        assert_eq!(batch_nll(&[0.0], &[1.0]).unwrap(), 1.0);
        let y: f64 = 2.7;
        assert!((batch_nll(&[y.ln()], &[y]).unwrap() - (y.ln() + 1.0)).abs() < 1e-15);
        assert!(nll_term_grad(y.ln(), y).abs() < 1e-15);
        assert!(batch_nll(&[0.0], &[]).is_err());
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        for variant in [Variant::LstmAcd, Variant::AttnLstmAcd] {
            for features in [1, 3] {
                let spec = small_spec(variant, features);
                let s = series(9, features == 3, 3);
                let ws = make_windows(&s, 5, 0.0).unwrap();
                let batch = [ws.get(0), ws.get(3)];
                let params = NetParams::init(&spec, &mut SeededRng::new(17));
                let (_, g) = batch_loss_and_grad(&spec, &params, &batch).unwrap();
                let num = numeric_gradient(&params, |p| batch_loss(&spec, p, &batch).unwrap(), 1e-5);
                let r = check_gradients(&g, &num);
                assert!(r.max_rel_error < 1e-4, "{variant:?}/{features}: {r:?}");
            }
        }
    }

    #[test]
    fn feedback_path_carries_gradient() {
        // With the feedback input column zeroed the gradient must change.
        let spec = small_spec(Variant::LstmAcd, 1);
        let s = series(9, false, 4);
        let ws = make_windows(&s, 5, 0.0).unwrap();
        let batch = [ws.get(1)];
        let params = NetParams::init(&spec, &mut SeededRng::new(5));
        let mut cut = params.clone();
        for m in [&mut cut.lstm.w_f, &mut cut.lstm.w_i, &mut cut.lstm.w_o, &mut cut.lstm.w_c] {
            for r in 0..3 {
                m.row_mut(r)[3 + 1] = 0.0;
            }
        }
        let (_, g1) = batch_loss_and_grad(&spec, &params, &batch).unwrap();
        let (_, g2) = batch_loss_and_grad(&spec, &cut, &batch).unwrap();
        assert_ne!(g1.dense, g2.dense);
    }
}
