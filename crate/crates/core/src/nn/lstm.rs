//! LSTM cell with hand-derived backward pass.
//!
//! Every gate acts on the concatenation `[h_{t-1}, x_t]`:
//!
//! ```text
//! f_t = σ(W_f [h, x] + b_f)      i_t = σ(W_i [h, x] + b_i)
//! o_t = σ(W_o [h, x] + b_o)      g_t = tanh(W_c [h, x] + b_c)
//! C_t = f_t ⊙ C_{t-1} + i_t ⊙ g_t
//! h_t = o_t ⊙ tanh(C_t)
//! ```

use super::mat::{sigmoid, Mat};
use super::params::{Block, BlockMut, ParamSet};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub w_f: Mat,
    pub w_i: Mat,
    pub w_o: Mat,
    pub w_c: Mat,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_c: Vec<f64>,
}

impl LstmWeights {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let m = || Mat::zeros(hidden, hidden + input);
        LstmWeights {
            w_f: m(),
            w_i: m(),
            w_o: m(),
            w_c: m(),
            b_f: vec![0.0; hidden],
            b_i: vec![0.0; hidden],
            b_o: vec![0.0; hidden],
            b_c: vec![0.0; hidden],
        }
    }

    /// Glorot-uniform gate matrices, zero biases except the forget gate at 1.
    pub fn glorot(hidden: usize, input: usize, rng: &mut SeededRng) -> Self {
        let cols = hidden + input;
        let mut w = Self::zeros(hidden, input);
        for m in [&mut w.w_f, &mut w.w_i, &mut w.w_o, &mut w.w_c] {
            *m = super::init::glorot_uniform(hidden, cols, rng);
        }
        w.b_f.fill(1.0);
        w
    }

    pub fn hidden(&self) -> usize {
        self.w_f.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_f.cols() - self.hidden()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (h, c) = (self.w_f.rows(), self.w_f.cols());
        let mats_ok = [&self.w_i, &self.w_o, &self.w_c].iter().all(|m| m.rows() == h && m.cols() == c);
        let bias_ok = [&self.b_f, &self.b_i, &self.b_o, &self.b_c].iter().all(|b| b.len() == h);
        if !mats_ok || !bias_ok || c <= h {
            return Err(Error::Shape("inconsistent LSTM weight shapes".into()));
        }
        Ok(())
    }
}

fn mat_block<'a>(name: &str, m: &'a Mat) -> Block<'a> {
    Block { name: format!("lstm.{name}"), dims: vec![m.rows(), m.cols()], values: m.as_slice() }
}

fn vec_block<'a>(name: &str, v: &'a [f64]) -> Block<'a> {
    Block { name: format!("lstm.{name}"), dims: vec![v.len()], values: v }
}

impl ParamSet for LstmWeights {
    fn blocks(&self) -> Vec<Block<'_>> {
        vec![
            mat_block("W_f", &self.w_f),
            mat_block("W_i", &self.w_i),
            mat_block("W_o", &self.w_o),
            mat_block("W_c", &self.w_c),
            vec_block("b_f", &self.b_f),
            vec_block("b_i", &self.b_i),
            vec_block("b_o", &self.b_o),
            vec_block("b_c", &self.b_c),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let b = |name: &str, values| BlockMut { name: format!("lstm.{name}"), values };
        vec![
            b("W_f", self.w_f.as_mut_slice()),
            b("W_i", self.w_i.as_mut_slice()),
            b("W_o", self.w_o.as_mut_slice()),
            b("W_c", self.w_c.as_mut_slice()),
            b("b_f", &mut self.b_f),
            b("b_i", &mut self.b_i),
            b("b_o", &mut self.b_o),
            b("b_c", &mut self.b_c),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Activations of one forward step, kept for the backward pass.
///
/// Layout: `[h_prev, x] | f | i | o | g | c_prev | c | tanh(c) | h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStepCache {
    hidden: usize,
    input: usize,
    buf: Vec<f64>,
}

macro_rules! segment {
    ($name:ident, $k:expr) => {
        pub fn $name(&self) -> &[f64] {
            let off = self.concat_len() + $k * self.hidden;
            &self.buf[off..off + self.hidden]
        }
    };
}

impl LstmStepCache {
    pub fn new(hidden: usize, input: usize) -> Self {
        LstmStepCache { hidden, input, buf: vec![0.0; hidden + input + 8 * hidden] }
    }

    fn concat_len(&self) -> usize {
        self.hidden + self.input
    }

    pub fn concat(&self) -> &[f64] {
        &self.buf[..self.concat_len()]
    }

    segment!(forget, 0);
    segment!(input_gate, 1);
    segment!(output, 2);
    segment!(candidate, 3);
    segment!(c_prev, 4);
    segment!(c, 5);
    segment!(tanh_c, 6);
    segment!(h, 7);

    pub fn state(&self) -> LstmState {
        LstmState { h: self.h().to_vec(), c: self.c().to_vec() }
    }
}

/// One forward step into a preallocated cache. Shapes are the caller's
/// responsibility; see [`lstm_step`] for the checked version.
pub fn lstm_step_into(w: &LstmWeights, x: &[f64], h_prev: &[f64], c_prev: &[f64], cache: &mut LstmStepCache) {
    let hd = cache.hidden;
    let cl = cache.concat_len();
    debug_assert_eq!(x.len(), cache.input);
    let (concat, rest) = cache.buf.split_at_mut(cl);
    concat[..hd].copy_from_slice(h_prev);
    concat[hd..].copy_from_slice(x);
    let (gates, rest) = rest.split_at_mut(4 * hd);
    let (cp, rest) = rest.split_at_mut(hd);
    let (c, rest) = rest.split_at_mut(hd);
    let (tc, h) = rest.split_at_mut(hd);
    cp.copy_from_slice(c_prev);
    let (f, gates) = gates.split_at_mut(hd);
    let (i, gates) = gates.split_at_mut(hd);
    let (o, g) = gates.split_at_mut(hd);
    for r in 0..hd {
        f[r] = sigmoid(super::mat::dot(w.w_f.row(r), concat) + w.b_f[r]);
        i[r] = sigmoid(super::mat::dot(w.w_i.row(r), concat) + w.b_i[r]);
        o[r] = sigmoid(super::mat::dot(w.w_o.row(r), concat) + w.b_o[r]);
        g[r] = (super::mat::dot(w.w_c.row(r), concat) + w.b_c[r]).tanh();
        c[r] = f[r] * c_prev[r] + i[r] * g[r];
        tc[r] = c[r].tanh();
        h[r] = o[r] * tc[r];
    }
}

pub fn lstm_step(w: &LstmWeights, x: &[f64], prev: &LstmState) -> Result<(LstmState, LstmStepCache)> {
    w.check_shapes()?;
    let (hd, inp) = (w.hidden(), w.input_size());
    if x.len() != inp || prev.h.len() != hd || prev.c.len() != hd {
        return Err(Error::Shape(format!(
            "LSTM step expects input {inp} and state {hd}, got input {} and state {}/{}",
            x.len(),
            prev.h.len(),
            prev.c.len()
        )));
    }
    let mut cache = LstmStepCache::new(hd, inp);
    lstm_step_into(w, x, &prev.h, &prev.c, &mut cache);
    Ok((cache.state(), cache))
}

/// Backward through one step.
///
/// `dh` is the total gradient on `h_t`. On entry `dc` holds the gradient on
/// `C_t` arriving from step `t+1`; on exit it holds the gradient on
/// `C_{t-1}`. `dconcat` is overwritten with the gradient on `[h_{t-1}, x_t]`.
/// Parameter gradients accumulate into `grads`.
pub fn lstm_step_backward(
    w: &LstmWeights,
    cache: &LstmStepCache,
    dh: &[f64],
    dc: &mut [f64],
    grads: &mut LstmWeights,
    dconcat: &mut [f64],
) {
    let hd = cache.hidden;
    let concat = cache.concat();
    let (f, i, o, g) = (cache.forget(), cache.input_gate(), cache.output(), cache.candidate());
    let (cp, tc) = (cache.c_prev(), cache.tanh_c());
    dconcat.fill(0.0);
    for r in 0..hd {
        let d_o = dh[r] * tc[r];
        let dct = dc[r] + dh[r] * o[r] * (1.0 - tc[r] * tc[r]);
        let d_f = dct * cp[r];
        let d_i = dct * g[r];
        let d_g = dct * i[r];
        dc[r] = dct * f[r];

        let zf = d_f * f[r] * (1.0 - f[r]);
        let zi = d_i * i[r] * (1.0 - i[r]);
        let zo = d_o * o[r] * (1.0 - o[r]);
        let zg = d_g * (1.0 - g[r] * g[r]);
        grads.b_f[r] += zf;
        grads.b_i[r] += zi;
        grads.b_o[r] += zo;
        grads.b_c[r] += zg;

        let (wf, wi, wo, wc) = (w.w_f.row(r), w.w_i.row(r), w.w_o.row(r), w.w_c.row(r));
        let gf = grads.w_f.row_mut(r);
        for (k, x) in concat.iter().enumerate() {
            gf[k] += zf * x;
        }
        let gi = grads.w_i.row_mut(r);
        for (k, x) in concat.iter().enumerate() {
            gi[k] += zi * x;
        }
        let go = grads.w_o.row_mut(r);
        for (k, x) in concat.iter().enumerate() {
            go[k] += zo * x;
        }
        let gc = grads.w_c.row_mut(r);
        for (k, x) in concat.iter().enumerate() {
            gc[k] += zg * x;
        }
        for k in 0..concat.len() {
            dconcat[k] += wf[k] * zf + wi[k] * zi + wo[k] * zo + wc[k] * zg;
        }
    }
}

/// Forward pass over a whole input sequence.
#[derive(Debug, Clone)]
pub struct LstmSequence {
    pub steps: Vec<LstmStepCache>,
}

impl LstmSequence {
    pub fn hidden_states(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(LstmStepCache::h)
    }

    pub fn final_state(&self) -> Option<LstmState> {
        self.steps.last().map(LstmStepCache::state)
    }
}

pub fn lstm_forward(w: &LstmWeights, inputs: &[Vec<f64>], init: &LstmState) -> Result<LstmSequence> {
    let mut state = init.clone();
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (next, cache) = lstm_step(w, x, &state)?;
        state = next;
        steps.push(cache);
    }
    Ok(LstmSequence { steps })
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub weights: LstmWeights,
    pub inputs: Vec<Vec<f64>>,
    pub initial: LstmState,
}

/// Reverse-mode gradients of a scalar loss given its gradient on every
/// hidden state `h_1..h_T`.
pub fn lstm_backward(w: &LstmWeights, seq: &LstmSequence, dh_seq: &[Vec<f64>]) -> Result<LstmGrads> {
    w.check_shapes()?;
    let (hd, inp) = (w.hidden(), w.input_size());
    if dh_seq.len() != seq.steps.len() || dh_seq.iter().any(|d| d.len() != hd) {
        return Err(Error::Shape(format!(
            "{} upstream gradients for {} cached steps of width {hd}",
            dh_seq.len(),
            seq.steps.len()
        )));
    }
    if seq.steps.iter().any(|s| s.hidden != hd || s.input != inp) {
        return Err(Error::Shape("cache was produced by a different LSTM".into()));
    }
    let mut grads = LstmWeights::zeros(hd, inp);
    let mut dx = vec![vec![0.0; inp]; seq.steps.len()];
    let mut dc = vec![0.0; hd];
    let mut dh_next = vec![0.0; hd];
    let mut dconcat = vec![0.0; hd + inp];
    let mut dh = vec![0.0; hd];
    for t in (0..seq.steps.len()).rev() {
        for r in 0..hd {
            dh[r] = dh_seq[t][r] + dh_next[r];
        }
        lstm_step_backward(w, &seq.steps[t], &dh, &mut dc, &mut grads, &mut dconcat);
        dh_next.copy_from_slice(&dconcat[..hd]);
        dx[t].copy_from_slice(&dconcat[hd..]);
    }
    Ok(LstmGrads { weights: grads, inputs: dx, initial: LstmState { h: dh_next, c: dc } })
}
