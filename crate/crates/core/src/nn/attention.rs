//! Additive attention over a sequence of hidden states:
//! `e_k = vᵀ tanh(W h_k)`, `α = softmax(e)`, `c = Σ_k α_k h_k`.

use super::mat::{axpy, dot, Mat};
use super::params::{Block, BlockMut, ParamSet};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `attention_size × hidden`
    pub w: Mat,
    pub v: Vec<f64>,
}

impl AttentionParams {
    pub fn zeros(attention_size: usize, hidden: usize) -> Self {
        AttentionParams { w: Mat::zeros(attention_size, hidden), v: vec![0.0; attention_size] }
    }

    pub fn glorot(attention_size: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let w = super::init::glorot_uniform(attention_size, hidden, rng);
        let v = super::init::glorot_uniform(attention_size, 1, rng);
        AttentionParams { w, v: v.as_slice().to_vec() }
    }

    pub fn size(&self) -> usize {
        self.w.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w.cols()
    }
}

impl ParamSet for AttentionParams {
    fn blocks(&self) -> Vec<Block<'_>> {
        vec![
            Block { name: "attn.w".into(), dims: vec![self.w.rows(), self.w.cols()], values: self.w.as_slice() },
            Block { name: "attn.v".into(), dims: vec![self.v.len()], values: &self.v },
        ]
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        vec![
            BlockMut { name: "attn.w".into(), values: self.w.as_mut_slice() },
            BlockMut { name: "attn.v".into(), values: &mut self.v },
        ]
    }
}

/// Softmax with max subtraction.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mut out = scores.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(x: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in x.iter_mut() {
        *v /= s;
    }
}

/// Gradient on the scores from the gradient on the weights:
/// `de_k = α_k (dα_k − Σ_j α_j dα_j)`.
pub fn softmax_backward(weights: &[f64], d_weights: &[f64]) -> Vec<f64> {
    let s = dot(weights, d_weights);
    weights.iter().zip(d_weights).map(|(a, d)| a * (d - s)).collect()
}

/// `J[k][j] = ∂α_k/∂e_j = α_k (δ_kj − α_j)`.
pub fn softmax_jacobian(weights: &[f64]) -> Mat {
    let n = weights.len();
    let mut j = Mat::zeros(n, n);
    for k in 0..n {
        for (jj, out) in j.row_mut(k).iter_mut().enumerate() {
            let delta = if jj == k { 1.0 } else { 0.0 };
            *out = weights[k] * (delta - weights[jj]);
        }
    }
    j
}

#[derive(Debug, Clone, Default)]
pub struct AttentionCache {
    /// `tanh(W h_k)` per step, row-major `T × attention_size`.
    pub projected: Vec<f64>,
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

/// `hidden` is row-major `T × H`. Fills `cache` with the weights and the
/// context vector.
pub fn attention_forward_into(params: &AttentionParams, hidden: &[f64], cache: &mut AttentionCache) {
    let (a, h) = (params.size(), params.hidden());
    let t = hidden.len() / h;
    cache.projected.resize(t * a, 0.0);
    cache.weights.resize(t, 0.0);
    cache.context.clear();
    cache.context.resize(h, 0.0);
    for (k, hk) in hidden.chunks_exact(h).enumerate() {
        let u = &mut cache.projected[k * a..(k + 1) * a];
        params.w.matvec_into(hk, u);
        for x in u.iter_mut() {
            *x = x.tanh();
        }
        cache.weights[k] = dot(&params.v, u);
    }
    softmax_in_place(&mut cache.weights);
    for (k, hk) in hidden.chunks_exact(h).enumerate() {
        axpy(cache.weights[k], hk, &mut cache.context);
    }
}

/// Context vector and attention weights over `hidden_states` (oldest first).
pub fn attention_context(hidden_states: &[Vec<f64>], params: &AttentionParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let flat = flatten(hidden_states, params.hidden())?;
    let mut cache = AttentionCache::default();
    attention_forward_into(params, &flat, &mut cache);
    Ok((cache.context, cache.weights))
}

fn flatten(hidden_states: &[Vec<f64>], h: usize) -> Result<Vec<f64>> {
    if hidden_states.is_empty() {
        return Err(Error::InvalidArgument("attention needs at least one hidden state".into()));
    }
    if hidden_states.iter().any(|s| s.len() != h) {
        return Err(Error::Shape(format!("hidden states must have width {h}")));
    }
    Ok(hidden_states.concat())
}

/// Accumulates parameter gradients into `grads` and gradients on the hidden
/// states into `d_hidden` (row-major `T × H`).
pub fn attention_backward_into(
    params: &AttentionParams,
    hidden: &[f64],
    cache: &AttentionCache,
    d_context: &[f64],
    grads: &mut AttentionParams,
    d_hidden: &mut [f64],
) {
    let (a, h) = (params.size(), params.hidden());
    let t = cache.weights.len();
    let mut d_weights = vec![0.0; t];
    for (k, hk) in hidden.chunks_exact(h).enumerate() {
        d_weights[k] = dot(d_context, hk);
        axpy(cache.weights[k], d_context, &mut d_hidden[k * h..(k + 1) * h]);
    }
    let d_scores = softmax_backward(&cache.weights, &d_weights);
    let mut du = vec![0.0; a];
    for (k, hk) in hidden.chunks_exact(h).enumerate() {
        let u = &cache.projected[k * a..(k + 1) * a];
        axpy(d_scores[k], u, &mut grads.v);
        for j in 0..a {
            du[j] = d_scores[k] * params.v[j] * (1.0 - u[j] * u[j]);
        }
        grads.w.outer_add(&du, hk);
        params.w.tmatvec_add(&du, &mut d_hidden[k * h..(k + 1) * h]);
    }
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub params: AttentionParams,
    pub hidden: Vec<Vec<f64>>,
}

pub fn attention_backward(
    params: &AttentionParams,
    hidden_states: &[Vec<f64>],
    d_context: &[f64],
) -> Result<AttentionGrads> {
    let h = params.hidden();
    let flat = flatten(hidden_states, h)?;
    if d_context.len() != h {
        return Err(Error::Shape(format!("context gradient of width {} for hidden {h}", d_context.len())));
    }
    let mut cache = AttentionCache::default();
    attention_forward_into(params, &flat, &mut cache);
    let mut grads = params.zeroed();
    let mut dh = vec![0.0; flat.len()];
    attention_backward_into(params, &flat, &cache, d_context, &mut grads, &mut dh);
    Ok(AttentionGrads { params: grads, hidden: dh.chunks_exact(h).map(<[f64]>::to_vec).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradients, numeric_gradient};

    fn random_states(rng: &mut SeededRng, t: usize, h: usize) -> Vec<Vec<f64>> {
        (0..t).map(|_| (0..h).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).collect()
    }

    #[test]
    fn zero_projection_is_uniform() {
        let mut rng = SeededRng::new(1);
        let hs = random_states(&mut rng, 4, 3);
        let mut p = AttentionParams::zeros(2, 3);
        p.v = vec![1.5, -0.3];
        let (c, w) = attention_context(&hs, &p).unwrap();
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
        for j in 0..3 {
            let mean = hs.iter().map(|h| h[j]).sum::<f64>() / 4.0;
            assert!((c[j] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn single_step() {
        let mut rng = SeededRng::new(2);
        let p = AttentionParams::glorot(2, 3, &mut rng);
        let h = vec![vec![0.3, -0.2, 0.9]];
        let (c, w) = attention_context(&h, &p).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(c, h[0]);
        assert!(attention_context(&[], &p).is_err());
    }

    #[test]
    fn identical_states_uniform() {
        let mut rng = SeededRng::new(3);
        let p = AttentionParams::glorot(2, 3, &mut rng);
        let hs = vec![vec![0.4, 0.1, -0.7]; 5];
        let (_, w) = attention_context(&hs, &p).unwrap();
        assert!(w.iter().all(|x| (x - 0.2).abs() < 1e-15));
    }

    #[test]
    fn softmax_stable_and_shift_invariant() {
        let w = softmax(&[1e4, -1e4, 0.0, 1e4]);
        assert!(w.iter().all(|x| x.is_finite()));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let a = softmax(&[0.3, -1.2, 2.0]);
        let b = softmax(&[100.3, 98.8, 102.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_rows_sum_to_zero() {
        let w = softmax(&[0.5, -0.1, 1.3, 0.0]);
        let j = softmax_jacobian(&w);
        for k in 0..4 {
            assert!(j.row(k).iter().sum::<f64>().abs() < 1e-15);
        }
        let d = softmax_backward(&w, &[1.0; 4]);
        assert!(d.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = SeededRng::new(40 + seed);
            let p = AttentionParams::glorot(2, 3, &mut rng);
            let hs = random_states(&mut rng, 5, 3);
            let dc: Vec<f64> = (0..3).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let loss = |p: &AttentionParams| dot(&attention_context(&hs, p).unwrap().0, &dc);
            let g = attention_backward(&p, &hs, &dc).unwrap();
            let report = check_gradients(&g.params, &numeric_gradient(&p, loss, 1e-5));
            assert!(report.max_rel_error < 1e-4, "{report:?}");

            let eps = 1e-6;
            for t in 0..5 {
                for j in 0..3 {
                    let mut up = hs.clone();
                    up[t][j] += eps;
                    let mut dn = hs.clone();
                    dn[t][j] -= eps;
                    let f = |h: &[Vec<f64>]| dot(&attention_context(h, &p).unwrap().0, &dc);
                    let num = (f(&up) - f(&dn)) / (2.0 * eps);
                    assert!((num - g.hidden[t][j]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn equal_states_give_zero_v_gradient() {
        let mut rng = SeededRng::new(4);
        let mut p = AttentionParams::glorot(2, 3, &mut rng);
        p.w = Mat::zeros(2, 3);
        let hs = vec![vec![0.5, -0.5, 0.25]; 4];
        let g = attention_backward(&p, &hs, &[1.0, 1.0, 1.0]).unwrap();
        assert!(g.params.v.iter().all(|x| x.abs() < 1e-15));
    }
}
