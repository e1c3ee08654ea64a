//! Fully connected head: tanh on hidden layers, identity on the output.

use super::mat::Mat;
use super::params::{Block, BlockMut, ParamSet};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Mat,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub layers: Vec<DenseLayer>,
}

impl DenseParams {
    /// `dims = [input, hidden.., output]`.
    pub fn zeros(dims: &[usize]) -> Self {
        DenseParams {
            layers: dims
                .windows(2)
                .map(|d| DenseLayer { w: Mat::zeros(d[1], d[0]), b: vec![0.0; d[1]] })
                .collect(),
        }
    }

    pub fn glorot(dims: &[usize], rng: &mut SeededRng) -> Self {
        let mut p = Self::zeros(dims);
        for layer in &mut p.layers {
            layer.w = super::init::glorot_uniform(layer.w.rows(), layer.w.cols(), rng);
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w.cols())
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.rows())
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("dense head has no layers".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.b.len() != l.w.rows() {
                return Err(Error::Shape(format!("dense layer {k}: bias does not match weight rows")));
            }
        }
        if self.layers.windows(2).any(|p| p[0].w.rows() != p[1].w.cols()) {
            return Err(Error::Shape("dense layer shapes do not chain".into()));
        }
        Ok(())
    }
}

impl ParamSet for DenseParams {
    fn blocks(&self) -> Vec<Block<'_>> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(k, l)| {
                [
                    Block { name: format!("dense.{k}.W"), dims: vec![l.w.rows(), l.w.cols()], values: l.w.as_slice() },
                    Block { name: format!("dense.{k}.b"), dims: vec![l.b.len()], values: &l.b[..] },
                ]
            })
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(k, l)| {
                [
                    BlockMut { name: format!("dense.{k}.W"), values: l.w.as_mut_slice() },
                    BlockMut { name: format!("dense.{k}.b"), values: &mut l.b[..] },
                ]
            })
            .collect()
    }
}

/// Activations of every layer; `acts[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct DenseCache {
    pub acts: Vec<Vec<f64>>,
}

impl DenseCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }
}

pub fn dense_forward_into(params: &DenseParams, x: &[f64], cache: &mut DenseCache) {
    let n = params.layers.len();
    cache.acts.resize_with(n + 1, Vec::new);
    cache.acts[0].clear();
    cache.acts[0].extend_from_slice(x);
    for (k, layer) in params.layers.iter().enumerate() {
        let (done, rest) = cache.acts.split_at_mut(k + 1);
        let out = &mut rest[0];
        out.resize(layer.w.rows(), 0.0);
        layer.w.matvec_into(&done[k], out);
        for (o, b) in out.iter_mut().zip(&layer.b) {
            *o += b;
            if k + 1 < n {
                *o = o.tanh();
            }
        }
    }
}

pub fn dense_forward(params: &DenseParams, x: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
    params.check_shapes()?;
    if x.len() != params.input_size() {
        return Err(Error::Shape(format!("dense input {} for expected {}", x.len(), params.input_size())));
    }
    let mut cache = DenseCache::default();
    dense_forward_into(params, x, &mut cache);
    Ok((cache.output().to_vec(), cache))
}

/// Scratch space for [`dense_backward_into`].
#[derive(Debug, Clone, Default)]
pub struct DenseScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Accumulates parameter gradients into `grads` and adds the input gradient
/// to `dx`.
pub fn dense_backward_into(
    params: &DenseParams,
    cache: &DenseCache,
    dy: &[f64],
    grads: &mut DenseParams,
    dx: &mut [f64],
    scratch: &mut DenseScratch,
) {
    let n = params.layers.len();
    let delta = &mut scratch.a;
    let next = &mut scratch.b;
    delta.clear();
    delta.extend_from_slice(dy);
    for k in (0..n).rev() {
        if k + 1 < n {
            // through tanh: d z = d a ⊙ (1 − a²)
            for (d, a) in delta.iter_mut().zip(&cache.acts[k + 1]) {
                *d *= 1.0 - a * a;
            }
        }
        let layer = &params.layers[k];
        let g = &mut grads.layers[k];
        g.w.outer_add(delta, &cache.acts[k]);
        for (gb, d) in g.b.iter_mut().zip(delta.iter()) {
            *gb += d;
        }
        if k == 0 {
            layer.w.tmatvec_add(delta, dx);
        } else {
            next.clear();
            next.resize(layer.w.cols(), 0.0);
            layer.w.tmatvec_add(delta, next);
            std::mem::swap(delta, next);
        }
    }
}

pub fn dense_backward(params: &DenseParams, cache: &DenseCache, dy: &[f64]) -> Result<(DenseParams, Vec<f64>)> {
    params.check_shapes()?;
    if dy.len() != params.output_size() || cache.acts.len() != params.layers.len() + 1 {
        return Err(Error::Shape("dense backward: cache or upstream does not match".into()));
    }
    let mut grads = params.zeroed();
    let mut dx = vec![0.0; params.input_size()];
    dense_backward_into(params, cache, dy, &mut grads, &mut dx, &mut DenseScratch::default());
    Ok((grads, dx))
}
