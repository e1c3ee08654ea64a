use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;

/// A named, shaped view of one parameter array.
#[derive(Debug)]
pub struct Block<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: &'a [f64],
}

#[derive(Debug)]
pub struct BlockMut<'a> {
    pub name: String,
    pub values: &'a mut [f64],
}

/// A collection of named parameter arrays. Gradients use the same type as
/// the parameters they belong to.
pub trait ParamSet: Clone {
    fn blocks(&self) -> Vec<Block<'_>>;
    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>>;

    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn fill(&mut self, v: f64) {
        for b in self.blocks_mut() {
            b.values.fill(v);
        }
    }

    /// `self += scale · other`
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.values.iter_mut().zip(b.values) {
                *x += scale * y;
            }
        }
    }

    fn l2_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.values.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.values.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

/// Self-describing weight file: named shaped arrays plus a format version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightContainer {
    pub format_version: u32,
    pub arrays: Vec<NamedArray>,
}

impl WeightContainer {
    pub fn from_params<P: ParamSet>(params: &P) -> Self {
        WeightContainer {
            format_version: WEIGHT_FORMAT_VERSION,
            arrays: params
                .blocks()
                .into_iter()
                .map(|b| NamedArray { name: b.name, dims: b.dims, data: b.values.to_vec() })
                .collect(),
        }
    }

    /// Copies the stored arrays into `params`, whose architecture must match.
    pub fn load_into<P: ParamSet>(&self, params: &mut P) -> Result<()> {
        if self.format_version != WEIGHT_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "weight format version {} is not supported (expected {})",
                self.format_version, WEIGHT_FORMAT_VERSION
            )));
        }
        let expected: Vec<(String, Vec<usize>)> =
            params.blocks().into_iter().map(|b| (b.name, b.dims)).collect();
        if expected.len() != self.arrays.len() {
            return Err(Error::Shape(format!(
                "{} stored arrays for {} parameter blocks",
                self.arrays.len(),
                expected.len()
            )));
        }
        for ((name, dims), arr) in expected.iter().zip(&self.arrays) {
            if *name != arr.name || *dims != arr.dims || arr.data.len() != dims.iter().product::<usize>() {
                return Err(Error::Shape(format!(
                    "stored array {} {:?} does not match expected {} {:?}",
                    arr.name, arr.dims, name, dims
                )));
            }
        }
        for (b, arr) in params.blocks_mut().into_iter().zip(&self.arrays) {
            b.values.copy_from_slice(&arr.data);
        }
        Ok(())
    }
}
