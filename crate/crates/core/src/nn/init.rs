use super::mat::Mat;
use crate::rng::SeededRng;

/// Uniform on `±sqrt(6 / (fan_in + fan_out))` with `fan_in = cols`,
/// `fan_out = rows`, filled row by row.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut SeededRng) -> Mat {
    let bound = glorot_bound(rows, cols);
    let data = (0..rows * cols).map(|_| rng.uniform_in(-bound, bound)).collect();
    Mat::from_vec(rows, cols, data).expect("dimensions match by construction")
}

pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}
