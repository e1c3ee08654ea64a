use serde::Serialize;

use crate::error::{Error, Result};

fn check_len(x: &[f64], max_lag: usize) -> Result<()> {
    if x.len() <= max_lag + 1 {
        return Err(Error::InsufficientData(format!(
            "series of length {} too short for lag {}",
            x.len(),
            max_lag
        )));
    }
    Ok(())
}

/// Sample autocorrelations at lags `0..=max_lag`, biased (divide by N).
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    check_len(x, max_lag)?;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = dev.iter().map(|d| d * d).sum::<f64>() / n;
    if !(c0 > 0.0) {
        return Err(Error::Numeric("autocorrelation undefined for a constant series".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            let ck = dev.iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / n;
            ck / c0
        })
        .collect())
}

/// Partial autocorrelations at lags `0..=max_lag` by Durbin-Levinson on the
/// sample acf; lag 0 is 1 by convention.
pub fn pacf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let r = acf(x, max_lag)?;
    let mut out = vec![1.0];
    let mut phi: Vec<f64> = Vec::with_capacity(max_lag);
    for k in 1..=max_lag {
        let num = r[k] - (1..k).map(|j| phi[j - 1] * r[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * r[j]).sum::<f64>();
        let pkk = num / den;
        let prev = phi.clone();
        for j in 1..k {
            phi[j - 1] = prev[j - 1] - pkk * prev[k - j - 1];
        }
        phi.push(pkk);
        out.push(pkk);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

pub fn summarize(x: &[f64]) -> Result<Summary> {
    if x.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    // linear interpolation between order statistics
    let q = |p: f64| {
        let h = p * (n - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    Ok(Summary {
        n,
        mean,
        std: var.sqrt(),
        min: s[0],
        q25: q(0.25),
        median: q(0.5),
        q75: q(0.75),
        max: s[n - 1],
    })
}
