//! ACD(p, q) simulation with unit-exponential innovations.
//!
//! Draw order per observation: `ε` first, then (with features enabled) one
//! standard normal for log-volume and one coin for the side. Pre-sample
//! values are the unconditional mean; the first `burn_in` observations are
//! generated and discarded.

use crate::acd::{next_mu, AcdParams};
use crate::data::{DurationSeries, FeatureMatrix, Side};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Log-volume is normal with this location and unit scale.
const LOG_VOLUME_LOCATION: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: AcdParams,
    pub n: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Attach lognormal volumes and fair-coin sides as features.
    pub features: bool,
}

impl SimConfig {
    pub fn new(params: AcdParams, n: usize, seed: u64) -> Self {
        SimConfig { params, n, burn_in: 1000, seed, features: false }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub series: DurationSeries,
    /// True conditional means aligned with `series.durations`.
    pub latent_mu: Vec<f64>,
}

pub fn simulate_acd(config: &SimConfig) -> Result<Simulation> {
    let params = &config.params;
    params.validate()?;
    let uncond = params.unconditional_mean().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "non-stationary parameters: persistence {} >= 1",
            params.persistence()
        ))
    })?;
    if config.n == 0 {
        return Err(Error::InvalidArgument("number of observations must be positive".into()));
    }

    let total = config.n + config.burn_in;
    let mut rng = SeededRng::new(config.seed);
    let mut durations = Vec::with_capacity(total);
    let mut mu = Vec::with_capacity(total);
    let mut extra = Vec::with_capacity(if config.features { 2 * total } else { 0 });
    for i in 0..total {
        let m = next_mu(params, &durations, &mu, i, uncond);
        let d = m * rng.exponential();
        if config.features {
            let volume = (LOG_VOLUME_LOCATION + rng.standard_normal()).exp();
            let side = if rng.coin() { Side::Buy } else { Side::Sell };
            extra.push((volume, side.code()));
        }
        mu.push(m);
        // exponential draws can underflow to exactly 0 only if u == 0
        durations.push(if d > 0.0 { d } else { f64::MIN_POSITIVE });
    }

    let durations = durations.split_off(config.burn_in);
    let latent_mu = mu.split_off(config.burn_in);
    let series = if config.features {
        let data = durations
            .iter()
            .zip(&extra[config.burn_in..])
            .flat_map(|(&d, &(v, s))| [d, v, s])
            .collect();
        DurationSeries::with_features(durations, FeatureMatrix::new(3, data)?)?
    } else {
        DurationSeries::new(durations)?
    };
    Ok(Simulation { series, latent_mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acd::acd_recursion;

    fn p11() -> AcdParams {
        AcdParams::new(0.1, vec![0.2], vec![0.7]).unwrap()
    }

    #[test]
    fn iid_mean() {
        let p = AcdParams::new(2.0, vec![0.0], vec![0.0]).unwrap();
        let n = 100_000;
        let s = simulate_acd(&SimConfig::new(p, n, 11)).unwrap();
        let m = s.series.durations.iter().sum::<f64>() / n as f64;
        assert!((m - 2.0).abs() < 3.0 * 2.0 / (n as f64).sqrt(), "{m}");
    }

    #[test]
    fn deterministic() {
        let a = simulate_acd(&SimConfig::new(p11(), 500, 9)).unwrap();
        let b = simulate_acd(&SimConfig::new(p11(), 500, 9)).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.latent_mu, b.latent_mu);
    }

    #[test]
    fn latent_path_replays_bit_exactly() {
        let p = AcdParams::new(0.05, vec![0.1, 0.1], vec![0.5, 0.2]).unwrap();
        let cfg = SimConfig { burn_in: 0, ..SimConfig::new(p.clone(), 2000, 3) };
        let s = simulate_acd(&cfg).unwrap();
        let replay = acd_recursion(&p, &s.series.durations, p.unconditional_mean().unwrap()).unwrap();
        assert_eq!(replay, s.latent_mu);
    }

    #[test]
    fn burn_in_discards_a_prefix_of_the_same_stream() {
        let long = simulate_acd(&SimConfig { burn_in: 0, ..SimConfig::new(p11(), 1300, 4) }).unwrap();
        let short = simulate_acd(&SimConfig { burn_in: 300, ..SimConfig::new(p11(), 1000, 4) }).unwrap();
        assert_eq!(short.series.durations, long.series.durations[300..]);
        assert_eq!(short.latent_mu, long.latent_mu[300..]);
    }

    #[test]
    fn rejects_nonstationary() {
        let p = AcdParams::new(0.1, vec![0.5], vec![0.6]).unwrap();
        assert!(simulate_acd(&SimConfig::new(p, 10, 1)).is_err());
    }

    #[test]
    fn feature_columns() {
        let cfg = SimConfig { features: true, ..SimConfig::new(p11(), 2000, 8) };
        let s = simulate_acd(&cfg).unwrap();
        let f = s.series.features.as_ref().unwrap();
        assert_eq!(f.n_cols(), 3);
        assert!(f.column(1).all(|v| v > 0.0));
        assert!(f.column(2).all(|v| v == 1.0 || v == -1.0));
        let buys = f.column(2).filter(|&v| v == 1.0).count();
        assert!((900..1100).contains(&buys));
    }
}
