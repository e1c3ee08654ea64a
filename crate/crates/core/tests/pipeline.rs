use acdnet_core::acd::{acd_fit, acd_recursion, AcdParams, FitOptions, Tail};
use acdnet_core::data::{apply_scaling, FeatureMatrix, fit_scaling, read_series, write_series, Splits};
use acdnet_core::eval::{compare, EvalReport, Metric};
use acdnet_core::nets::{predict_series, train, HybridModelSpec, TrainConfig, TrainedModel, Variant};
use acdnet_core::synthetic::{simulate_acd, SimConfig};

fn simulation(n: usize, features: bool) -> acdnet_core::synthetic::Simulation {
    let params = AcdParams::new(0.1, vec![0.2], vec![0.7]).unwrap();
    let mut cfg = SimConfig::new(params, n, 21);
    cfg.features = features;
    simulate_acd(&cfg).unwrap()
}

#[test]
fn series_file_round_trip_preserves_bits() {
    let sim = simulation(300, true);
    let mut buf = Vec::new();
    write_series(&mut buf, &sim.series, Some(&sim.latent_mu)).unwrap();
    let back = read_series(buf.as_slice()).unwrap();
    assert_eq!(back.series.durations, sim.series.durations);
    assert_eq!(back.latent_mu.unwrap(), sim.latent_mu);
    let (a, b) = (back.series.features.unwrap(), sim.series.features.unwrap());
    assert_eq!(a, b);
}

#[test]
fn acd_forecasts_score_close_to_oracle() {
    let sim = simulation(20_000, false);
    let splits = Splits::new(sim.series.len(), 0.3, (8.0, 2.0)).unwrap();
    let d = &sim.series.durations;
    let fit = acd_fit(&d[splits.train.clone()], 1, 1, &FitOptions::default()).unwrap();
    let mu = acd_recursion(&fit.params, d, fit.presample_mu).unwrap();

    let test = splits.test.clone();
    let reals = &d[test.start - 1..test.end];
    let acd = EvalReport::build("acd", "sim", test.clone(), reals, &mu[test.clone()], &[0.1, 0.05], Tail::Lower).unwrap();
    let oracle =
        EvalReport::build("oracle", "sim", test.clone(), reals, &sim.latent_mu[test.clone()], &[0.1, 0.05], Tail::Lower)
            .unwrap();
    assert!(acd.mae < 1.02 * oracle.mae, "{} vs {}", acd.mae, oracle.mae);
    assert!((acd.coverage(0.1).unwrap() - 0.1).abs() < 0.02);

    let cmp = compare(&[acd, oracle]).unwrap();
    assert_eq!(cmp.instruments.len(), 1);
    let mae = &cmp.instruments[0].metrics[0];
    assert_eq!(mae.metric, Metric::Mae.name());
    assert_eq!(mae.ranking.len(), 2);
}

#[test]
fn trained_network_survives_checkpoint_and_predicts_causally() {
    let sim = simulation(1200, true);
    let splits = Splits::new(sim.series.len(), 0.3, (8.0, 2.0)).unwrap();
    let stats = fit_scaling(&sim.series, splits.train.clone()).unwrap();
    let scaled = apply_scaling(&sim.series, &stats).unwrap();

    let mut spec = HybridModelSpec::new(Variant::AttnLstmAcd, 3);
    spec.timesteps = 10;
    let config = TrainConfig { batch_size: 32, eval_every: 20, max_steps: 60, seed: 4, ..TrainConfig::default() };
    let model = train(&spec, &scaled, &splits, &config).unwrap();

    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let loaded = TrainedModel::load(dir.path()).unwrap();

    let a = predict_series(&model, &sim.series, splits.test.clone()).unwrap();
    let b = predict_series(&loaded, &sim.series, splits.test.clone()).unwrap();
    assert_eq!(a.mu_hat, b.mu_hat);
    assert!(a.mu_hat.iter().all(|&m| m > 0.0 && m.is_finite()));
    for row in a.attention.as_ref().unwrap() {
        assert_eq!(row.len(), 10);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    // Changing a test duration only moves forecasts made after it.
    let k = splits.test.start + 40;
    let mut altered = sim.series.clone();
    altered.durations[k] *= 7.0;
    assert!(predict_series(&model, &altered, splits.test.clone()).is_err());
    let mut rows = altered.features.as_ref().unwrap().as_slice().to_vec();
    rows[3 * k] = altered.durations[k];
    altered.features = Some(FeatureMatrix::new(3, rows).unwrap());
    let c = predict_series(&model, &altered, splits.test.clone()).unwrap();
    let offset = k - splits.test.start;
    assert_eq!(a.mu_hat[..=offset], c.mu_hat[..=offset]);
    assert_ne!(a.mu_hat[offset + 1], c.mu_hat[offset + 1]);
}
