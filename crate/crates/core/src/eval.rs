//! Forecast metrics, attention profiles and multi-model comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acd::{time_at_risk, Tail};
use crate::error::{Error, Result};
use crate::fileio::{read_toml, write_toml};

/// Probability levels reported by default.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.1, 0.05, 0.01];

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{a} {what} for {b} observations")));
    }
    if a == 0 {
        return Err(Error::InsufficientData(format!("no {what}")));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(forecasts: &[f64], reals: &[f64]) -> Result<f64> {
    check_lengths(forecasts.len(), reals.len(), "forecasts")?;
    Ok(forecasts.iter().zip(reals).map(|(f, r)| (f - r).abs()).sum::<f64>() / reals.len() as f64)
}

/// Mean of `|forecast_i − real_{i−1}|`. `reals` holds one leading
/// observation before the first forecast's target.
pub fn mae_lagged(forecasts: &[f64], reals: &[f64]) -> Result<f64> {
    if reals.len() != forecasts.len() + 1 {
        return Err(Error::Shape(format!(
            "lagged MAE needs {} observations (one leading) for {} forecasts, got {}",
            forecasts.len() + 1,
            forecasts.len(),
            reals.len()
        )));
    }
    mae(forecasts, &reals[..forecasts.len()])
}

/// Per-observation pinball loss `(x − q)(α − I(x < q))`.
pub fn quantile_loss(reals: &[f64], tars: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("probability {alpha} outside (0, 1)")));
    }
    check_lengths(tars.len(), reals.len(), "quantiles")?;
    let total: f64 = reals
        .iter()
        .zip(tars)
        .map(|(&x, &q)| {
            let u = x - q;
            u * (alpha - if u < 0.0 { 1.0 } else { 0.0 })
        })
        .sum();
    Ok(total / reals.len() as f64)
}

/// Fraction of observations strictly below their quantile forecast.
pub fn coverage(reals: &[f64], tars: &[f64]) -> Result<f64> {
    check_lengths(tars.len(), reals.len(), "quantiles")?;
    Ok(reals.iter().zip(tars).filter(|(x, q)| x < q).count() as f64 / reals.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileMetrics {
    pub alpha: f64,
    /// Pinball loss at the forecast's probability level.
    pub ql: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub instrument: String,
    /// Indices of the evaluated durations.
    pub test_start: usize,
    pub test_end: usize,
    pub n: usize,
    pub mae: f64,
    pub mae_lagged: f64,
    /// `mae − mae_lagged`
    pub mae_difference: f64,
    pub tail: Tail,
    pub quantiles: Vec<QuantileMetrics>,
}

impl EvalReport {
    /// Scores conditional-mean forecasts `mu_hat` of `reals[1..]`; `reals[0]`
    /// is the observation preceding the first target.
    pub fn build(
        model: &str,
        instrument: &str,
        range: Range<usize>,
        reals: &[f64],
        mu_hat: &[f64],
        alphas: &[f64],
        tail: Tail,
    ) -> Result<Self> {
        if range.len() != mu_hat.len() {
            return Err(Error::Shape(format!("range {range:?} for {} forecasts", mu_hat.len())));
        }
        let mae_lagged = mae_lagged(mu_hat, reals)?;
        let targets = &reals[1..];
        let mae = mae(mu_hat, targets)?;
        let quantiles = alphas
            .iter()
            .map(|&alpha| {
                let tars: Vec<f64> = mu_hat.iter().map(|&mu| time_at_risk(mu, alpha, tail)).collect::<Result<_>>()?;
                Ok(QuantileMetrics {
                    alpha,
                    ql: quantile_loss(targets, &tars, tail.level(alpha))?,
                    coverage: coverage(targets, &tars)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalReport {
            model: model.to_string(),
            instrument: instrument.to_string(),
            test_start: range.start,
            test_end: range.end,
            n: mu_hat.len(),
            mae,
            mae_lagged,
            mae_difference: mae - mae_lagged,
            tail,
            quantiles,
        })
    }

    pub fn test_range(&self) -> Range<usize> {
        self.test_start..self.test_end
    }

    pub fn ql(&self, alpha: f64) -> Option<f64> {
        self.quantiles.iter().find(|q| q.alpha == alpha).map(|q| q.ql)
    }

    pub fn coverage(&self, alpha: f64) -> Option<f64> {
        self.quantiles.iter().find(|q| q.alpha == alpha).map(|q| q.coverage)
    }

    /// `model,instrument,metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,instrument,metric,value\n");
        let mut row = |metric: &str, value: String| {
            let _ = writeln!(out, "{},{},{metric},{value}", self.model, self.instrument);
        };
        row("n", self.n.to_string());
        row("mae", self.mae.to_string());
        row("mae_lagged", self.mae_lagged.to_string());
        row("mae_difference", self.mae_difference.to_string());
        for q in &self.quantiles {
            row(&format!("ql@{}", q.alpha), q.ql.to_string());
            row(&format!("coverage@{}", q.alpha), q.coverage.to_string());
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_toml(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_toml(path)
    }
}

/// Mean attention weight per lag; `weights[0]` is lag 1, the most recent
/// step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionProfile {
    pub weights: Vec<f64>,
    /// Number of predictions averaged.
    pub n: usize,
}

impl AttentionProfile {
    pub fn lag(&self, lag: usize) -> f64 {
        self.weights[lag - 1]
    }

    /// Mean weight over lags `from..=to`.
    pub fn mean_over(&self, from: usize, to: usize) -> f64 {
        let w = &self.weights[from - 1..to];
        w.iter().sum::<f64>() / w.len() as f64
    }

    /// `lag,weight` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,weight\n");
        for (k, w) in self.weights.iter().enumerate() {
            let _ = writeln!(out, "{},{w}", k + 1);
        }
        out
    }
}

/// Averages attention rows (oldest step first) into a per-lag profile.
pub fn attention_profile(rows: &[Vec<f64>]) -> Result<AttentionProfile> {
    let first = rows.first().ok_or_else(|| Error::InsufficientData("no attention weights".into()))?;
    let t = first.len();
    if t == 0 || rows.iter().any(|r| r.len() != t) {
        return Err(Error::Shape("attention rows must share one nonzero length".into()));
    }
    let mut sums = vec![0.0; t];
    for r in rows {
        for (s, w) in sums.iter_mut().zip(r.iter().rev()) {
            *s += w;
        }
    }
    let n = rows.len() as f64;
    Ok(AttentionProfile { weights: sums.into_iter().map(|s| s / n).collect(), n: rows.len() })
}

/// A metric on which lower is better.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Mae,
    Ql(f64),
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Metric::Mae => "mae".into(),
            Metric::Ql(a) => format!("ql@{a}"),
        }
    }

    fn value(&self, r: &EvalReport) -> Option<f64> {
        match *self {
            Metric::Mae => Some(r.mae),
            Metric::Ql(a) => r.ql(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub metric: String,
    /// Models ordered best first.
    pub ranking: Vec<(String, f64)>,
    /// Every model sharing the best value; more than one means a tie.
    pub best: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentComparison {
    pub instrument: String,
    pub reports: Vec<EvalReport>,
    pub metrics: Vec<MetricResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tally {
    pub wins: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub instruments: Vec<InstrumentComparison>,
    /// `(model, metric) → tally` across instruments.
    pub tallies: BTreeMap<(String, String), Tally>,
}

/// Groups reports by instrument and ranks models on MAE and on QL at every
/// level all reports share.
pub fn compare(reports: &[EvalReport]) -> Result<Comparison> {
    let mut groups: BTreeMap<&str, Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(&r.instrument).or_default().push(r);
    }
    let mut instruments = Vec::new();
    let mut tallies: BTreeMap<(String, String), Tally> = BTreeMap::new();
    for (instrument, mut group) in groups {
        if group.len() < 2 {
            return Err(Error::InsufficientData(format!("instrument {instrument} has fewer than two reports")));
        }
        group.sort_by(|a, b| a.model.cmp(&b.model));
        if let Some(w) = group.windows(2).find(|w| w[0].model == w[1].model) {
            return Err(Error::InvalidArgument(format!("duplicate report for {} on {instrument}", w[0].model)));
        }
        let range = group[0].test_range();
        if let Some(r) = group.iter().find(|r| r.test_range() != range) {
            return Err(Error::InvalidArgument(format!(
                "{} on {instrument} was evaluated on {:?}, others on {range:?}",
                r.model,
                r.test_range()
            )));
        }
        let mut metrics = vec![Metric::Mae];
        metrics.extend(
            group[0]
                .quantiles
                .iter()
                .map(|q| q.alpha)
                .filter(|&a| group.iter().all(|r| r.ql(a).is_some()))
                .map(Metric::Ql),
        );
        let results: Vec<MetricResult> = metrics
            .iter()
            .map(|m| {
                let mut ranking: Vec<(String, f64)> =
                    group.iter().map(|r| (r.model.clone(), m.value(r).expect("filtered above"))).collect();
                ranking.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
                let top = ranking[0].1;
                let best = ranking.iter().filter(|(_, v)| *v == top).map(|(n, _)| n.clone()).collect();
                MetricResult { metric: m.name(), ranking, best }
            })
            .collect();
        for res in &results {
            for (model, _) in &res.ranking {
                let t = tallies.entry((model.clone(), res.metric.clone())).or_default();
                if res.best.contains(model) {
                    if res.best.len() == 1 {
                        t.wins += 1;
                    } else {
                        t.ties += 1;
                    }
                }
            }
        }
        instruments.push(InstrumentComparison {
            instrument: instrument.to_string(),
            reports: group.into_iter().cloned().collect(),
            metrics: results,
        });
    }
    if instruments.is_empty() {
        return Err(Error::InsufficientData("no reports to compare".into()));
    }
    Ok(Comparison { instruments, tallies })
}

impl Comparison {
    /// One row per (instrument, model): MAE, lagged MAE, difference, then QL
    /// at each level.
    pub fn table_csv(&self) -> String {
        let mut out = String::new();
        for (k, inst) in self.instruments.iter().enumerate() {
            let alphas: Vec<f64> = inst.reports[0].quantiles.iter().map(|q| q.alpha).collect();
            if k == 0 {
                out.push_str("instrument,model,mae,mae_lagged,difference");
                for a in &alphas {
                    let _ = write!(out, ",ql@{a}");
                }
                out.push('\n');
            }
            for r in &inst.reports {
                let _ = write!(out, "{},{},{},{},{}", inst.instrument, r.model, r.mae, r.mae_lagged, r.mae_difference);
                for a in &alphas {
                    match r.ql(*a) {
                        Some(v) => {
                            let _ = write!(out, ",{v}");
                        }
                        None => out.push(','),
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    /// `model,metric,wins,ties` rows.
    pub fn tallies_csv(&self) -> String {
        let mut out = String::from("model,metric,wins,ties\n");
        for ((model, metric), t) in &self.tallies {
            let _ = writeln!(out, "{model},{metric},{},{}", t.wins, t.ties);
        }
        out
    }

    /// Aligned plain-text rendering with per-metric rankings.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for inst in &self.instruments {
            let _ = writeln!(out, "instrument {}", inst.instrument);
            let _ = writeln!(out, "{:<28}{:>14}{:>14}{:>14}", "model", "MAE", "lagged MAE", "difference");
            for r in &inst.reports {
                let _ = writeln!(
                    out,
                    "{:<28}{:>14.6}{:>14.6}{:>14.6}",
                    r.model, r.mae, r.mae_lagged, r.mae_difference
                );
            }
            for m in &inst.metrics {
                let names: Vec<&str> = m.ranking.iter().map(|(n, _)| n.as_str()).collect();
                let verdict = if m.best.len() > 1 { format!("tie: {}", m.best.join(", ")) } else { m.best[0].clone() };
                let _ = writeln!(out, "  {:<12} best {verdict}; order {}", m.metric, names.join(" < "));
            }
            out.push('\n');
        }
        out.push_str("wins (ties) across instruments\n");
        for ((model, metric), t) in &self.tallies {
            let _ = writeln!(out, "  {model:<26} {metric:<12} {} ({})", t.wins, t.ties);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_metrics() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert_eq!(mae(&[1.5, 2.5], &[1.5, 2.5]).unwrap(), 0.0);
        assert!((quantile_loss(&[1.0], &[0.5], 0.1).unwrap() - 0.05).abs() < 1e-12);
        assert!((quantile_loss(&[0.4], &[0.5], 0.1).unwrap() - 0.09).abs() < 1e-12);
        assert_eq!(quantile_loss(&[0.5], &[0.5], 0.1).unwrap(), 0.0);
        assert_eq!(mae_lagged(&[2.0], &[1.0, 5.0]).unwrap(), 1.0);
        let reals = [1.0, 3.0, 2.0, 7.0];
        assert_eq!(mae_lagged(&reals[..3], &reals).unwrap(), 0.0);
    }

    #[test]
    fn length_errors() {
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
        assert!(mae_lagged(&[1.0], &[1.0]).is_err());
        assert!(quantile_loss(&[1.0], &[1.0], 1.0).is_err());
        assert!(coverage(&[1.0], &[]).is_err());
    }

    #[test]
    fn coverage_counts() {
        assert_eq!(coverage(&[0.1, 0.2], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(coverage(&[0.5, 2.0, 0.5, 2.0], &[1.0; 4]).unwrap(), 0.5);
        assert_eq!(coverage(&[1.0], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_attention_profile() {
        let p = attention_profile(&[vec![0.02; 50]]).unwrap();
        assert!(p.weights.iter().all(|&w| w == 0.02));
        let p = attention_profile(&[vec![0.1, 0.2, 0.7], vec![0.3, 0.3, 0.4]]).unwrap();
        assert!((p.lag(1) - 0.55).abs() < 1e-15);
        assert!((p.lag(3) - 0.2).abs() < 1e-15);
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(attention_profile(&[]).is_err());
        assert!(p.to_csv().starts_with("lag,weight\n1,0.55"));
    }

    fn report(model: &str, instrument: &str, mae: f64, ql: f64) -> EvalReport {
        EvalReport {
            model: model.into(),
            instrument: instrument.into(),
            test_start: 70,
            test_end: 100,
            n: 30,
            mae,
            mae_lagged: 1.0,
            mae_difference: mae - 1.0,
            tail: Tail::Lower,
            quantiles: vec![QuantileMetrics { alpha: 0.1, ql, coverage: 0.1 }],
        }
    }

    #[test]
    fn dominating_model_wins_everything() {
        let c = compare(&[report("b", "X", 2.0, 0.2), report("a", "X", 1.0, 0.1)]).unwrap();
        let t = &c.tallies;
        assert_eq!(t[&("a".into(), "mae".into())], Tally { wins: 1, ties: 0 });
        assert_eq!(t[&("a".into(), "ql@0.1".into())], Tally { wins: 1, ties: 0 });
        assert_eq!(t[&("b".into(), "mae".into())], Tally::default());
        assert_eq!(c.instruments[0].reports[0].model, "a");
    }

    #[test]
    fn identical_reports_tie() {
        let c = compare(&[report("a", "X", 1.0, 0.1), report("b", "X", 1.0, 0.1)]).unwrap();
        for m in ["a", "b"] {
            assert_eq!(c.tallies[&(m.into(), "mae".into())], Tally { wins: 0, ties: 1 });
        }
        assert!(c.to_text().contains("tie: a, b"));
    }

    #[test]
    fn tallies_accumulate_across_instruments() {
        let c = compare(&[
            report("a", "X", 1.0, 0.1),
            report("b", "X", 2.0, 0.2),
            report("a", "Y", 3.0, 0.1),
            report("b", "Y", 2.0, 0.2),
        ])
        .unwrap();
        assert_eq!(c.tallies[&("a".into(), "mae".into())].wins, 1);
        assert_eq!(c.tallies[&("b".into(), "mae".into())].wins, 1);
        assert_eq!(c.tallies[&("a".into(), "ql@0.1".into())].wins, 2);
        let csv = c.table_csv();
        assert_eq!(csv.lines().next().unwrap(), "instrument,model,mae,mae_lagged,difference,ql@0.1");
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn mismatched_ranges_rejected() {
        let mut b = report("b", "X", 1.0, 0.1);
        b.test_start = 69;
        assert!(compare(&[report("a", "X", 1.0, 0.1), b]).is_err());
        assert!(compare(&[report("a", "X", 1.0, 0.1)]).is_err());
    }

    #[test]
    fn report_build_and_round_trip() {
        let reals = [1.0, 2.0, 0.5, 1.5];
        let mu = [1.0, 1.0, 1.0];
        let r = EvalReport::build("acd", "SIM", 10..13, &reals, &mu, &DEFAULT_ALPHAS, Tail::Lower).unwrap();
        assert!((r.mae - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.mae_lagged - 0.5).abs() < 1e-15);
        assert_eq!(r.mae_difference, r.mae - r.mae_lagged);
        assert_eq!(r.coverage(0.1), Some(0.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.toml");
        r.save(&path).unwrap();
        assert_eq!(EvalReport::load(&path).unwrap(), r);
        assert!(r.to_csv().contains("acd,SIM,ql@0.05,"));
    }

    proptest! {
        #[test]
        fn quantile_loss_nonnegative(
            pairs in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..40),
            alpha in 0.001f64..0.999,
        ) {
            let (x, q): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(quantile_loss(&x, &q, alpha).unwrap() >= 0.0);
            prop_assert_eq!(quantile_loss(&x, &x, alpha).unwrap(), 0.0);
        }

        #[test]
        fn mae_symmetric_and_translation_invariant(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40),
            shift in -1e3f64..1e3,
        ) {
            let (f, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let base = mae(&f, &r).unwrap();
            prop_assert_eq!(base, mae(&r, &f).unwrap());
            let fs: Vec<f64> = f.iter().map(|x| x + shift).collect();
            let rs: Vec<f64> = r.iter().map(|x| x + shift).collect();
            prop_assert!((mae(&fs, &rs).unwrap() - base).abs() <= 1e-9 * (1.0 + base));
        }

        #[test]
        fn profile_is_a_simplex(rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 7), 1..20)) {
            let rows: Vec<Vec<f64>> = rows
                .into_iter()
                .map(|r| { let s: f64 = r.iter().sum(); r.into_iter().map(|x| x / s).collect() })
                .collect();
            let p = attention_profile(&rows).unwrap();
            prop_assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
