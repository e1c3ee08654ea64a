use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use acdnet_core::acd::{acd_fit, acd_recursion, AcdModelFile, AcdParams, FitOptions, Tail};
use acdnet_core::data::{acf, apply_scaling, fit_scaling, pacf, summarize, write_series};
use acdnet_core::eval::{attention_profile, compare, mae, EvalReport, DEFAULT_ALPHAS};
use acdnet_core::nets::{predict_series, train, ModelKind, TrainError, TrainedModel, Variant};
use acdnet_core::synthetic::{simulate_acd, SimConfig};
use acdnet_core::Error;
use rayon::prelude::*;

use crate::input::{Context, DataPlan, LoadedData};
use crate::{
    AttentionArgs, Cli, CliError, Command, CompareArgs, EvaluateArgs, FitArgs, SimulateArgs, StatsArgs,
};

pub(crate) const ACD_FILE: &str = "acd.toml";

pub(crate) fn dispatch(cli: Cli) -> Result<(), CliError> {
    let ctx = Context::new(&cli.common)?;
    match &cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Fit(a) => fit(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Compare(a) => compare_reports(&ctx, a),
        Command::Attention(a) => attention(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    Error::Io { path: path.to_path_buf(), source }.into()
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn simulate(ctx: &Context, args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = ctx.cfg.simulate.clone().unwrap_or_default();
    let omega = args.omega.or(cfg.omega).ok_or_else(|| usage("--omega is required"))?;
    let alphas = if args.alpha.is_empty() { cfg.alpha } else { args.alpha.clone() };
    let betas = if args.beta.is_empty() { cfg.beta } else { args.beta.clone() };
    if alphas.is_empty() || betas.is_empty() {
        return Err(usage("--alpha and --beta are required"));
    }
    let n = args.n.or(cfg.n).ok_or_else(|| usage("--n is required"))?;
    let params = AcdParams::new(omega, alphas, betas).map_err(usage)?;
    if !params.is_stationary() {
        return Err(usage(format!("persistence {} must be below 1", params.persistence())));
    }
    if n == 0 {
        return Err(usage("--n must be positive"));
    }
    let sim_cfg = SimConfig {
        burn_in: args.burn_in.or(cfg.burn_in).unwrap_or(1000),
        features: args.features || cfg.features.unwrap_or(false),
        ..SimConfig::new(params, n, ctx.seed)
    };
    let sim = simulate_acd(&sim_cfg)?;

    create_dir(&ctx.output_dir)?;
    let path = ctx.output_dir.join("series.csv");
    let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut out = BufWriter::new(file);
    write_series(&mut out, &sim.series, Some(&sim.latent_mu))?;
    out.flush().map_err(|e| io_err(&path, e))?;
    println!("wrote {n} durations to {}", path.display());
    Ok(())
}

fn requested_models(ctx: &Context, flags: &[ModelKind]) -> Vec<ModelKind> {
    let mut models = if flags.is_empty() { ctx.cfg.models.clone() } else { flags.to_vec() };
    let mut seen = Vec::new();
    models.retain(|m| {
        let fresh = !seen.contains(m);
        seen.push(*m);
        fresh
    });
    models
}

fn check_features(models: &[ModelKind], data: &LoadedData) -> Result<(), CliError> {
    if let Some(m) = models
        .iter()
        .find(|m| m.hybrid_spec().is_some_and(|s| s.input_features > 1) && data.series.features.is_none())
    {
        return Err(Error::InvalidSeries(format!("{m} needs volume and side columns, which the input lacks")).into());
    }
    Ok(())
}

fn fit(ctx: &Context, args: &FitArgs) -> Result<(), CliError> {
    let models = requested_models(ctx, &args.model);
    if models.is_empty() {
        let names: Vec<_> = ModelKind::ALL.iter().map(|m| m.name()).collect();
        return Err(usage(format!("no models requested; use --model with any of {}", names.join(", "))));
    }
    let plan = DataPlan::resolve(ctx, &args.data)?;
    let mut config = ctx.cfg.train.clone();
    config.seed = ctx.seed;
    if let Some(v) = args.max_steps {
        config.max_steps = v;
    }
    if let Some(v) = args.patience {
        config.patience = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.eval_every {
        config.eval_every = v;
    }
    config.validate().map_err(usage)?;
    let acd_order = (ctx.cfg.acd.p, ctx.cfg.acd.q);
    if acd_order.0 == 0 {
        return Err(usage("ACD order p must be at least 1"));
    }

    let data = plan.load()?;
    check_features(&models, &data)?;
    let stats = fit_scaling(&data.series, data.splits.train.clone())?;
    let scaled = apply_scaling(&data.series, &stats)?;
    let models_dir = ctx.output_dir.join("models");

    let results: Vec<Result<String, CliError>> = ctx.pool()?.install(|| {
        models
            .par_iter()
            .map(|&kind| {
                let dir = models_dir.join(kind.name());
                match kind.hybrid_spec() {
                    None => {
                        let train_d = &scaled.durations[data.splits.train.clone()];
                        let fit = acd_fit(train_d, acd_order.0, acd_order.1, &FitOptions::default())?;
                        // Back to original units: ω and μ scale with the mean, α and β do not.
                        let m = stats.duration_mean;
                        let p = &fit.params;
                        let params = AcdParams::new(p.omega * m, p.alphas.clone(), p.betas.clone())?;
                        let mut file = AcdModelFile::new(&params, fit.presample_mu * m, Some(&fit), Some(stats.clone()));
                        file.nll = fit.nll + train_d.len() as f64 * m.ln();
                        create_dir(&dir)?;
                        file.save(&dir.join(ACD_FILE))?;
                        Ok(format!(
                            "{kind}: omega {} alpha {:?} beta {:?} ({} iterations{})",
                            params.omega,
                            params.alphas,
                            params.betas,
                            fit.iterations,
                            if fit.converged { "" } else { ", not converged" }
                        ))
                    }
                    Some(spec) => {
                        let model = match train(&spec, &scaled, &data.splits, &config) {
                            Ok(m) => m,
                            Err(TrainError::Diverged { step, reason, checkpoint }) => {
                                save_checkpoint(&checkpoint, &dir)?;
                                return Err(Error::Numeric(format!(
                                    "{kind} diverged at step {step}: {reason}; best weights saved in {}",
                                    dir.display()
                                ))
                                .into());
                            }
                            Err(TrainError::Setup(e)) => return Err(e.into()),
                        };
                        save_checkpoint(&model, &dir)?;
                        Ok(format!(
                            "{kind}: best validation NLL {} at step {} of {}",
                            model.best_val_nll, model.best_step, model.steps_run
                        ))
                    }
                }
            })
            .collect()
    });
    let mut first_err = None;
    for r in results {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("error: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn save_checkpoint(model: &TrainedModel, dir: &Path) -> Result<(), CliError> {
    model.save(dir)?;
    let mut csv = String::from("step,train_nll,val_nll\n");
    for h in &model.history {
        let _ = writeln!(csv, "{},{},{}", h.step, h.train_nll, h.val_nll);
    }
    write_file(&dir.join("history.csv"), &csv)
}

enum Fitted {
    Acd(AcdModelFile),
    Net(Box<TrainedModel>),
}

fn load_fitted(models_dir: &Path, kind: ModelKind) -> Result<Fitted, CliError> {
    let dir = models_dir.join(kind.name());
    Ok(match kind {
        ModelKind::Acd => Fitted::Acd(AcdModelFile::load(&dir.join(ACD_FILE))?),
        _ => {
            let m = TrainedModel::load(&dir)?;
            if m.kind() != kind {
                return Err(Error::format(&dir, format!("checkpoint holds {}, not {kind}", m.kind())).into());
            }
            Fitted::Net(Box::new(m))
        }
    })
}

fn models_dir(ctx: &Context, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(|| ctx.output_dir.join("models"))
}

fn evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<(), CliError> {
    let plan = DataPlan::resolve(ctx, &args.data)?;
    let alphas = if args.alpha_levels.is_empty() {
        ctx.cfg.alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec())
    } else {
        args.alpha_levels.clone()
    };
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(usage(format!("probability level {a} outside (0, 1)")));
    }
    let tail: Tail = args.tail.map(Into::into).or(ctx.cfg.tail).unwrap_or_default();
    let dir = models_dir(ctx, &args.models_dir);
    let mut models = requested_models(ctx, &args.model);
    if models.is_empty() {
        models = ModelKind::ALL.into_iter().filter(|k| dir.join(k.name()).is_dir()).collect();
    }
    if models.is_empty() {
        return Err(Error::InsufficientData(format!("no fitted models in {}", dir.display())).into());
    }
    let fitted: Vec<(ModelKind, Fitted)> =
        models.iter().map(|&k| Ok((k, load_fitted(&dir, k)?))).collect::<Result<_, CliError>>()?;
    let data = plan.load()?;
    let test = data.splits.test.clone();
    let durations = &data.series.durations;
    if test.start == 0 {
        return Err(Error::InsufficientData("the test range needs one preceding observation".into()).into());
    }
    let reals = &durations[test.start - 1..test.end];

    let results: Vec<Result<(EvalReport, Vec<f64>), CliError>> = ctx.pool()?.install(|| {
        fitted
            .par_iter()
            .map(|(kind, f)| {
                let mu_hat = match f {
                    Fitted::Acd(file) => acd_recursion(&file.params()?, durations, file.presample_mu)?[test.clone()].to_vec(),
                    Fitted::Net(model) => predict_series(model, &data.series, test.clone())?.mu_hat,
                };
                let report = EvalReport::build(kind.name(), &plan.instrument, test.clone(), reals, &mu_hat, &alphas, tail)?;
                Ok((report, mu_hat))
            })
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let reports_dir = ctx.output_dir.join("reports");
    let pred_dir = ctx.output_dir.join("predictions");
    create_dir(&reports_dir)?;
    create_dir(&pred_dir)?;
    println!("{:<18}{:>14}{:>14}{:>14}", "model", "MAE", "lagged MAE", "difference");
    for (report, mu_hat) in &results {
        report.save(&reports_dir.join(format!("{}.toml", report.model)))?;
        write_file(&reports_dir.join(format!("{}.csv", report.model)), &report.to_csv())?;
        let mut csv = String::from("index,duration,mu_hat\n");
        for (k, mu) in mu_hat.iter().enumerate() {
            let i = test.start + k;
            let _ = writeln!(csv, "{i},{},{mu}", durations[i]);
        }
        write_file(&pred_dir.join(format!("{}.csv", report.model)), &csv)?;
        println!("{:<18}{:>14.6}{:>14.6}{:>14.6}", report.model, report.mae, report.mae_lagged, report.mae_difference);
    }
    if let Some(mu) = &data.latent_mu {
        let oracle = mae(&mu[test.clone()], &reals[1..])?;
        println!("{:<18}{oracle:>14.6}", "latent mean");
    }
    Ok(())
}

fn report_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| io_err(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "toml"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn compare_reports(ctx: &Context, args: &CompareArgs) -> Result<(), CliError> {
    let inputs = if args.reports.is_empty() { vec![ctx.output_dir.join("reports")] } else { args.reports.clone() };
    let paths = report_paths(&inputs)?;
    let reports = paths.iter().map(|p| EvalReport::load(p)).collect::<Result<Vec<_>, _>>()?;
    let cmp = compare(&reports)?;
    create_dir(&ctx.output_dir)?;
    write_file(&ctx.output_dir.join("comparison.csv"), &cmp.table_csv())?;
    write_file(&ctx.output_dir.join("tallies.csv"), &cmp.tallies_csv())?;
    let text = cmp.to_text();
    write_file(&ctx.output_dir.join("comparison.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn attention(ctx: &Context, args: &AttentionArgs) -> Result<(), CliError> {
    let kind = args.model.unwrap_or(ModelKind::AttnLstmAcd);
    if kind.hybrid_spec().is_none_or(|s| s.variant != Variant::AttnLstmAcd) {
        return Err(usage(format!("{kind} has no attention layer")));
    }
    let plan = DataPlan::resolve(ctx, &args.data)?;
    let dir = models_dir(ctx, &args.models_dir);
    let Fitted::Net(model) = load_fitted(&dir, kind)? else { unreachable!("attention models are networks") };
    let data = plan.load()?;
    let pred = predict_series(&model, &data.series, data.splits.test.clone())?;
    let rows = pred.attention.as_deref().unwrap_or_default();
    let profile = attention_profile(rows)?;
    let out_dir = ctx.output_dir.join("attention");
    create_dir(&out_dir)?;
    let path = out_dir.join(format!("{kind}.csv"));
    write_file(&path, &profile.to_csv())?;
    let t = profile.weights.len();
    println!("{kind}: lag 1 weight {:.6}, lag {t} weight {:.6}; profile in {}", profile.lag(1), profile.lag(t), path.display());
    Ok(())
}

fn stats(ctx: &Context, args: &StatsArgs) -> Result<(), CliError> {
    if args.max_lag == 0 {
        return Err(usage("--max-lag must be positive"));
    }
    let plan = DataPlan::resolve(ctx, &args.data)?;
    let data = plan.load()?;
    let d = &data.series.durations;
    let a = acf(d, args.max_lag)?;
    let p = pacf(d, args.max_lag)?;
    let summary = summarize(d)?;

    let out_dir = ctx.output_dir.join("stats");
    create_dir(&out_dir)?;
    let mut csv = String::from("lag,acf,pacf\n");
    for k in 1..=args.max_lag {
        let _ = writeln!(csv, "{k},{},{}", a[k], p[k]);
    }
    write_file(&out_dir.join(format!("{}_acf.csv", plan.instrument)), &csv)?;
    let mut text = format!("instrument = {:?}\ndropped_premarket = {}\n", plan.instrument, data.dropped_premarket);
    text.push_str(&toml::to_string(&summary).map_err(|e| Error::format(&out_dir, e))?);
    write_file(&out_dir.join(format!("{}_summary.toml", plan.instrument)), &text)?;
    println!(
        "{}: {} durations, mean {:.6}, acf(1) {:.4}, pacf(1) {:.4}",
        plan.instrument, summary.n, summary.mean, a[1], p[1]
    );
    Ok(())
}
