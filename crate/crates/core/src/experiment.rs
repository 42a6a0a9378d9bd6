//! Task runners behind the command line: each reads a validated
//! configuration, writes its outputs into a run directory and returns a
//! JSON summary.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::basis::{enumerate_indices, TruncationVector};
use crate::bench::{
    fit_emulator, run_benchmark, write_benchmark_csv, write_timings_csv, EmulatorSettings,
    ModelKind, TruthFn,
};
use crate::config::{ExperimentConfig, Task, TestSource, TrainSource};
use crate::dynamics::{
    ensemble_forward, ensemble_spread, fit_dynamics, forward_simulate, integrate,
    make_training_data, sindy_baseline, state_names, trajectory_rmse, CoefMatrix, DynFitConfig,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::io::{
    coefficient_report, write_chain, write_json, write_predictions, write_trajectories, RunDir,
    SeedManifest,
};
use crate::model::{Dataset, Hyperparameters, NoiseModel};
use crate::predict::{empirical_coverage, mae, mean_interval_width, rmse};
use crate::stochastic::RngHandle;
use crate::testfns::simulate_from_prior;

const DATA_STREAM: u64 = 0x1000;
const CHAIN_STREAM: u64 = 0x2000;
const DRAW_STREAM: u64 = 0x3000;

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Value,
}

/// Validates `config`, creates its run directory and runs the task.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let task = config
        .task
        .ok_or_else(|| Error::Config("no task given".into()))?;
    let dir = RunDir::create(RunDir::resolve(config.out.as_deref(), task.name()))?;
    dir.write_text("config.toml", &config.to_toml_string()?)?;
    let mut seeds = SeedManifest::new(config.seed);
    let summary = match task {
        Task::Emulate => emulate(config, &dir, &mut seeds)?,
        Task::Recover => recover(config, &dir, &mut seeds)?,
        Task::SimulatePrior => simulate_prior(config, &dir, &mut seeds)?,
        Task::Benchmark => benchmark(config, &dir, &mut seeds)?,
    };
    dir.write_manifest(&seeds)?;
    write_json(&summary, dir.create_file("summary.json")?)?;
    Ok(RunOutcome {
        dir: dir.path,
        summary,
    })
}

fn uniform_points(n: usize, d: usize, rng: &mut RngHandle) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.uniform())
}

/// Cell-centred grid, last coordinate fastest.
pub fn grid_points(per_dim: usize, d: usize) -> DMatrix<f64> {
    let total = per_dim.pow(d as u32);
    DMatrix::from_fn(total, d, |i, m| {
        let stride = per_dim.pow((d - 1 - m) as u32);
        ((i / stride) % per_dim) as f64 / per_dim as f64 + 0.5 / per_dim as f64
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn emulate(config: &ExperimentConfig, dir: &RunDir, seeds: &mut SeedManifest) -> Result<Value> {
    let d = config.sampler.k.len();
    let mut rng = RngHandle::with_stream(config.seed, DATA_STREAM);
    seeds.push("training and test inputs", DATA_STREAM);
    let truth: Option<TruthFn>;
    let train = match &config.emulate.train {
        TrainSource::Csv { path } => {
            truth = None;
            Dataset::from_csv_path(path, NoiseModel::Noisy)?
        }
        TrainSource::Json { path } => {
            truth = None;
            Dataset::from_json_str(&std::fs::read_to_string(path)?)?
        }
        TrainSource::Function { name, n, noise_sd } => {
            let (name, printed) = (*name, config.branin_as_printed);
            let f = move |x: &[f64]| name.eval(x, printed);
            let x = uniform_points(*n, d, &mut rng);
            let y = DVector::from_iterator(
                *n,
                rows(&x)
                    .iter()
                    .map(|p| f(p) + noise_sd * rng.standard_normal()),
            );
            truth = Some(Box::new(f));
            Dataset::new(x, y, NoiseModel::Noisy)?
        }
        TrainSource::Prior { n, noise_sd } => {
            let f =
                simulate_from_prior(&config.sampler.k, &Hyperparameters::simulation(), &mut rng)?;
            let x = uniform_points(*n, d, &mut rng);
            let y = DVector::from_iterator(
                *n,
                rows(&x)
                    .iter()
                    .map(|p| f.eval(p) + noise_sd * rng.standard_normal()),
            );
            truth = Some(Box::new(move |p: &[f64]| f.eval(p)));
            Dataset::new(x, y, NoiseModel::Noisy)?
        }
    };
    if train.dim() != d {
        return Err(Error::Config(format!(
            "training data has {} inputs but sampler.k has {d} entries",
            train.dim()
        )));
    }
    if let Err(e) = train.check_unit_cube() {
        log::warn!("{e}");
    }
    let (test, test_truth): (DMatrix<f64>, Option<Vec<f64>>) = match &config.emulate.test {
        TestSource::Csv { path } => {
            let t = Dataset::from_csv_path(path, NoiseModel::Noisy)?;
            if t.dim() != d {
                return Err(Error::Config(format!(
                    "test data has {} inputs, expected {d}",
                    t.dim()
                )));
            }
            let y = t.responses.iter().copied().collect();
            (t.points, Some(y))
        }
        TestSource::Grid { per_dim } => {
            let g = grid_points(*per_dim, d);
            let t = truth
                .as_ref()
                .map(|f| rows(&g).iter().map(|p| f(p)).collect());
            (g, t)
        }
        TestSource::Random { n } => {
            let g = uniform_points(*n, d, &mut rng);
            let t = truth
                .as_ref()
                .map(|f| rows(&g).iter().map(|p| f(p)).collect());
            (g, t)
        }
    };
    train.write_csv(dir.create_file("train.csv")?)?;

    let s = &config.sampler;
    let settings = EmulatorSettings {
        k: s.k.clone(),
        iterations: s.iterations,
        burn_in: s.burn_in,
        thinning: s.thinning,
        seed: config.seed,
        stream: CHAIN_STREAM,
        hyper: config.hyper.clone(),
        adaptive: config.adaptive.clone(),
        level: config.emulate.level,
        include_noise: config.emulate.include_noise,
        lasso_folds: 5.min(train.n()).max(2),
        matern_grid: Default::default(),
        proposal_scale: s.proposal_scale,
        local_scale_bound: s.local_scale_bound,
        center: s.center,
    };
    seeds.push("sampler chain / lasso folds", CHAIN_STREAM);
    let out = fit_emulator(config.model, &train, &test, &settings)?;
    let (lower, upper) = out
        .interval
        .clone()
        .unwrap_or_else(|| (out.mean.clone(), out.mean.clone()));
    write_predictions(
        &test,
        &out.mean,
        &lower,
        &upper,
        test_truth.as_deref(),
        dir.create_file("predictions.csv")?,
    )?;

    let mut summary = json!({
        "task": "emulate",
        "model": config.model.name(),
        "n_train": train.n(),
        "n_test": test.nrows(),
        "level": config.emulate.level,
    });
    if let Some(chain) = &out.chain {
        write_chain(chain, dir.create_file("chain.jsonl")?)?;
        summary["retained_states"] = json!(chain.len());
        summary["adaptation_events"] = json!(chain.metadata.adaptation_events.len());
        summary["inclusion"] = json!(chain.inclusion_probabilities().ok());
    }
    if let Some(t) = &test_truth {
        summary["rmse"] = json!(rmse(&out.mean, t)?);
        summary["mae"] = json!(mae(&out.mean, t)?);
        if out.interval.is_some() {
            summary["coverage"] = json!(empirical_coverage(&lower, &upper, t)?);
            summary["mean_width"] = json!(mean_interval_width(&lower, &upper)?);
        }
    }
    Ok(summary)
}

fn max_relative_error(est: &CoefMatrix, truth: &CoefMatrix) -> f64 {
    truth
        .xi
        .iter()
        .zip(est.xi.iter())
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, e)| ((e - t) / t).abs())
        .fold(0.0, f64::max)
}

fn spread_at(spread: &[f64], dt: f64, t: f64) -> Option<f64> {
    let i = (t / dt).round() as usize;
    spread.get(i).copied()
}

fn recover(config: &ExperimentConfig, dir: &RunDir, seeds: &mut SeedManifest) -> Result<Value> {
    let r = &config.recover;
    let res = r.resolve();
    let q = r.system.dim();
    let mut rng = RngHandle::with_stream(config.seed, DATA_STREAM);
    seeds.push("derivative noise", DATA_STREAM);
    let data = make_training_data(
        &r.system,
        &res.x0,
        res.dt,
        res.n,
        r.noise_var,
        r.corrupt_states,
        &mut rng,
    )?;
    {
        let mut w = csv::Writer::from_writer(dir.create_file("training.csv")?);
        let mut header = vec!["t".to_string()];
        header.extend((1..=q).map(|m| format!("x_{m}")));
        header.extend((1..=q).map(|m| format!("dx_{m}")));
        w.write_record(&header)?;
        for i in 0..res.n {
            let mut row = vec![data.times[i].to_string()];
            row.extend(data.states.row(i).iter().map(|v| v.to_string()));
            row.extend(data.derivatives.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let trunc = TruncationVector::monomial_library(&res.k)?;
    let truth = r.system.true_coefficients(&trunc).ok();
    let sindy = sindy_baseline(&data, &trunc, None)?;
    let truth_path = integrate(&r.system, &res.x0, res.dt, res.horizon, r.substeps)?;
    let sindy_path = forward_simulate(&sindy, &res.x0, res.dt, res.horizon, r.substeps)?;

    let mut summary = json!({
        "task": "recover",
        "model": config.model.name(),
        "system": r.system,
        "n": res.n,
        "dt": res.dt,
        "k": res.k,
        "horizon": res.horizon,
        "sindy_trajectory_rmse": trajectory_rmse(&sindy_path, &truth_path),
        "sindy_terms": sindy.support().iter().map(|c| c.iter().filter(|b| **b).count()).collect::<Vec<_>>(),
    });
    if let Some(t) = &truth {
        summary["sindy_support_recovered"] = json!(sindy.support() == t.support());
        summary["sindy_max_relative_error"] = json!(max_relative_error(&sindy, t));
    }

    if config.model == ModelKind::Sindy {
        let names = state_names(q);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let labels = sindy.labels(&refs);
        let coefs: Vec<Value> = (0..q)
            .map(|m| {
                json!({
                    "coordinate": names[m],
                    "terms": labels.iter().enumerate().map(|(j, l)| json!({"term": l, "value": sindy.xi[(j, m)]})).collect::<Vec<_>>(),
                })
            })
            .collect();
        write_json(
            &json!({"schema_version": 1, "coordinates": coefs}),
            dir.create_file("coefficients.json")?,
        )?;
        write_trajectories(
            &[("truth".into(), &truth_path), ("sindy".into(), &sindy_path)],
            dir.create_file("trajectories.csv")?,
        )?;
        return Ok(summary);
    }

    let mut hyper = config.hyper.clone();
    hyper.sigma_inf_sq = r.sigma_inf_sq;
    let fit_cfg = DynFitConfig {
        iterations: r.iterations,
        seed: config.seed,
        ..DynFitConfig::default()
    };
    for m in 0..q {
        seeds.push(format!("chain for coordinate {}", m + 1), m as u64);
    }
    let post = fit_dynamics(&data, &trunc, &hyper, &fit_cfg)?;
    let median = post.median();
    let mean = post.mean();
    let selected_median = post.selected_median();
    let selected_path =
        forward_simulate(&selected_median, &res.x0, res.dt, res.horizon, r.substeps)?;
    let median_path = forward_simulate(&median, &res.x0, res.dt, res.horizon, r.substeps)?;
    let mean_path = forward_simulate(&mean, &res.x0, res.dt, res.horizon, r.substeps)?;
    let ensemble = ensemble_forward(&post, r.ensemble, &res.x0, res.dt, res.horizon, r.substeps)?;
    let spread = ensemble_spread(&ensemble);

    let report = coefficient_report(&post, r.level, truth.as_ref(), Some(&sindy))?;
    write_json(&report, dir.create_file("coefficients.json")?)?;
    let mut labelled: Vec<(String, &Trajectory)> = vec![
        ("truth".into(), &truth_path),
        ("median".into(), &median_path),
        ("mean".into(), &mean_path),
        ("sindy".into(), &sindy_path),
    ];
    labelled.extend(ensemble.iter().enumerate().map(|(i, t)| (i.to_string(), t)));
    write_trajectories(&labelled, dir.create_file("trajectories.csv")?)?;
    {
        let mut w = csv::Writer::from_writer(dir.create_file("spread.csv")?);
        w.write_record(["t", "spread"])?;
        for (i, s) in spread.iter().enumerate() {
            w.write_record([(i as f64 * res.dt).to_string(), s.to_string()])?;
        }
        w.flush()?;
    }

    let selected = post.selected();
    summary["hiergp_trajectory_rmse_median"] = json!(trajectory_rmse(&median_path, &truth_path));
    summary["hiergp_trajectory_rmse_selected"] =
        json!(trajectory_rmse(&selected_path, &truth_path));
    summary["hiergp_trajectory_rmse_mean"] = json!(trajectory_rmse(&mean_path, &truth_path));
    summary["selected_terms"] = json!(selected
        .iter()
        .map(|c| c.iter().filter(|b| **b).count())
        .collect::<Vec<_>>());
    summary["ensemble_blowups"] =
        json!(ensemble.iter().filter(|t| t.blown_up_at.is_some()).count());
    summary["spread_t1"] = json!(spread_at(&spread, res.dt, 1.0));
    summary["spread_t10"] = json!(spread_at(&spread, res.dt, 10.0));
    if let (Some(a), Some(b)) = (
        spread_at(&spread, res.dt, 1.0),
        spread_at(&spread, res.dt, 10.0),
    ) {
        summary["spread_ratio_10_1"] = json!(b / a);
    }
    if let Some(t) = &truth {
        summary["support_recovered"] = json!(post.selected_median().support() == t.support());
        summary["max_relative_error"] = json!(max_relative_error(&median, t));
    }
    Ok(summary)
}

fn simulate_prior(
    config: &ExperimentConfig,
    dir: &RunDir,
    seeds: &mut SeedManifest,
) -> Result<Value> {
    let s = &config.simulate;
    let d = s.k.len();
    let grid = grid_points(s.grid, d);
    let pts = rows(&grid);
    let mut w = csv::Writer::from_writer(dir.create_file("prior_draws.csv")?);
    let mut header: Vec<String> = (1..=d).map(|m| format!("x{m}")).collect();
    header.extend(["f".to_string(), "draw_id".to_string()]);
    w.write_record(&header)?;
    let mut draws = Vec::new();
    for i in 0..s.draws {
        let stream = DRAW_STREAM + i as u64;
        seeds.push(format!("prior draw {i}"), stream);
        let f = simulate_from_prior(
            &s.k,
            &s.hyper,
            &mut RngHandle::with_stream(config.seed, stream),
        )?;
        for p in &pts {
            let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            row.push(f.eval(p).to_string());
            row.push(i.to_string());
            w.write_record(&row)?;
        }
        let terms: Vec<Value> = enumerate_indices(&f.truncation)
            .into_iter()
            .zip(&f.lambda)
            .filter(|(_, l)| **l != 0.0)
            .map(|(k, l)| json!({"index": k, "lambda": l}))
            .collect();
        draws.push(json!({"draw_id": i, "active": f.active_count(), "w": f.w, "terms": terms}));
    }
    w.flush()?;
    let actives: Vec<usize> = draws
        .iter()
        .map(|v| v["active"].as_u64().unwrap_or(0) as usize)
        .collect();
    write_json(
        &json!({"schema_version": 1, "k": s.k, "draws": draws}),
        dir.create_file("prior_coefficients.json")?,
    )?;
    Ok(json!({
        "task": "simulate-prior",
        "k": s.k,
        "draws": s.draws,
        "grid_points": grid.nrows(),
        "active_terms": actives,
    }))
}

fn benchmark(config: &ExperimentConfig, dir: &RunDir, seeds: &mut SeedManifest) -> Result<Value> {
    let study = &config.benchmark;
    for r in 0..study.replications {
        seeds.push(format!("replication {r} data"), DATA_STREAM + r as u64);
        seeds.push(format!("replication {r} chains"), CHAIN_STREAM + r as u64);
    }
    let report = run_benchmark(study)?;
    write_benchmark_csv(&report.rows, dir.create_file("benchmark.csv")?)?;
    write_timings_csv(&report.timings, dir.create_file("timings.csv")?)?;
    Ok(json!({
        "task": "benchmark",
        "schema_version": report.schema_version,
        "replications": study.replications,
        "summary": report.summary,
    }))
}
