//! Replicated emulation studies comparing the shrinkage models with the baselines.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::adaptive::AdaptiveConfig;
use crate::baselines::{lasso_cv, matern_gp_fit, matern_gp_predict, ols_fit, MaternGrid};
use crate::basis::{build_design_matrix, BasisFamily, TruncationVector};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain, GibbsConfig};
use crate::horseshoe::hs_run_chain;
use crate::model::{Dataset, Hyperparameters, NoiseModel, PosteriorChain};
use crate::predict::{empirical_coverage, mae, mean_interval_width, predict, rmse, PredictOptions};
use crate::stochastic::RngHandle;
use crate::testfns::{simulate_from_prior, TestFunction};

pub const BENCH_SCHEMA_VERSION: u32 = 1;

const DATA_STREAM: u64 = 0x1000;
const CHAIN_STREAM: u64 = 0x2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[serde(rename = "hiergp")]
    HierGp,
    #[serde(rename = "hiergp2")]
    HierGp2,
    Ols,
    Lasso,
    Matern,
    Sindy,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::HierGp => "hiergp",
            ModelKind::HierGp2 => "hiergp2",
            ModelKind::Ols => "ols",
            ModelKind::Lasso => "lasso",
            ModelKind::Matern => "matern",
            ModelKind::Sindy => "sindy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "hiergp" => ModelKind::HierGp,
            "hiergp2" => ModelKind::HierGp2,
            "ols" => ModelKind::Ols,
            "lasso" => ModelKind::Lasso,
            "matern" => ModelKind::Matern,
            "sindy" => ModelKind::Sindy,
            other => return Err(Error::Config(format!("unknown model '{other}'"))),
        })
    }

    /// Whether the model produces predictive intervals.
    pub fn has_intervals(&self) -> bool {
        matches!(
            self,
            ModelKind::HierGp | ModelKind::HierGp2 | ModelKind::Matern
        )
    }
}

/// Where the true function of each replication comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TruthSource {
    /// A fresh draw from the shrinkage prior per replication.
    Prior {
        #[serde(default = "Hyperparameters::simulation")]
        hyper: Hyperparameters,
    },
    Function {
        name: TestFunction,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmulationStudy {
    pub truth: TruthSource,
    /// Truncation used both for prior truths and for the fitted models.
    pub k: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    /// Standard deviation of the noise added to training responses.
    pub noise_sd: f64,
    pub replications: usize,
    pub seed: u64,
    pub models: Vec<ModelKind>,
    pub iterations: usize,
    pub burn_in: Option<usize>,
    pub hyper: Hyperparameters,
    pub adaptive: Option<AdaptiveConfig>,
    pub level: f64,
    pub lasso_folds: usize,
    pub matern_grid: MaternGrid,
    pub branin_as_printed: bool,
}

impl Default for EmulationStudy {
    fn default() -> Self {
        Self {
            truth: TruthSource::Prior {
                hyper: Hyperparameters::simulation(),
            },
            k: vec![8, 8],
            n_train: 70,
            n_test: 400,
            noise_sd: 0.1,
            replications: 20,
            seed: 0,
            models: vec![
                ModelKind::HierGp,
                ModelKind::HierGp2,
                ModelKind::Ols,
                ModelKind::Lasso,
                ModelKind::Matern,
            ],
            iterations: 4000,
            burn_in: None,
            hyper: Hyperparameters::default(),
            adaptive: None,
            level: 0.95,
            lasso_folds: 5,
            matern_grid: MaternGrid::default(),
            branin_as_printed: false,
        }
    }
}

impl EmulationStudy {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("model list is empty".into()));
        }
        if self.models.contains(&ModelKind::Sindy) {
            return Err(Error::Config(
                "sindy applies to dynamics recovery, not emulation".into(),
            ));
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(Error::Config(format!("invalid truncation {:?}", self.k)));
        }
        if let TruthSource::Function { .. } = self.truth {
            if self.k.len() != 2 {
                return Err(Error::Config(
                    "named test functions are two-dimensional".into(),
                ));
            }
        }
        if self.n_train < 2 || self.n_test == 0 || self.replications == 0 {
            return Err(Error::Config(
                "need n_train >= 2, n_test >= 1 and at least one replication".into(),
            ));
        }
        if !(self.noise_sd >= 0.0) || !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(
                "noise_sd must be >= 0 and level in (0,1)".into(),
            ));
        }
        if self.lasso_folds < 2 || self.lasso_folds > self.n_train {
            return Err(Error::Config(format!(
                "lasso_folds must be in 2..=n_train, got {}",
                self.lasso_folds
            )));
        }
        if self.iterations == 0 || self.burn_in.is_some_and(|b| b >= self.iterations) {
            return Err(Error::Config("need iterations > burn_in".into()));
        }
        self.hyper
            .validate(false)
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(a) = &self.adaptive {
            a.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }
}

/// One replication's data: training set, test points and noiseless test truth.
#[derive(Clone, Debug)]
pub struct Replicate {
    pub train: Dataset,
    pub test_points: DMatrix<f64>,
    pub test_truth: Vec<f64>,
}

pub(crate) type TruthFn = Box<dyn Fn(&[f64]) -> f64>;

pub fn make_replicate(study: &EmulationStudy, r: usize) -> Result<Replicate> {
    let d = study.dim();
    let mut rng = RngHandle::with_stream(study.seed, DATA_STREAM + r as u64);
    let truth: TruthFn = match &study.truth {
        TruthSource::Prior { hyper } => {
            let f = simulate_from_prior(&study.k, hyper, &mut rng)?;
            Box::new(move |x| f.eval(x))
        }
        TruthSource::Function { name } => {
            let (name, printed) = (*name, study.branin_as_printed);
            Box::new(move |x| name.eval(x, printed))
        }
    };
    let train_x = DMatrix::from_fn(study.n_train, d, |_, _| rng.uniform());
    let test_x = DMatrix::from_fn(study.n_test, d, |_, _| rng.uniform());
    let row = |m: &DMatrix<f64>, i: usize| -> Vec<f64> { m.row(i).iter().copied().collect() };
    let y = DVector::from_fn(study.n_train, |i, _| {
        truth(&row(&train_x, i)) + study.noise_sd * rng.standard_normal()
    });
    let test_truth = (0..study.n_test).map(|i| truth(&row(&test_x, i))).collect();
    Ok(Replicate {
        train: Dataset::new(train_x, y, NoiseModel::Noisy)?,
        test_points: test_x,
        test_truth,
    })
}

/// Per-replication, per-model metrics. Interval columns are `None` for point estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub replication: usize,
    pub model: ModelKind,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub coverage: Option<f64>,
    pub width: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub replication: usize,
    pub model: ModelKind,
    pub seconds: f64,
}

/// Settings shared by every emulator in a single fit.
#[derive(Clone, Debug)]
pub struct EmulatorSettings {
    pub k: Vec<usize>,
    pub iterations: usize,
    pub burn_in: Option<usize>,
    pub thinning: usize,
    pub seed: u64,
    pub stream: u64,
    pub hyper: Hyperparameters,
    pub adaptive: Option<AdaptiveConfig>,
    pub level: f64,
    /// Widen sampler intervals by the noise so they cover new responses.
    pub include_noise: bool,
    pub lasso_folds: usize,
    pub matern_grid: MaternGrid,
    pub proposal_scale: f64,
    pub local_scale_bound: Option<f64>,
    pub center: Option<bool>,
}

impl EmulatorSettings {
    fn for_replication(study: &EmulationStudy, r: usize) -> Self {
        Self {
            k: study.k.clone(),
            iterations: study.iterations,
            burn_in: study.burn_in,
            thinning: 1,
            seed: study.seed,
            stream: CHAIN_STREAM + r as u64,
            hyper: study.hyper.clone(),
            adaptive: study.adaptive.clone(),
            level: study.level,
            include_noise: false,
            lasso_folds: study.lasso_folds,
            matern_grid: study.matern_grid.clone(),
            proposal_scale: 1.0,
            local_scale_bound: None,
            center: None,
        }
    }

    pub fn chain_config(&self) -> Result<GibbsConfig> {
        let mut c = GibbsConfig::new(
            self.iterations,
            TruncationVector::sinusoidal(&self.k)?,
            self.seed,
        );
        c.burn_in = self.burn_in;
        c.thinning = self.thinning;
        c.stream = self.stream;
        c.proposal_scale = self.proposal_scale;
        c.local_scale_bound = self.local_scale_bound;
        c.center = self.center;
        Ok(c)
    }
}

/// Point predictions, and intervals for the models that have them. Sampler
/// fits also return their chain.
#[derive(Clone, Debug)]
pub struct EmulatorOutput {
    pub mean: Vec<f64>,
    pub interval: Option<(Vec<f64>, Vec<f64>)>,
    pub chain: Option<PosteriorChain>,
}

/// Fits `model` on `train` with the sinusoidal design and predicts at `test`.
pub fn fit_emulator(
    model: ModelKind,
    train: &Dataset,
    test: &DMatrix<f64>,
    settings: &EmulatorSettings,
) -> Result<EmulatorOutput> {
    let family = BasisFamily::SINUSOIDAL;
    let trunc = TruncationVector::sinusoidal(&settings.k)?;
    let opts = PredictOptions {
        level: settings.level,
        include_noise: settings.include_noise,
        keep_samples: false,
    };
    let (x, y) = (&train.points, &train.responses);
    // least-squares baselines see the same centred sinusoidal design as the samplers
    let ybar = y.mean();
    let yc = y.add_scalar(-ybar);
    let sampled = |chain: PosteriorChain| -> Result<EmulatorOutput> {
        let p = predict(&chain, test, opts)?;
        Ok(EmulatorOutput {
            mean: p.mean,
            interval: Some((p.lower, p.upper)),
            chain: Some(chain),
        })
    };
    match model {
        ModelKind::HierGp => {
            let mut cfg = settings.chain_config()?;
            cfg.adaptive = settings.adaptive.clone();
            sampled(run_chain(train, &family, &cfg, &settings.hyper)?)
        }
        ModelKind::HierGp2 => sampled(hs_run_chain(
            train,
            &family,
            &settings.chain_config()?,
            &settings.hyper,
        )?),
        ModelKind::Ols => {
            let design = build_design_matrix(&family, &trunc, x)?;
            let beta = ols_fit(&design, &yc)?;
            let t = build_design_matrix(&family, &trunc, test)?;
            Ok(EmulatorOutput {
                mean: (t * beta).add_scalar(ybar).iter().copied().collect(),
                interval: None,
                chain: None,
            })
        }
        ModelKind::Lasso => {
            let design = build_design_matrix(&family, &trunc, x)?;
            let cv = lasso_cv(
                &design,
                y,
                None,
                settings.lasso_folds,
                settings.seed ^ settings.stream,
            )?;
            let t = build_design_matrix(&family, &trunc, test)?;
            Ok(EmulatorOutput {
                mean: cv.fit.predict(&t).iter().copied().collect(),
                interval: None,
                chain: None,
            })
        }
        ModelKind::Matern => {
            let fit = matern_gp_fit(x, y, &settings.matern_grid)?;
            let p = matern_gp_predict(&fit, test)?;
            let z = normal_quantile(0.5 + 0.5 * settings.level);
            let var = if settings.include_noise {
                &p.total_variance
            } else {
                &p.latent_variance
            };
            let half: Vec<f64> = var.iter().map(|v| z * v.sqrt()).collect();
            let lower = p.mean.iter().zip(&half).map(|(m, h)| m - h).collect();
            let upper = p.mean.iter().zip(&half).map(|(m, h)| m + h).collect();
            Ok(EmulatorOutput {
                mean: p.mean,
                interval: Some((lower, upper)),
                chain: None,
            })
        }
        ModelKind::Sindy => Err(Error::Config("sindy is not an emulation model".into())),
    }
}

fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0)
        .map(|n| n.inverse_cdf(p))
        .unwrap_or(f64::NAN)
}

fn score(study: &EmulationStudy, model: ModelKind, rep: &Replicate, r: usize) -> BenchRow {
    let mut row = BenchRow {
        replication: r,
        model,
        rmse: None,
        mae: None,
        coverage: None,
        width: None,
        error: None,
    };
    let settings = EmulatorSettings::for_replication(study, r);
    let result = fit_emulator(model, &rep.train, &rep.test_points, &settings).and_then(|f| {
        row.rmse = Some(rmse(&f.mean, &rep.test_truth)?);
        row.mae = Some(mae(&f.mean, &rep.test_truth)?);
        if let Some((lo, hi)) = f.interval {
            row.coverage = Some(empirical_coverage(&lo, &hi, &rep.test_truth)?);
            row.width = Some(mean_interval_width(&lo, &hi)?);
        }
        Ok(())
    });
    if let Err(e) = result {
        log::warn!("replication {r}, model {}: {e}", model.name());
        row.error = Some(e.to_string());
    }
    row
}

pub fn run_replication(study: &EmulationStudy, r: usize) -> (Vec<BenchRow>, Vec<Timing>) {
    let rep = match make_replicate(study, r) {
        Ok(rep) => rep,
        Err(e) => {
            let rows = study
                .models
                .iter()
                .map(|&model| BenchRow {
                    replication: r,
                    model,
                    rmse: None,
                    mae: None,
                    coverage: None,
                    width: None,
                    error: Some(e.to_string()),
                })
                .collect();
            return (rows, vec![]);
        }
    };
    let mut rows = Vec::new();
    let mut times = Vec::new();
    for &model in &study.models {
        let t0 = Instant::now();
        rows.push(score(study, model, &rep, r));
        times.push(Timing {
            replication: r,
            model,
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    (rows, times)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub completed: usize,
    pub failed: usize,
    pub median_rmse: Option<f64>,
    pub mean_rmse: Option<f64>,
    pub median_mae: Option<f64>,
    pub mean_coverage: Option<f64>,
    pub mean_width: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub rows: Vec<BenchRow>,
    pub summary: Vec<ModelSummary>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

impl BenchmarkReport {
    pub fn summary_for(&self, model: ModelKind) -> Option<&ModelSummary> {
        self.summary.iter().find(|s| s.model == model)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn summarize(rows: &[BenchRow], models: &[ModelKind]) -> Vec<ModelSummary> {
    models
        .iter()
        .map(|&model| {
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.model == model).collect();
            let pick = |f: fn(&BenchRow) -> Option<f64>| {
                mine.iter().filter_map(|r| f(r)).collect::<Vec<f64>>()
            };
            let rmse = pick(|r| r.rmse);
            ModelSummary {
                model,
                completed: rmse.len(),
                failed: mine.iter().filter(|r| r.error.is_some()).count(),
                median_rmse: median(&rmse),
                mean_rmse: mean(&rmse),
                median_mae: median(&pick(|r| r.mae)),
                mean_coverage: mean(&pick(|r| r.coverage)),
                mean_width: mean(&pick(|r| r.width)),
            }
        })
        .collect()
}

/// Runs every replication (in parallel when enabled); rows come back ordered
/// by replication, then by the model order of the study.
pub fn run_benchmark(study: &EmulationStudy) -> Result<BenchmarkReport> {
    study.validate()?;
    #[cfg(feature = "parallel")]
    let parts: Vec<_> = (0..study.replications)
        .into_par_iter()
        .map(|r| run_replication(study, r))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<_> = (0..study.replications)
        .map(|r| run_replication(study, r))
        .collect();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (r, t) in parts {
        rows.extend(r);
        timings.extend(t);
    }
    let summary = summarize(&rows, &study.models);
    Ok(BenchmarkReport {
        schema_version: BENCH_SCHEMA_VERSION,
        rows,
        summary,
        timings,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

/// Long-format metrics table. Timings are kept out so reruns compare bit-exactly.
pub fn write_benchmark_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "replication",
        "model",
        "rmse",
        "mae",
        "coverage",
        "width",
        "status",
    ])?;
    for r in rows {
        let status = r
            .error
            .as_deref()
            .map_or("ok".to_string(), |e| format!("error: {e}"));
        w.write_record([
            r.replication.to_string(),
            r.model.name().to_string(),
            opt(r.rmse),
            opt(r.mae),
            opt(r.coverage),
            opt(r.width),
            status,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv<W: Write>(timings: &[Timing], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replication", "model", "seconds"])?;
    for t in timings {
        w.write_record([
            t.replication.to_string(),
            t.model.name().to_string(),
            format!("{:.6}", t.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EmulationStudy {
        EmulationStudy {
            k: vec![3, 3],
            n_train: 30,
            n_test: 20,
            replications: 3,
            iterations: 300,
            matern_grid: MaternGrid {
                lengthscales: vec![0.1, 0.5],
                amplitude_factors: vec![1.0],
                nugget_factors: vec![1e-2],
            },
            ..EmulationStudy::default()
        }
    }

    #[test]
    fn empty_model_list_is_rejected() {
        let s = EmulationStudy {
            models: vec![],
            ..small()
        };
        assert!(matches!(run_benchmark(&s), Err(Error::Config(_))));
        let s = EmulationStudy {
            models: vec![ModelKind::Sindy],
            ..small()
        };
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rows_have_a_stable_layout() {
        let s = small();
        let rep = run_benchmark(&s).unwrap();
        assert_eq!(rep.rows.len(), 3 * s.models.len());
        for (i, row) in rep.rows.iter().enumerate() {
            assert_eq!(row.replication, i / s.models.len());
            assert_eq!(row.model, s.models[i % s.models.len()]);
            assert!(row.error.is_none(), "{:?}", row.error);
            assert_eq!(row.coverage.is_some(), row.model.has_intervals());
        }
        let mut buf = Vec::new();
        write_benchmark_csv(&rep.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("replication,model,rmse,mae,coverage,width,status\n"));
        assert_eq!(text.lines().count(), 1 + rep.rows.len());
    }

    #[test]
    fn reruns_are_identical() {
        let s = EmulationStudy {
            replications: 2,
            ..small()
        };
        let a = run_benchmark(&s).unwrap();
        let b = run_benchmark(&s).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn replicates_depend_on_index_only() {
        let s = small();
        let a = make_replicate(&s, 1).unwrap();
        let b = make_replicate(
            &EmulationStudy {
                replications: 9,
                ..s.clone()
            },
            1,
        )
        .unwrap();
        assert_eq!(a.train.responses, b.train.responses);
        assert_eq!(a.test_truth, b.test_truth);
        let c = make_replicate(&s, 2).unwrap();
        assert_ne!(a.train.responses, c.train.responses);
    }

    #[test]
    fn named_truth_is_noise_free_on_test_points() {
        let s = EmulationStudy {
            truth: TruthSource::Function {
                name: TestFunction::ChengSandu,
            },
            ..small()
        };
        let rep = make_replicate(&s, 0).unwrap();
        for i in 0..s.n_test {
            let x = [rep.test_points[(i, 0)], rep.test_points[(i, 1)]];
            assert_eq!(rep.test_truth[i], crate::testfns::cheng_sandu(&x));
        }
    }

    #[test]
    fn summary_medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
