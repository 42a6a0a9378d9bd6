//! Posterior predictive summaries and the accuracy metrics used in the benchmarks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::basis::{build_design_matrix, enumerate_indices, BasisFamily, TruncationVector};
use crate::error::{Error, Result};
use crate::model::{ChainState, PosteriorChain};
use crate::stochastic::RngHandle;

/// Stream used for predictive noise draws, separate from the sampler's.
const PREDICT_STREAM: u64 = 0x5eed_0001;

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionResult {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    /// Function values per retained state (rows) and point (columns).
    pub samples: Option<DMatrix<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictOptions {
    pub level: f64,
    /// Add `N(0, theta^2)` to every draw so intervals cover noisy responses.
    pub include_noise: bool,
    pub keep_samples: bool,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            include_noise: false,
            keep_samples: false,
        }
    }
}

/// `sum_k lambda_k phi_k(x) + centering + offset` for one state.
pub fn eval_function_sample(
    state: &ChainState,
    family: &BasisFamily,
    template: &TruncationVector,
    centering: f64,
    x: &[f64],
) -> f64 {
    let indices = enumerate_indices(&state.truncation(template));
    indices
        .iter()
        .zip(&state.lambda)
        .map(|(k, l)| l * family.eval(k, x))
        .sum::<f64>()
        + centering
        + state.offset
}

/// Function values of every retained state at every point (states x points).
pub fn function_samples(chain: &PosteriorChain, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let meta = &chain.metadata;
    if points.ncols() != meta.truncation.dim() {
        return Err(Error::mismatch(format!(
            "points have {} columns, model has {} dimensions",
            points.ncols(),
            meta.truncation.dim()
        )));
    }
    let mut designs: BTreeMap<Vec<usize>, DMatrix<f64>> = BTreeMap::new();
    let mut out = DMatrix::zeros(chain.len(), points.nrows());
    for (s, state) in chain.states.iter().enumerate() {
        if !designs.contains_key(&state.max_index) {
            let trunc = state.truncation(&meta.truncation);
            designs.insert(
                state.max_index.clone(),
                build_design_matrix(&meta.family, &trunc, points)?,
            );
        }
        let x = &designs[&state.max_index];
        let f = x * DVector::from_column_slice(&state.lambda);
        for (j, v) in f.iter().enumerate() {
            out[(s, j)] = v + meta.centering + state.offset;
        }
    }
    Ok(out)
}

/// Inverse-CDF empirical quantile of sorted values.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[idx - 1]
}

/// Equal-tailed empirical interval bounds at `level`.
pub fn equal_tailed(values: &[f64], level: f64) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let tail = 0.5 * (1.0 - level);
    (quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail))
}

pub fn predict(
    chain: &PosteriorChain,
    points: &DMatrix<f64>,
    opts: PredictOptions,
) -> Result<PredictionResult> {
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::invalid(format!(
            "level must be in (0,1), got {}",
            opts.level
        )));
    }
    let f = function_samples(chain, points)?;
    let (ns, np) = f.shape();
    let draws = if opts.include_noise {
        let mut rng = RngHandle::with_stream(chain.metadata.seed, PREDICT_STREAM);
        let mut g = f.clone();
        for s in 0..ns {
            let sd = chain.states[s].theta_sq.sqrt();
            for j in 0..np {
                g[(s, j)] += sd * rng.standard_normal();
            }
        }
        g
    } else {
        f.clone()
    };
    let mut mean = Vec::with_capacity(np);
    let mut lower = Vec::with_capacity(np);
    let mut upper = Vec::with_capacity(np);
    for j in 0..np {
        mean.push(f.column(j).mean());
        let col: Vec<f64> = draws.column(j).iter().copied().collect();
        let (lo, hi) = equal_tailed(&col, opts.level);
        lower.push(lo);
        upper.push(hi);
    }
    Ok(PredictionResult {
        mean,
        lower,
        upper,
        level: opts.level,
        samples: opts.keep_samples.then_some(draws),
    })
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::mismatch(format!("lengths {a} and {b} differ")));
    }
    Ok(())
}

pub fn rmse(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(predicted.len(), truth.len())?;
    if predicted.is_empty() {
        return Err(Error::invalid("rmse of empty vectors"));
    }
    let ss: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    Ok((ss / predicted.len() as f64).sqrt())
}

pub fn mae(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(predicted.len(), truth.len())?;
    if predicted.is_empty() {
        return Err(Error::invalid("mae of empty vectors"));
    }
    Ok(predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / predicted.len() as f64)
}

pub fn empirical_coverage(lower: &[f64], upper: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(lower.len(), truth.len())?;
    check_lengths(upper.len(), truth.len())?;
    if truth.is_empty() {
        return Err(Error::invalid("coverage of empty vectors"));
    }
    let inside = truth
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(t, (lo, hi))| *lo <= *t && *t <= *hi)
        .count();
    Ok(inside as f64 / truth.len() as f64)
}

pub fn mean_interval_width(lower: &[f64], upper: &[f64]) -> Result<f64> {
    check_lengths(lower.len(), upper.len())?;
    if lower.is_empty() {
        return Err(Error::invalid("width of empty vectors"));
    }
    Ok(lower.iter().zip(upper).map(|(l, u)| u - l).sum::<f64>() / lower.len() as f64)
}
