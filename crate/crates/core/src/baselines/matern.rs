use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::cholesky_with_jitter;

/// Log-spaced hyperparameter grid. Amplitudes and nuggets are relative to the
/// sample standard deviation and variance of the responses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaternGrid {
    pub lengthscales: Vec<f64>,
    pub amplitude_factors: Vec<f64>,
    pub nugget_factors: Vec<f64>,
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

impl Default for MaternGrid {
    fn default() -> Self {
        Self {
            lengthscales: log_space(0.03, 3.0, 15),
            amplitude_factors: log_space(0.25, 8.0, 9),
            nugget_factors: vec![1e-8, 1e-6, 1e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1],
        }
    }
}

pub struct MaternFit {
    pub lengthscale: f64,
    pub amplitude: f64,
    pub nugget: f64,
    pub mean: f64,
    pub log_marginal_likelihood: f64,
    /// Every grid node as `(lengthscale, amplitude, nugget, log ML)`.
    pub grid_scores: Vec<(f64, f64, f64, f64)>,
    points: DMatrix<f64>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaternPrediction {
    pub mean: Vec<f64>,
    /// Variance of the latent function.
    pub latent_variance: Vec<f64>,
    /// Latent variance plus the nugget.
    pub total_variance: Vec<f64>,
}

/// `amp^2 (1 + sqrt3 r / l) exp(-sqrt3 r / l)`.
pub fn matern32(r: f64, lengthscale: f64, amplitude: f64) -> f64 {
    let s = 3f64.sqrt() * r / lengthscale;
    amplitude * amplitude * (1.0 + s) * (-s).exp()
}

fn distance(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols())
        .map(|m| (a[(i, m)] - b[(j, m)]).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn kernel_matrix(
    points: &DMatrix<f64>,
    lengthscale: f64,
    amplitude: f64,
    nugget: f64,
) -> DMatrix<f64> {
    let n = points.nrows();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = matern32(distance(points, i, points, j), lengthscale, amplitude);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += nugget;
    }
    k
}

/// Zero-mean log marginal likelihood of centred responses, with the factor
/// and `K^-1 y` returned for reuse.
pub fn log_marginal_likelihood(
    points: &DMatrix<f64>,
    y: &DVector<f64>,
    lengthscale: f64,
    amplitude: f64,
    nugget: f64,
) -> Result<(f64, Cholesky<f64, Dyn>, DVector<f64>)> {
    let k = kernel_matrix(points, lengthscale, amplitude, nugget);
    let (chol, _) = cholesky_with_jitter(&k)?;
    let alpha = chol.solve(y);
    let logdet: f64 = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
        * 2.0;
    let n = y.len() as f64;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * logdet - 0.5 * n * (2.0 * PI).ln();
    Ok((lml, chol, alpha))
}

/// Grid maximum-marginal-likelihood fit with a constant mean equal to the sample mean.
pub fn matern_gp_fit(
    points: &DMatrix<f64>,
    responses: &DVector<f64>,
    grid: &MaternGrid,
) -> Result<MaternFit> {
    let n = responses.len();
    if points.nrows() != n {
        return Err(Error::mismatch(format!(
            "{} points, {} responses",
            points.nrows(),
            n
        )));
    }
    if n < 2 {
        return Err(Error::invalid("Matern GP needs at least two observations"));
    }
    if grid.lengthscales.is_empty()
        || grid.amplitude_factors.is_empty()
        || grid.nugget_factors.is_empty()
    {
        return Err(Error::invalid("Matern grid has an empty axis"));
    }
    let mean = responses.mean();
    let y = responses.add_scalar(-mean);
    let var = (y.norm_squared() / (n - 1) as f64).max(1e-12);
    let sd = var.sqrt();

    let mut best: Option<Candidate> = None;
    let mut scores = Vec::new();
    for &l in &grid.lengthscales {
        for &a in &grid.amplitude_factors {
            for &g in &grid.nugget_factors {
                let (amp, nug) = (a * sd, g * var);
                let Ok((lml, chol, alpha)) = log_marginal_likelihood(points, &y, l, amp, nug)
                else {
                    continue;
                };
                scores.push((l, amp, nug, lml));
                if best.as_ref().is_none_or(|b| lml > b.3) {
                    best = Some((l, amp, nug, lml, chol, alpha));
                }
            }
        }
    }
    let (lengthscale, amplitude, nugget, lml, chol, alpha) = best.ok_or(Error::Factorization {
        jitter: f64::NAN,
        scale: var,
    })?;
    Ok(MaternFit {
        lengthscale,
        amplitude,
        nugget,
        mean,
        log_marginal_likelihood: lml,
        grid_scores: scores,
        points: points.clone(),
        alpha,
        chol,
    })
}

/// Lengthscale, amplitude, nugget, log marginal likelihood, factor, weights.
type Candidate = (f64, f64, f64, f64, Cholesky<f64, Dyn>, DVector<f64>);

pub fn matern_gp_predict(fit: &MaternFit, points: &DMatrix<f64>) -> Result<MaternPrediction> {
    if points.ncols() != fit.points.ncols() {
        return Err(Error::mismatch(format!(
            "query points have {} columns, training points {}",
            points.ncols(),
            fit.points.ncols()
        )));
    }
    let n = fit.points.nrows();
    let amp2 = fit.amplitude * fit.amplitude;
    let mut out = MaternPrediction {
        mean: Vec::with_capacity(points.nrows()),
        latent_variance: Vec::with_capacity(points.nrows()),
        total_variance: Vec::with_capacity(points.nrows()),
    };
    for q in 0..points.nrows() {
        let kstar = DVector::from_fn(n, |i, _| {
            matern32(
                distance(&fit.points, i, points, q),
                fit.lengthscale,
                fit.amplitude,
            )
        });
        out.mean.push(fit.mean + kstar.dot(&fit.alpha));
        let v = fit
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .ok_or(Error::Factorization {
                jitter: 0.0,
                scale: amp2,
            })?;
        let latent = (amp2 - v.norm_squared()).max(0.0);
        out.latent_variance.push(latent);
        out.total_variance.push(latent + fit.nugget);
    }
    Ok(out)
}
