use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::stochastic::RngHandle;

const MAX_SWEEPS: usize = 10_000;
const TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub intercept: f64,
    pub penalty: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl LassoFit {
    pub fn predict(&self, design: &DMatrix<f64>) -> DVector<f64> {
        (design * &self.beta).add_scalar(self.intercept)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoCvFit {
    pub fit: LassoFit,
    pub grid: Vec<f64>,
    pub cv_mse: Vec<f64>,
}

/// `(1/2n) |y - b0 - X beta|^2 + penalty |beta|_1`.
pub fn lasso_objective(design: &DMatrix<f64>, y: &DVector<f64>, fit: &LassoFit) -> f64 {
    let r = y - fit.predict(design);
    0.5 * r.norm_squared() / y.len() as f64 + fit.penalty * fit.beta.lp_norm(1)
}

struct Centered {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_mean: DVector<f64>,
    y_mean: f64,
    col_ss: Vec<f64>,
}

fn center(design: &DMatrix<f64>, y: &DVector<f64>) -> Centered {
    let n = design.nrows() as f64;
    let x_mean = DVector::from_fn(design.ncols(), |j, _| design.column(j).sum() / n);
    let mut x = design.clone();
    for j in 0..x.ncols() {
        let m = x_mean[j];
        x.column_mut(j).add_scalar_mut(-m);
    }
    let y_mean = y.mean();
    let col_ss = (0..x.ncols())
        .map(|j| x.column(j).norm_squared() / n)
        .collect();
    Centered {
        x,
        y: y.add_scalar(-y_mean),
        x_mean,
        y_mean,
        col_ss,
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on centred data. Returns sweeps used and
/// whether the largest scaled coefficient change fell below tolerance.
fn coordinate_descent(
    c: &Centered,
    penalty: f64,
    beta: &mut DVector<f64>,
    mut trace: Option<&mut Vec<f64>>,
) -> (usize, bool) {
    let n = c.y.len() as f64;
    let mut r = &c.y - &c.x * &*beta;
    let scale = (c.y.norm_squared() / n).sqrt().max(1e-300);
    for sweep in 1..=MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..beta.len() {
            let ss = c.col_ss[j];
            if ss == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let old = beta[j];
            let rho = c.x.column(j).dot(&r) / n + ss * old;
            let new = soft_threshold(rho, penalty) / ss;
            if new != old {
                r.axpy(old - new, &c.x.column(j), 1.0);
                beta[j] = new;
                max_change = max_change.max((new - old).abs() * ss.sqrt());
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(0.5 * r.norm_squared() / n + penalty * beta.lp_norm(1));
        }
        if max_change < TOL * scale {
            return (sweep, true);
        }
    }
    (MAX_SWEEPS, false)
}

fn finish(
    c: &Centered,
    beta: DVector<f64>,
    penalty: f64,
    sweeps: usize,
    converged: bool,
) -> LassoFit {
    if !converged {
        log::warn!("lasso did not converge in {sweeps} sweeps at penalty {penalty:.3e}");
    }
    let intercept = c.y_mean - c.x_mean.dot(&beta);
    LassoFit {
        beta,
        intercept,
        penalty,
        sweeps,
        converged,
    }
}

/// Lasso at one penalty, with an unpenalised intercept.
pub fn lasso_fit(design: &DMatrix<f64>, y: &DVector<f64>, penalty: f64) -> Result<LassoFit> {
    check(design, y)?;
    if !(penalty >= 0.0) {
        return Err(Error::invalid(format!(
            "penalty must be >= 0, got {penalty}"
        )));
    }
    let c = center(design, y);
    let mut beta = DVector::zeros(design.ncols());
    let (sweeps, ok) = coordinate_descent(&c, penalty, &mut beta, None);
    Ok(finish(&c, beta, penalty, sweeps, ok))
}

fn check(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if design.nrows() != y.len() {
        return Err(Error::mismatch(format!(
            "design has {} rows, responses {}",
            design.nrows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("lasso needs at least one observation"));
    }
    Ok(())
}

/// Smallest penalty with an all-zero solution.
pub fn penalty_max(design: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let c = center(design, y);
    let n = y.len() as f64;
    (c.x.transpose() * &c.y).amax() / n
}

/// `count` log-spaced penalties from the maximum down to `ratio * max`.
pub fn penalty_grid(design: &DMatrix<f64>, y: &DVector<f64>, count: usize, ratio: f64) -> Vec<f64> {
    let top = penalty_max(design, y).max(1e-12);
    if count <= 1 {
        return vec![top];
    }
    (0..count)
        .map(|i| top * ratio.powf(i as f64 / (count - 1) as f64))
        .collect()
}

/// K-fold cross-validated lasso. Folds come from a seeded shuffle; the
/// penalty with the smallest mean held-out squared error is refitted on all data.
pub fn lasso_cv(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: Option<&[f64]>,
    folds: usize,
    seed: u64,
) -> Result<LassoCvFit> {
    check(design, y)?;
    let n = y.len();
    if folds < 2 || folds > n {
        return Err(Error::invalid(format!(
            "need 2 <= folds <= n, got {folds} with n = {n}"
        )));
    }
    let mut grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => penalty_grid(design, y, 50, 1e-4),
    };
    if grid.is_empty() || grid.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invalid(
            "penalty grid must be non-empty and non-negative",
        ));
    }
    // descending so warm starts move from sparse to dense
    grid.sort_by(|a, b| b.total_cmp(a));

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngHandle::with_stream(seed, 0xf01d));
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    let mut cv = vec![0.0; grid.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let xt = design.select_rows(&train);
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let xv = design.select_rows(&test);
        let yv = DVector::from_iterator(test.len(), test.iter().map(|&i| y[i]));
        let c = center(&xt, &yt);
        let mut beta = DVector::zeros(design.ncols());
        for (g, &pen) in grid.iter().enumerate() {
            let (sweeps, ok) = coordinate_descent(&c, pen, &mut beta, None);
            let fit = finish(&c, beta.clone(), pen, sweeps, ok);
            cv[g] += (&yv - fit.predict(&xv)).norm_squared() / n as f64;
        }
    }
    let best = cv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let fit = lasso_fit(design, y, grid[best])?;
    Ok(LassoCvFit {
        fit,
        grid,
        cv_mse: cv,
    })
}
