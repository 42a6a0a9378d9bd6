use hiergp::basis::{BasisFamily, TruncationVector};
use hiergp::dynamics::{
    ensemble_forward, fit_dynamics, integrate, make_training_data, DynFitConfig, DynSystem,
    Trajectory,
};
use hiergp::gibbs::{run_chain, GibbsConfig};
use hiergp::horseshoe::hs_run_chain;
use hiergp::model::{Dataset, Hyperparameters, NoiseModel};
use hiergp::predict::{predict, PredictOptions};
use hiergp::stochastic::RngHandle;
use hiergp::testfns::simulate_from_prior;
use nalgebra::{DMatrix, DVector};
use wasm_bindgen::prelude::*;

/// Fits a 1-D emulator and returns `[x, mean, lower, upper]` for each of
/// `grid` evenly spaced points, flattened.
pub fn fit_curve(
    xs: &[f64],
    ys: &[f64],
    k: usize,
    iterations: usize,
    seed: u64,
    horseshoe: bool,
    grid: usize,
) -> Result<Vec<f64>, String> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err("need matching, non-empty x and y".into());
    }
    if grid < 2 {
        return Err("grid needs at least two points".into());
    }
    let data = Dataset::new(
        DMatrix::from_column_slice(xs.len(), 1, xs),
        DVector::from_column_slice(ys),
        NoiseModel::Noisy,
    )
    .map_err(|e| e.to_string())?;
    let trunc = TruncationVector::sinusoidal(&[k]).map_err(|e| e.to_string())?;
    let config = GibbsConfig::new(iterations, trunc, seed);
    let hyper = Hyperparameters::default();
    let family = BasisFamily::SINUSOIDAL;
    let chain = if horseshoe {
        hs_run_chain(&data, &family, &config, &hyper)
    } else {
        run_chain(&data, &family, &config, &hyper)
    }
    .map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
    let points = DMatrix::from_column_slice(grid, 1, &x);
    let pred = predict(&chain, &points, PredictOptions::default()).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(4 * grid);
    for (i, xi) in x.iter().enumerate() {
        out.extend([*xi, pred.mean[i], pred.lower[i], pred.upper[i]]);
    }
    Ok(out)
}

/// One draw from the shrinkage prior on a `grid x grid` cell-centred grid,
/// row-major with `x2` fastest.
pub fn prior_surface(k: usize, alpha: f64, grid: usize, seed: u64) -> Result<Vec<f64>, String> {
    let hyper = Hyperparameters {
        alpha,
        ..Hyperparameters::simulation()
    };
    let f = simulate_from_prior(&[k, k], &hyper, &mut RngHandle::new(seed))
        .map_err(|e| e.to_string())?;
    let c = |i: usize| (i as f64 + 0.5) / grid as f64;
    Ok((0..grid * grid)
        .map(|i| f.eval(&[c(i / grid), c(i % grid)]))
        .collect())
}

/// Recovers `system` from noisy derivatives and forward-simulates `count`
/// posterior draws. Layout: the true path first, then each draw, each as
/// `(steps + 1) * q` values with blown-up tails filled with NaN.
pub fn ensemble(
    system: &str,
    noise_var: f64,
    iterations: usize,
    count: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let (sys, x0, dt, n, k) = match system {
        "cubic" => (
            DynSystem::cubic_default(),
            vec![2.0, 0.0],
            0.04,
            500,
            vec![5, 5],
        ),
        "lorenz" => (
            DynSystem::lorenz_default(),
            vec![-8.0, 7.0, 27.0],
            0.05,
            200,
            vec![5, 5, 5],
        ),
        other => return Err(format!("unknown system '{other}'")),
    };
    let mut rng = RngHandle::new(seed);
    let data = make_training_data(&sys, &x0, dt, n, noise_var, false, &mut rng)
        .map_err(|e| e.to_string())?;
    let trunc = TruncationVector::monomial_library(&k).map_err(|e| e.to_string())?;
    let config = DynFitConfig {
        iterations,
        seed,
        ..DynFitConfig::default()
    };
    let post = fit_dynamics(&data, &trunc, &Hyperparameters::default(), &config)
        .map_err(|e| e.to_string())?;
    let truth = integrate(&sys, &x0, dt, steps, 10).map_err(|e| e.to_string())?;
    let draws = ensemble_forward(&post, count, &x0, dt, steps, 10).map_err(|e| e.to_string())?;
    let q = x0.len();
    let mut out = Vec::with_capacity((count + 1) * (steps + 1) * q);
    for t in std::iter::once(&truth).chain(&draws) {
        flatten_into(t, steps + 1, &mut out);
    }
    Ok(out)
}

fn flatten_into(t: &Trajectory, rows: usize, out: &mut Vec<f64>) {
    let q = t.states.ncols();
    for i in 0..rows {
        for m in 0..q {
            out.push(if i < t.states.nrows() {
                t.states[(i, m)]
            } else {
                f64::NAN
            });
        }
    }
}

#[wasm_bindgen(js_name = fitCurve)]
pub fn fit_curve_js(
    xs: &[f64],
    ys: &[f64],
    k: usize,
    iterations: usize,
    seed: u32,
    horseshoe: bool,
) -> Result<Vec<f64>, JsError> {
    fit_curve(xs, ys, k, iterations, seed as u64, horseshoe, 200).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = priorSurface)]
pub fn prior_surface_js(k: usize, alpha: f64, grid: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    prior_surface(k, alpha, grid, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = dynamicsEnsemble)]
pub fn ensemble_js(
    system: &str,
    noise_var: f64,
    iterations: usize,
    count: usize,
    steps: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    ensemble(system, noise_var, iterations, count, steps, seed as u64).map_err(|e| JsError::new(&e))
}
