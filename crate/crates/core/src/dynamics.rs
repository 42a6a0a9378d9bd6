//! Sparse recovery of polynomial dynamics `dx/dt = Theta(x) Xi` with one
//! cumulative-prior regression per state coordinate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::baselines::ols_fit;
use crate::basis::{
    build_design_matrix, enumerate_indices, term_label, BasisFamily, TruncationVector,
};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain_with_design, GibbsConfig};
use crate::model::{ChainMetadata, Hyperparameters, NoiseModel};
use crate::stochastic::RngHandle;

/// States beyond this magnitude count as a blow-up.
const BLOWUP: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DynSystem {
    /// `x' = -a x^3 + b y^3`, `y' = -b x^3 - a y^3`.
    Cubic2d {
        a: f64,
        b: f64,
    },
    Lorenz {
        sigma: f64,
        rho: f64,
        beta: f64,
    },
    /// Vector field given by a monomial coefficient matrix.
    Polynomial(CoefMatrix),
}

impl DynSystem {
    pub fn cubic_default() -> Self {
        DynSystem::Cubic2d { a: 0.1, b: 2.0 }
    }

    pub fn lorenz_default() -> Self {
        DynSystem::Lorenz {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DynSystem::Cubic2d { .. } => 2,
            DynSystem::Lorenz { .. } => 3,
            DynSystem::Polynomial(c) => c.xi.ncols(),
        }
    }

    pub fn rhs(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            DynSystem::Cubic2d { a, b } => {
                let (x3, y3) = (x[0].powi(3), x[1].powi(3));
                vec![-a * x3 + b * y3, -b * x3 - a * y3]
            }
            DynSystem::Lorenz { sigma, rho, beta } => vec![
                sigma * (x[1] - x[0]),
                x[0] * (rho - x[2]) - x[1],
                x[0] * x[1] - beta * x[2],
            ],
            DynSystem::Polynomial(ref c) => c.rhs(x),
        }
    }

    /// The true coefficient matrix on a monomial library, when it exists there.
    pub fn true_coefficients(&self, trunc: &TruncationVector) -> Result<CoefMatrix> {
        let indices = enumerate_indices(trunc);
        let q = self.dim();
        if trunc.dim() != q {
            return Err(Error::mismatch(format!(
                "library has {} dimensions, system {q}",
                trunc.dim()
            )));
        }
        let mut xi = DMatrix::zeros(indices.len(), q);
        let mut set = |k: &[usize], m: usize, v: f64| -> Result<()> {
            let col = indices
                .iter()
                .position(|i| i.as_slice() == k)
                .ok_or_else(|| Error::invalid(format!("library lacks term {k:?}")))?;
            xi[(col, m)] = v;
            Ok(())
        };
        match *self {
            DynSystem::Cubic2d { a, b } => {
                set(&[3, 0], 0, -a)?;
                set(&[0, 3], 0, b)?;
                set(&[3, 0], 1, -b)?;
                set(&[0, 3], 1, -a)?;
            }
            DynSystem::Lorenz { sigma, rho, beta } => {
                set(&[1, 0, 0], 0, -sigma)?;
                set(&[0, 1, 0], 0, sigma)?;
                set(&[1, 0, 0], 1, rho)?;
                set(&[0, 1, 0], 1, -1.0)?;
                set(&[1, 0, 1], 1, -1.0)?;
                set(&[1, 1, 0], 2, 1.0)?;
                set(&[0, 0, 1], 2, -beta)?;
            }
            DynSystem::Polynomial(ref c) => return Ok(c.clone()),
        }
        Ok(CoefMatrix {
            xi,
            truncation: trunc.clone(),
        })
    }
}

/// `Xi` with one column per state coordinate, rows aligned with the monomial library.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefMatrix {
    pub xi: DMatrix<f64>,
    pub truncation: TruncationVector,
}

impl CoefMatrix {
    pub fn zeros(truncation: TruncationVector, q: usize) -> Self {
        Self {
            xi: DMatrix::zeros(truncation.count(), q),
            truncation,
        }
    }

    pub fn rhs(&self, x: &[f64]) -> Vec<f64> {
        let indices = enumerate_indices(&self.truncation);
        let theta: Vec<f64> = indices
            .iter()
            .map(|k| BasisFamily::MONOMIAL.eval(k, x))
            .collect();
        (0..self.xi.ncols())
            .map(|m| {
                theta
                    .iter()
                    .enumerate()
                    .map(|(j, t)| t * self.xi[(j, m)])
                    .sum()
            })
            .collect()
    }

    pub fn labels(&self, names: &[&str]) -> Vec<String> {
        enumerate_indices(&self.truncation)
            .iter()
            .map(|k| term_label(&BasisFamily::MONOMIAL, k, names))
            .collect()
    }

    pub fn support(&self) -> Vec<Vec<bool>> {
        (0..self.xi.ncols())
            .map(|m| self.xi.column(m).iter().map(|v| *v != 0.0).collect())
            .collect()
    }
}

pub fn state_names(q: usize) -> Vec<String> {
    match q {
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (1..=q).map(|m| format!("x{m}")).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per time.
    pub states: DMatrix<f64>,
    /// Time of the first non-finite or exploding state, if any.
    pub blown_up_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryData {
    pub times: Vec<f64>,
    pub states: DMatrix<f64>,
    pub derivatives: DMatrix<f64>,
    pub noise_var: f64,
}

fn rk4_step(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(u, v)| u + s * v).collect()
    };
    let k1 = f(x);
    let k2 = f(&add(x, &k1, 0.5 * h));
    let k3 = f(&add(x, &k2, 0.5 * h));
    let k4 = f(&add(x, &k3, h));
    (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Classical RK4 with `substeps` internal steps per recorded step `dt`.
/// Stops early, keeping the finite prefix, if the state explodes.
pub fn integrate_field(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    dt: f64,
    steps: usize,
    substeps: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0) || substeps == 0 {
        return Err(Error::invalid(format!(
            "need dt > 0 and substeps >= 1, got {dt} and {substeps}"
        )));
    }
    let q = x0.len();
    let h = dt / substeps as f64;
    let mut rows = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    let mut blown = None;
    'outer: for i in 1..=steps {
        for _ in 0..substeps {
            x = rk4_step(f, &x, h);
            if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
                blown = Some(i as f64 * dt);
                log::warn!("trajectory blew up near t = {:.3}", i as f64 * dt);
                break 'outer;
            }
        }
        rows.push(x.clone());
    }
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Trajectory {
        times: (0..n).map(|i| i as f64 * dt).collect(),
        states: DMatrix::from_row_slice(n, q, &flat),
        blown_up_at: blown,
    })
}

pub fn integrate(
    system: &DynSystem,
    x0: &[f64],
    dt: f64,
    steps: usize,
    substeps: usize,
) -> Result<Trajectory> {
    if x0.len() != system.dim() {
        return Err(Error::mismatch(format!(
            "x0 has {} entries, system {}",
            x0.len(),
            system.dim()
        )));
    }
    integrate_field(&|x| system.rhs(x), x0, dt, steps, substeps)
}

/// `n` clean states spaced `dt` apart and derivative targets `f(x) + N(0, noise_var)`.
/// With `corrupt_states` the recorded states get the same noise.
pub fn make_training_data(
    system: &DynSystem,
    x0: &[f64],
    dt: f64,
    n: usize,
    noise_var: f64,
    corrupt_states: bool,
    rng: &mut RngHandle,
) -> Result<TrajectoryData> {
    if n == 0 || !(noise_var >= 0.0) {
        return Err(Error::invalid("need n >= 1 and noise_var >= 0"));
    }
    let traj = integrate(system, x0, dt, n - 1, 10)?;
    if traj.blown_up_at.is_some() {
        return Err(Error::invalid("training trajectory blew up"));
    }
    let q = system.dim();
    let sd = noise_var.sqrt();
    let mut derivs = DMatrix::zeros(n, q);
    for i in 0..n {
        let x: Vec<f64> = traj.states.row(i).iter().copied().collect();
        for (m, v) in system.rhs(&x).into_iter().enumerate() {
            derivs[(i, m)] = v + sd * rng.standard_normal();
        }
    }
    let mut states = traj.states;
    if corrupt_states {
        for v in states.iter_mut() {
            *v += sd * rng.standard_normal();
        }
    }
    Ok(TrajectoryData {
        times: traj.times,
        states,
        derivatives: derivs,
        noise_var,
    })
}

pub fn library_matrix(states: &DMatrix<f64>, trunc: &TruncationVector) -> Result<DMatrix<f64>> {
    build_design_matrix(&BasisFamily::MONOMIAL, trunc, states)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynFitConfig {
    pub iterations: usize,
    pub burn_in: Option<usize>,
    pub thinning: usize,
    pub seed: u64,
    /// Rescale library columns to unit RMS inside the sampler.
    pub scale_columns: bool,
    /// Inclusion frequency above which a term counts as selected.
    pub selection_threshold: f64,
}

impl Default for DynFitConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            burn_in: None,
            thinning: 1,
            seed: 0,
            scale_columns: true,
            selection_threshold: 0.5,
        }
    }
}

/// Aligned posterior draws of `Xi` from the per-coordinate chains.
#[derive(Clone, Debug)]
pub struct DynamicsPosterior {
    pub truncation: TruncationVector,
    pub samples: Vec<DMatrix<f64>>,
    /// Slab frequency per library term and coordinate.
    pub inclusion: DMatrix<f64>,
    pub chains: Vec<ChainMetadata>,
    pub selection_threshold: f64,
}

impl DynamicsPosterior {
    fn reduce(&self, f: impl Fn(&mut Vec<f64>) -> f64) -> CoefMatrix {
        let (p, q) = self.inclusion.shape();
        let mut xi = DMatrix::zeros(p, q);
        for j in 0..p {
            for m in 0..q {
                let mut v: Vec<f64> = self.samples.iter().map(|s| s[(j, m)]).collect();
                xi[(j, m)] = f(&mut v);
            }
        }
        CoefMatrix {
            xi,
            truncation: self.truncation.clone(),
        }
    }

    pub fn mean(&self) -> CoefMatrix {
        self.reduce(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn median(&self) -> CoefMatrix {
        self.reduce(|v| {
            v.sort_by(|a, b| a.total_cmp(b));
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            }
        })
    }

    pub fn selected(&self) -> Vec<Vec<bool>> {
        (0..self.inclusion.ncols())
            .map(|m| {
                self.inclusion
                    .column(m)
                    .iter()
                    .map(|p| *p > self.selection_threshold)
                    .collect()
            })
            .collect()
    }

    /// Posterior median with unselected terms set to zero.
    pub fn selected_median(&self) -> CoefMatrix {
        let mut c = self.median();
        let sel = self.selected();
        for (m, col) in sel.iter().enumerate() {
            for (j, keep) in col.iter().enumerate() {
                if !keep {
                    c.xi[(j, m)] = 0.0;
                }
            }
        }
        c
    }

    pub fn draw(&self, s: usize) -> CoefMatrix {
        CoefMatrix {
            xi: self.samples[s].clone(),
            truncation: self.truncation.clone(),
        }
    }
}

fn column_scales(theta: &DMatrix<f64>) -> Vec<f64> {
    let n = theta.nrows() as f64;
    (0..theta.ncols())
        .map(|j| {
            let rms = (theta.column(j).norm_squared() / n).sqrt();
            if rms > 0.0 {
                rms
            } else {
                1.0
            }
        })
        .collect()
}

/// Fits one chain per coordinate on the shared library and returns aligned draws.
pub fn fit_dynamics(
    data: &TrajectoryData,
    trunc: &TruncationVector,
    hyper: &Hyperparameters,
    config: &DynFitConfig,
) -> Result<DynamicsPosterior> {
    let theta = library_matrix(&data.states, trunc)?;
    let q = data.derivatives.ncols();
    let scales = if config.scale_columns {
        column_scales(&theta)
    } else {
        vec![1.0; theta.ncols()]
    };
    let mut scaled = theta.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let run = |m: usize| {
        let mut cfg = GibbsConfig::new(config.iterations, trunc.clone(), config.seed);
        cfg.burn_in = config.burn_in;
        cfg.thinning = config.thinning;
        cfg.stream = m as u64;
        let y = DVector::from_iterator(
            data.derivatives.nrows(),
            data.derivatives.column(m).iter().copied(),
        );
        run_chain_with_design(
            scaled.clone(),
            y,
            BasisFamily::MONOMIAL,
            NoiseModel::Noisy,
            &cfg,
            hyper,
        )
    };
    #[cfg(feature = "parallel")]
    let chains: Vec<_> = (0..q).into_par_iter().map(run).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let chains: Vec<_> = (0..q).map(run).collect::<Result<_>>()?;

    let p = theta.ncols();
    let ns = chains[0].len();
    let mut samples = vec![DMatrix::zeros(p, q); ns];
    for (m, chain) in chains.iter().enumerate() {
        for (s, state) in chain.states.iter().enumerate() {
            for j in 0..p {
                samples[s][(j, m)] = state.lambda[j] / scales[j];
            }
        }
    }
    let mut inclusion = DMatrix::zeros(p, q);
    for (m, chain) in chains.iter().enumerate() {
        for (j, v) in chain.inclusion_probabilities()?.into_iter().enumerate() {
            inclusion[(j, m)] = v;
        }
    }
    Ok(DynamicsPosterior {
        truncation: trunc.clone(),
        samples,
        inclusion,
        chains: chains.into_iter().map(|c| c.metadata).collect(),
        selection_threshold: config.selection_threshold,
    })
}

pub fn forward_simulate(
    xi: &CoefMatrix,
    x0: &[f64],
    dt: f64,
    steps: usize,
    substeps: usize,
) -> Result<Trajectory> {
    if x0.len() != xi.xi.ncols() {
        return Err(Error::mismatch(format!(
            "x0 has {} entries, Xi has {} columns",
            x0.len(),
            xi.xi.ncols()
        )));
    }
    integrate_field(&|x| xi.rhs(x), x0, dt, steps, substeps)
}

/// Forward runs of `count` posterior draws spaced evenly through the chain.
pub fn ensemble_forward(
    posterior: &DynamicsPosterior,
    count: usize,
    x0: &[f64],
    dt: f64,
    steps: usize,
    substeps: usize,
) -> Result<Vec<Trajectory>> {
    let ns = posterior.samples.len();
    if ns == 0 {
        return Err(Error::EmptyChain);
    }
    let count = count.clamp(1, ns);
    let picks: Vec<usize> = (0..count).map(|i| i * ns / count).collect();
    let run = |&s: &usize| forward_simulate(&posterior.draw(s), x0, dt, steps, substeps);
    #[cfg(feature = "parallel")]
    let out = picks.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let out = picks.iter().map(run).collect();
    out
}

/// Standard deviation across trajectories at each time, averaged over
/// coordinates. Only times every trajectory reached are reported.
pub fn ensemble_spread(trajs: &[Trajectory]) -> Vec<f64> {
    let len = trajs.iter().map(|t| t.states.nrows()).min().unwrap_or(0);
    let q = trajs.first().map_or(0, |t| t.states.ncols());
    let n = trajs.len() as f64;
    (0..len)
        .map(|i| {
            let mut acc = 0.0;
            for m in 0..q {
                let mean = trajs.iter().map(|t| t.states[(i, m)]).sum::<f64>() / n;
                let var = trajs
                    .iter()
                    .map(|t| (t.states[(i, m)] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                acc += var.sqrt();
            }
            acc / q as f64
        })
        .collect()
}

/// Root mean squared distance between two trajectories over their common prefix.
pub fn trajectory_rmse(a: &Trajectory, b: &Trajectory) -> f64 {
    let n = a.states.nrows().min(b.states.nrows());
    let q = a.states.ncols();
    let ss: f64 = (0..n)
        .map(|i| {
            (0..q)
                .map(|m| (a.states[(i, m)] - b.states[(i, m)]).powi(2))
                .sum::<f64>()
        })
        .sum();
    (ss / (n * q) as f64).sqrt()
}

/// Sequentially thresholded least squares for one response column.
pub fn stls(theta: &DMatrix<f64>, y: &DVector<f64>, threshold: f64) -> Result<DVector<f64>> {
    let p = theta.ncols();
    let mut active: Vec<usize> = (0..p).collect();
    let mut coef = DVector::zeros(p);
    for _ in 0..=p {
        if active.is_empty() {
            break;
        }
        let sub = theta.select_columns(&active);
        let fit = ols_fit(&sub, y)?;
        coef.fill(0.0);
        for (i, &j) in active.iter().enumerate() {
            coef[j] = fit[i];
        }
        let keep: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| coef[j].abs() >= threshold)
            .collect();
        if keep.len() == active.len() {
            return Ok(coef);
        }
        for &j in &active {
            if !keep.contains(&j) {
                coef[j] = 0.0;
            }
        }
        active = keep;
    }
    if active.is_empty() {
        log::debug!("thresholded least squares removed every term");
    }
    Ok(coef)
}

/// STLS per coordinate with the threshold chosen by held-out derivative error
/// (every fifth sample held out). Without a grid, thresholds span the
/// least-squares magnitudes on a log scale, plus zero.
pub fn sindy_baseline(
    data: &TrajectoryData,
    trunc: &TruncationVector,
    grid: Option<&[f64]>,
) -> Result<CoefMatrix> {
    let theta = library_matrix(&data.states, trunc)?;
    let n = theta.nrows();
    let q = data.derivatives.ncols();
    let train: Vec<usize> = (0..n).filter(|i| i % 5 != 4).collect();
    let test: Vec<usize> = (0..n).filter(|i| i % 5 == 4).collect();
    if test.is_empty() {
        return Err(Error::invalid(
            "need at least five samples for threshold selection",
        ));
    }
    let tt = theta.select_rows(&train);
    let tv = theta.select_rows(&test);
    let mut xi = DMatrix::zeros(theta.ncols(), q);
    for m in 0..q {
        let y = DVector::from_iterator(n, data.derivatives.column(m).iter().copied());
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let yv = DVector::from_iterator(test.len(), test.iter().map(|&i| y[i]));
        let thresholds: Vec<f64> = match grid {
            Some(g) => g.to_vec(),
            None => {
                let top = ols_fit(&theta, &y)?.amax().max(1e-12);
                let mut g = vec![0.0];
                g.extend((0..40).map(|i| top * 10f64.powf(-4.0 + 4.0 * i as f64 / 39.0)));
                g
            }
        };
        let mut best = (f64::INFINITY, 0.0);
        for &t in &thresholds {
            let c = stls(&tt, &yt, t)?;
            let err = (&yv - &tv * c).norm_squared();
            // ties go to the larger threshold
            if err < best.0 || (err == best.0 && t > best.1) {
                best = (err, t);
            }
        }
        let c = stls(&theta, &y, best.1)?;
        xi.set_column(m, &c);
    }
    Ok(CoefMatrix {
        xi,
        truncation: trunc.clone(),
    })
}
