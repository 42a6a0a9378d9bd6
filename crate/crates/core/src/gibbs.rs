//! Data-augmented Gibbs sampler for the cumulative spike-and-slab model.
//!
//! One iteration updates, in order: the latent indices `z`, the prior
//! variances `sigma^2`, the stick variables `nu` (with `w` recomputed), the
//! noise variance `theta^2` and finally the coefficients `Lambda`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adaptive::{maybe_adapt, AdaptiveConfig};
use crate::basis::{build_design_matrix, enumerate_indices, BasisFamily, TruncationVector};
use crate::error::{Error, Result};
use crate::model::{
    ChainMetadata, ChainState, Dataset, Hyperparameters, NoiseModel, PosteriorChain, SamplerKind,
    SCHEMA_VERSION, THETA_SQ_FLOOR,
};
use crate::stochastic::{
    log_density_normal, log_density_student_t, sample_beta, sample_categorical,
    sample_categorical_log, sample_inverse_gamma, sample_mvn_canonical, RngHandle,
};

/// Parts of the state held fixed, used for conjugate checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Frozen {
    /// Cumulative sampler: fixed prior variances `sigma^2_k`.
    /// Horseshoe sampler: fixed local precisions `sigma_k`.
    #[serde(default)]
    pub scales: Option<Vec<f64>>,
    #[serde(default)]
    pub theta_sq: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub iterations: usize,
    /// Defaults to half the iterations.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "one")]
    pub thinning: usize,
    pub truncation: TruncationVector,
    #[serde(default)]
    pub adaptive: Option<AdaptiveConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub frozen: Frozen,
    /// Initial log-scale step of the horseshoe local-parameter proposal.
    #[serde(default = "one_f")]
    pub proposal_scale: f64,
    /// Optional upper bound on horseshoe local parameters.
    #[serde(default)]
    pub local_scale_bound: Option<f64>,
    /// Subtract the response mean before fitting. `None` follows the family.
    #[serde(default)]
    pub center: Option<bool>,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

impl GibbsConfig {
    pub fn new(iterations: usize, truncation: TruncationVector, seed: u64) -> Self {
        Self {
            iterations,
            burn_in: None,
            thinning: 1,
            truncation,
            adaptive: None,
            seed,
            stream: 0,
            frozen: Frozen::default(),
            proposal_scale: 1.0,
            local_scale_bound: None,
            center: None,
        }
    }

    pub(crate) fn centers(&self, family: &BasisFamily) -> bool {
        self.center.unwrap_or(family.needs_centering())
    }

    pub(crate) fn centering(&self, family: &BasisFamily, dataset: &Dataset) -> f64 {
        if self.centers(family) && dataset.n() > 0 {
            dataset.responses.mean()
        } else {
            0.0
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 2)
    }

    pub fn validate(&self) -> Result<()> {
        self.truncation.validate()?;
        if self.iterations == 0 || self.burn_in() >= self.iterations {
            return Err(Error::invalid(format!(
                "need iterations > burn_in >= 0, got {} and {}",
                self.iterations,
                self.burn_in()
            )));
        }
        if self.thinning == 0 {
            return Err(Error::invalid("thinning must be >= 1"));
        }
        if !(self.proposal_scale > 0.0) {
            return Err(Error::invalid("proposal_scale must be > 0"));
        }
        if let Some(a) = &self.adaptive {
            a.validate()?;
        }
        Ok(())
    }

    fn retain(&self, b: usize) -> bool {
        let burn = self.burn_in();
        b > burn && (b - burn).is_multiple_of(self.thinning)
    }
}

/// Design matrix and responses with the cross products cached.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub design: DMatrix<f64>,
    pub responses: DVector<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
}

impl LinearSystem {
    pub fn new(design: DMatrix<f64>, responses: DVector<f64>) -> Result<Self> {
        if design.nrows() != responses.len() {
            return Err(Error::mismatch(format!(
                "design has {} rows, responses {}",
                design.nrows(),
                responses.len()
            )));
        }
        let xtx = design.tr_mul(&design);
        let xty = design.tr_mul(&responses);
        Ok(Self {
            design,
            responses,
            xtx,
            xty,
        })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn residual_ss(&self, lambda: &[f64]) -> f64 {
        let lam = DVector::from_column_slice(lambda);
        (&self.responses - &self.design * lam).norm_squared()
    }

    /// Draws coefficients from `N(V X'y / theta^2, V)`, `V = (D^-1 + X'X / theta^2)^-1`.
    pub fn sample_coefficients(
        &self,
        prior_var: &[f64],
        theta_sq: f64,
        rng: &mut RngHandle,
    ) -> Result<DVector<f64>> {
        let (precision, linear) = self.conditional_canonical(prior_var, theta_sq)?;
        Ok(sample_mvn_canonical(&precision, &linear, rng)?.0)
    }

    /// Precision and linear term of the coefficient full conditional.
    pub fn conditional_canonical(
        &self,
        prior_var: &[f64],
        theta_sq: f64,
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if prior_var.len() != self.p() {
            return Err(Error::mismatch(format!(
                "{} prior variances for {} columns",
                prior_var.len(),
                self.p()
            )));
        }
        if let Some(v) = prior_var.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::invalid(format!(
                "prior variance must be > 0, got {v}"
            )));
        }
        let mut precision = &self.xtx / theta_sq;
        for (j, v) in prior_var.iter().enumerate() {
            precision[(j, j)] += 1.0 / v;
        }
        Ok((precision, &self.xty / theta_sq))
    }
}

/// Beta parameters of the stick update given the counts `#(z = j)` and `#(z > j)`.
pub fn nu_conditional_params(count_eq: usize, count_gt: usize, alpha: f64) -> (f64, f64) {
    (1.0 + count_eq as f64, alpha + count_gt as f64)
}

/// Inverse-gamma shape and rate of the noise variance update.
pub fn theta_conditional_params(n: usize, residual_ss: f64, hyper: &Hyperparameters) -> (f64, f64) {
    (
        hyper.a_theta + 0.5 * n as f64,
        hyper.b_theta + 0.5 * residual_ss,
    )
}

/// Exact normalized distribution of `z_k` over every cell, by brute-force
/// enumeration. Used for diagnostics and as a reference for [`step_z`].
pub fn z_cell_distribution(
    state: &ChainState,
    col: usize,
    k: &[usize],
    hyper: &Hyperparameters,
) -> Vec<(Vec<usize>, f64)> {
    let d = k.len();
    let cells: Vec<Vec<f64>> = (0..d).map(|m| state.z_cell_probs(m)).collect();
    let lam = state.lambda[col];
    let log_slab = log_density_student_t(lam, hyper.slab_t_dof(), hyper.slab_t_scale());
    let log_spike = log_density_normal(lam, 0.0, hyper.sigma_inf_sq);
    let mut out = Vec::new();
    let mut l = vec![1usize; d];
    loop {
        let mut lw = 0.0;
        for m in 0..d {
            lw += cells[m][l[m] - 1].ln();
        }
        let slab = l.iter().zip(k).all(|(&a, &b)| a > b);
        lw += if slab { log_slab } else { log_spike };
        out.push((l.clone(), lw));
        let mut m = d;
        loop {
            if m == 0 {
                let max = out.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = out.iter().map(|c| (c.1 - max).exp()).sum();
                return out
                    .into_iter()
                    .map(|(c, lw)| (c, (lw - max).exp() / total))
                    .collect();
            }
            m -= 1;
            if l[m] < cells[m].len() {
                l[m] += 1;
                break;
            }
            l[m] = 1;
        }
    }
}

/// Draws `z_k` from its full conditional with `lambda_k` integrated against
/// the slab (Student-t) or the spike (normal).
///
/// The cell weights factor across dimensions, so the slab region has mass
/// `w_k t(lambda_k)` and the spike region `(1 - w_k) phi(lambda_k)`. After
/// picking a region the components are drawn one at a time.
pub fn step_z(
    state: &mut ChainState,
    col: usize,
    k: &[usize],
    hyper: &Hyperparameters,
    rng: &mut RngHandle,
) -> Result<()> {
    let cells: Vec<Vec<f64>> = (0..k.len()).map(|m| state.z_cell_probs(m)).collect();
    step_z_with_cells(state, col, k, &cells, hyper, rng)
}

fn step_z_with_cells(
    state: &mut ChainState,
    col: usize,
    k: &[usize],
    cells: &[Vec<f64>],
    hyper: &Hyperparameters,
    rng: &mut RngHandle,
) -> Result<()> {
    let d = k.len();
    let lam = state.lambda[col];
    let log_g: Vec<f64> = (0..d).map(|m| state.w[m][k[m]].ln()).collect();
    let log_w: f64 = log_g.iter().sum();
    let log_slab = log_w + log_density_student_t(lam, hyper.slab_t_dof(), hyper.slab_t_scale());
    let log_spike = (-log_w.exp_m1()).ln() + log_density_normal(lam, 0.0, hyper.sigma_inf_sq);
    let slab = sample_categorical_log(&[log_spike, log_slab], rng)? == 1;

    let z = &mut state.z[col];
    if slab {
        for m in 0..d {
            z[m] = k[m] + 1 + sample_categorical(&cells[m][k[m]..], rng)?;
        }
        return Ok(());
    }
    // suffix[m] = log prod_{i >= m} G_i
    let mut suffix = vec![0.0; d + 1];
    for m in (0..d).rev() {
        suffix[m] = suffix[m + 1] + log_g[m];
    }
    let mut constrained = true;
    for m in 0..d {
        let above = if !constrained {
            None
        } else if k[m] == 0 {
            Some(true)
        } else {
            let num = log_g[m].exp() * -suffix[m + 1].exp_m1();
            let den = -suffix[m].exp_m1();
            let p_above = if den > 0.0 {
                (num / den).clamp(0.0, 1.0)
            } else {
                0.0
            };
            Some(rng.uniform() < p_above)
        };
        z[m] = match above {
            None => 1 + sample_categorical(&cells[m], rng)?,
            Some(true) => k[m] + 1 + sample_categorical(&cells[m][k[m]..], rng)?,
            Some(false) => {
                constrained = false;
                1 + sample_categorical(&cells[m][..k[m]], rng)?
            }
        };
    }
    Ok(())
}

/// Slab columns draw `IG(a + 1/2, b + lambda^2 / 2)`; all others take the spike variance.
pub fn step_sigma(
    state: &mut ChainState,
    col: usize,
    k: &[usize],
    hyper: &Hyperparameters,
    rng: &mut RngHandle,
) -> Result<()> {
    state.sigma_sq[col] = if state.z_is_slab(col, k) {
        let lam = state.lambda[col];
        sample_inverse_gamma(hyper.a_sigma + 0.5, hyper.b_sigma + 0.5 * lam * lam, rng)?
    } else {
        hyper.sigma_inf_sq
    };
    Ok(())
}

/// Updates every `nu_{j,m}` for one dimension and rebuilds `w_{., m}`.
pub fn step_nu(
    state: &mut ChainState,
    m: usize,
    hyper: &Hyperparameters,
    rng: &mut RngHandle,
) -> Result<()> {
    let kmax = state.nu[m].len();
    let mut hist = vec![0usize; kmax + 2];
    for z in &state.z {
        hist[z[m]] += 1;
    }
    // gt[j] = #(z > j)
    let mut gt = vec![0usize; kmax + 2];
    for j in (0..=kmax).rev() {
        gt[j] = gt[j + 1] + hist[j + 1];
    }
    for j in 1..=kmax {
        let (a, b) = nu_conditional_params(hist[j], gt[j], hyper.alpha);
        state.nu[m][j - 1] = sample_beta(a, b, rng)?;
    }
    state.recompute_w(m);
    Ok(())
}

pub fn step_theta(
    state: &mut ChainState,
    system: &LinearSystem,
    hyper: &Hyperparameters,
    noise: NoiseModel,
    rng: &mut RngHandle,
) -> Result<()> {
    let ss = system.residual_ss(&state.lambda);
    let (shape, rate) = theta_conditional_params(system.n(), ss, hyper);
    let draw = sample_inverse_gamma(shape, rate, rng)?;
    state.theta_sq = match noise {
        NoiseModel::Deterministic => draw.max(THETA_SQ_FLOOR),
        NoiseModel::Noisy => draw,
    };
    Ok(())
}

pub fn step_lambda(
    state: &mut ChainState,
    system: &LinearSystem,
    rng: &mut RngHandle,
) -> Result<()> {
    let draw = system.sample_coefficients(&state.sigma_sq, state.theta_sq, rng)?;
    state.lambda = draw.iter().copied().collect();
    Ok(())
}

/// Starting value of the noise variance: a quarter of the response variance.
pub(crate) fn initial_theta_sq(y: &DVector<f64>, noise: NoiseModel) -> f64 {
    let n = y.len();
    let guess = if n < 2 {
        1.0
    } else {
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        if var > 0.0 {
            0.25 * var
        } else {
            1.0
        }
    };
    match noise {
        NoiseModel::Deterministic => guess.max(THETA_SQ_FLOOR),
        NoiseModel::Noisy => guess,
    }
}

/// Starting state: every column in the slab with the slab mode as its
/// variance and the sticks at their prior mean. Coefficients are then drawn
/// from their full conditional so the chain does not start at zero.
fn initial_state(
    trunc: &TruncationVector,
    system: &LinearSystem,
    config: &GibbsConfig,
    hyper: &Hyperparameters,
    noise: NoiseModel,
    rng: &mut RngHandle,
) -> Result<ChainState> {
    let d = trunc.dim();
    let p = trunc.count();
    let nu0 = 1.0 / (1.0 + hyper.alpha);
    let (sigma_sq, z) = match &config.frozen.scales {
        Some(s) => {
            if s.len() != p {
                return Err(Error::mismatch(format!(
                    "{} frozen scales for {p} columns",
                    s.len()
                )));
            }
            (s.clone(), Vec::new())
        }
        None => (
            vec![hyper.b_sigma / (hyper.a_sigma + 1.0); p],
            vec![trunc.max_index.iter().map(|k| k + 1).collect::<Vec<_>>(); p],
        ),
    };
    let mut state = ChainState {
        max_index: trunc.max_index.clone(),
        lambda: vec![0.0; p],
        sigma_sq,
        nu: (0..d).map(|m| vec![nu0; trunc.max_index[m]]).collect(),
        w: vec![Vec::new(); d],
        z,
        theta_sq: config
            .frozen
            .theta_sq
            .unwrap_or_else(|| initial_theta_sq(&system.responses, noise)),
        local_scale: Vec::new(),
        offset: 0.0,
    };
    state.recompute_all_w();
    step_lambda(&mut state, system, rng)?;
    Ok(state)
}

/// One full sweep in the fixed order.
pub fn sweep(
    state: &mut ChainState,
    indices: &[Vec<usize>],
    system: &LinearSystem,
    config: &GibbsConfig,
    hyper: &Hyperparameters,
    noise: NoiseModel,
    rng: &mut RngHandle,
) -> Result<()> {
    if config.frozen.scales.is_none() {
        let d = state.nu.len();
        let cells: Vec<Vec<f64>> = (0..d).map(|m| state.z_cell_probs(m)).collect();
        for (col, k) in indices.iter().enumerate() {
            step_z_with_cells(state, col, k, &cells, hyper, rng)?;
        }
        for (col, k) in indices.iter().enumerate() {
            step_sigma(state, col, k, hyper, rng)?;
        }
        for m in 0..d {
            step_nu(state, m, hyper, rng)?;
        }
    }
    if config.frozen.theta_sq.is_none() {
        step_theta(state, system, hyper, noise, rng)?;
    }
    step_lambda(state, system, rng)
}

pub(crate) fn run_notes() -> Vec<String> {
    vec![
        "coefficient mean uses V X'y / theta^2".into(),
        "noise variance rate is b_theta + S'S/2 with S = y - X Lambda".into(),
        "z has an overflow cell K_m + 1 carrying w_{K_m,m}".into(),
    ]
}

/// Runs the sampler on a dataset, building the design from `family`.
/// Responses are centred first when the family has no constant term.
pub fn run_chain(
    dataset: &Dataset,
    family: &BasisFamily,
    config: &GibbsConfig,
    hyper: &Hyperparameters,
) -> Result<PosteriorChain> {
    dataset.validate()?;
    if config.truncation.dim() != dataset.dim() {
        return Err(Error::mismatch(format!(
            "truncation has {} dimensions, data {}",
            config.truncation.dim(),
            dataset.dim()
        )));
    }
    let centering = config.centering(family, dataset);
    let y = dataset.responses.add_scalar(-centering);
    let design = build_design_matrix(family, &config.truncation, &dataset.points)?;
    let rebuild = |t: &TruncationVector| build_design_matrix(family, t, &dataset.points);
    let center_design = config.centers(family);
    run_internal(
        design,
        y,
        Some(&rebuild),
        *family,
        centering,
        center_design,
        dataset.noise,
        config,
        hyper,
    )
}

/// Runs the sampler on a prebuilt design. Adaptive truncation is not available
/// here because the design cannot be regrown.
pub fn run_chain_with_design(
    design: DMatrix<f64>,
    responses: DVector<f64>,
    family: BasisFamily,
    noise: NoiseModel,
    config: &GibbsConfig,
    hyper: &Hyperparameters,
) -> Result<PosteriorChain> {
    if config.adaptive.is_some() {
        return Err(Error::Config("adaptive truncation needs run_chain".into()));
    }
    if design.ncols() != config.truncation.count() {
        return Err(Error::mismatch(format!(
            "design has {} columns, truncation implies {}",
            design.ncols(),
            config.truncation.count()
        )));
    }
    run_internal(
        design, responses, None, family, 0.0, false, noise, config, hyper,
    )
}

/// Subtracts each column's mean in place and returns the means. Pairs with
/// response centring so the constant is estimated rather than assumed.
pub(crate) fn center_columns(design: &mut DMatrix<f64>) -> Vec<f64> {
    let n = design.nrows().max(1) as f64;
    (0..design.ncols())
        .map(|j| {
            let m = design.column(j).sum() / n;
            design.column_mut(j).add_scalar_mut(-m);
            m
        })
        .collect()
}

pub(crate) fn offset_for(means: &[f64], lambda: &[f64]) -> f64 {
    -means.iter().zip(lambda).map(|(m, l)| m * l).sum::<f64>()
}

type Rebuild<'a> = &'a dyn Fn(&TruncationVector) -> Result<DMatrix<f64>>;

#[allow(clippy::too_many_arguments)]
fn run_internal(
    design: DMatrix<f64>,
    y: DVector<f64>,
    rebuild: Option<Rebuild<'_>>,
    family: BasisFamily,
    centering: f64,
    center_design: bool,
    noise: NoiseModel,
    config: &GibbsConfig,
    hyper: &Hyperparameters,
) -> Result<PosteriorChain> {
    config.validate()?;
    hyper.validate(false)?;
    let mut rng = RngHandle::with_stream(config.seed, config.stream);
    let mut design = design;
    let mut means = if center_design {
        center_columns(&mut design)
    } else {
        Vec::new()
    };
    let mut system = LinearSystem::new(design, y)?;
    let mut trunc = config.truncation.clone();
    let mut indices = enumerate_indices(&trunc);
    let mut state = initial_state(&trunc, &system, config, hyper, noise, &mut rng)
        .map_err(|e| e.at_iteration(0))?;
    let mut states = Vec::new();
    let mut events = Vec::new();

    for b in 1..=config.iterations {
        sweep(
            &mut state, &indices, &system, config, hyper, noise, &mut rng,
        )
        .map_err(|e| e.at_iteration(b))?;
        if let (Some(acfg), Some(rebuild)) = (&config.adaptive, rebuild) {
            let ev = maybe_adapt(&mut state, &config.truncation, b, acfg, hyper, &mut rng)
                .map_err(|e| e.at_iteration(b))?;
            if !ev.is_empty() {
                if state.max_index != trunc.max_index {
                    trunc.max_index = state.max_index.clone();
                    indices = enumerate_indices(&trunc);
                    let y = system.responses.clone();
                    let mut design = rebuild(&trunc)?;
                    if center_design {
                        means = center_columns(&mut design);
                    }
                    system = LinearSystem::new(design, y)?;
                }
                events.extend(ev);
            }
        }
        if config.retain(b) {
            if center_design {
                state.offset = offset_for(&means, &state.lambda);
            }
            states.push(state.clone());
        }
    }

    Ok(PosteriorChain {
        states,
        burn_in: config.burn_in(),
        thinning: config.thinning,
        metadata: ChainMetadata {
            schema_version: SCHEMA_VERSION,
            sampler: SamplerKind::HierGp,
            seed: config.seed,
            stream: config.stream,
            iterations: config.iterations,
            truncation: config.truncation.clone(),
            family,
            hyper: hyper.clone(),
            centering,
            noise,
            proposal_scale: None,
            notes: run_notes(),
            adaptation_events: events,
        },
    })
}

/// Univariate wrapper: `K` basis functions on `[0,1]`, responses used as given.
pub fn run_chain_univariate(
    x: &[f64],
    y: &[f64],
    k: usize,
    iterations: usize,
    seed: u64,
    hyper: &Hyperparameters,
) -> Result<PosteriorChain> {
    let ds = Dataset::new(
        DMatrix::from_column_slice(x.len(), 1, x),
        DVector::from_column_slice(y),
        NoiseModel::Noisy,
    )?;
    let mut config = GibbsConfig::new(iterations, TruncationVector::sinusoidal(&[k])?, seed);
    config.center = Some(false);
    run_chain(&ds, &BasisFamily::SINUSOIDAL, &config, hyper)
}
