//! Blocked Metropolis-within-Gibbs sampler for the horseshoe variant.
//!
//! Each coefficient has a local precision-like parameter `s_k`; the prior
//! variance of `lambda_k` is `theta^2 / (tau s_k)`. The local parameters are
//! updated by a log-normal random walk whose step size is tuned during
//! burn-in toward 0.44 acceptance and then held fixed.

use nalgebra::{DMatrix, DVector};

use crate::basis::{build_design_matrix, BasisFamily};
use crate::error::{Error, Result};
use crate::gibbs::{
    center_columns, initial_theta_sq, offset_for, run_notes, GibbsConfig, LinearSystem,
};
use crate::model::{
    ChainMetadata, ChainState, Dataset, Hyperparameters, NoiseModel, PosteriorChain, SamplerKind,
    SCHEMA_VERSION, THETA_SQ_FLOOR,
};
use crate::stochastic::{sample_inverse_gamma, RngHandle};

pub const TARGET_ACCEPTANCE: f64 = 0.44;
const TUNE_EVERY: usize = 50;

/// Log of the local-parameter full conditional, up to a constant:
/// `-ln(1 + s) - lambda^2 tau s / (2 theta^2)`.
pub fn local_log_target(s: f64, lambda: f64, theta_sq: f64, tau: f64) -> f64 {
    if !(s > 0.0) {
        return f64::NEG_INFINITY;
    }
    -(1.0 + s).ln() - lambda * lambda * tau * s / (2.0 * theta_sq)
}

/// One Metropolis-Hastings move on `s` with a log-normal proposal. Returns the
/// new value and whether it was accepted.
pub fn mh_local_step(
    s: f64,
    lambda: f64,
    theta_sq: f64,
    tau: f64,
    step: f64,
    bound: Option<f64>,
    rng: &mut RngHandle,
) -> (f64, bool) {
    let proposal = s * (step * rng.standard_normal()).exp();
    if bound.is_some_and(|b| proposal > b) || !(proposal > 0.0) || !proposal.is_finite() {
        return (s, false);
    }
    // ln(proposal / s) is the Jacobian of the log-scale walk
    let log_ratio = local_log_target(proposal, lambda, theta_sq, tau)
        - local_log_target(s, lambda, theta_sq, tau)
        + (proposal / s).ln();
    if rng.uniform().ln() < log_ratio {
        (proposal, true)
    } else {
        (s, false)
    }
}

/// Prior variances implied by the local parameters.
pub fn implied_variances(local: &[f64], theta_sq: f64, tau: f64) -> Vec<f64> {
    local.iter().map(|s| theta_sq / (tau * s)).collect()
}

/// Shape and rate of the noise-variance conditional. The coefficient prior
/// scales with `theta^2`, so its quadratic form enters alongside the residual.
pub fn hs_theta_params(
    n: usize,
    residual_ss: f64,
    lambda: &[f64],
    local: &[f64],
    hyper: &Hyperparameters,
) -> (f64, f64) {
    let prior_quad: f64 = lambda.iter().zip(local).map(|(l, s)| s * l * l).sum();
    (
        hyper.a_theta + 0.5 * (n + lambda.len()) as f64,
        hyper.b_theta + 0.5 * residual_ss + 0.5 * hyper.tau * prior_quad,
    )
}

pub fn hs_step_lambda(
    state: &mut ChainState,
    system: &LinearSystem,
    hyper: &Hyperparameters,
    rng: &mut RngHandle,
) -> Result<()> {
    state.sigma_sq = implied_variances(&state.local_scale, state.theta_sq, hyper.tau);
    let draw = system.sample_coefficients(&state.sigma_sq, state.theta_sq, rng)?;
    state.lambda = draw.iter().copied().collect();
    Ok(())
}

/// Updates every local parameter; returns the number of accepted moves.
pub fn hs_step_local(
    state: &mut ChainState,
    hyper: &Hyperparameters,
    step: f64,
    bound: Option<f64>,
    rng: &mut RngHandle,
) -> usize {
    let mut accepted = 0;
    for k in 0..state.local_scale.len() {
        let (s, acc) = mh_local_step(
            state.local_scale[k],
            state.lambda[k],
            state.theta_sq,
            hyper.tau,
            step,
            bound,
            rng,
        );
        state.local_scale[k] = s;
        accepted += acc as usize;
    }
    accepted
}

pub fn hs_step_theta(
    state: &mut ChainState,
    system: &LinearSystem,
    hyper: &Hyperparameters,
    noise: NoiseModel,
    rng: &mut RngHandle,
) -> Result<()> {
    let ss = system.residual_ss(&state.lambda);
    let (shape, rate) = hs_theta_params(system.n(), ss, &state.lambda, &state.local_scale, hyper);
    let draw = sample_inverse_gamma(shape, rate, rng)?;
    state.theta_sq = match noise {
        NoiseModel::Deterministic => draw.max(THETA_SQ_FLOOR),
        NoiseModel::Noisy => draw,
    };
    state.sigma_sq = implied_variances(&state.local_scale, state.theta_sq, hyper.tau);
    Ok(())
}

pub fn hs_run_chain(
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
    hs_run_internal(
        design,
        y,
        *family,
        centering,
        config.centers(family),
        dataset.noise,
        config,
        hyper,
    )
}

pub fn hs_run_chain_with_design(
    design: DMatrix<f64>,
    responses: DVector<f64>,
    family: BasisFamily,
    noise: NoiseModel,
    config: &GibbsConfig,
    hyper: &Hyperparameters,
) -> Result<PosteriorChain> {
    if design.ncols() != config.truncation.count() {
        return Err(Error::mismatch(format!(
            "design has {} columns, truncation implies {}",
            design.ncols(),
            config.truncation.count()
        )));
    }
    hs_run_internal(design, responses, family, 0.0, false, noise, config, hyper)
}

#[allow(clippy::too_many_arguments)]
fn hs_run_internal(
    mut design: DMatrix<f64>,
    y: DVector<f64>,
    family: BasisFamily,
    centering: f64,
    center_design: bool,
    noise: NoiseModel,
    config: &GibbsConfig,
    hyper: &Hyperparameters,
) -> Result<PosteriorChain> {
    config.validate()?;
    hyper.validate(true)?;
    if config.adaptive.is_some() {
        return Err(Error::Config(
            "adaptive truncation is only available for the cumulative sampler".into(),
        ));
    }
    let p = config.truncation.count();
    let mut rng = RngHandle::with_stream(config.seed, config.stream);
    let means = if center_design {
        center_columns(&mut design)
    } else {
        Vec::new()
    };
    let system = LinearSystem::new(design, y)?;
    let local = match &config.frozen.scales {
        Some(s) if s.len() != p => {
            return Err(Error::mismatch(format!(
                "{} frozen scales for {p} columns",
                s.len()
            )))
        }
        Some(s) => s.clone(),
        None => vec![1.0; p],
    };
    let theta_sq = config
        .frozen
        .theta_sq
        .unwrap_or_else(|| initial_theta_sq(&system.responses, noise));
    let mut state = ChainState {
        max_index: config.truncation.max_index.clone(),
        lambda: vec![0.0; p],
        sigma_sq: implied_variances(&local, theta_sq, hyper.tau),
        nu: Vec::new(),
        w: Vec::new(),
        z: Vec::new(),
        theta_sq,
        local_scale: local,
        offset: 0.0,
    };

    let burn = config.burn_in();
    let mut step = config.proposal_scale;
    let mut window_acc = 0usize;
    let mut window_tot = 0usize;
    let mut states = Vec::new();
    for b in 1..=config.iterations {
        let it = |e: Error| e.at_iteration(b);
        hs_step_lambda(&mut state, &system, hyper, &mut rng).map_err(it)?;
        if config.frozen.scales.is_none() {
            window_acc +=
                hs_step_local(&mut state, hyper, step, config.local_scale_bound, &mut rng);
            window_tot += p;
        }
        if config.frozen.theta_sq.is_none() {
            hs_step_theta(&mut state, &system, hyper, noise, &mut rng).map_err(it)?;
        }
        if b <= burn && b % TUNE_EVERY == 0 && window_tot > 0 {
            let rate = window_acc as f64 / window_tot as f64;
            // Robbins-Monro style nudge on the log step, shrinking with time
            let gain = 1.0 / ((b / TUNE_EVERY) as f64).sqrt();
            step *= (gain * (rate - TARGET_ACCEPTANCE)).exp();
            step = step.clamp(1e-3, 50.0);
            window_acc = 0;
            window_tot = 0;
        }
        if b > burn && (b - burn).is_multiple_of(config.thinning) {
            if center_design {
                state.offset = offset_for(&means, &state.lambda);
            }
            states.push(state.clone());
        }
    }

    let mut notes = run_notes();
    notes.truncate(2);
    notes.push("local parameters act as precisions: prior variance theta^2 / (tau s_k)".into());
    notes.push("noise variance conditional includes the coefficient prior term".into());
    Ok(PosteriorChain {
        states,
        burn_in: burn,
        thinning: config.thinning,
        metadata: ChainMetadata {
            schema_version: SCHEMA_VERSION,
            sampler: SamplerKind::HierGp2,
            seed: config.seed,
            stream: config.stream,
            iterations: config.iterations,
            truncation: config.truncation.clone(),
            family,
            hyper: hyper.clone(),
            centering,
            noise,
            proposal_scale: Some(step),
            notes,
            adaptation_events: Vec::new(),
        },
    })
}

/// Post-burn-in acceptance rate of the local moves, estimated by replaying
/// the retained states (a move counts as accepted when the value changed).
pub fn acceptance_rate(chain: &PosteriorChain) -> Option<f64> {
    let mut changed = 0usize;
    let mut total = 0usize;
    for pair in chain.states.windows(2) {
        for (a, b) in pair[0].local_scale.iter().zip(&pair[1].local_scale) {
            changed += (a != b) as usize;
            total += 1;
        }
    }
    (total > 0 && chain.thinning == 1).then(|| changed as f64 / total as f64)
}
