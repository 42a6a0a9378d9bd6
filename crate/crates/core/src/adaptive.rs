//! Adaptive truncation: with a probability that decays in the iteration
//! count, each dimension's truncation either shrinks to its active part or
//! grows by one level.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_indices, TruncationVector};
use crate::error::{Error, Result};
use crate::model::{AdaptationEvent, ChainState, Hyperparameters};
use crate::stochastic::{sample_beta, RngHandle};

/// How the per-dimension activity count `K*_m` is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivityRule {
    /// `K*_m = sum_k 1(z_{k,m} > k_m)` over every column.
    #[default]
    Verbatim,
    /// Number of levels `j >= 1` along dimension `m` with at least one slab column.
    ActiveSlices,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    pub b_bar: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Cap on the maximum index in any dimension.
    pub k_max: usize,
    pub rule: ActivityRule,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            b_bar: 200,
            alpha0: -1.0,
            alpha1: -5e-4,
            k_max: 16,
            rule: ActivityRule::Verbatim,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 < 0.0) || !self.alpha0.is_finite() {
            return Err(Error::invalid(format!(
                "adaptation needs alpha1 < 0 and finite alpha0, got {} and {}",
                self.alpha1, self.alpha0
            )));
        }
        if self.k_max == 0 {
            return Err(Error::invalid("k_max must be >= 1"));
        }
        Ok(())
    }

    /// `p(b) = exp(alpha0 + alpha1 b)`, clipped to 1.
    pub fn probability(&self, b: usize) -> f64 {
        (self.alpha0 + self.alpha1 * b as f64).exp().min(1.0)
    }
}

fn is_active(state: &ChainState, col: usize, k: &[usize], hyper: &Hyperparameters) -> bool {
    if state.z.is_empty() {
        state.sigma_sq[col] != hyper.sigma_inf_sq
    } else {
        state.z_is_slab(col, k)
    }
}

/// Activity count for dimension `m` under `rule`.
pub fn activity_count(
    state: &ChainState,
    template: &TruncationVector,
    m: usize,
    rule: ActivityRule,
    hyper: &Hyperparameters,
) -> usize {
    let indices = enumerate_indices(&state.truncation(template));
    match rule {
        ActivityRule::Verbatim => indices
            .iter()
            .enumerate()
            .filter(|(col, k)| state.z.get(*col).is_some_and(|z| z[m] > k[m]))
            .count(),
        ActivityRule::ActiveSlices => active_levels(state, &indices, m, hyper).len(),
    }
}

/// Levels `j >= 1` of dimension `m` that carry at least one active column, ascending.
fn active_levels(
    state: &ChainState,
    indices: &[Vec<usize>],
    m: usize,
    hyper: &Hyperparameters,
) -> Vec<usize> {
    let mut levels: Vec<usize> = indices
        .iter()
        .enumerate()
        .filter(|(col, k)| k[m] >= 1 && is_active(state, *col, k, hyper))
        .map(|(_, k)| k[m])
        .collect();
    levels.sort_unstable();
    levels.dedup();
    levels
}

/// Runs one adaptation attempt at iteration `b`. Returns the logged events
/// (empty when the gate did not fire). The state is resized in place.
pub fn maybe_adapt(
    state: &mut ChainState,
    template: &TruncationVector,
    b: usize,
    cfg: &AdaptiveConfig,
    hyper: &Hyperparameters,
    rng: &mut RngHandle,
) -> Result<Vec<AdaptationEvent>> {
    if b < cfg.b_bar.max(1) {
        return Ok(Vec::new());
    }
    if rng.uniform() >= cfg.probability(b) {
        return Ok(Vec::new());
    }
    let mut events = Vec::new();
    for m in 0..state.max_index.len() {
        let old_k = state.max_index[m];
        let k_star = activity_count(state, template, m, cfg.rule, hyper);
        let indices = enumerate_indices(&state.truncation(template));
        let desired = if k_star <= old_k {
            k_star + 1
        } else {
            old_k + 1
        };
        if desired > old_k && old_k >= cfg.k_max {
            log::debug!(
                "adaptation at iteration {b}: dimension {m} already at k_max {}",
                cfg.k_max
            );
            events.push(AdaptationEvent {
                iteration: b,
                dim: m,
                old_k,
                new_k: old_k,
                reason: "grow-capped".into(),
            });
            continue;
        }
        let target = desired.clamp(1, cfg.k_max);
        let plan: Vec<Option<usize>> = if k_star <= old_k {
            // active levels first, then the remaining old levels, then fresh ones
            let mut order = active_levels(state, &indices, m, hyper);
            order.extend(
                (1..=old_k)
                    .filter(|j| !order.contains(j))
                    .collect::<Vec<_>>(),
            );
            let mut plan: Vec<Option<usize>> = order.into_iter().take(target).map(Some).collect();
            plan.resize(target, None);
            plan
        } else {
            let mut plan: Vec<Option<usize>> = (1..=old_k).map(Some).collect();
            plan.push(None);
            plan
        };
        let reason = match target.cmp(&old_k) {
            std::cmp::Ordering::Less => "shrink",
            std::cmp::Ordering::Equal => "relabel",
            std::cmp::Ordering::Greater => "grow",
        };
        relayout(state, template, m, &plan, hyper, rng)?;
        events.push(AdaptationEvent {
            iteration: b,
            dim: m,
            old_k,
            new_k: state.max_index[m],
            reason: reason.into(),
        });
    }
    reset_z(state, template, hyper);
    Ok(events)
}

/// Rebuilds the state with dimension `m` laid out by `plan`: entry `i` says
/// which old level becomes new level `i + 1` (`None` starts a fresh level
/// from the spike). Level 0, when present, stays where it is.
pub fn relayout(
    state: &mut ChainState,
    template: &TruncationVector,
    m: usize,
    plan: &[Option<usize>],
    hyper: &Hyperparameters,
    rng: &mut RngHandle,
) -> Result<()> {
    if plan.is_empty() {
        return Err(Error::invalid("a dimension needs at least one level"));
    }
    let old_trunc = state.truncation(template);
    let old_cols: HashMap<Vec<usize>, usize> = enumerate_indices(&old_trunc)
        .into_iter()
        .enumerate()
        .map(|(c, k)| (k, c))
        .collect();
    let mut new_trunc = old_trunc.clone();
    new_trunc.max_index[m] = plan.len();
    let new_indices = enumerate_indices(&new_trunc);

    let spike_sd = hyper.sigma_inf_sq.sqrt();
    let mut lambda = Vec::with_capacity(new_indices.len());
    let mut sigma_sq = Vec::with_capacity(new_indices.len());
    let mut local = Vec::new();
    for k in &new_indices {
        let source = if k[m] == 0 { Some(0) } else { plan[k[m] - 1] };
        let old_col = source.and_then(|j| {
            let mut old = k.clone();
            old[m] = j;
            old_cols.get(&old).copied()
        });
        match old_col {
            Some(c) => {
                lambda.push(state.lambda[c]);
                sigma_sq.push(state.sigma_sq[c]);
                if !state.local_scale.is_empty() {
                    local.push(state.local_scale[c]);
                }
            }
            None => {
                lambda.push(spike_sd * rng.standard_normal());
                sigma_sq.push(hyper.sigma_inf_sq);
                if !state.local_scale.is_empty() {
                    local.push(1.0);
                }
            }
        }
    }
    let mut nu = Vec::with_capacity(plan.len());
    for entry in plan {
        nu.push(match entry {
            Some(j) => state.nu[m][j - 1],
            None => sample_beta(1.0, hyper.alpha, rng)?,
        });
    }
    state.lambda = lambda;
    state.sigma_sq = sigma_sq;
    state.local_scale = local;
    state.nu[m] = nu;
    state.max_index[m] = plan.len();
    state.recompute_w(m);
    state.z = vec![vec![1; new_trunc.dim()]; new_indices.len()];
    reset_z(state, template, hyper);
    Ok(())
}

/// Sets `z` to a value consistent with the current spike/slab labels: slab
/// columns sit in the overflow cell everywhere, spike columns drop to cell 1
/// in their first non-constant dimension.
fn reset_z(state: &mut ChainState, template: &TruncationVector, hyper: &Hyperparameters) {
    let indices = enumerate_indices(&state.truncation(template));
    let top: Vec<usize> = state.max_index.iter().map(|k| k + 1).collect();
    state.z = Vec::with_capacity(indices.len());
    for (col, k) in indices.iter().enumerate() {
        let mut z = top.clone();
        if state.sigma_sq[col] == hyper.sigma_inf_sq {
            match k.iter().position(|&km| km >= 1) {
                Some(m) => z[m] = 1,
                None => state.sigma_sq[col] = hyper.b_sigma / (hyper.a_sigma + 1.0),
            }
        }
        state.z.push(z);
    }
}
