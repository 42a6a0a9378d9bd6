//! Test functions for the emulation benchmarks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_indices, BasisFamily, TruncationVector};
use crate::error::{Error, Result};
use crate::model::{ChainState, Hyperparameters};
use crate::stochastic::RngHandle;

/// Branin on `[0,1]^2`, rescaled affinely to `[-5,10] x [0,15]`.
///
/// `as_printed` drops the square on the first input inside the quadratic
/// term and uses `t = 1/pi`, reproducing a common misprint of the formula.
/// The default is the standard form with `t = 1/(8 pi)`.
pub fn branin(u: &[f64], as_printed: bool) -> f64 {
    branin_conventional(-5.0 + 15.0 * u[0], 15.0 * u[1], as_printed)
}

/// Branin on its conventional domain.
pub fn branin_conventional(x1: f64, x2: f64, as_printed: bool) -> f64 {
    let a = 1.0;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let r = 6.0;
    let s = 10.0;
    let (quad, t) = if as_printed {
        (b * x1, 1.0 / PI)
    } else {
        (b * x1 * x1, 1.0 / (8.0 * PI))
    };
    a * (x2 - quad + c * x1 - r).powi(2) + s * (1.0 - t) * x1.cos() + s
}

/// `cos(x1 + x2) exp(x1 x2)` on `[0,1]^2`.
pub fn cheng_sandu(x: &[f64]) -> f64 {
    (x[0] + x[1]).cos() * (x[0] * x[1]).exp()
}

/// A function drawn from the cumulative shrinkage prior, stored by its coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorFunction {
    pub truncation: TruncationVector,
    pub family: BasisFamily,
    pub lambda: Vec<f64>,
    /// Stick weights of the draw, kept for inspection.
    pub w: Vec<Vec<f64>>,
}

impl PriorFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        enumerate_indices(&self.truncation)
            .iter()
            .zip(&self.lambda)
            .filter(|(_, l)| **l != 0.0)
            .map(|(k, l)| l * self.family.eval(k, x))
            .sum()
    }

    pub fn active_count(&self) -> usize {
        self.lambda.iter().filter(|l| **l != 0.0).count()
    }
}

/// Draws `nu -> w -> sigma^2 -> lambda` from the prior with a sinusoidal basis.
pub fn simulate_from_prior(
    k: &[usize],
    hyper: &Hyperparameters,
    rng: &mut RngHandle,
) -> Result<PriorFunction> {
    if k.is_empty() {
        return Err(Error::invalid("need at least one dimension"));
    }
    let truncation = TruncationVector::sinusoidal(k)?;
    let state = ChainState::from_prior(&truncation, hyper, rng)?;
    Ok(PriorFunction {
        truncation,
        family: BasisFamily::SINUSOIDAL,
        lambda: state.lambda,
        w: state.w,
    })
}

/// Named test function used by configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    Branin,
    ChengSandu,
}

impl TestFunction {
    pub fn eval(&self, x: &[f64], branin_as_printed: bool) -> f64 {
        match self {
            TestFunction::Branin => branin(x, branin_as_printed),
            TestFunction::ChengSandu => cheng_sandu(x),
        }
    }
}
