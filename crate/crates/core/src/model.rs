//! Model state, hyperparameters, datasets and the shared likelihood.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_indices, BasisFamily, TruncationVector};
use crate::error::{Error, Result};
use crate::stochastic::{sample_beta, sample_categorical, sample_inverse_gamma, RngHandle};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    /// Beta(1, alpha) shape for the cumulative stick weights.
    pub alpha: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_theta: f64,
    pub b_theta: f64,
    /// Spike variance.
    pub sigma_inf_sq: f64,
    /// Global shrinkage for the horseshoe variant.
    pub tau: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            alpha: 6.0,
            a_sigma: 1.0,
            b_sigma: 1.0,
            a_theta: 1.0,
            b_theta: 1.0,
            sigma_inf_sq: 1e-6,
            tau: 1.0,
        }
    }
}

impl Hyperparameters {
    /// Settings used to simulate test functions: exact zeros in the spike.
    pub fn simulation() -> Self {
        Self {
            sigma_inf_sq: 0.0,
            ..Self::default()
        }
    }

    /// Checks ranges. `allow_zero_spike` is only true for prior simulation;
    /// the samplers need a strictly positive spike variance.
    pub fn validate(&self, allow_zero_spike: bool) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_theta", self.a_theta),
            ("b_theta", self.b_theta),
            ("tau", self.tau),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        let s = self.sigma_inf_sq;
        if !s.is_finite() || s < 0.0 || (s == 0.0 && !allow_zero_spike) {
            return Err(Error::invalid(format!(
                "sigma_inf_sq must be {} 0, got {s}",
                if allow_zero_spike { ">=" } else { ">" }
            )));
        }
        if s >= self.b_sigma / (self.a_sigma + 1.0) {
            log::warn!(
                "spike variance {s} is not below the slab mode {}",
                self.b_sigma / (self.a_sigma + 1.0)
            );
        }
        Ok(())
    }

    /// Squared scale of the marginal slab Student-t.
    pub fn slab_t_scale(&self) -> f64 {
        self.b_sigma / self.a_sigma
    }

    pub fn slab_t_dof(&self) -> f64 {
        2.0 * self.a_sigma
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// Deterministic simulator: the noise variance is floored at [`THETA_SQ_FLOOR`].
    Deterministic,
    #[default]
    Noisy,
}

pub const THETA_SQ_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: DMatrix<f64>,
    pub responses: DVector<f64>,
    pub noise: NoiseModel,
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    points: Vec<Vec<f64>>,
    responses: Vec<f64>,
    #[serde(default)]
    noise: NoiseModel,
}

impl Dataset {
    pub fn new(points: DMatrix<f64>, responses: DVector<f64>, noise: NoiseModel) -> Result<Self> {
        let ds = Self {
            points,
            responses,
            noise,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.nrows() != self.responses.len() {
            return Err(Error::mismatch(format!(
                "{} points but {} responses",
                self.points.nrows(),
                self.responses.len()
            )));
        }
        if self.points.ncols() == 0 {
            return Err(Error::invalid("dataset has zero input dimensions"));
        }
        if self
            .points
            .iter()
            .chain(self.responses.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(())
    }

    /// Sinusoidal bases are defined on the unit cube.
    pub fn check_unit_cube(&self) -> Result<()> {
        if self.points.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid(
                "points must lie in [0,1]^d for the sinusoidal family",
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Reads a CSV whose header is `x1,...,xd,y`; columns are taken in that order.
    pub fn from_csv_path(path: &Path, noise: NoiseModel) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, noise)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, noise: NoiseModel) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 2 {
            return Err(Error::Config(
                "CSV needs at least one x column and a y column".into(),
            ));
        }
        let d = cols.len() - 1;
        for (m, name) in cols[..d].iter().enumerate() {
            if *name != format!("x{}", m + 1) {
                return Err(Error::Config(format!(
                    "CSV column {} must be named x{}, found {name:?}",
                    m + 1,
                    m + 1
                )));
            }
        }
        if cols[d] != "y" {
            return Err(Error::Config(format!(
                "last CSV column must be y, found {:?}",
                cols[d]
            )));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for m in 0..d {
                xs.push(parse_field(&rec[m])?);
            }
            ys.push(parse_field(&rec[d])?);
        }
        let n = ys.len();
        if n == 0 {
            return Err(Error::Config("CSV has no data rows".into()));
        }
        Self::new(
            DMatrix::from_row_slice(n, d, &xs),
            DVector::from_vec(ys),
            noise,
        )
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: DatasetJson = serde_json::from_str(s)?;
        let n = raw.points.len();
        let d = raw.points.first().map_or(0, |r| r.len());
        if raw.points.iter().any(|r| r.len() != d) {
            return Err(Error::mismatch("ragged points array"));
        }
        let flat: Vec<f64> = raw.points.into_iter().flatten().collect();
        Self::new(
            DMatrix::from_row_slice(n, d, &flat),
            DVector::from_vec(raw.responses),
            raw.noise,
        )
    }

    pub fn to_json_string(&self) -> Result<String> {
        let raw = DatasetJson {
            points: self
                .points
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            responses: self.responses.iter().copied().collect(),
            noise: self.noise,
        };
        Ok(serde_json::to_string(&raw)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim()).map(|m| format!("x{m}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut row: Vec<String> = self.points.row(i).iter().map(|v| v.to_string()).collect();
            row.push(self.responses[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_field(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Config(format!("cannot parse {s:?} as a number")))
}

/// One iterate of the sampler.
///
/// `z[k][m]` takes values in `1..=K_m + 1`; the top value collects the leftover
/// stick mass `w_{K_m,m}` so the truncated cell probabilities sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    /// Truncation this state is laid out for (changes under adaptation).
    pub max_index: Vec<usize>,
    pub lambda: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    /// `nu[m][j - 1]` for `j = 1..=K_m`.
    pub nu: Vec<Vec<f64>>,
    /// `w[m][j]` for `j = 0..=K_m`, with `w[m][0] = 1`.
    pub w: Vec<Vec<f64>>,
    pub z: Vec<Vec<usize>>,
    pub theta_sq: f64,
    /// Horseshoe local parameters; empty for the cumulative sampler.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub local_scale: Vec<f64>,
    /// Constant added to `sum_k lambda_k phi_k(x)` when the design columns were
    /// centred during fitting: `-xbar' lambda` for this state's layout.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl ChainState {
    pub fn truncation(&self, template: &TruncationVector) -> TruncationVector {
        TruncationVector {
            max_index: self.max_index.clone(),
            start: template.start,
            drop_origin: template.drop_origin,
        }
    }

    /// Rebuilds `w[m]` from `nu[m]` as an exact cumulative product.
    pub fn recompute_w(&mut self, m: usize) {
        let nu = &self.nu[m];
        let w = &mut self.w[m];
        w.resize(nu.len() + 1, 0.0);
        w[0] = 1.0;
        for j in 1..=nu.len() {
            w[j] = w[j - 1] * (1.0 - nu[j - 1]);
        }
    }

    pub fn recompute_all_w(&mut self) {
        for m in 0..self.nu.len() {
            self.recompute_w(m);
        }
    }

    /// `w_k = prod_m w_{k_m, m}`.
    pub fn prior_weight(&self, k: &[usize]) -> f64 {
        k.iter().enumerate().map(|(m, &km)| self.w[m][km]).product()
    }

    /// Prior probabilities of `z_{k,m} = l` for `l = 1..=K_m + 1` (returned 0-based).
    pub fn z_cell_probs(&self, m: usize) -> Vec<f64> {
        let nu = &self.nu[m];
        let w = &self.w[m];
        let mut p: Vec<f64> = (1..=nu.len()).map(|l| nu[l - 1] * w[l - 1]).collect();
        p.push(w[nu.len()]);
        p
    }

    /// Slab membership implied by the latent indices: every component clears its index.
    pub fn z_is_slab(&self, col: usize, k: &[usize]) -> bool {
        self.z[col].iter().zip(k).all(|(&l, &km)| l > km)
    }

    /// Draws a state from the prior. With `sigma_inf_sq = 0` spike
    /// coefficients are exactly zero.
    pub fn from_prior(
        trunc: &TruncationVector,
        hyper: &Hyperparameters,
        rng: &mut RngHandle,
    ) -> Result<Self> {
        hyper.validate(true)?;
        trunc.validate()?;
        let d = trunc.dim();
        let mut state = ChainState {
            max_index: trunc.max_index.clone(),
            lambda: Vec::new(),
            sigma_sq: Vec::new(),
            nu: (0..d)
                .map(|m| {
                    (0..trunc.max_index[m])
                        .map(|_| sample_beta(1.0, hyper.alpha, rng))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?,
            w: vec![Vec::new(); d],
            z: Vec::new(),
            theta_sq: sample_inverse_gamma(hyper.a_theta, hyper.b_theta, rng)?,
            local_scale: Vec::new(),
            offset: 0.0,
        };
        state.recompute_all_w();
        let probs: Vec<Vec<f64>> = (0..d).map(|m| state.z_cell_probs(m)).collect();
        for k in enumerate_indices(trunc) {
            let z: Vec<usize> = probs
                .iter()
                .map(|p| sample_categorical(p, rng).map(|i| i + 1))
                .collect::<Result<_>>()?;
            let slab = z.iter().zip(&k).all(|(&l, &km)| l > km);
            let s2 = if slab {
                sample_inverse_gamma(hyper.a_sigma, hyper.b_sigma, rng)?
            } else {
                hyper.sigma_inf_sq
            };
            let lam = if s2 > 0.0 {
                s2.sqrt() * rng.standard_normal()
            } else {
                0.0
            };
            state.z.push(z);
            state.sigma_sq.push(s2);
            state.lambda.push(lam);
        }
        Ok(state)
    }

    /// Structural checks: sizes, the cumulative identity, monotone weights,
    /// spike/slab consistency with `z`.
    pub fn check_invariants(
        &self,
        template: &TruncationVector,
        hyper: &Hyperparameters,
    ) -> Result<()> {
        let trunc = self.truncation(template);
        let indices = enumerate_indices(&trunc);
        let p = indices.len();
        if self.lambda.len() != p || self.sigma_sq.len() != p {
            return Err(Error::mismatch(format!(
                "state vectors sized {}/{} for {p} basis functions",
                self.lambda.len(),
                self.sigma_sq.len()
            )));
        }
        // horseshoe states carry no stick variables
        for m in 0..trunc.dim().min(self.nu.len()) {
            if self.nu[m].len() != trunc.max_index[m] || self.w[m].len() != trunc.max_index[m] + 1 {
                return Err(Error::mismatch(format!(
                    "nu/w sizes wrong in dimension {m}"
                )));
            }
            if self.w[m][0] != 1.0 {
                return Err(Error::invalid(format!("w[{m}][0] != 1")));
            }
            for j in 1..self.w[m].len() {
                let expected = self.w[m][j - 1] * (1.0 - self.nu[m][j - 1]);
                if self.w[m][j] != expected {
                    return Err(Error::invalid(format!(
                        "cumulative identity broken at ({j},{m})"
                    )));
                }
                if self.w[m][j] > self.w[m][j - 1] {
                    return Err(Error::invalid(format!("w not monotone at ({j},{m})")));
                }
            }
        }
        if !self.z.is_empty() {
            if self.z.len() != p {
                return Err(Error::mismatch("z sized wrongly"));
            }
            for (col, k) in indices.iter().enumerate() {
                for (m, &l) in self.z[col].iter().enumerate() {
                    if l < 1 || l > trunc.max_index[m] + 1 {
                        return Err(Error::invalid(format!("z out of range at column {col}")));
                    }
                }
                let slab = self.z_is_slab(col, k);
                let s2 = self.sigma_sq[col];
                if slab && !(s2 > 0.0) {
                    return Err(Error::invalid(format!(
                        "slab column {col} has variance {s2}"
                    )));
                }
                if !slab && s2 != hyper.sigma_inf_sq {
                    return Err(Error::invalid(format!(
                        "spike column {col} has variance {s2}, expected {}",
                        hyper.sigma_inf_sq
                    )));
                }
            }
        }
        if !(self.theta_sq > 0.0) {
            return Err(Error::invalid("theta_sq must be positive"));
        }
        Ok(())
    }
}

/// `sum_i log N(y_i; (X lambda)_i, theta^2)`.
pub fn log_likelihood(
    state: &ChainState,
    design: &DMatrix<f64>,
    responses: &DVector<f64>,
) -> Result<f64> {
    if design.ncols() != state.lambda.len() || design.nrows() != responses.len() {
        return Err(Error::mismatch(format!(
            "design {}x{}, lambda {}, responses {}",
            design.nrows(),
            design.ncols(),
            state.lambda.len(),
            responses.len()
        )));
    }
    if !(state.theta_sq > 0.0) {
        return Err(Error::invalid("theta_sq must be positive"));
    }
    let lam = DVector::from_column_slice(&state.lambda);
    let resid = responses - design * lam;
    let n = responses.len() as f64;
    Ok(-0.5 * n * (2.0 * PI * state.theta_sq).ln() - 0.5 * resid.norm_squared() / state.theta_sq)
}

pub fn prior_weight(state: &ChainState, k: &[usize]) -> f64 {
    state.prior_weight(k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    HierGp,
    HierGp2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationEvent {
    pub iteration: usize,
    pub dim: usize,
    pub old_k: usize,
    pub new_k: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMetadata {
    pub schema_version: u32,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub stream: u64,
    pub iterations: usize,
    pub truncation: TruncationVector,
    pub family: BasisFamily,
    pub hyper: Hyperparameters,
    /// Added back to every function sample.
    pub centering: f64,
    pub noise: NoiseModel,
    #[serde(default)]
    pub proposal_scale: Option<f64>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub adaptation_events: Vec<AdaptationEvent>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorChain {
    pub states: Vec<ChainState>,
    pub burn_in: usize,
    pub thinning: usize,
    pub metadata: ChainMetadata,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Posterior mean of the coefficient vector (states must share a layout).
    pub fn mean_lambda(&self) -> Result<Vec<f64>> {
        let first = self.states.first().ok_or(Error::EmptyChain)?;
        let p = first.lambda.len();
        let mut acc = vec![0.0; p];
        for s in &self.states {
            if s.lambda.len() != p {
                return Err(Error::mismatch("states have different layouts"));
            }
            for (a, l) in acc.iter_mut().zip(&s.lambda) {
                *a += l;
            }
        }
        let n = self.states.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }

    /// Fraction of retained states in which each coefficient is in the slab.
    pub fn inclusion_probabilities(&self) -> Result<Vec<f64>> {
        let first = self.states.first().ok_or(Error::EmptyChain)?;
        let trunc = first.truncation(&self.metadata.truncation);
        let indices = enumerate_indices(&trunc);
        let mut acc = vec![0.0; indices.len()];
        for s in &self.states {
            if s.max_index != first.max_index {
                return Err(Error::mismatch("states have different layouts"));
            }
            for (col, k) in indices.iter().enumerate() {
                if !s.z.is_empty() && s.z_is_slab(col, k) {
                    acc[col] += 1.0;
                }
            }
        }
        let n = self.states.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }
}
