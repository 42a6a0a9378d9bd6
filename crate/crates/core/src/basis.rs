//! Multi-index enumeration, basis families and design matrices.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension truncation limits.
///
/// `max_index[m]` is the largest index used in dimension `m`; indices run from
/// `start` to `max_index[m]`. The sinusoidal family starts at 1 (`sin(0) = 0`),
/// the monomial library at 0 so that power-0 factors are always eligible.
/// `drop_origin` removes the all-`start` multi-index (the constant monomial).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationVector {
    pub max_index: Vec<usize>,
    pub start: usize,
    #[serde(default)]
    pub drop_origin: bool,
}

impl TruncationVector {
    pub fn new(max_index: Vec<usize>, start: usize) -> Result<Self> {
        let t = Self {
            max_index,
            start,
            drop_origin: false,
        };
        t.validate()?;
        Ok(t)
    }

    /// Sinusoidal truncation `K = (K_1, ..., K_d)` starting at 1.
    pub fn sinusoidal(k: &[usize]) -> Result<Self> {
        Self::new(k.to_vec(), 1)
    }

    /// Monomial library with `terms[m]` powers `0..terms[m]` per dimension and
    /// no constant term.
    pub fn monomial_library(terms: &[usize]) -> Result<Self> {
        if terms.iter().any(|&t| t < 2) {
            return Err(Error::invalid(
                "monomial library needs at least 2 terms per dimension",
            ));
        }
        let mut t = Self::new(terms.iter().map(|t| t - 1).collect(), 0)?;
        t.drop_origin = true;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_index.is_empty() {
            return Err(Error::invalid("truncation vector has no dimensions"));
        }
        if self.start > 1 {
            return Err(Error::invalid("start offset must be 0 or 1"));
        }
        if self.max_index.iter().any(|&k| k < 1 || k < self.start) {
            return Err(Error::invalid(format!(
                "truncation limits must be >= max(1, start): {:?}",
                self.max_index
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.max_index.len()
    }

    /// Number of index values in dimension `m`.
    pub fn levels(&self, m: usize) -> usize {
        self.max_index[m] - self.start + 1
    }

    /// Total basis count `||K||`.
    pub fn count(&self) -> usize {
        let full: usize = (0..self.dim()).map(|m| self.levels(m)).product();
        full - usize::from(self.drop_origin)
    }
}

/// Lexicographic enumeration from `(start, ..., start)` to `(K_1, ..., K_d)`,
/// last dimension varying fastest. This order fixes the design-matrix columns
/// and the coefficient layout everywhere in the crate.
pub fn enumerate_indices(trunc: &TruncationVector) -> Vec<Vec<usize>> {
    let d = trunc.dim();
    let mut out = Vec::with_capacity(trunc.count());
    let mut cur = vec![trunc.start; d];
    loop {
        let is_origin = cur.iter().all(|&k| k == trunc.start);
        if !(trunc.drop_origin && is_origin) {
            out.push(cur.clone());
        }
        // odometer increment
        let mut m = d;
        loop {
            if m == 0 {
                return out;
            }
            m -= 1;
            if cur[m] < trunc.max_index[m] {
                cur[m] += 1;
                break;
            }
            cur[m] = trunc.start;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Sinusoidal,
    Monomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Plain products of `sin(2 pi k x)`.
    #[default]
    Plain,
    /// Scaled by `sqrt(2)` per non-zero index, orthonormal on `[0,1]^d`.
    Orthonormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisFamily {
    pub kind: BasisKind,
    #[serde(default)]
    pub normalization: Normalization,
}

impl BasisFamily {
    pub const SINUSOIDAL: BasisFamily = BasisFamily {
        kind: BasisKind::Sinusoidal,
        normalization: Normalization::Plain,
    };
    pub const SINUSOIDAL_ORTHONORMAL: BasisFamily = BasisFamily {
        kind: BasisKind::Sinusoidal,
        normalization: Normalization::Orthonormal,
    };
    pub const MONOMIAL: BasisFamily = BasisFamily {
        kind: BasisKind::Monomial,
        normalization: Normalization::Plain,
    };

    /// Whether the family can represent a constant; responses are centered when not.
    pub fn needs_centering(&self) -> bool {
        self.kind == BasisKind::Sinusoidal
    }

    pub fn eval(&self, k: &[usize], x: &[f64]) -> f64 {
        match self.kind {
            BasisKind::Sinusoidal => {
                let mut v = 1.0;
                for (&km, &xm) in k.iter().zip(x) {
                    if km == 0 {
                        // sin(0) = 0 for every x
                        return 0.0;
                    }
                    v *= (2.0 * PI * km as f64 * xm).sin();
                    if self.normalization == Normalization::Orthonormal {
                        v *= std::f64::consts::SQRT_2;
                    }
                }
                v
            }
            BasisKind::Monomial => k
                .iter()
                .zip(x)
                .map(|(&km, &xm)| xm.powi(km as i32))
                .product(),
        }
    }
}

pub fn eval_basis(family: &BasisFamily, k: &[usize], x: &[f64]) -> f64 {
    family.eval(k, x)
}

/// Design matrix with `rows[i][j] = phi_{k_j}(x_i)`; columns follow
/// [`enumerate_indices`].
pub fn build_design_matrix(
    family: &BasisFamily,
    trunc: &TruncationVector,
    points: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if points.ncols() != trunc.dim() {
        return Err(Error::mismatch(format!(
            "points have {} columns, truncation has {} dimensions",
            points.ncols(),
            trunc.dim()
        )));
    }
    let indices = enumerate_indices(trunc);
    Ok(design_from_indices(family, &indices, points))
}

pub(crate) fn design_from_indices(
    family: &BasisFamily,
    indices: &[Vec<usize>],
    points: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = points.nrows();
    let mut x = vec![0.0; points.ncols()];
    let mut out = DMatrix::zeros(n, indices.len());
    for i in 0..n {
        for (m, xm) in x.iter_mut().enumerate() {
            *xm = points[(i, m)];
        }
        for (j, k) in indices.iter().enumerate() {
            out[(i, j)] = family.eval(k, &x);
        }
    }
    out
}

/// Human-readable term label such as `x1^3 x2` for monomials or `s(1,2)` for sinusoids.
pub fn term_label(family: &BasisFamily, k: &[usize], names: &[&str]) -> String {
    match family.kind {
        BasisKind::Sinusoidal => format!(
            "s({})",
            k.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ),
        BasisKind::Monomial => {
            let parts: Vec<String> = k
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0)
                .map(|(m, &p)| {
                    let name = names
                        .get(m)
                        .map(|s| s.to_string())
                        .unwrap_or(format!("x{}", m + 1));
                    if p == 1 {
                        name
                    } else {
                        format!("{name}^{p}")
                    }
                })
                .collect();
            if parts.is_empty() {
                "1".to_string()
            } else {
                parts.join(" ")
            }
        }
    }
}
