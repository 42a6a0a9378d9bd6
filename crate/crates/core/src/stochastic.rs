//! Seeded random streams and the handful of distributions the samplers need.
//!
//! Every chain owns one [`RngHandle`]. Handles are ChaCha8 streams keyed by
//! `(seed, stream)`, so parallel chains and benchmark replications get
//! independent, reproducible sequences without sharing state.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Initial jitter relative to `trace / dim`.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct RngHandle {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// An independent handle for sub-stream `stream` of the same seed.
    pub fn substream(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

pub fn sample_normal(mean: f64, sd: f64, rng: &mut RngHandle) -> Result<f64> {
    check_positive("sd", sd)?;
    if !mean.is_finite() {
        return Err(Error::invalid(format!("mean must be finite, got {mean}")));
    }
    Ok(mean + sd * rng.standard_normal())
}

/// Draw `X` with density proportional to `x^(-shape-1) exp(-rate/x)`.
pub fn sample_inverse_gamma(shape: f64, rate: f64, rng: &mut RngHandle) -> Result<f64> {
    check_positive("shape", shape)?;
    check_positive("rate", rate)?;
    let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(1.0 / gamma.sample(rng))
}

pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngHandle) -> Result<f64> {
    check_positive("shape", shape)?;
    check_positive("rate", rate)?;
    let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(gamma.sample(rng))
}

pub fn sample_beta(a: f64, b: f64, rng: &mut RngHandle) -> Result<f64> {
    check_positive("a", a)?;
    check_positive("b", b)?;
    let beta = Beta::new(a, b).map_err(|e| Error::invalid(e.to_string()))?;
    // Beta draws can round to exactly 0 or 1 for extreme shapes; keep them interior.
    let v: f64 = beta.sample(rng);
    Ok(v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Inverse-transform draw of index `l` with probability `weights[l] / sum`.
pub fn sample_categorical(weights: &[f64], rng: &mut RngHandle) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::invalid(format!(
                "categorical weights must be finite and non-negative, got {w}"
            )));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::invalid("categorical weights sum to zero"));
    }
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last_positive)
}

/// Categorical draw from unnormalized log-weights (max-subtracted before exponentiation).
pub fn sample_categorical_log(log_weights: &[f64], rng: &mut RngHandle) -> Result<usize> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::invalid("all log-weights are -inf or NaN"));
    }
    let weights: Vec<f64> = log_weights
        .iter()
        .map(|&lw| if lw.is_nan() { 0.0 } else { (lw - max).exp() })
        .collect();
    sample_categorical(&weights, rng)
}

pub fn log_density_normal(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (2.0 * PI * var).ln() - 0.5 * r * r / var
}

pub fn density_normal(x: f64, mean: f64, var: f64) -> Result<f64> {
    check_positive("var", var)?;
    Ok(log_density_normal(x, mean, var).exp())
}

/// Log-density of a location-0 Student-t with `dof` degrees of freedom whose
/// squared scale is `scale`.
pub fn log_density_student_t(x: f64, dof: f64, scale: f64) -> f64 {
    ln_gamma(0.5 * (dof + 1.0))
        - ln_gamma(0.5 * dof)
        - 0.5 * (dof * PI * scale).ln()
        - 0.5 * (dof + 1.0) * (x * x / (dof * scale)).ln_1p()
}

/// Student-t density parameterized by squared scale, which is how the
/// normal/inverse-gamma slab marginalizes: `N(0, s2)` with `s2 ~ IG(a, b)`
/// integrates to `t_{2a}(0, b/a)`.
pub fn density_student_t(x: f64, dof: f64, scale: f64) -> Result<f64> {
    check_positive("dof", dof)?;
    check_positive("scale", scale)?;
    Ok(log_density_student_t(x, dof, scale).exp())
}

/// Cholesky factor of `matrix + jitter * I`, escalating the jitter from
/// `JITTER_START` to `JITTER_MAX` (relative to `trace / dim`) by factors of 10.
/// Returns the factor and the jitter that was finally added (0 when none).
pub fn cholesky_with_jitter(matrix: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let dim = matrix.nrows();
    if dim != matrix.ncols() {
        return Err(Error::mismatch("matrix to factorize is not square"));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization {
            jitter: 0.0,
            scale: f64::NAN,
        });
    }
    if let Some(ch) = Cholesky::new(matrix.clone()) {
        return Ok((ch, 0.0));
    }
    let scale = (matrix.trace() / dim.max(1) as f64)
        .abs()
        .max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START;
    let mut last = 0.0;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut m = matrix.clone();
        for i in 0..dim {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            return Ok((ch, jitter));
        }
        last = jitter;
        rel *= 10.0;
    }
    Err(Error::Factorization {
        jitter: last,
        scale,
    })
}

/// Multivariate normal draw through a lower-triangular factor of the covariance.
pub fn sample_mvn(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    rng: &mut RngHandle,
) -> Result<DVector<f64>> {
    if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
        return Err(Error::mismatch(format!(
            "mean has length {}, covariance is {}x{}",
            mean.len(),
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let asym = (covariance - covariance.transpose()).amax();
    if asym > 1e-9 * covariance.amax().max(1.0) {
        return Err(Error::invalid(format!(
            "covariance is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    let (chol, _) = cholesky_with_jitter(covariance)?;
    let eps = DVector::from_fn(mean.len(), |_, _| rng.standard_normal());
    Ok(mean + chol.l() * eps)
}

/// Draw from `N(Q^{-1} b, Q^{-1})` given the precision `Q` and the linear term `b`.
/// Returns the draw and the mean. This is the form every conjugate coefficient
/// update in the crate takes.
pub fn sample_mvn_canonical(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut RngHandle,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (chol, _) = cholesky_with_jitter(precision)?;
    let mean = chol.solve(linear);
    let eps = DVector::from_fn(linear.len(), |_, _| rng.standard_normal());
    // L^T u = eps gives u ~ N(0, Q^{-1}).
    let u = chol
        .l()
        .transpose()
        .solve_upper_triangular(&eps)
        .ok_or(Error::Factorization {
            jitter: 0.0,
            scale: f64::NAN,
        })?;
    Ok((&mean + u, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngHandle::new(1);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_normal(0.0, 1.0, &mut rng).unwrap())
            .collect();
        let (m, v) = moments(&xs);
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((v - 1.0).abs() < 0.05, "var {v}");
    }

    #[test]
    fn normal_concentrates_for_tiny_sd() {
        let mut rng = RngHandle::new(2);
        for _ in 0..10_000 {
            let x = sample_normal(5.0, 0.001, &mut rng).unwrap();
            assert!((4.99..=5.01).contains(&x));
        }
    }

    #[test]
    fn normal_rejects_bad_sd() {
        let mut rng = RngHandle::new(0);
        assert!(sample_normal(0.0, 0.0, &mut rng).is_err());
        assert!(sample_normal(0.0, -1.0, &mut rng).is_err());
        assert!(sample_normal(0.0, f64::NAN, &mut rng).is_err());
        assert!(sample_normal(0.0, f64::INFINITY, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngHandle::new(42);
        let mut b = RngHandle::new(42);
        for _ in 0..100 {
            assert_eq!(
                sample_normal(0.0, 1.0, &mut a).unwrap().to_bits(),
                sample_normal(0.0, 1.0, &mut b).unwrap().to_bits()
            );
        }
        let mut c = RngHandle::new(42);
        let mut d = RngHandle::new(42);
        assert_eq!(
            sample_inverse_gamma(2.0, 3.0, &mut c).unwrap().to_bits(),
            sample_inverse_gamma(2.0, 3.0, &mut d).unwrap().to_bits()
        );
    }

    #[test]
    fn substreams_differ_but_replay() {
        let base = RngHandle::new(7);
        let mut s1 = base.substream(1);
        let mut s2 = base.substream(2);
        let a: Vec<u64> = (0..4).map(|_| s1.next_u64()).collect();
        let b: Vec<u64> = (0..4).map(|_| s2.next_u64()).collect();
        assert_ne!(a, b);
        let mut s1b = RngHandle::with_stream(7, 1);
        let a2: Vec<u64> = (0..4).map(|_| s1b.next_u64()).collect();
        assert_eq!(a, a2);
    }

    #[test]
    fn mvn_identity_moments() {
        let mut rng = RngHandle::new(3);
        let mean = DVector::zeros(3);
        let cov = DMatrix::identity(3, 3);
        let draws: Vec<DVector<f64>> = (0..100_000)
            .map(|_| sample_mvn(&mean, &cov, &mut rng).unwrap())
            .collect();
        for c in 0..3 {
            let xs: Vec<f64> = draws.iter().map(|d| d[c]).collect();
            let (m, v) = moments(&xs);
            assert!(m.abs() < 0.02);
            assert!((v - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn mvn_diagonal_variances() {
        let mut rng = RngHandle::new(4);
        let mean = DVector::zeros(2);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let draws: Vec<DVector<f64>> = (0..100_000)
            .map(|_| sample_mvn(&mean, &cov, &mut rng).unwrap())
            .collect();
        let v0 = moments(&draws.iter().map(|d| d[0]).collect::<Vec<_>>()).1;
        let v1 = moments(&draws.iter().map(|d| d[1]).collect::<Vec<_>>()).1;
        assert!((v0 / 4.0 - 1.0).abs() < 0.05);
        assert!((v1 / 9.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn mvn_rank_deficient_components_coincide() {
        // Eigendecomposition of [[1,1],[1,1]]: eigenvalues {2, 0}, eigenvector
        // (1,1)/sqrt(2) for 2. All mass lies on the line x0 = x1.
        let mut rng = RngHandle::new(5);
        let mean = DVector::zeros(2);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        for _ in 0..1000 {
            let d = sample_mvn(&mean, &cov, &mut rng).unwrap();
            assert!((d[0] - d[1]).abs() < 1e-3, "{d}");
        }
    }

    #[test]
    fn mvn_rejects_asymmetric_and_mismatched() {
        let mut rng = RngHandle::new(0);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(sample_mvn(&DVector::zeros(2), &cov, &mut rng).is_err());
        let cov = DMatrix::identity(3, 3);
        assert!(sample_mvn(&DVector::zeros(2), &cov, &mut rng).is_err());
    }

    #[test]
    fn jitter_ladder_gives_up_on_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match cholesky_with_jitter(&m) {
            Err(Error::Factorization { jitter, scale }) => {
                assert!(jitter > 0.0);
                assert!(scale > 0.0);
            }
            other => panic!("expected factorization error, got {other:?}"),
        }
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = RngHandle::new(6);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_inverse_gamma(3.0, 2.0, &mut rng).unwrap())
            .collect();
        let (m, _) = moments(&xs);
        assert!((m - 1.0).abs() < 0.03, "mean {m}");
    }

    #[test]
    fn inverse_gamma_heavy_tail() {
        // P(X > 30) for IG(1,1) is P(Gamma(1,1) < 1/30) = 1 - exp(-1/30) = 0.03278.
        let expected = 1.0 - (-1.0f64 / 30.0).exp();
        assert!(expected > 0.01);
        let mut rng = RngHandle::new(7);
        let n = 100_000;
        let over = (0..n)
            .filter(|_| sample_inverse_gamma(1.0, 1.0, &mut rng).unwrap() > 30.0)
            .count();
        let frac = over as f64 / n as f64;
        assert!(frac > 0.01, "tail fraction {frac}");
        assert!((frac - expected).abs() < 0.003);
    }

    #[test]
    fn inverse_gamma_rejects_bad_params() {
        let mut rng = RngHandle::new(0);
        assert!(sample_inverse_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_inverse_gamma(1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn beta_moments() {
        let mut rng = RngHandle::new(8);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_beta(1.0, 6.0, &mut rng).unwrap())
            .collect();
        assert!((moments(&xs).0 - 1.0 / 7.0).abs() < 0.01);

        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_beta(2.0, 2.0, &mut rng).unwrap())
            .collect();
        let (m, v) = moments(&xs);
        assert!((m - 0.5).abs() < 0.01);
        assert!((v / 0.05 - 1.0).abs() < 0.1);
        assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn beta_one_one_is_uniform() {
        let mut rng = RngHandle::new(9);
        let mut xs: Vec<f64> = (0..100_000)
            .map(|_| sample_beta(1.0, 1.0, &mut rng).unwrap())
            .collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS {ks}");
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = RngHandle::new(10);
        // (0, 1, 0): only the middle index (0-based 1) is possible.
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[0.0, 1.0, 0.0], &mut rng).unwrap(), 1);
        }
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_categorical(&[1.0, 2.0, 7.0], &mut rng).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip([0.1, 0.2, 0.7]) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.01);
        }
        let mut ones = 0;
        for _ in 0..n {
            ones += sample_categorical(&[1.0, 1.0], &mut rng).unwrap();
        }
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn categorical_rejects_bad_weights() {
        let mut rng = RngHandle::new(0);
        assert!(sample_categorical(&[0.0, 0.0], &mut rng).is_err());
        assert!(sample_categorical(&[1.0, -0.5], &mut rng).is_err());
        assert!(sample_categorical(&[1.0, f64::NAN], &mut rng).is_err());
        assert!(sample_categorical_log(&[f64::NEG_INFINITY; 3], &mut rng).is_err());
    }

    #[test]
    fn categorical_log_survives_underflow() {
        let mut rng = RngHandle::new(11);
        let lw = [-2000.0, -2000.0 + 2.0f64.ln()];
        let n = 30_000;
        let hits = (0..n)
            .filter(|_| sample_categorical_log(&lw, &mut rng).unwrap() == 1)
            .count();
        assert!((hits as f64 / n as f64 - 2.0 / 3.0).abs() < 0.015);
    }

    #[test]
    fn normal_density_values() {
        assert_abs_diff_eq!(
            density_normal(0.0, 0.0, 1.0).unwrap(),
            0.398942,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            density_normal(1.0, 0.0, 1.0).unwrap(),
            0.241971,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            density_normal(0.0, 0.0, 4.0).unwrap(),
            0.199471,
            epsilon = 1e-6
        );
        assert!(density_normal(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn student_t_density_values() {
        assert_abs_diff_eq!(
            density_student_t(0.0, 2.0, 1.0).unwrap(),
            0.353553,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            density_student_t(0.0, 2.0, 4.0).unwrap(),
            0.176777,
            epsilon = 1e-6
        );
        assert!(density_student_t(0.0, 0.0, 1.0).is_err());
        assert!(density_student_t(0.0, 1.0, -1.0).is_err());
    }

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
        let n = ((b - a) / h).round() as usize;
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        s * h
    }

    #[test]
    fn student_t_integrates_to_one() {
        // dof = 2 has tail mass 1/(2*sqrt(1+x^2/2)... ) ~ 1/x^2 beyond 50, so the
        // truncated integral sits about 2e-4 below one.
        let total = trapezoid(
            |x| density_student_t(x, 2.0, 1.0).unwrap(),
            -50.0,
            50.0,
            0.01,
        );
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn densities_nonnegative_and_normalized() {
        for var in [0.01, 1.0, 7.0] {
            let total = trapezoid(|x| density_normal(x, 0.3, var).unwrap(), -60.0, 60.0, 0.001);
            assert!((total - 1.0).abs() < 1e-3);
        }
        for (dof, scale) in [(3.0, 0.5), (10.0, 2.0)] {
            let total = trapezoid(
                |x| density_student_t(x, dof, scale).unwrap(),
                -200.0,
                200.0,
                0.005,
            );
            assert!((total - 1.0).abs() < 1e-3);
        }
        for x in [-1e3, -1.0, 0.0, 2.0, 1e6] {
            assert!(density_student_t(x, 2.0, 1.0).unwrap() >= 0.0);
            assert!(density_normal(x, 0.0, 1.0).unwrap() >= 0.0);
        }
    }

    /// Two-sample Kolmogorov–Smirnov statistic and its asymptotic p-value.
    fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (n, m) = (a.len(), b.len());
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < n && j < m {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
        }
        let ne = (n * m) as f64 / (n + m) as f64;
        let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
        let mut p = 0.0;
        for k in 1..100 {
            let k = k as f64;
            p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        }
        p.clamp(0.0, 1.0)
    }

    #[test]
    fn mvn_diagonal_matches_independent_normals() {
        let mut rng = RngHandle::new(12);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        let mean = DVector::from_vec(vec![1.0, -1.0]);
        let n = 10_000;
        let draws: Vec<DVector<f64>> = (0..n)
            .map(|_| sample_mvn(&mean, &cov, &mut rng).unwrap())
            .collect();
        for c in 0..2 {
            let mut a: Vec<f64> = draws.iter().map(|d| d[c]).collect();
            let mut b: Vec<f64> = (0..n)
                .map(|_| sample_normal(mean[c], cov[(c, c)].sqrt(), &mut rng).unwrap())
                .collect();
            let p = ks_two_sample(&mut a, &mut b);
            assert!(p > 0.01, "coordinate {c}: p = {p}");
        }
    }

    #[test]
    fn canonical_form_matches_moment_form() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let mut rng = RngHandle::new(13);
        let n = 100_000;
        let mut sum = DVector::zeros(2);
        let mut outer = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let (x, _) = sample_mvn_canonical(&q, &b, &mut rng).unwrap();
            sum += &x;
            outer += &x * x.transpose();
        }
        let mean = sum / n as f64;
        let cov = outer / n as f64 - &mean * mean.transpose();
        let qinv = q.clone().try_inverse().unwrap();
        let exact_mean = &qinv * &b;
        assert!((mean - exact_mean).amax() < 0.01);
        assert!((cov - qinv).amax() < 0.01);
    }
}
