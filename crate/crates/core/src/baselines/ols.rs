use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimum-norm least-squares coefficients through the SVD. Singular values
/// below `1e-12 * max` are treated as zero.
pub fn ols_fit(design: &DMatrix<f64>, responses: &DVector<f64>) -> Result<DVector<f64>> {
    if design.nrows() != responses.len() {
        return Err(Error::mismatch(format!(
            "design has {} rows, responses {}",
            design.nrows(),
            responses.len()
        )));
    }
    if design.nrows() == 0 {
        return Err(Error::invalid(
            "least squares needs at least one observation",
        ));
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = if smax > 0.0 { 1e-12 * smax } else { 1.0 };
    svd.solve(responses, eps)
        .map_err(|e| Error::invalid(e.to_string()))
}
