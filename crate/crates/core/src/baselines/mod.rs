//! Comparison models: least squares, cross-validated lasso and a Matérn-3/2 GP.

pub mod lasso;
pub mod matern;
pub mod ols;

pub use lasso::{lasso_cv, lasso_fit, LassoCvFit, LassoFit};
pub use matern::{matern_gp_fit, matern_gp_predict, MaternFit, MaternGrid, MaternPrediction};
pub use ols::ols_fit;
