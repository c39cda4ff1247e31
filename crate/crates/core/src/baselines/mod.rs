//! Classical baselines: double exponential smoothing and L1-regularized regression.

mod dema;
mod lasso;

pub use dema::{dema_predict_windows, dema_series, tune_alpha, EmaState, ALPHA_GRID};
pub use lasso::{
    flatten_windows, lambda_grid, lambda_max, lasso_fit, lasso_predict, soft_threshold, LassoFit,
    LassoModel, LassoOptions,
};
