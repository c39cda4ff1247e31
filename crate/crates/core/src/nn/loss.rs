use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{ensure_dims, Result};

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
    ensure_dims(pred.len() == target.len(), || {
        format!("prediction length {} vs target {}", pred.len(), target.len())
    })?;
    let n = pred.len() as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}

/// Batch mean of per-sample MSE; the gradient is already divided by the batch size.
pub fn mse_loss_batch(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    ensure_dims(pred.dim() == target.dim(), || {
        format!("prediction {:?} vs target {:?}", pred.dim(), target.dim())
    })?;
    let n = pred.len().max(1) as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}
