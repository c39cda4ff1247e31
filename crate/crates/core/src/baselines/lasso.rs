use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{ensure_dims, Error, Result};
use crate::features::SequenceSample;

/// One linear model per output column sharing the same inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel {
    /// `[outputs, features]`
    pub weights: Array2<f64>,
    pub intercepts: Array1<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Stop once no coefficient moves more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-6,
            max_sweeps: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub model: LassoModel,
    /// Total objective over all outputs after each sweep.
    pub objective: Vec<f64>,
    pub sweeps: usize,
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Flattened windows `[samples, steps * features]`, row-major per window.
pub fn flatten_windows(samples: &[SequenceSample]) -> Array2<f64> {
    let width = samples.first().map_or(0, |s| s.window.len());
    let mut x = Array2::zeros((samples.len(), width));
    for (mut row, s) in x.axis_iter_mut(Axis(0)).zip(samples) {
        row.iter_mut().zip(s.window.iter()).for_each(|(d, v)| *d = *v);
    }
    x
}

struct Centered {
    x_mean: Array1<f64>,
    y_mean: Array1<f64>,
    /// `Xc^T Xc / n`
    gram: Array2<f64>,
    /// `Xc^T Yc / n`, `[features, outputs]`
    corr: Array2<f64>,
    /// `||Yc_k||^2 / n` per output
    y_energy: Array1<f64>,
}

fn center(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Centered> {
    ensure_dims(x.nrows() == y.nrows() && x.nrows() > 0, || {
        format!("design has {} rows, targets {}", x.nrows(), y.nrows())
    })?;
    if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite value in regression inputs".into()));
    }
    let n = x.nrows() as f64;
    let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
    let y_mean = y.mean_axis(Axis(0)).expect("non-empty");
    let xc = &x - &x_mean.view().insert_axis(Axis(0));
    let yc = &y - &y_mean.view().insert_axis(Axis(0));
    let mut gram = Array2::zeros((x.ncols(), x.ncols()));
    general_mat_mul(1.0 / n, &xc.t(), &xc, 0.0, &mut gram);
    let mut corr = Array2::zeros((x.ncols(), y.ncols()));
    general_mat_mul(1.0 / n, &xc.t(), &yc, 0.0, &mut corr);
    let y_energy = yc.map_axis(Axis(0), |c| c.dot(&c) / n);
    Ok(Centered {
        x_mean,
        y_mean,
        gram,
        corr,
        y_energy,
    })
}

/// Smallest lambda at which every weight is zero: `max |Xc^T Yc| / n`.
pub fn lambda_max(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    let c = center(x, y)?;
    Ok(c.corr.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Log-spaced grid from `lo` to `hi` inclusive.
pub fn lambda_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Cyclic coordinate descent on `(1/2n)||Y - XW^T - b||^2 + lambda ||W||_1`,
/// solved on centered data through the Gram matrix. `warm` starts from an
/// earlier solution with the same shape.
pub fn lasso_fit(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    lambda: f64,
    opts: LassoOptions,
    warm: Option<&LassoModel>,
) -> Result<LassoFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let c = center(x, y)?;
    Ok(solve(&c, lambda, opts, warm))
}

fn solve(c: &Centered, lambda: f64, opts: LassoOptions, warm: Option<&LassoModel>) -> LassoFit {
    let p = c.gram.nrows();
    let outputs = c.corr.ncols();
    // coefficients kept as [features, outputs] so one coordinate step touches
    // every output at once
    let mut w = match warm {
        Some(m) if m.weights.dim() == (outputs, p) => m.weights.t().to_owned(),
        _ => Array2::zeros((p, outputs)),
    };
    // residual correlation r = corr - G w
    let mut r = c.corr.clone();
    general_mat_mul(-1.0, &c.gram, &w, 1.0, &mut r);
    let objective_of = |w: &Array2<f64>, r: &Array2<f64>| -> f64 {
        let fit: f64 = Zip::from(w)
            .and(&c.corr)
            .and(r)
            .fold(0.0, |acc, &w, &c, &r| acc + w * (c + r));
        let l1: f64 = w.iter().map(|v| v.abs()).sum();
        0.5 * c.y_energy.sum() - 0.5 * fit + lambda * l1
    };
    let mut objective = Vec::new();
    let mut sweeps = 0;
    let mut delta = Array1::zeros(outputs);
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            let g = c.gram[[j, j]];
            if g <= 0.0 {
                continue;
            }
            let mut moved = false;
            Zip::from(&mut delta)
                .and(w.row_mut(j))
                .and(r.row(j))
                .for_each(|d, w, &r| {
                    let new = soft_threshold(r + g * *w, lambda) / g;
                    *d = new - *w;
                    if *d != 0.0 {
                        *w = new;
                        moved = true;
                        max_delta = max_delta.max(d.abs());
                    }
                });
            if moved {
                for (mut row, &gij) in r.axis_iter_mut(Axis(0)).zip(c.gram.column(j)) {
                    if gij != 0.0 {
                        row.scaled_add(-gij, &delta);
                    }
                }
            }
        }
        objective.push(objective_of(&w, &r));
        if max_delta < opts.tol {
            break;
        }
    }
    let weights = w.t().to_owned();
    let intercepts = &c.y_mean - &weights.dot(&c.x_mean);
    LassoFit {
        model: LassoModel {
            weights,
            intercepts,
            lambda,
        },
        objective,
        sweeps,
    }
}

impl LassoModel {
    pub fn zeros(outputs: usize, features: usize) -> Self {
        LassoModel {
            weights: Array2::zeros((outputs, features)),
            intercepts: Array1::zeros(outputs),
            lambda: 0.0,
        }
    }

    pub fn nonzero(&self) -> usize {
        self.weights.iter().filter(|&&v| v != 0.0).count()
    }

    /// Fit along a decreasing lambda path with warm starts; returns one fit per
    /// entry of `lambdas` in the order given.
    pub fn path(
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
        lambdas: &[f64],
        opts: LassoOptions,
    ) -> Result<Vec<LassoFit>> {
        let c = center(x, y)?;
        let mut order: Vec<usize> = (0..lambdas.len()).collect();
        order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
        let mut fits: Vec<Option<LassoFit>> = vec![None; lambdas.len()];
        let mut prev: Option<LassoModel> = None;
        for i in order {
            let fit = solve(&c, lambdas[i], opts, prev.as_ref());
            prev = Some(fit.model.clone());
            fits[i] = Some(fit);
        }
        Ok(fits.into_iter().map(|f| f.expect("every lambda solved")).collect())
    }
}

/// `X W^T + b`, clamped at zero.
pub fn lasso_predict(model: &LassoModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    ensure_dims(x.ncols() == model.weights.ncols(), || {
        format!(
            "model expects {} features, got {}",
            model.weights.ncols(),
            x.ncols()
        )
    })?;
    let mut out = Array2::zeros((x.nrows(), model.weights.nrows()));
    out.assign(&model.intercepts.view().insert_axis(Axis(0)));
    general_mat_mul(1.0, &x, &model.weights.t(), 1.0, &mut out);
    out.mapv_inplace(|v| v.max(0.0));
    Ok(out)
}
