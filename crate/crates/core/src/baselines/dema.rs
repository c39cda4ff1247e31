use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{ensure_dims, Result};
use crate::features::SequenceSample;

/// Candidate smoothing factors tried by [`tune_alpha`].
pub const ALPHA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Per-region EMA and EMA-of-EMA levels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    pub alpha: f64,
    pub ema: Vec<f64>,
    pub ema_of_ema: Vec<f64>,
    seeded: bool,
}

impl EmaState {
    pub fn new(alpha: f64, n_regions: usize) -> Self {
        EmaState {
            alpha,
            ema: vec![0.0; n_regions],
            ema_of_ema: vec![0.0; n_regions],
            seeded: false,
        }
    }

    /// Absorb one observation per region; the first one seeds both levels.
    pub fn update(&mut self, y: ArrayView1<f64>) {
        let a = self.alpha;
        for ((e, e2), &v) in self.ema.iter_mut().zip(&mut self.ema_of_ema).zip(y) {
            if self.seeded {
                *e += a * (v - *e);
                *e2 += a * (*e - *e2);
            } else {
                *e = v;
                *e2 = v;
            }
        }
        self.seeded = true;
    }

    /// `2 * ema - ema_of_ema`, clamped at zero.
    pub fn forecast(&self) -> Vec<f64> {
        self.ema
            .iter()
            .zip(&self.ema_of_ema)
            .map(|(e, e2)| (2.0 * e - e2).max(0.0))
            .collect()
    }
}

/// Run over `[slots, regions]`; row `t` of the result is the forecast for
/// slot `t + 1` made after seeing slot `t`.
pub fn dema_series(alpha: f64, series: ArrayView2<f64>) -> Array2<f64> {
    let mut state = EmaState::new(alpha, series.ncols());
    let mut out = Array2::zeros(series.raw_dim());
    for (row, mut dst) in series.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        state.update(row);
        dst.assign(&ArrayView1::from(&state.forecast()));
    }
    out
}

/// Pick the alpha with the lowest RMSE on forecasts for slots `tail_start..`
/// of `series`.
pub fn tune_alpha(series: ArrayView2<f64>, tail_start: usize) -> f64 {
    let n = series.nrows();
    let tail_start = tail_start.clamp(1, n.saturating_sub(1).max(1));
    let mut best = (f64::INFINITY, ALPHA_GRID[0]);
    for &alpha in &ALPHA_GRID {
        let f = dema_series(alpha, series);
        let mut sse = 0.0;
        for t in tail_start..n {
            for (p, y) in f.row(t - 1).iter().zip(series.row(t)) {
                sse += (p - y).powi(2);
            }
        }
        if sse < best.0 {
            best = (sse, alpha);
        }
    }
    best.1
}

/// Forecast from each window alone: the first row seeds the levels and the
/// remaining rows update them. Only the leading `n_regions` columns are read.
pub fn dema_predict_windows(alpha: f64, samples: &[SequenceSample], n_regions: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((samples.len(), n_regions));
    for (s, mut dst) in samples.iter().zip(out.axis_iter_mut(Axis(0))) {
        ensure_dims(s.window.ncols() >= n_regions, || {
            format!("window has {} columns, need {n_regions} demand columns", s.window.ncols())
        })?;
        let mut state = EmaState::new(alpha, n_regions);
        for row in s.window.axis_iter(Axis(0)) {
            state.update(row.slice(ndarray::s![..n_regions]));
        }
        dst.assign(&ArrayView1::from(&state.forecast()));
    }
    Ok(out)
}
