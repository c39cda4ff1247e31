use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::data::TimeSlot;
use crate::error::{ensure_dims, Error, Result};

fn same_shape(a: &ArrayView2<f64>, p: &ArrayView2<f64>) -> Result<()> {
    ensure_dims(a.dim() == p.dim(), || {
        format!("actuals {:?} vs predictions {:?}", a.dim(), p.dim())
    })
}

/// Root mean squared error over every entry.
pub fn rmse(actuals: ArrayView2<f64>, predictions: ArrayView2<f64>) -> Result<f64> {
    same_shape(&actuals, &predictions)?;
    if actuals.is_empty() {
        return Err(Error::data("RMSE of an empty set"));
    }
    let sse: f64 = actuals
        .iter()
        .zip(predictions.iter())
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok((sse / actuals.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    /// Percent.
    pub value: f64,
    pub used: usize,
    /// Entries skipped because the actual is zero.
    pub excluded: usize,
}

/// Mean absolute percentage error over entries with a positive actual.
pub fn mape(actuals: ArrayView2<f64>, predictions: ArrayView2<f64>) -> Result<Mape> {
    same_shape(&actuals, &predictions)?;
    let (mut sum, mut used, mut excluded) = (0.0, 0usize, 0usize);
    for (y, p) in actuals.iter().zip(predictions.iter()) {
        if *y > 0.0 {
            sum += (y - p).abs() / y;
            used += 1;
        } else {
            excluded += 1;
        }
    }
    if used == 0 {
        return Err(Error::data("MAPE undefined: every actual is zero"));
    }
    Ok(Mape {
        value: 100.0 * sum / used as f64,
        used,
        excluded,
    })
}

/// Metrics of one group of samples; `None` when the group is empty or the
/// metric is undefined for it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n_samples: usize,
    pub rmse: Option<f64>,
    pub mape: Option<f64>,
    pub mape_excluded: usize,
}

fn group_metrics(actuals: &[&[f64]], predictions: &[&[f64]]) -> GroupMetrics {
    let (mut sse, mut n, mut ape, mut used, mut excluded) = (0.0, 0usize, 0.0, 0usize, 0usize);
    for (a, p) in actuals.iter().zip(predictions) {
        for (y, q) in a.iter().zip(p.iter()) {
            sse += (y - q).powi(2);
            n += 1;
            if *y > 0.0 {
                ape += (y - q).abs() / y;
                used += 1;
            } else {
                excluded += 1;
            }
        }
    }
    GroupMetrics {
        n_samples: actuals.len(),
        rmse: (n > 0).then(|| (sse / n as f64).sqrt()),
        mape: (used > 0).then(|| 100.0 * ape / used as f64),
        mape_excluded: excluded,
    }
}

fn rows(m: &ArrayView2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

/// Metrics grouped by the hour of day of each sample's target slot.
pub fn hourly_breakdown(
    actuals: ArrayView2<f64>,
    predictions: ArrayView2<f64>,
    slots: &[TimeSlot],
) -> Result<[GroupMetrics; 24]> {
    same_shape(&actuals, &predictions)?;
    ensure_dims(slots.len() == actuals.nrows(), || {
        format!("{} slots for {} samples", slots.len(), actuals.nrows())
    })?;
    let (a, p) = (rows(&actuals), rows(&predictions));
    let mut out = [GroupMetrics::default(); 24];
    for (hour, g) in out.iter_mut().enumerate() {
        let idx: Vec<usize> = (0..slots.len()).filter(|&i| slots[i].hour_of_day() == hour).collect();
        let ga: Vec<&[f64]> = idx.iter().map(|&i| a[i].as_slice()).collect();
        let gp: Vec<&[f64]> = idx.iter().map(|&i| p[i].as_slice()).collect();
        *g = group_metrics(&ga, &gp);
    }
    Ok(out)
}

/// Metrics over the region columns in each category.
pub fn category_breakdown(
    actuals: ArrayView2<f64>,
    predictions: ArrayView2<f64>,
    categories: &super::RegionCategories,
) -> Result<Vec<GroupMetrics>> {
    same_shape(&actuals, &predictions)?;
    ensure_dims(categories.assignment.len() == actuals.ncols(), || {
        format!(
            "{} categorized regions for {} columns",
            categories.assignment.len(),
            actuals.ncols()
        )
    })?;
    Ok(super::RegionCategory::ALL
        .iter()
        .map(|&cat| {
            let cols: Vec<usize> = categories.columns_of(cat);
            let pick = |m: &ArrayView2<f64>| -> Vec<Vec<f64>> {
                m.outer_iter()
                    .map(|r| cols.iter().map(|&c| r[c]).collect())
                    .collect()
            };
            let (a, p) = (pick(&actuals), pick(&predictions));
            if cols.is_empty() {
                return GroupMetrics::default();
            }
            let ga: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
            let gp: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
            group_metrics(&ga, &gp)
        })
        .collect())
}
