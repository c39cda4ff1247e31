use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid over a lat/lon bounding box, binned in raw degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lat_min: 35.55,
            lat_max: 35.85,
            lon_min: 51.20,
            lon_max: 51.60,
            rows: 16,
            cols: 16,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.lat_min >= self.lat_max || self.lon_min >= self.lon_max {
            return Err(Error::Config(format!(
                "grid box must satisfy lat_min < lat_max and lon_min < lon_max, got {self:?}"
            )));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("grid needs at least one row and column".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }

    /// Bounding box `(lat_lo, lat_hi, lon_lo, lon_hi)` of one cell.
    pub fn cell_bounds(&self, cell: usize) -> (f64, f64, f64, f64) {
        let (row, col) = (cell / self.cols, cell % self.cols);
        let dlat = (self.lat_max - self.lat_min) / self.rows as f64;
        let dlon = (self.lon_max - self.lon_min) / self.cols as f64;
        (
            self.lat_min + row as f64 * dlat,
            self.lat_min + (row + 1) as f64 * dlat,
            self.lon_min + col as f64 * dlon,
            self.lon_min + (col + 1) as f64 * dlon,
        )
    }
}

/// Position within a bin closer than this to an edge counts as on the edge.
const EDGE_SNAP: f64 = 1e-9;

fn bin(value: f64, lo: f64, hi: f64, n: usize) -> usize {
    let x = (value - lo) * n as f64 / (hi - lo);
    let nearest = x.round();
    let idx = if (x - nearest).abs() < EDGE_SNAP {
        nearest
    } else {
        x.floor()
    };
    // the max edge folds into the last bin
    (idx.max(0.0) as usize).min(n - 1)
}

/// Region index `row * cols + col` of a point; rows follow latitude.
pub fn cell_of(lat: f64, lon: f64, spec: &GridSpec) -> Result<usize> {
    if !(spec.lat_min..=spec.lat_max).contains(&lat) {
        return Err(Error::Rejected {
            what: "point",
            detail: format!("lat {lat} outside [{}, {}]", spec.lat_min, spec.lat_max),
        });
    }
    if !(spec.lon_min..=spec.lon_max).contains(&lon) {
        return Err(Error::Rejected {
            what: "point",
            detail: format!("lon {lon} outside [{}, {}]", spec.lon_min, spec.lon_max),
        });
    }
    let row = bin(lat, spec.lat_min, spec.lat_max, spec.rows);
    let col = bin(lon, spec.lon_min, spec.lon_max, spec.cols);
    Ok(row * spec.cols + col)
}
