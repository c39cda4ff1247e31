//! Error metrics, hourly and per-category breakdowns, and report files.

mod metrics;
mod report;

pub use metrics::{category_breakdown, hourly_breakdown, mape, rmse, GroupMetrics, Mape};
pub use report::{emit_report, format_sig6, read_report, EvalReport, MethodResult, REPORT_FILES};

use serde::{Deserialize, Serialize};

use crate::data::DemandTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionCategory {
    VeryCrowded,
    Crowded,
    Medium,
    Uncrowded,
    VeryUncrowded,
}

impl RegionCategory {
    pub const ALL: [RegionCategory; 5] = [
        RegionCategory::VeryCrowded,
        RegionCategory::Crowded,
        RegionCategory::Medium,
        RegionCategory::Uncrowded,
        RegionCategory::VeryUncrowded,
    ];

    /// Daily-demand classes: `< 400`, `[400, 800)`, `[800, 1200)`, `[1200, 1600]`, `> 1600`.
    pub fn of_daily_demand(d: f64) -> Self {
        if d > 1600.0 {
            RegionCategory::VeryCrowded
        } else if d >= 1200.0 {
            RegionCategory::Crowded
        } else if d >= 800.0 {
            RegionCategory::Medium
        } else if d >= 400.0 {
            RegionCategory::Uncrowded
        } else {
            RegionCategory::VeryUncrowded
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionCategory::VeryCrowded => "very_crowded",
            RegionCategory::Crowded => "crowded",
            RegionCategory::Medium => "medium",
            RegionCategory::Uncrowded => "uncrowded",
            RegionCategory::VeryUncrowded => "very_uncrowded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCategories {
    /// One entry per tensor column.
    pub assignment: Vec<RegionCategory>,
    pub daily_mean: Vec<f64>,
}

impl RegionCategories {
    pub fn columns_of(&self, cat: RegionCategory) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&c| self.assignment[c] == cat)
            .collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        RegionCategory::ALL
            .iter()
            .map(|&c| self.columns_of(c).len())
            .collect()
    }
}

/// Classify regions by mean daily demand over the given (training) tensor.
pub fn categorize_regions(train: &DemandTensor) -> RegionCategories {
    let daily_mean = train.daily_means();
    RegionCategories {
        assignment: daily_mean
            .iter()
            .map(|&d| RegionCategory::of_daily_demand(d))
            .collect(),
        daily_mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TimeSlot;
    use ndarray::{array, Array2};

    #[test]
    fn metric_examples() {
        let y = array![[1.0, 3.0]];
        assert_eq!(rmse(y.view(), y.view()).unwrap(), 0.0);
        let r = rmse(y.view(), array![[2.0, 5.0]].view()).unwrap();
        assert_eq!(r, (2.5f64).sqrt());
        let r = rmse(array![[1.0, 1.0]].view(), array![[2.0, 0.0]].view()).unwrap();
        assert_eq!(r, 1.0);
        assert_eq!(mape(y.view(), y.view()).unwrap().value, 0.0);
        assert_eq!(mape(array![[4.0]].view(), array![[5.0]].view()).unwrap().value, 25.0);
        let m = mape(array![[0.0, 4.0]].view(), array![[1.0, 5.0]].view()).unwrap();
        assert_eq!((m.value, m.used, m.excluded), (25.0, 1, 1));
        assert!(mape(array![[0.0]].view(), array![[1.0]].view()).is_err());
        assert!(rmse(Array2::zeros((0, 2)).view(), Array2::zeros((0, 2)).view()).is_err());
    }

    #[test]
    fn category_thresholds() {
        use RegionCategory::*;
        let cases = [
            (1700.0, VeryCrowded),
            (1600.0, Crowded),
            (1200.0, Crowded),
            (1000.0, Medium),
            (800.0, Medium),
            (400.0, Uncrowded),
            (399.0, VeryUncrowded),
        ];
        for (d, c) in cases {
            assert_eq!(RegionCategory::of_daily_demand(d), c, "{d}");
        }
    }

    #[test]
    fn single_hour_groups() {
        let y = array![[1.0, 2.0], [3.0, 4.0]];
        let p = array![[1.5, 2.0], [3.0, 3.0]];
        let slots = [TimeSlot::from_index(12), TimeSlot::from_index(15)];
        let h = hourly_breakdown(y.view(), p.view(), &slots).unwrap();
        for (hour, g) in h.iter().enumerate() {
            if hour == 3 {
                assert_eq!(g.n_samples, 2);
                assert_eq!(g.rmse, Some(rmse(y.view(), p.view()).unwrap()));
            } else {
                assert_eq!(g.rmse, None);
            }
        }
    }
}
