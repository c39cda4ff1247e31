use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GroupMetrics, RegionCategory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    pub rmse: f64,
    pub mape: f64,
    pub mape_used: usize,
    pub mape_excluded: usize,
    /// 24 hour-of-day groups.
    pub hourly: Vec<GroupMetrics>,
    /// One group per category, in `RegionCategory::ALL` order.
    pub categories: Vec<GroupMetrics>,
    pub training_seconds: f64,
    /// Wall-clock seconds per epoch (recurrent models only).
    pub epoch_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: Vec<MethodResult>,
    pub n_samples: usize,
    pub n_regions: usize,
    pub category_counts: Vec<usize>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:>12} {:>12} {:>18}",
            "Method", "RMSE", "MAPE (%)", "Training time (s)"
        );
        for m in &self.methods {
            let _ = writeln!(
                s,
                "{:<8} {:>12} {:>12} {:>18.2}",
                m.name,
                format_sig6(m.rmse),
                format_sig6(m.mape),
                m.training_seconds
            );
        }
        s
    }
}

/// Decimal text with six significant digits.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    if !(-5..=5).contains(&exp) {
        return sci;
    }
    let decimals = (5 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), format_sig6)
}

/// Files written by [`emit_report`].
pub const REPORT_FILES: [&str; 6] = [
    "summary.txt",
    "hourly_rmse.csv",
    "hourly_mape.csv",
    "category_rmse.csv",
    "category_mape.csv",
    "report.json",
];

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn table(
    first: &str,
    labels: &[String],
    methods: &[MethodResult],
    value: impl Fn(&MethodResult, usize) -> Option<f64>,
) -> String {
    let mut s = String::from(first);
    for m in methods {
        s.push(',');
        s.push_str(&m.name);
    }
    s.push('\n');
    for (i, label) in labels.iter().enumerate() {
        s.push_str(label);
        for m in methods {
            s.push(',');
            s.push_str(&cell(value(m, i)));
        }
        s.push('\n');
    }
    s
}

/// Write the summary table, plot-ready CSVs and `report.json` into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("summary.txt"), &report.summary_table())?;
    let hours: Vec<String> = (0..24).map(|h| h.to_string()).collect();
    let cats: Vec<String> = RegionCategory::ALL.iter().map(|c| c.name().to_string()).collect();
    let m = &report.methods;
    write(
        &dir.join("hourly_rmse.csv"),
        &table("hour", &hours, m, |m, i| m.hourly[i].rmse),
    )?;
    write(
        &dir.join("hourly_mape.csv"),
        &table("hour", &hours, m, |m, i| m.hourly[i].mape),
    )?;
    write(
        &dir.join("category_rmse.csv"),
        &table("category", &cats, m, |m, i| m.categories[i].rmse),
    )?;
    write(
        &dir.join("category_mape.csv"),
        &table("category", &cats, m, |m, i| m.categories[i].mape),
    )?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write(&dir.join("report.json"), &json)
}

pub fn read_report(dir: &Path) -> Result<EvalReport> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data_at(e.to_string(), path.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn method(name: &str, rmse: f64) -> MethodResult {
        let mut hourly = vec![GroupMetrics::default(); 24];
        hourly[3] = GroupMetrics {
            n_samples: 2,
            rmse: Some(rmse),
            mape: Some(12.5),
            mape_excluded: 0,
        };
        MethodResult {
            name: name.into(),
            rmse,
            mape: 12.5,
            mape_used: 4,
            mape_excluded: 0,
            hourly,
            categories: vec![GroupMetrics::default(); 5],
            training_seconds: 0.5,
            epoch_seconds: vec![],
        }
    }

    #[test]
    fn sig6_format() {
        assert_eq!(format_sig6(1.5811388300841898), "1.58114");
        assert_eq!(format_sig6(25.0), "25.0000");
        assert_eq!(format_sig6(9.9999996), "10.0000");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(0.000123456789), "0.000123457");
        assert_eq!(format_sig6(0.0), "0");
    }

    #[test]
    fn emitted_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = EvalReport {
            methods: vec![method("dema", 2.25), method("gru", 1.0 / 3.0)],
            n_samples: 2,
            n_regions: 2,
            category_counts: vec![0, 0, 0, 0, 2],
        };
        emit_report(&report, dir.path()).unwrap();
        let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert_eq!(summary.lines().count(), 3);
        let mut rdr = csv::Reader::from_path(dir.path().join("hourly_rmse.csv")).unwrap();
        assert_eq!(rdr.headers().unwrap(), vec!["hour", "dema", "gru"]);
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 24);
        assert_eq!(&rows[0][1], "NA");
        assert_eq!(&rows[3][2], "0.333333");
        let parsed: f64 = rows[3][2].parse().unwrap();
        assert_eq!(format_sig6(parsed), "0.333333");
        assert_eq!(read_report(dir.path()).unwrap(), report);
    }

    proptest! {
        #[test]
        fn sig6_text_round_trips(m in 1.0f64..10.0, e in -4i32..10) {
            let v = m * 10f64.powi(e);
            let text = format_sig6(v);
            let back: f64 = text.parse().unwrap();
            prop_assert_eq!(format_sig6(back), text.clone());
            let mantissa = text.split('e').next().unwrap();
            let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
            prop_assert_eq!(digits.trim_start_matches('0').len(), 6, "{}", text);
        }
    }
}
