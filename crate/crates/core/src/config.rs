//! Experiment configuration, read from TOML with every key defaulted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{GridSpec, StudyWindow, SLOTS_PER_DAY};
use crate::error::{Error, Result};
use crate::features::DayEncoding;
use crate::nn::{CellKind, TrainConfig};
use crate::synth::{
    default_base_rates, default_diurnal_shape, default_weekly_shape, SynthConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Dema,
    Lasso,
    Rnn,
    Gru,
    Lstm,
}

impl ModelName {
    pub const ALL: [ModelName; 5] = [
        ModelName::Dema,
        ModelName::Lasso,
        ModelName::Rnn,
        ModelName::Gru,
        ModelName::Lstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelName::Dema => "dema",
            ModelName::Lasso => "lasso",
            ModelName::Rnn => "rnn",
            ModelName::Gru => "gru",
            ModelName::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model `{s}` (expected dema, lasso, rnn, gru or lstm)"
                ))
            })
    }

    /// Comma-separated list, duplicates dropped, order kept.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let m = Self::parse(part)?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("model list is empty".into()));
        }
        Ok(out)
    }

    pub fn cell(self) -> Option<CellKind> {
        match self {
            ModelName::Rnn => Some(CellKind::SimpleRnn),
            ModelName::Gru => Some(CellKind::Gru),
            ModelName::Lstm => Some(CellKind::Lstm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Request CSV; relative paths resolve against the workdir.
    pub requests: PathBuf,
    pub calendar: PathBuf,
    /// Regions averaging fewer requests per day are dropped.
    pub min_daily_demand: f64,
    pub train_days: usize,
    /// Window start spacing in slots (4 or 1).
    pub stride: usize,
    pub day_encoding: DayEncoding,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            requests: "requests.csv".into(),
            calendar: "calendar.csv".into(),
            min_daily_demand: 300.0,
            train_days: 80,
            stride: 4,
            day_encoding: DayEncoding::Scaled,
        }
    }
}

/// Generator knobs; seed, grid and study window come from the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Per-cell mean requests per slot; derived from the seed when absent.
    pub base_rates: Option<Vec<f64>>,
    pub diurnal_shape: Vec<f64>,
    pub diurnal_tilt: f64,
    pub weekly_shape: Vec<f64>,
    pub holiday_damping: f64,
    pub holidays: Vec<usize>,
    pub noise: f64,
    pub city_factor_sd: f64,
    pub city_factor_persistence: f64,
    pub cancel_fraction: f64,
    pub duplicate_fraction: f64,
    pub late_cancel_fraction: f64,
    pub out_of_box_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let s = SynthConfig::default();
        GeneratorConfig {
            base_rates: None,
            diurnal_shape: default_diurnal_shape(),
            diurnal_tilt: s.diurnal_tilt,
            weekly_shape: default_weekly_shape(),
            holiday_damping: s.holiday_damping,
            holidays: s.holidays,
            noise: s.noise,
            city_factor_sd: s.city_factor_sd,
            city_factor_persistence: s.city_factor_persistence,
            cancel_fraction: s.cancel_fraction,
            duplicate_fraction: s.duplicate_fraction,
            late_cancel_fraction: s.late_cancel_fraction,
            out_of_box_fraction: s.out_of_box_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// DEMA alpha is tuned on forecasts for this many final training days.
    pub dema_tune_days: usize,
    /// LASSO lambda is chosen on this many final training days.
    pub lasso_select_days: usize,
    pub lasso_lambda_min: f64,
    pub lasso_lambda_max: f64,
    pub lasso_lambda_count: usize,
    pub lasso_tol: f64,
    pub lasso_max_sweeps: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            dema_tune_days: 10,
            lasso_select_days: 10,
            lasso_lambda_min: 1e-4,
            lasso_lambda_max: 10.0,
            lasso_lambda_count: 11,
            lasso_tol: 1e-6,
            lasso_max_sweeps: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workdir: PathBuf,
    pub models: Vec<ModelName>,
    pub data: DataConfig,
    pub grid: GridSpec,
    pub window: StudyWindow,
    pub generator: GeneratorConfig,
    pub baselines: BaselineConfig,
    pub rnn: TrainConfig,
    pub gru: TrainConfig,
    pub lstm: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 2017,
            workdir: "flowcast-work".into(),
            models: ModelName::ALL.to_vec(),
            data: DataConfig::default(),
            grid: GridSpec::default(),
            window: StudyWindow::default(),
            generator: GeneratorConfig::default(),
            baselines: BaselineConfig::default(),
            rnn: TrainConfig::default(),
            gru: TrainConfig::default(),
            lstm: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse with dataset-level checks; `validate` covers the rest.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate_dataset()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> String {
        let d = Sha256::digest(self.to_toml().as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn train_config(&self, model: ModelName) -> Option<&TrainConfig> {
        match model {
            ModelName::Rnn => Some(&self.rnn),
            ModelName::Gru => Some(&self.gru),
            ModelName::Lstm => Some(&self.lstm),
            _ => None,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let g = &self.generator;
        SynthConfig {
            seed: self.seed,
            window: self.window,
            grid: self.grid,
            base_rates: g
                .base_rates
                .clone()
                .unwrap_or_else(|| default_base_rates(self.seed, &self.grid)),
            diurnal_shape: g.diurnal_shape.clone(),
            diurnal_tilt: g.diurnal_tilt,
            weekly_shape: g.weekly_shape.clone(),
            holiday_damping: g.holiday_damping,
            holidays: g.holidays.clone(),
            noise: g.noise,
            city_factor_sd: g.city_factor_sd,
            city_factor_persistence: g.city_factor_persistence,
            cancel_fraction: g.cancel_fraction,
            duplicate_fraction: g.duplicate_fraction,
            late_cancel_fraction: g.late_cancel_fraction,
            out_of_box_fraction: g.out_of_box_fraction,
        }
    }

    pub fn requests_path(&self) -> PathBuf {
        self.workdir.join(&self.data.requests)
    }

    pub fn calendar_path(&self) -> PathBuf {
        self.workdir.join(&self.data.calendar)
    }

    /// Checks needed to generate and ingest a dataset; the split and model
    /// settings may still be unusable for a run.
    pub fn validate_dataset(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.grid.validate()?;
        self.synth_config().validate()?;
        if self.models.is_empty() {
            return bad("model list is empty".into());
        }
        let d = &self.data;
        if !(d.min_daily_demand >= 0.0 && d.min_daily_demand.is_finite()) {
            return bad("min_daily_demand must be finite and >= 0".into());
        }
        if d.stride != 1 && d.stride != 4 {
            return bad(format!("stride must be 1 or 4, got {}", d.stride));
        }
        Ok(())
    }

    /// Full check for training and evaluation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.validate_dataset()?;
        let d = &self.data;
        if d.train_days == 0 || d.train_days >= self.window.n_days {
            return bad(format!(
                "train_days {} must lie in 1..{} to leave validation days",
                d.train_days, self.window.n_days
            ));
        }
        let b = &self.baselines;
        if b.dema_tune_days == 0 || b.dema_tune_days > d.train_days {
            return bad("dema_tune_days must lie in 1..=train_days".into());
        }
        if b.lasso_select_days == 0 || b.lasso_select_days >= d.train_days {
            return bad("lasso_select_days must lie in 1..train_days".into());
        }
        if !(b.lasso_lambda_min > 0.0 && b.lasso_lambda_min <= b.lasso_lambda_max)
            || b.lasso_lambda_count == 0
        {
            return bad("lasso lambda grid needs 0 < min <= max and count > 0".into());
        }
        if !(b.lasso_tol > 0.0) || b.lasso_max_sweeps == 0 {
            return bad("lasso_tol and lasso_max_sweeps must be positive".into());
        }
        for m in [ModelName::Rnn, ModelName::Gru, ModelName::Lstm] {
            self.train_config(m).expect("network model").validate()?;
        }
        Ok(())
    }

    pub fn n_slots(&self) -> usize {
        self.window.n_days * SLOTS_PER_DAY
    }
}
