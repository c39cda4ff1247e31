//! End-to-end pipeline behind the command-line subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::baselines::{
    dema_series, flatten_windows, lambda_grid, lasso_predict, tune_alpha, LassoModel, LassoOptions,
};
use crate::config::{ExperimentConfig, ModelName};
use crate::data::{CalendarInfo, DemandTensor, SLOTS_PER_DAY};
use crate::error::{Error, Result};
use crate::eval::{
    categorize_regions, category_breakdown, emit_report, hourly_breakdown, mape, read_report, rmse,
    EvalReport, MethodResult, RegionCategories,
};
use crate::features::{build_frames_with, make_sequences, split_train_val, FeatureFrame, Scaler, SequenceSample};
use crate::ingest::{ingest_file, Accumulator, CleaningStats};
use crate::model::{ModelArtifact, TrainedModel};
use crate::nn::{predict, train, NetworkDims, NetworkParams, TrainHistory};
use crate::seed::sub_seed;
use crate::synth::{generate_each_day, write_dataset};

/// Everything the models share: one frame, one scaler, one split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub tensor: DemandTensor,
    pub frame: FeatureFrame,
    pub scaler: Scaler,
    pub train: Vec<SequenceSample>,
    pub val: Vec<SequenceSample>,
    pub train_scaled: Vec<SequenceSample>,
    pub val_scaled: Vec<SequenceSample>,
    pub categories: RegionCategories,
    pub train_days: usize,
}

impl Prepared {
    pub fn val_actuals(&self) -> Array2<f64> {
        stack_targets(&self.val)
    }
}

fn stack_targets(samples: &[SequenceSample]) -> Array2<f64> {
    let cols = samples.first().map_or(0, |s| s.target.len());
    let mut y = Array2::zeros((samples.len(), cols));
    for (mut row, s) in y.axis_iter_mut(Axis(0)).zip(samples) {
        row.assign(&s.target);
    }
    y
}

pub fn prepare(cfg: &ExperimentConfig, tensor: DemandTensor, calendar: &CalendarInfo) -> Result<Prepared> {
    let d = &cfg.data;
    if tensor.n_days() <= d.train_days {
        return Err(Error::data(format!(
            "{} days of data leave nothing after {} training days",
            tensor.n_days(),
            d.train_days
        )));
    }
    let frame = build_frames_with(&tensor, calendar, d.day_encoding)?;
    let scaler = Scaler::fit_frame(&frame, d.train_days);
    let (train, val) = split_train_val(make_sequences(&frame, d.stride)?, d.train_days)?;
    let scale = |v: &[SequenceSample]| v.iter().map(|s| scaler.scale_sample(s)).collect::<Vec<_>>();
    let (train_scaled, val_scaled) = (scale(&train), scale(&val));
    let categories = categorize_regions(&tensor.leading_days(d.train_days));
    Ok(Prepared {
        tensor,
        frame,
        scaler,
        train,
        val,
        train_scaled,
        val_scaled,
        categories,
        train_days: d.train_days,
    })
}

/// One fitted model with its validation forecasts in demand units.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub artifact: ModelArtifact,
    pub predictions: Array2<f64>,
    pub training_seconds: f64,
    pub history: Option<TrainHistory>,
}

fn fit_dema(cfg: &ExperimentConfig, p: &Prepared) -> (f64, Array2<f64>) {
    let demand = p.frame.demand();
    let train_slots = p.train_days * SLOTS_PER_DAY;
    let tail = (p.train_days - cfg.baselines.dema_tune_days) * SLOTS_PER_DAY;
    let alpha = tune_alpha(demand.slice(ndarray::s![..train_slots, ..]), tail);
    let forecasts = dema_series(alpha, demand);
    let mut preds = Array2::zeros((p.val.len(), demand.ncols()));
    for (mut row, s) in preds.axis_iter_mut(Axis(0)).zip(&p.val) {
        row.assign(&forecasts.row(s.target_slot.index - 1));
    }
    (alpha, preds)
}

fn fit_lasso(cfg: &ExperimentConfig, p: &Prepared) -> Result<(LassoModel, Array2<f64>)> {
    let b = &cfg.baselines;
    let opts = LassoOptions {
        tol: b.lasso_tol,
        max_sweeps: b.lasso_max_sweeps,
    };
    let x = flatten_windows(&p.train_scaled);
    let y = stack_targets(&p.train);
    let cut = p.train_days - b.lasso_select_days;
    let fit_rows: Vec<usize> = (0..p.train.len())
        .filter(|&i| p.train[i].target_slot.day_index < cut)
        .collect();
    let sel_rows: Vec<usize> = (0..p.train.len())
        .filter(|&i| p.train[i].target_slot.day_index >= cut)
        .collect();
    if fit_rows.is_empty() || sel_rows.is_empty() {
        return Err(Error::data("lambda selection split leaves an empty side"));
    }
    let lambdas = lambda_grid(b.lasso_lambda_min, b.lasso_lambda_max, b.lasso_lambda_count);
    let path = LassoModel::path(
        x.select(Axis(0), &fit_rows).view(),
        y.select(Axis(0), &fit_rows).view(),
        &lambdas,
        opts,
    )?;
    let (x_sel, y_sel) = (x.select(Axis(0), &sel_rows), y.select(Axis(0), &sel_rows));
    let mut best: Option<(f64, usize)> = None;
    for (i, fit) in path.iter().enumerate() {
        let err = rmse(y_sel.view(), lasso_predict(&fit.model, x_sel.view())?.view())?;
        // ties go to the sparser model
        let better = match best {
            None => true,
            Some((e, j)) => err < e || (err == e && lambdas[i] > lambdas[j]),
        };
        if better {
            best = Some((err, i));
        }
    }
    let chosen = best.expect("non-empty lambda grid").1;
    let full = crate::baselines::lasso_fit(
        x.view(),
        y.view(),
        lambdas[chosen],
        opts,
        Some(&path[chosen].model),
    )?;
    let preds = lasso_predict(&full.model, flatten_windows(&p.val_scaled).view())?;
    Ok((full.model, preds))
}

fn fit_network(
    cfg: &ExperimentConfig,
    p: &Prepared,
    name: ModelName,
) -> Result<(NetworkParams, TrainHistory, Array2<f64>)> {
    let kind = name.cell().expect("network model");
    let mut tc = cfg.train_config(name).expect("network model").clone();
    tc.seed = sub_seed(cfg.seed, &format!("shuffle-{}", name.name()));
    let dims = NetworkDims {
        kind,
        input_dim: p.frame.layout.n_features(),
        hidden_dim: tc.hidden_dim,
        output_dim: p.frame.layout.n_regions,
        n_layers: tc.n_layers,
    };
    let init = NetworkParams::init(
        dims,
        sub_seed(cfg.seed, &format!("init-{}", name.name())),
        tc.forget_bias,
    );
    let out = train(init, &p.train_scaled, &p.val_scaled, &tc)?;
    let preds = predict(&out.params, &p.val, &p.scaler)?;
    Ok((out.params, out.history, preds))
}

pub fn fit_model(cfg: &ExperimentConfig, p: &Prepared, name: ModelName) -> Result<ModelRun> {
    let started = Instant::now();
    let (model, predictions, history, scaler) = match name {
        ModelName::Dema => {
            let (alpha, preds) = fit_dema(cfg, p);
            (TrainedModel::Dema { alpha }, preds, None, None)
        }
        ModelName::Lasso => {
            let (m, preds) = fit_lasso(cfg, p)?;
            (TrainedModel::Lasso(m), preds, None, Some(p.scaler.clone()))
        }
        _ => {
            let (net, hist, preds) = fit_network(cfg, p, name)?;
            (TrainedModel::Network(net), preds, Some(hist), Some(p.scaler.clone()))
        }
    };
    Ok(ModelRun {
        artifact: ModelArtifact {
            name,
            model,
            scaler,
            region_ids: p.tensor.region_ids.clone(),
            day_encoding: p.frame.layout.day_encoding,
            seed: cfg.seed,
        },
        predictions,
        training_seconds: started.elapsed().as_secs_f64(),
        history,
    })
}

pub fn evaluate(p: &Prepared, runs: &[ModelRun]) -> Result<EvalReport> {
    let actuals = p.val_actuals();
    let slots: Vec<_> = p.val.iter().map(|s| s.target_slot).collect();
    let methods = runs
        .iter()
        .map(|r| {
            let pred = r.predictions.view();
            let m = mape(actuals.view(), pred)?;
            Ok(MethodResult {
                name: r.artifact.name.name().to_string(),
                rmse: rmse(actuals.view(), pred)?,
                mape: m.value,
                mape_used: m.used,
                mape_excluded: m.excluded,
                hourly: hourly_breakdown(actuals.view(), pred, &slots)?.to_vec(),
                categories: category_breakdown(actuals.view(), pred, &p.categories)?,
                training_seconds: r.training_seconds,
                epoch_seconds: r.history.as_ref().map(|h| h.seconds.clone()).unwrap_or_default(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        methods,
        n_samples: p.val.len(),
        n_regions: p.tensor.n_regions(),
        category_counts: p.categories.counts(),
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Result of the modelling half of the pipeline.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub prepared: Prepared,
    pub runs: Vec<ModelRun>,
    pub report: EvalReport,
    pub stages: Vec<StageTiming>,
}

fn timed<T>(stages: &mut Vec<StageTiming>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let started = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    stages.push(StageTiming {
        stage: stage.to_string(),
        seconds: started.elapsed().as_secs_f64(),
    });
    Ok(out)
}

/// Features, every configured model and the evaluation, from a cleaned tensor.
pub fn run_pipeline(cfg: &ExperimentConfig, tensor: DemandTensor, calendar: &CalendarInfo) -> Result<PipelineOutput> {
    let mut stages = Vec::new();
    let prepared = timed(&mut stages, "features", || prepare(cfg, tensor, calendar))?;
    let mut runs = Vec::new();
    for &name in &cfg.models {
        let run = timed(&mut stages, &format!("fit-{}", name.name()), || {
            fit_model(cfg, &prepared, name)
        })?;
        runs.push(run);
    }
    let report = timed(&mut stages, "evaluate", || evaluate(&prepared, &runs))?;
    Ok(PipelineOutput {
        prepared,
        runs,
        report,
        stages,
    })
}

/// Generate the synthetic dataset straight into a cleaned tensor, skipping the CSV.
pub fn synthesize_tensor(cfg: &ExperimentConfig) -> Result<(DemandTensor, CalendarInfo, CleaningStats)> {
    let synth = cfg.synth_config();
    let mut acc = Accumulator::new(cfg.grid, cfg.window);
    let calendar = generate_each_day(&synth, |day, rows| {
        for r in rows {
            acc.offer(Some(r))?;
        }
        acc.seal_before((day + 1) * SLOTS_PER_DAY);
        Ok(())
    })?;
    let (tensor, stats) = acc.finish(cfg.data.min_daily_demand)?;
    Ok((tensor, calendar, stats))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub rows: usize,
    pub seed: u64,
    pub n_days: usize,
    pub n_slots: usize,
    pub requests: PathBuf,
    pub calendar: PathBuf,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<GenerateSummary> {
    cfg.validate_dataset()?;
    ensure_dir(&cfg.workdir)?;
    let (requests, calendar) = (cfg.requests_path(), cfg.calendar_path());
    let rows = write_dataset(&cfg.synth_config(), &requests, &calendar)?;
    Ok(GenerateSummary {
        rows,
        seed: cfg.seed,
        n_days: cfg.window.n_days,
        n_slots: cfg.n_slots(),
        requests,
        calendar,
    })
}

pub const DEMAND_FILE: &str = "demand.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_DIR: &str = "report";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub fn checkpoint_path(cfg: &ExperimentConfig, name: ModelName) -> PathBuf {
    cfg.workdir.join(CHECKPOINT_DIR).join(format!("{}.ckpt", name.name()))
}

/// Cleaned demand as CSV: `slot` then one column per region id.
pub fn write_demand(tensor: &DemandTensor, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(e.to_string()))?;
    let io = |e: csv::Error| Error::data_at(e.to_string(), path.display().to_string());
    let mut header = vec!["slot".to_string()];
    header.extend(tensor.region_ids.iter().map(|r| r.to_string()));
    w.write_record(&header).map_err(io)?;
    for slot in 0..tensor.n_slots {
        let mut rec = vec![slot.to_string()];
        rec.extend(tensor.row(slot).iter().map(|c| c.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_demand(path: &Path) -> Result<DemandTensor> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data_at(format!("{other:?}"), path.display().to_string()),
    })?;
    let at = |line: usize| format!("{}:{line}", path.display());
    let header = r.headers().map_err(|e| Error::data_at(e.to_string(), at(1)))?.clone();
    if header.get(0) != Some("slot") {
        return Err(Error::data_at("demand header must start with `slot`", at(1)));
    }
    let region_ids = header
        .iter()
        .skip(1)
        .map(|h| h.parse::<usize>().map_err(|_| Error::data_at(format!("bad region id `{h}`"), at(1))))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = Vec::new();
    let mut n_slots = 0;
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::data_at(e.to_string(), at(line)))?;
        if rec.len() != region_ids.len() + 1 || rec.get(0) != Some(n_slots.to_string().as_str()) {
            return Err(Error::data_at("malformed demand row", at(line)));
        }
        for v in rec.iter().skip(1) {
            counts.push(v.parse::<u32>().map_err(|_| Error::data_at(format!("bad count `{v}`"), at(line)))?);
        }
        n_slots += 1;
    }
    DemandTensor::from_counts(n_slots, region_ids, counts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelNotes {
    pub model: String,
    pub detail: String,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_digest: String,
    pub seed: u64,
    pub models: Vec<String>,
    pub cleaning: CleaningStats,
    pub n_regions: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub stages: Vec<StageTiming>,
    pub notes: Vec<ModelNotes>,
}

fn describe(run: &ModelRun) -> String {
    match &run.artifact.model {
        TrainedModel::Dema { alpha } => format!("alpha = {alpha}"),
        TrainedModel::Lasso(m) => format!("lambda = {}, nonzero weights = {}", m.lambda, m.nonzero()),
        TrainedModel::Network(n) => format!(
            "hidden = {}, layers = {}, parameters = {}",
            n.dims().hidden_dim,
            n.dims().n_layers,
            n.param_count()
        ),
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: EvalReport,
    pub manifest: Manifest,
    pub report_dir: PathBuf,
}

/// Ingest the dataset in the workdir, fit every model, write checkpoints,
/// the report and the manifest.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let mut stages = Vec::new();
    let requests = cfg.requests_path();
    if !requests.exists() {
        return Err(Error::data(format!(
            "dataset {} not found; run `generate` first",
            requests.display()
        ))
        .in_stage("ingest"));
    }
    let (tensor, cleaning) = timed(&mut stages, "ingest", || {
        ingest_file(&requests, &cfg.grid, &cfg.window, cfg.data.min_daily_demand)
    })?;
    let calendar = timed(&mut stages, "calendar", || {
        let cal = CalendarInfo::read(&cfg.calendar_path())?;
        if cal.n_days() != cfg.window.n_days {
            return Err(Error::data(format!(
                "calendar covers {} days, study window {}",
                cal.n_days(),
                cfg.window.n_days
            )));
        }
        Ok(cal)
    })?;
    timed(&mut stages, "persist-demand", || {
        write_demand(&tensor, &cfg.workdir.join(DEMAND_FILE))
    })?;
    let out = run_pipeline(cfg, tensor, &calendar)?;
    stages.extend(out.stages.iter().cloned());

    let report_dir = cfg.workdir.join(REPORT_DIR);
    timed(&mut stages, "report", || {
        ensure_dir(&cfg.workdir.join(CHECKPOINT_DIR))?;
        for run in &out.runs {
            run.artifact.save(&checkpoint_path(cfg, run.artifact.name))?;
        }
        emit_report(&out.report, &report_dir)
    })?;
    let manifest = Manifest {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        models: cfg.models.iter().map(|m| m.name().to_string()).collect(),
        cleaning,
        n_regions: out.prepared.tensor.n_regions(),
        n_train: out.prepared.train.len(),
        n_val: out.prepared.val.len(),
        stages,
        notes: out
            .runs
            .iter()
            .map(|r| ModelNotes {
                model: r.artifact.name.name().to_string(),
                detail: describe(r),
                train_loss: r.history.as_ref().map(|h| h.train_loss.clone()).unwrap_or_default(),
                val_loss: r.history.as_ref().map(|h| h.val_loss.clone()).unwrap_or_default(),
            })
            .collect(),
    };
    let path = cfg.workdir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(RunSummary {
        report: out.report,
        manifest,
        report_dir,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub model: ModelName,
    /// Slot being forecast.
    pub target_slot: usize,
    pub region_ids: Vec<usize>,
    pub values: Vec<f64>,
}

/// Forecast slot `slot + 1` with a saved checkpoint, reading history from the
/// workdir's cleaned demand (or the raw dataset when that is missing).
pub fn cmd_predict(cfg: &ExperimentConfig, checkpoint: &Path, slot: usize) -> Result<Forecast> {
    let artifact = ModelArtifact::load(checkpoint)?;
    let demand = cfg.workdir.join(DEMAND_FILE);
    let tensor = if demand.exists() {
        read_demand(&demand)?
    } else {
        ingest_file(&cfg.requests_path(), &cfg.grid, &cfg.window, cfg.data.min_daily_demand)?.0
    };
    if tensor.region_ids != artifact.region_ids {
        return Err(Error::Checkpoint(format!(
            "checkpoint was trained on regions {:?}, data has {:?}",
            artifact.region_ids, tensor.region_ids
        )));
    }
    let calendar = CalendarInfo::read(&cfg.calendar_path())?;
    let frame = build_frames_with(&tensor, &calendar, artifact.day_encoding)?;
    let values = artifact.forecast(&frame, slot)?;
    Ok(Forecast {
        model: artifact.name,
        target_slot: slot + 1,
        region_ids: artifact.region_ids,
        values: values.to_vec(),
    })
}

/// Summary table of the last run in the workdir.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<String> {
    let report = read_report(&cfg.workdir.join(REPORT_DIR))?;
    let mut text = report.summary_table();
    text.push_str(&format!(
        "\nvalidation samples: {}, regions: {}, regions per category (very crowded..very uncrowded): {:?}\n",
        report.n_samples, report.n_regions, report.category_counts
    ));
    Ok(text)
}
