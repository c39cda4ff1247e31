use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Scaler, SequenceSample};
use crate::seed::rng_for;

use super::loss::mse_loss_batch;
use super::network::NetworkParams;
use super::optim::{clip_global_norm, Optimizer, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Global-norm clip threshold; `None` disables clipping (written as 0 in files).
    #[serde(with = "clip_serde")]
    pub grad_clip_norm: Option<f64>,
    /// Shuffling seed; experiments derive it from their own seed.
    #[serde(skip)]
    pub seed: u64,
    pub hidden_dim: usize,
    pub n_layers: usize,
    /// Start the LSTM forget-gate bias at 1.
    pub forget_bias: bool,
}

mod clip_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.unwrap_or(0.0))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v = f64::deserialize(d)?;
        Ok((v != 0.0).then_some(v))
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 3e-4,
            optimizer: Optimizer::default(),
            grad_clip_norm: Some(5.0),
            seed: 0,
            hidden_dim: 128,
            n_layers: 2,
            forget_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("training: {m}")));
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_dim == 0 || self.n_layers == 0 {
            return bad("epochs, batch_size, hidden_dim and n_layers must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite non-negative number");
        }
        if matches!(self.grad_clip_norm, Some(c) if !(c > 0.0)) {
            return bad("grad_clip_norm must be positive when set");
        }
        if !self.optimizer.is_valid() {
            return bad("adam needs beta1, beta2 in [0, 1) and eps > 0");
        }
        Ok(())
    }
}

/// Per-epoch record, losses in scaled units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub seconds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub history: TrainHistory,
}

fn stack_targets(samples: &[&SequenceSample]) -> Array2<f64> {
    let cols = samples[0].target.len();
    let mut t = Array2::zeros((samples.len(), cols));
    for (mut row, s) in t.axis_iter_mut(Axis(0)).zip(samples) {
        row.assign(&s.target);
    }
    t
}

fn windows<'a>(samples: &[&'a SequenceSample]) -> Vec<ArrayView2<'a, f64>> {
    samples.iter().map(|s| s.window.view()).collect()
}

const EVAL_CHUNK: usize = 256;

/// Mean per-sample MSE of `net` on already scaled samples.
pub(crate) fn evaluate_loss(net: &NetworkParams, samples: &[SequenceSample]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(EVAL_CHUNK) {
        let refs: Vec<&SequenceSample> = chunk.iter().collect();
        let (pred, _) = net.forward_batch(&windows(&refs))?;
        let (loss, _) = mse_loss_batch(pred.view(), stack_targets(&refs).view())?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Mini-batch training on scaled samples. Shuffling is seeded from `cfg.seed`,
/// so identical inputs give identical parameters and histories.
pub fn train(
    net: NetworkParams,
    train: &[SequenceSample],
    val: &[SequenceSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::data("no training samples"));
    }
    let mut net = net;
    let mut opt = OptimizerState::new(cfg.optimizer, &net);
    let mut rng = rng_for(cfg.seed, "train-shuffle");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&SequenceSample> = idx.iter().map(|&i| &train[i]).collect();
            let context = |e: Error| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {b}: {m}")),
                other => other,
            };
            let (pred, cache) = net.forward_batch(&windows(&batch)).map_err(context)?;
            let (loss, grad) = mse_loss_batch(pred.view(), stack_targets(&batch).view())?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "epoch {epoch}, batch {b}: loss is {loss}"
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            let mut grads = net.backward(&cache, grad.view())?;
            if let Some(max) = cfg.grad_clip_norm {
                clip_global_norm(&mut grads, max);
            }
            if !grads.is_finite() {
                return Err(Error::Numeric(format!(
                    "epoch {epoch}, batch {b}: non-finite gradient"
                )));
            }
            opt.update(&mut net, &grads, cfg.learning_rate);
        }
        history.train_loss.push(epoch_loss / train.len() as f64);
        if !val.is_empty() {
            history.val_loss.push(evaluate_loss(&net, val)?);
        }
        history.seconds.push(started.elapsed().as_secs_f64());
    }
    Ok(TrainOutcome {
        params: net,
        history,
    })
}

/// Raw network outputs for already scaled samples, `[samples, outputs]`.
pub fn predict_scaled(net: &NetworkParams, samples: &[SequenceSample]) -> Result<Array2<f64>> {
    let out = net.dims().output_dim;
    let mut preds = Array2::zeros((samples.len(), out));
    for (k, chunk) in samples.chunks(EVAL_CHUNK).enumerate() {
        let refs: Vec<&SequenceSample> = chunk.iter().collect();
        let (p, _) = net.forward_batch(&windows(&refs))?;
        let start = k * EVAL_CHUNK;
        preds
            .slice_mut(ndarray::s![start..start + chunk.len(), ..])
            .assign(&p);
    }
    Ok(preds)
}

/// Predictions for unscaled samples in demand units, negatives clamped to 0.
pub fn predict(net: &NetworkParams, samples: &[SequenceSample], scaler: &Scaler) -> Result<Array2<f64>> {
    let scaled: Vec<SequenceSample> = samples.iter().map(|s| scaler.scale_sample(s)).collect();
    let mut preds = predict_scaled(net, &scaled)?;
    for mut row in preds.axis_iter_mut(Axis(0)) {
        let demand = scaler.unscale_target(row.view());
        row.assign(&demand.mapv(|v| v.max(0.0)));
    }
    Ok(preds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TimeSlot;
    use crate::nn::{CellKind, NetworkDims};
    use ndarray::Array1;
    use rand::Rng;

    fn dims(kind: CellKind) -> NetworkDims {
        NetworkDims {
            kind,
            input_dim: 3,
            hidden_dim: 6,
            output_dim: 2,
            n_layers: 2,
        }
    }

    fn samples(n: usize, seed: u64, target: impl Fn(&Array2<f64>) -> Array1<f64>) -> Vec<SequenceSample> {
        let mut rng = rng_for(seed, "samples");
        (0..n)
            .map(|k| {
                let window = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
                SequenceSample {
                    target: target(&window),
                    window,
                    target_slot: TimeSlot::from_index(k),
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = samples(20, 1, |w| w.row(3).slice(ndarray::s![..2]).to_owned());
        let net = NetworkParams::init(dims(CellKind::Lstm), 5, true);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 7,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train(net.clone(), &data, &data, &cfg).unwrap();
        assert_eq!(out.params, net);
    }

    #[test]
    fn constant_target_reaches_best_constant() {
        let c = ndarray::array![0.8, -0.3];
        let data = samples(64, 2, |_| c.clone());
        for kind in CellKind::ALL {
            let cfg = TrainConfig {
                epochs: 50,
                batch_size: 16,
                learning_rate: 0.01,
                ..TrainConfig::default()
            };
            let out = train(NetworkParams::init(dims(kind), 3, true), &data, &[], &cfg).unwrap();
            // the best constant predictor (the mean) has zero loss here
            let last = *out.history.train_loss.last().unwrap();
            assert!(last < 1e-3, "{kind:?}: {last}");
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let data = samples(30, 3, |w| w.sum_axis(Axis(0)).slice(ndarray::s![..2]).to_owned());
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 8,
            learning_rate: 0.01,
            seed: 42,
            ..TrainConfig::default()
        };
        let a = train(NetworkParams::init(dims(CellKind::Gru), 1, true), &data, &data, &cfg).unwrap();
        let b = train(NetworkParams::init(dims(CellKind::Gru), 1, true), &data, &data, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history.train_loss, b.history.train_loss);
        assert_eq!(a.history.val_loss, b.history.val_loss);
    }

    #[test]
    fn overfit_tiny_task() {
        let data = samples(8, 4, |w| w.row(0).slice(ndarray::s![..2]).to_owned());
        let cfg = TrainConfig {
            epochs: 400,
            batch_size: 8,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let out = train(NetworkParams::init(dims(CellKind::Lstm), 7, true), &data, &[], &cfg).unwrap();
        let preds = predict_scaled(&out.params, &data).unwrap();
        for (p, s) in preds.axis_iter(Axis(0)).zip(&data) {
            for (a, b) in p.iter().zip(&s.target) {
                assert!((a - b).abs() < 0.05, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn predict_unscales_and_clamps() {
        let mut net = NetworkParams::zeros(dims(CellKind::SimpleRnn));
        net.head_b = ndarray::array![1.0, -0.3];
        let scaler = Scaler {
            mean: vec![10.0, 0.0, 0.0],
            std: vec![2.0, 1.0, 1.0],
        };
        let data = samples(3, 5, |_| Array1::zeros(2));
        let p = predict(&net, &data, &scaler).unwrap();
        for row in p.axis_iter(Axis(0)) {
            assert_eq!(row[0], 12.0);
            assert_eq!(row[1], 0.0);
        }
    }

    #[test]
    fn sgd_step_reduces_single_sample_loss() {
        let data = samples(1, 6, |w| w.row(2).slice(ndarray::s![1..]).to_owned());
        for kind in CellKind::ALL {
            let net = NetworkParams::init(dims(kind), 8, true);
            let before = evaluate_loss(&net, &data).unwrap();
            let cfg = TrainConfig {
                epochs: 1,
                batch_size: 1,
                learning_rate: 1e-3,
                optimizer: Optimizer::Sgd,
                grad_clip_norm: None,
                ..TrainConfig::default()
            };
            let out = train(net, &data, &[], &cfg).unwrap();
            let after = evaluate_loss(&out.params, &data).unwrap();
            assert!(after < before, "{kind:?}: {after} >= {before}");
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
