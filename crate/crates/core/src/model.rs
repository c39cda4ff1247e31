//! Trained models of every kind, their checkpoints and single-slot forecasts.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::baselines::{dema_series, lasso_predict, LassoModel};
use crate::checkpoint::Checkpoint;
use crate::config::ModelName;
use crate::error::{Error, Result};
use crate::features::{DayEncoding, FeatureFrame, Scaler, SEQ_LEN};
use crate::nn::{CellKind, CellParams, NetworkDims, NetworkParams};

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Dema { alpha: f64 },
    Lasso(LassoModel),
    Network(NetworkParams),
}

/// A fitted model plus everything needed to forecast with it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub name: ModelName,
    pub model: TrainedModel,
    /// Absent for DEMA, which reads raw demand.
    pub scaler: Option<Scaler>,
    pub region_ids: Vec<usize>,
    pub day_encoding: DayEncoding,
    pub seed: u64,
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_ids(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| {
            v.parse()
                .map_err(|_| Error::Checkpoint(format!("bad region id `{v}`")))
        })
        .collect()
}

fn encoding_name(e: DayEncoding) -> &'static str {
    match e {
        DayEncoding::Scaled => "scaled",
        DayEncoding::OneHot => "one_hot",
    }
}

impl ModelArtifact {
    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.set("model", self.name.name())
            .set("seed", self.seed)
            .set("regions", join_ids(&self.region_ids))
            .set("day_encoding", encoding_name(self.day_encoding));
        if let Some(sc) = &self.scaler {
            ck.push_vector("scaler_mean", &sc.mean);
            ck.push_vector("scaler_std", &sc.std);
        }
        match &self.model {
            TrainedModel::Dema { alpha } => {
                ck.set("alpha", alpha);
            }
            TrainedModel::Lasso(m) => {
                ck.set("lambda", m.lambda);
                ck.push_matrix("weights", &m.weights);
                ck.push_vector("intercepts", m.intercepts.as_slice().expect("contiguous"));
            }
            TrainedModel::Network(net) => {
                let d = net.dims();
                ck.set("cell", d.kind.name())
                    .set("input_dim", d.input_dim)
                    .set("hidden_dim", d.hidden_dim)
                    .set("output_dim", d.output_dim)
                    .set("n_layers", d.n_layers);
                for (l, layer) in net.layers.iter().enumerate() {
                    ck.push_matrix(&format!("layer{l}_wx"), &layer.wx);
                    ck.push_matrix(&format!("layer{l}_wh"), &layer.wh);
                    ck.push_vector(&format!("layer{l}_b"), layer.b.as_slice().expect("contiguous"));
                }
                ck.push_matrix("head_w", &net.head_w);
                ck.push_vector("head_b", net.head_b.as_slice().expect("contiguous"));
            }
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let name = ModelName::parse(ck.get("model")?)
            .map_err(|_| Error::Checkpoint(format!("unknown model `{}`", ck.get("model").unwrap_or(""))))?;
        let region_ids = parse_ids(ck.get("regions")?)?;
        let day_encoding = match ck.get("day_encoding")? {
            "scaled" => DayEncoding::Scaled,
            "one_hot" => DayEncoding::OneHot,
            other => return Err(Error::Checkpoint(format!("unknown day encoding `{other}`"))),
        };
        let scaler = match ck.array("scaler_mean") {
            Ok(mean) => Some(Scaler {
                mean: mean.data.clone(),
                std: ck.vector("scaler_std", mean.data.len())?.to_vec(),
            }),
            Err(_) => None,
        };
        let model = match name {
            ModelName::Dema => TrainedModel::Dema {
                alpha: ck.get_parsed("alpha")?,
            },
            ModelName::Lasso => {
                let w = ck.array("weights")?;
                if w.shape.len() != 2 {
                    return Err(Error::Checkpoint("lasso weights must be a matrix".into()));
                }
                let (rows, cols) = (w.shape[0], w.shape[1]);
                TrainedModel::Lasso(LassoModel {
                    weights: ck.matrix("weights", rows, cols)?,
                    intercepts: ck.vector("intercepts", rows)?,
                    lambda: ck.get_parsed("lambda")?,
                })
            }
            ModelName::Rnn | ModelName::Gru | ModelName::Lstm => {
                let kind = CellKind::parse(ck.get("cell")?)
                    .ok_or_else(|| Error::Checkpoint("unknown cell kind".into()))?;
                if Some(kind) != name.cell() {
                    return Err(Error::Checkpoint(format!(
                        "model `{}` stores {} cells",
                        name.name(),
                        kind.name()
                    )));
                }
                let dims = NetworkDims {
                    kind,
                    input_dim: ck.get_parsed("input_dim")?,
                    hidden_dim: ck.get_parsed("hidden_dim")?,
                    output_dim: ck.get_parsed("output_dim")?,
                    n_layers: ck.get_parsed("n_layers")?,
                };
                if dims.n_layers == 0 {
                    return Err(Error::Checkpoint("network has no layers".into()));
                }
                let g = kind.gates() * dims.hidden_dim;
                let layers = (0..dims.n_layers)
                    .map(|l| {
                        let input = if l == 0 { dims.input_dim } else { dims.hidden_dim };
                        Ok(CellParams {
                            kind,
                            input_dim: input,
                            hidden_dim: dims.hidden_dim,
                            wx: ck.matrix(&format!("layer{l}_wx"), g, input)?,
                            wh: ck.matrix(&format!("layer{l}_wh"), g, dims.hidden_dim)?,
                            b: ck.vector(&format!("layer{l}_b"), g)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                TrainedModel::Network(NetworkParams {
                    layers,
                    head_w: ck.matrix("head_w", dims.output_dim, dims.hidden_dim)?,
                    head_b: ck.vector("head_b", dims.output_dim)?,
                })
            }
        };
        Ok(ModelArtifact {
            name,
            model,
            scaler,
            region_ids,
            day_encoding,
            seed: ck.get_parsed("seed")?,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    fn scaler(&self) -> Result<&Scaler> {
        self.scaler
            .as_ref()
            .ok_or_else(|| Error::Checkpoint(format!("{} checkpoint has no scaler", self.name.name())))
    }

    /// Forecast demand for slot `slot + 1` from the frame rows up to `slot`.
    pub fn forecast(&self, frame: &FeatureFrame, slot: usize) -> Result<Array1<f64>> {
        if frame.layout.n_regions != self.n_regions() || frame.layout.day_encoding != self.day_encoding {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects {} regions ({:?} days), data has {} ({:?})",
                self.n_regions(),
                self.day_encoding,
                frame.layout.n_regions,
                frame.layout.day_encoding
            )));
        }
        if slot >= frame.n_slots() {
            return Err(Error::data(format!(
                "slot {slot} is past the last slot {}",
                frame.n_slots() - 1
            )));
        }
        match &self.model {
            TrainedModel::Dema { alpha } => {
                let f = dema_series(*alpha, frame.demand().slice(s![..=slot, ..]));
                Ok(f.row(slot).to_owned())
            }
            _ if slot + 1 < SEQ_LEN => Err(Error::data(format!(
                "slot {slot} has fewer than {SEQ_LEN} slots of history"
            ))),
            TrainedModel::Lasso(m) => {
                let scaled = self.scaler()?.apply(frame.x.slice(s![slot + 1 - SEQ_LEN..=slot, ..]));
                let flat = Array2::from_shape_vec((1, scaled.len()), scaled.iter().copied().collect())
                    .expect("one row");
                Ok(lasso_predict(m, flat.view())?.row(0).to_owned())
            }
            TrainedModel::Network(net) => {
                let scaler = self.scaler()?;
                let scaled = scaler.apply(frame.x.slice(s![slot + 1 - SEQ_LEN..=slot, ..]));
                let (raw, _) = net.forward(scaled.view())?;
                Ok(unscale_clamped(scaler, raw.view()))
            }
        }
    }
}

pub(crate) fn unscale_clamped(scaler: &Scaler, raw: ArrayView1<f64>) -> Array1<f64> {
    scaler.unscale_target(raw).mapv(|v| v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CalendarInfo, DemandTensor};
    use crate::features::build_frames;

    fn frame() -> FeatureFrame {
        let counts: Vec<u32> = (0..96 * 2).map(|i| (i % 7) as u32).collect();
        let t = DemandTensor::from_counts(96, vec![3, 9], counts).unwrap();
        build_frames(&t, &CalendarInfo::for_window(1_504_224_000, 1, &[])).unwrap()
    }

    fn scaler() -> Scaler {
        Scaler::fit(frame().x.view(), &[3])
    }

    #[test]
    fn network_round_trip_is_bit_exact() {
        let f = frame();
        let dims = NetworkDims {
            kind: CellKind::Lstm,
            input_dim: 6,
            hidden_dim: 5,
            output_dim: 2,
            n_layers: 2,
        };
        let art = ModelArtifact {
            name: ModelName::Lstm,
            model: TrainedModel::Network(NetworkParams::init(dims, 3, true)),
            scaler: Some(scaler()),
            region_ids: vec![3, 9],
            day_encoding: DayEncoding::Scaled,
            seed: 3,
        };
        let bytes = art.to_checkpoint().to_bytes().unwrap();
        let back = ModelArtifact::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, art);
        let (a, b) = (art.forecast(&f, 40).unwrap(), back.forecast(&f, 40).unwrap());
        assert_eq!(a.mapv(f64::to_bits), b.mapv(f64::to_bits));
        assert!(art.forecast(&f, 2).is_err());
    }

    #[test]
    fn zero_network_forecasts_bias() {
        let f = frame();
        let dims = NetworkDims {
            kind: CellKind::Gru,
            input_dim: 6,
            hidden_dim: 3,
            output_dim: 2,
            n_layers: 2,
        };
        let mut net = NetworkParams::zeros(dims);
        net.head_b = ndarray::array![0.5, -4.0];
        let sc = scaler();
        let art = ModelArtifact {
            name: ModelName::Gru,
            model: TrainedModel::Network(net),
            scaler: Some(sc.clone()),
            region_ids: vec![3, 9],
            day_encoding: DayEncoding::Scaled,
            seed: 0,
        };
        let expect = unscale_clamped(&sc, ndarray::array![0.5, -4.0].view());
        for slot in [3, 50, 95] {
            assert_eq!(art.forecast(&f, slot).unwrap(), expect);
        }
    }

    #[test]
    fn baseline_round_trips() {
        let f = frame();
        let mut lasso = LassoModel::zeros(2, 24);
        lasso.intercepts = ndarray::array![1.0, 2.0];
        lasso.lambda = 0.01;
        for model in [TrainedModel::Dema { alpha: 0.3 }, TrainedModel::Lasso(lasso)] {
            let name = if matches!(model, TrainedModel::Dema { .. }) {
                ModelName::Dema
            } else {
                ModelName::Lasso
            };
            let art = ModelArtifact {
                name,
                model,
                scaler: (name == ModelName::Lasso).then(scaler),
                region_ids: vec![3, 9],
                day_encoding: DayEncoding::Scaled,
                seed: 1,
            };
            let back = ModelArtifact::from_checkpoint(
                &Checkpoint::from_bytes(&art.to_checkpoint().to_bytes().unwrap()).unwrap(),
            )
            .unwrap();
            assert_eq!(back, art);
            assert_eq!(back.forecast(&f, 30).unwrap(), art.forecast(&f, 30).unwrap());
        }
    }

    #[test]
    fn mismatched_regions_rejected() {
        let art = ModelArtifact {
            name: ModelName::Dema,
            model: TrainedModel::Dema { alpha: 0.5 },
            scaler: None,
            region_ids: vec![1, 2, 3],
            day_encoding: DayEncoding::Scaled,
            seed: 0,
        };
        assert!(matches!(art.forecast(&frame(), 10), Err(Error::Checkpoint(_))));
    }
}
