use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_dims, Error, Result};

use super::cell::{CellKind, CellParams, StepCache};

/// Stacked recurrent layers followed by an identity-activation dense head
/// applied to the last hidden state of the top layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<CellParams>,
    /// `[output, hidden]`
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkDims {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub n_layers: usize,
}

impl NetworkParams {
    pub fn zeros(dims: NetworkDims) -> Self {
        let layers = (0..dims.n_layers)
            .map(|l| {
                let input = if l == 0 { dims.input_dim } else { dims.hidden_dim };
                CellParams::zeros(dims.kind, input, dims.hidden_dim)
            })
            .collect();
        NetworkParams {
            layers,
            head_w: Array2::zeros((dims.output_dim, dims.hidden_dim)),
            head_b: Array1::zeros(dims.output_dim),
        }
    }

    pub fn init(dims: NetworkDims, seed: u64, forget_bias: bool) -> Self {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..dims.n_layers)
            .map(|l| {
                let input = if l == 0 { dims.input_dim } else { dims.hidden_dim };
                CellParams::glorot(dims.kind, input, dims.hidden_dim, forget_bias, &mut rng)
            })
            .collect();
        let lim = (6.0 / (dims.hidden_dim + dims.output_dim) as f64).sqrt();
        NetworkParams {
            layers,
            head_w: Array2::from_shape_fn((dims.output_dim, dims.hidden_dim), |_| {
                rng.random_range(-lim..=lim)
            }),
            head_b: Array1::zeros(dims.output_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams::zeros(self.dims())
    }

    pub fn dims(&self) -> NetworkDims {
        let first = &self.layers[0];
        NetworkDims {
            kind: first.kind,
            input_dim: first.input_dim,
            hidden_dim: first.hidden_dim,
            output_dim: self.head_b.len(),
            n_layers: self.layers.len(),
        }
    }

    pub fn kind(&self) -> CellKind {
        self.layers[0].kind
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Recurrent parameters only (no dense head).
    pub fn recurrent_param_count(&self) -> usize {
        self.layers.iter().map(CellParams::param_count).sum()
    }

    /// Every parameter tensor as a flat slice, in declared order:
    /// per layer `wx, wh, b`, then `head_w, head_b`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.wx.as_slice().expect("standard layout"));
            out.push(l.wh.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out.push(self.head_w.as_slice().expect("standard layout"));
        out.push(self.head_b.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.wx.as_slice_mut().expect("standard layout"));
            out.push(l.wh.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head_w.as_slice_mut().expect("standard layout"));
        out.push(self.head_b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Hash of every parameter bit pattern; ties a forward cache to the
    /// exact parameters that produced it.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in t {
                h = (h ^ v.to_bits()).wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Forward a single `[steps, input]` window.
    pub fn forward(&self, window: ArrayView2<f64>) -> Result<(Array1<f64>, ForwardCache)> {
        let (out, cache) = self.forward_batch(&[window])?;
        Ok((out.row(0).to_owned(), cache))
    }

    /// Forward a batch of equally long windows; returns `[batch, output]`.
    pub fn forward_batch(&self, windows: &[ArrayView2<f64>]) -> Result<(Array2<f64>, ForwardCache)> {
        let dims = self.dims();
        ensure_dims(!windows.is_empty(), || "empty batch".into())?;
        let steps = windows[0].nrows();
        ensure_dims(steps > 0, || "window has no steps".into())?;
        for w in windows {
            ensure_dims(w.nrows() == steps && w.ncols() == dims.input_dim, || {
                format!(
                    "window {:?} does not match [{steps}, {}]",
                    w.dim(),
                    dims.input_dim
                )
            })?;
        }
        let batch = windows.len();
        // layer inputs per step, [batch, features]
        let mut inputs: Vec<Array2<f64>> = (0..steps)
            .map(|t| {
                let mut x = Array2::zeros((batch, dims.input_dim));
                for (mut row, w) in x.axis_iter_mut(Axis(0)).zip(windows) {
                    row.assign(&w.row(t));
                }
                x
            })
            .collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut h = Array2::zeros((batch, dims.hidden_dim));
            let mut c: Option<Array2<f64>> = None;
            let mut layer_cache = Vec::with_capacity(steps);
            for (t, x) in inputs.iter().enumerate() {
                let step = layer.step(x.view(), h.view(), c.as_ref().map(|c| c.view()))?;
                if !step.h.iter().all(|v| v.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "non-finite activation at step {t}, layer {l}"
                    )));
                }
                h = step.h.clone();
                c = step.c.clone();
                layer_cache.push(step);
            }
            inputs = layer_cache.iter().map(|s| s.h.clone()).collect();
            caches.push(layer_cache);
        }
        let last = inputs.pop().expect("at least one step");
        let mut out = Array2::zeros((batch, dims.output_dim));
        out.assign(&self.head_b.view().insert_axis(Axis(0)));
        general_mat_mul(1.0, &last, &self.head_w.t(), 1.0, &mut out);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        Ok((
            out,
            ForwardCache {
                digest: self.digest(),
                batch,
                steps,
                layers: caches,
                top: last,
            },
        ))
    }

    /// Exact gradients of `sum(grad_out * output)` with respect to every
    /// parameter, summed over the batch.
    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<f64>) -> Result<NetworkParams> {
        ensure_dims(
            cache.digest == self.digest() && cache.layers.len() == self.layers.len(),
            || "stale forward cache: parameters changed since the forward pass".into(),
        )?;
        ensure_dims(
            grad_out.dim() == (cache.batch, self.head_b.len()),
            || format!("output gradient {:?} vs [{}, {}]", grad_out.dim(), cache.batch, self.head_b.len()),
        )?;
        let mut grads = self.zeros_like();
        general_mat_mul(1.0, &grad_out.t(), &cache.top, 1.0, &mut grads.head_w);
        grads.head_b += &grad_out.sum_axis(Axis(0));

        // gradient arriving at each step's output from the layer above
        let mut from_above: Vec<Option<Array2<f64>>> = vec![None; cache.steps];
        from_above[cache.steps - 1] = Some(grad_out.dot(&self.head_w));
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let steps: &[StepCache] = &cache.layers[l];
            let mut dh_next = Array2::zeros((cache.batch, layer.hidden_dim));
            let mut dc_next: Option<Array2<f64>> = None;
            let mut to_below: Vec<Option<Array2<f64>>> = vec![None; cache.steps];
            for t in (0..cache.steps).rev() {
                let mut dh = dh_next;
                if let Some(g) = &from_above[t] {
                    dh += g;
                }
                let (dx, dh_prev, dc_prev) =
                    layer.step_backward(&steps[t], &dh, dc_next.as_ref(), &mut grads.layers[l]);
                to_below[t] = Some(dx);
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
            from_above = to_below;
        }
        Ok(grads)
    }
}

/// Activations saved by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    digest: u64,
    batch: usize,
    steps: usize,
    layers: Vec<Vec<StepCache>>,
    top: Array2<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}
