//! Recurrent cells, batched over rows.
//!
//! Every cell keeps its gate blocks stacked: `wx` is `[gates * hidden, input]`,
//! `wh` is `[gates * hidden, hidden]` and `b` is `[gates * hidden]`.
//! Block order is `(f, i, c_hat, o)` for the LSTM and `(z, r, n)` for the GRU.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    #[serde(rename = "rnn")]
    SimpleRnn,
    #[serde(rename = "gru")]
    Gru,
    #[serde(rename = "lstm")]
    Lstm,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::SimpleRnn, CellKind::Gru, CellKind::Lstm];

    pub fn gates(self) -> usize {
        match self {
            CellKind::SimpleRnn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::SimpleRnn => "rnn",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "rnn" => Some(CellKind::SimpleRnn),
            "gru" => Some(CellKind::Gru),
            "lstm" => Some(CellKind::Lstm),
            _ => None,
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub wx: Array2<f64>,
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

impl CellParams {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        let g = kind.gates() * hidden_dim;
        CellParams {
            kind,
            input_dim,
            hidden_dim,
            wx: Array2::zeros((g, input_dim)),
            wh: Array2::zeros((g, hidden_dim)),
            b: Array1::zeros(g),
        }
    }

    /// Glorot-uniform weights per gate block, zero biases (LSTM forget bias
    /// set to 1 when `forget_bias` is on).
    pub fn glorot<R: Rng>(
        kind: CellKind,
        input_dim: usize,
        hidden_dim: usize,
        forget_bias: bool,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(kind, input_dim, hidden_dim);
        let lim_x = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let lim_h = (6.0 / (2 * hidden_dim) as f64).sqrt();
        p.wx.mapv_inplace(|_| rng.random_range(-lim_x..=lim_x));
        p.wh.mapv_inplace(|_| rng.random_range(-lim_h..=lim_h));
        if forget_bias && kind == CellKind::Lstm {
            p.b.slice_mut(s![..hidden_dim]).fill(1.0);
        }
        p
    }

    pub fn param_count(&self) -> usize {
        self.wx.len() + self.wh.len() + self.b.len()
    }

    fn check_inputs(&self, x: &ArrayView2<f64>, h: &ArrayView2<f64>) -> Result<()> {
        ensure_dims(
            x.ncols() == self.input_dim && h.ncols() == self.hidden_dim && x.nrows() == h.nrows(),
            || {
                format!(
                    "{} cell expects input {} / hidden {}, got x {:?} and h {:?}",
                    self.kind.name(),
                    self.input_dim,
                    self.hidden_dim,
                    x.dim(),
                    h.dim()
                )
            },
        )
    }

    fn input_affine(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut pre = Array2::zeros((x.nrows(), self.b.len()));
        pre.assign(&self.b.view().insert_axis(Axis(0)));
        general_mat_mul(1.0, x, &self.wx.t(), 1.0, &mut pre);
        pre
    }

    /// One step for a batch of rows. `c_prev` is used by the LSTM only.
    pub fn step(
        &self,
        x: ArrayView2<f64>,
        h_prev: ArrayView2<f64>,
        c_prev: Option<ArrayView2<f64>>,
    ) -> Result<StepCache> {
        self.check_inputs(&x, &h_prev)?;
        let h = self.hidden_dim;
        let mut pre = self.input_affine(&x);
        match self.kind {
            CellKind::SimpleRnn => {
                general_mat_mul(1.0, &h_prev, &self.wh.t(), 1.0, &mut pre);
                pre.mapv_inplace(f64::tanh);
                Ok(StepCache {
                    x: x.to_owned(),
                    h_prev: h_prev.to_owned(),
                    h: pre.clone(),
                    gates: pre,
                    c_prev: None,
                    c: None,
                    tanh_c: None,
                    reset_h: None,
                })
            }
            CellKind::Gru => {
                {
                    let mut zr = pre.slice_mut(s![.., ..2 * h]);
                    general_mat_mul(1.0, &h_prev, &self.wh.slice(s![..2 * h, ..]).t(), 1.0, &mut zr);
                    zr.mapv_inplace(sigmoid);
                }
                let reset_h = &pre.slice(s![.., h..2 * h]) * &h_prev;
                {
                    let mut n = pre.slice_mut(s![.., 2 * h..]);
                    general_mat_mul(1.0, &reset_h, &self.wh.slice(s![2 * h.., ..]).t(), 1.0, &mut n);
                    n.mapv_inplace(f64::tanh);
                }
                let mut out = Array2::zeros(h_prev.raw_dim());
                Zip::from(&mut out)
                    .and(&h_prev)
                    .and(pre.slice(s![.., ..h]))
                    .and(pre.slice(s![.., 2 * h..]))
                    .for_each(|o, &hp, &z, &n| *o = (1.0 - z) * hp + z * n);
                Ok(StepCache {
                    x: x.to_owned(),
                    h_prev: h_prev.to_owned(),
                    h: out,
                    gates: pre,
                    c_prev: None,
                    c: None,
                    tanh_c: None,
                    reset_h: Some(reset_h),
                })
            }
            CellKind::Lstm => {
                general_mat_mul(1.0, &h_prev, &self.wh.t(), 1.0, &mut pre);
                pre.slice_mut(s![.., ..2 * h]).mapv_inplace(sigmoid);
                pre.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(f64::tanh);
                pre.slice_mut(s![.., 3 * h..]).mapv_inplace(sigmoid);
                let c_prev = match c_prev {
                    Some(c) => {
                        ensure_dims(c.dim() == h_prev.dim(), || {
                            format!("cell state {:?} vs hidden {:?}", c.dim(), h_prev.dim())
                        })?;
                        c.to_owned()
                    }
                    None => Array2::zeros(h_prev.raw_dim()),
                };
                let mut c = Array2::zeros(h_prev.raw_dim());
                Zip::from(&mut c)
                    .and(&c_prev)
                    .and(pre.slice(s![.., ..h]))
                    .and(pre.slice(s![.., h..2 * h]))
                    .and(pre.slice(s![.., 2 * h..3 * h]))
                    .for_each(|c, &cp, &f, &i, &g| *c = f * cp + i * g);
                let tanh_c = c.mapv(f64::tanh);
                let out = &pre.slice(s![.., 3 * h..]) * &tanh_c;
                Ok(StepCache {
                    x: x.to_owned(),
                    h_prev: h_prev.to_owned(),
                    h: out,
                    gates: pre,
                    c_prev: Some(c_prev),
                    c: Some(c),
                    tanh_c: Some(tanh_c),
                    reset_h: None,
                })
            }
        }
    }

    /// Reverse one step. `dh` and `dc` are gradients flowing into this step's
    /// outputs; parameter gradients are accumulated into `grads`. Returns
    /// `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        cache: &StepCache,
        dh: &Array2<f64>,
        dc: Option<&Array2<f64>>,
        grads: &mut CellParams,
    ) -> (Array2<f64>, Array2<f64>, Option<Array2<f64>>) {
        let h = self.hidden_dim;
        let mut dpre = Array2::zeros(cache.gates.raw_dim());
        let mut dh_prev;
        let mut dc_prev = None;
        match self.kind {
            CellKind::SimpleRnn => {
                Zip::from(&mut dpre)
                    .and(dh)
                    .and(&cache.h)
                    .for_each(|d, &g, &y| *d = g * (1.0 - y * y));
                dh_prev = dpre.dot(&self.wh);
                general_mat_mul(1.0, &dpre.t(), &cache.h_prev, 1.0, &mut grads.wh);
            }
            CellKind::Gru => {
                let z = cache.gates.slice(s![.., ..h]);
                let r = cache.gates.slice(s![.., h..2 * h]);
                let n = cache.gates.slice(s![.., 2 * h..]);
                let hp = &cache.h_prev;
                dh_prev = Array2::zeros(hp.raw_dim());
                Zip::from(&mut dh_prev).and(dh).and(z).for_each(|d, &g, &z| *d = g * (1.0 - z));
                Zip::from(dpre.slice_mut(s![.., 2 * h..]))
                    .and(dh)
                    .and(z)
                    .and(n)
                    .for_each(|d, &g, &z, &n| *d = g * z * (1.0 - n * n));
                let reset_h = cache.reset_h.as_ref().expect("gru cache keeps r*h");
                let wh_n = self.wh.slice(s![2 * h.., ..]);
                general_mat_mul(
                    1.0,
                    &dpre.slice(s![.., 2 * h..]).t(),
                    reset_h,
                    1.0,
                    &mut grads.wh.slice_mut(s![2 * h.., ..]),
                );
                let d_reset_h = dpre.slice(s![.., 2 * h..]).dot(&wh_n);
                Zip::from(&mut dh_prev).and(&d_reset_h).and(r).for_each(|d, &g, &r| *d += g * r);
                Zip::from(dpre.slice_mut(s![.., h..2 * h]))
                    .and(&d_reset_h)
                    .and(hp)
                    .and(r)
                    .for_each(|d, &g, &hp, &r| *d = g * hp * r * (1.0 - r));
                Zip::from(dpre.slice_mut(s![.., ..h]))
                    .and(dh)
                    .and(z)
                    .and(n)
                    .and(hp)
                    .for_each(|d, &g, &z, &n, &hp| *d = g * (n - hp) * z * (1.0 - z));
                let dzr = dpre.slice(s![.., ..2 * h]);
                general_mat_mul(
                    1.0,
                    &dzr.t(),
                    hp,
                    1.0,
                    &mut grads.wh.slice_mut(s![..2 * h, ..]),
                );
                general_mat_mul(1.0, &dzr, &self.wh.slice(s![..2 * h, ..]), 1.0, &mut dh_prev);
            }
            CellKind::Lstm => {
                let f = cache.gates.slice(s![.., ..h]);
                let i = cache.gates.slice(s![.., h..2 * h]);
                let g = cache.gates.slice(s![.., 2 * h..3 * h]);
                let o = cache.gates.slice(s![.., 3 * h..]);
                let tanh_c = cache.tanh_c.as_ref().expect("lstm cache keeps tanh(c)");
                let c_prev = cache.c_prev.as_ref().expect("lstm cache keeps c_prev");
                // total gradient on c_t
                let mut dct = match dc {
                    Some(dc) => dc.clone(),
                    None => Array2::zeros(dh.raw_dim()),
                };
                Zip::from(&mut dct)
                    .and(dh)
                    .and(o)
                    .and(tanh_c)
                    .for_each(|d, &g, &o, &tc| *d += g * o * (1.0 - tc * tc));
                Zip::from(dpre.slice_mut(s![.., 3 * h..]))
                    .and(dh)
                    .and(tanh_c)
                    .and(o)
                    .for_each(|d, &g, &tc, &o| *d = g * tc * o * (1.0 - o));
                Zip::from(dpre.slice_mut(s![.., ..h]))
                    .and(&dct)
                    .and(c_prev)
                    .and(f)
                    .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (1.0 - f));
                Zip::from(dpre.slice_mut(s![.., h..2 * h]))
                    .and(&dct)
                    .and(g)
                    .and(i)
                    .for_each(|d, &dc, &g, &i| *d = dc * g * i * (1.0 - i));
                Zip::from(dpre.slice_mut(s![.., 2 * h..3 * h]))
                    .and(&dct)
                    .and(i)
                    .and(g)
                    .for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));
                dc_prev = Some(&dct * &f);
                dh_prev = dpre.dot(&self.wh);
                general_mat_mul(1.0, &dpre.t(), &cache.h_prev, 1.0, &mut grads.wh);
            }
        }
        general_mat_mul(1.0, &dpre.t(), &cache.x, 1.0, &mut grads.wx);
        grads.b += &dpre.sum_axis(Axis(0));
        let dx = dpre.dot(&self.wx);
        (dx, dh_prev, dc_prev)
    }
}

/// What one forward step keeps for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub h: Array2<f64>,
    /// Post-activation gate blocks, stacked like the weights.
    pub gates: Array2<f64>,
    pub c_prev: Option<Array2<f64>>,
    pub c: Option<Array2<f64>>,
    pub tanh_c: Option<Array2<f64>>,
    pub reset_h: Option<Array2<f64>>,
}

fn require_kind(p: &CellParams, kind: CellKind) -> Result<()> {
    ensure_dims(p.kind == kind, || {
        format!("expected {} parameters, got {}", kind.name(), p.kind.name())
    })
}

/// `h_t = tanh(Wx x + Wh h_prev + b)`
pub fn rnn_step(p: &CellParams, x: ArrayView2<f64>, h_prev: ArrayView2<f64>) -> Result<Array2<f64>> {
    require_kind(p, CellKind::SimpleRnn)?;
    Ok(p.step(x, h_prev, None)?.h)
}

/// Update gate `z`, reset gate `r`, candidate `n = tanh(Wx x + Wh (r * h_prev) + b)`,
/// `h_t = (1 - z) * h_prev + z * n`.
pub fn gru_step(p: &CellParams, x: ArrayView2<f64>, h_prev: ArrayView2<f64>) -> Result<Array2<f64>> {
    require_kind(p, CellKind::Gru)?;
    Ok(p.step(x, h_prev, None)?.h)
}

/// Returns `(h_t, c_t)`.
pub fn lstm_step(
    p: &CellParams,
    x: ArrayView2<f64>,
    h_prev: ArrayView2<f64>,
    c_prev: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    require_kind(p, CellKind::Lstm)?;
    let cache = p.step(x, h_prev, Some(c_prev))?;
    Ok((cache.h, cache.c.expect("lstm step sets c")))
}
