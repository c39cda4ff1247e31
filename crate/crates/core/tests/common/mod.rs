//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use flowcast::nn::{mse_loss_batch, CellKind, CellParams, NetworkDims, NetworkParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `sum_k W[row, k] * v[k]`
fn dot(w: &Array2<f64>, row: usize, v: &[f64]) -> f64 {
    (0..v.len()).map(|k| w[[row, k]] * v[k]).sum()
}

pub fn scalar_rnn(p: &CellParams, x: &[f64], hp: &[f64]) -> Vec<f64> {
    (0..p.hidden_dim)
        .map(|j| (dot(&p.wx, j, x) + dot(&p.wh, j, hp) + p.b[j]).tanh())
        .collect()
}

/// Gate blocks in order update `z`, reset `r`, candidate `n`.
pub fn scalar_gru(p: &CellParams, x: &[f64], hp: &[f64]) -> Vec<f64> {
    let h = p.hidden_dim;
    let gate = |blk: usize, j: usize, hv: &[f64]| {
        dot(&p.wx, blk * h + j, x) + dot(&p.wh, blk * h + j, hv) + p.b[blk * h + j]
    };
    let z: Vec<f64> = (0..h).map(|j| sig(gate(0, j, hp))).collect();
    let r: Vec<f64> = (0..h).map(|j| sig(gate(1, j, hp))).collect();
    let rh: Vec<f64> = (0..h).map(|j| r[j] * hp[j]).collect();
    (0..h)
        .map(|j| {
            let n = gate(2, j, &rh).tanh();
            (1.0 - z[j]) * hp[j] + z[j] * n
        })
        .collect()
}

/// Gate blocks in order forget, input, candidate, output.
pub fn scalar_lstm(p: &CellParams, x: &[f64], hp: &[f64], cp: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = p.hidden_dim;
    let gate = |blk: usize, j: usize| dot(&p.wx, blk * h + j, x) + dot(&p.wh, blk * h + j, hp) + p.b[blk * h + j];
    let mut hs = vec![0.0; h];
    let mut cs = vec![0.0; h];
    for j in 0..h {
        let f = sig(gate(0, j));
        let i = sig(gate(1, j));
        let c_hat = gate(2, j).tanh();
        let o = sig(gate(3, j));
        cs[j] = f * cp[j] + i * c_hat;
        hs[j] = o * cs[j].tanh();
    }
    (hs, cs)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-half..half))
}

/// Glorot weights plus uniform biases in `[-1, 1)`, so gates are not all centered.
pub fn random_cell(kind: CellKind, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> CellParams {
    let mut p = CellParams::glorot(kind, input, hidden, rng.random(), rng);
    p.b.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    p
}

/// Largest gap over all entries of one batch row of `got` against `want`.
pub fn max_gap(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Relative error used by the gradient check.
pub fn grad_rel_error(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8)
}

fn batch_loss(net: &NetworkParams, windows: &[Array2<f64>], target: &Array2<f64>) -> f64 {
    let views: Vec<_> = windows.iter().map(|w| w.view()).collect();
    let (pred, _) = net.forward_batch(&views).unwrap();
    mse_loss_batch(pred.view(), target.view()).unwrap().0
}

pub struct GradCheck {
    pub worst: f64,
    pub n_params: usize,
    /// First failing entry as `(tensor, index, analytic, fd)`.
    pub first_failure: Option<(usize, usize, f64, f64)>,
}

/// Central differences with step 1e-5 on every parameter of a randomly
/// perturbed two-layer network, against one analytic backward pass.
pub fn gradient_check(kind: CellKind, input: usize, hidden: usize, seq: usize, seed: u64) -> GradCheck {
    const STEP: f64 = 1e-5;
    let dims = NetworkDims {
        kind,
        input_dim: input,
        hidden_dim: hidden,
        output_dim: 3,
        n_layers: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = NetworkParams::init(dims, seed, true);
    for t in net.tensors_mut() {
        t.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
    let windows: Vec<Array2<f64>> = (0..2).map(|_| uniform_matrix(&mut rng, seq, input, 1.5)).collect();
    let target = uniform_matrix(&mut rng, 2, 3, 1.0);

    let views: Vec<_> = windows.iter().map(|w| w.view()).collect();
    let (pred, cache) = net.forward_batch(&views).unwrap();
    let (_, grad_out) = mse_loss_batch(pred.view(), target.view()).unwrap();
    let grads = net.backward(&cache, grad_out.view()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let mut out = GradCheck {
        worst: 0.0,
        n_params: 0,
        first_failure: None,
    };
    for (ti, tensor) in analytic.iter().enumerate() {
        for (k, &a) in tensor.iter().enumerate() {
            let orig = net.tensors()[ti][k];
            net.tensors_mut()[ti][k] = orig + STEP;
            let up = batch_loss(&net, &windows, &target);
            net.tensors_mut()[ti][k] = orig - STEP;
            let down = batch_loss(&net, &windows, &target);
            net.tensors_mut()[ti][k] = orig;
            let fd = (up - down) / (2.0 * STEP);
            let rel = grad_rel_error(a, fd);
            out.worst = out.worst.max(rel);
            out.n_params += 1;
            if rel > 1e-4 && out.first_failure.is_none() {
                out.first_failure = Some((ti, k, a, fd));
            }
        }
    }
    out
}
