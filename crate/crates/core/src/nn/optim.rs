use serde::{Deserialize, Serialize};

use super::network::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl Optimizer {
    pub fn is_valid(&self) -> bool {
        match *self {
            Optimizer::Sgd => true,
            Optimizer::Adam { beta1, beta2, eps } => {
                (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        }
    }
}

/// Moment estimates carried between updates.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    opt: Optimizer,
    step: i32,
    m: Option<NetworkParams>,
    v: Option<NetworkParams>,
}

impl OptimizerState {
    pub fn new(opt: Optimizer, like: &NetworkParams) -> Self {
        let (m, v) = match opt {
            Optimizer::Sgd => (None, None),
            Optimizer::Adam { .. } => (Some(like.zeros_like()), Some(like.zeros_like())),
        };
        OptimizerState { opt, step: 0, m, v }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Apply one update of `params` against `grads`.
    pub fn update(&mut self, params: &mut NetworkParams, grads: &NetworkParams, lr: f64) {
        self.step += 1;
        match self.opt {
            Optimizer::Sgd => {
                for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                    p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.step);
                let bc2 = 1.0 - beta2.powi(self.step);
                let m = self.m.as_mut().expect("adam keeps first moments");
                let v = self.v.as_mut().expect("adam keeps second moments");
                for (((p, g), m), v) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(m.tensors_mut())
                    .zip(v.tensors_mut())
                {
                    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Rescale `grads` so their joint L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(grads: &mut NetworkParams, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm.is_finite() {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{CellKind, NetworkDims};

    fn net() -> NetworkParams {
        NetworkParams::init(
            NetworkDims {
                kind: CellKind::Gru,
                input_dim: 3,
                hidden_dim: 2,
                output_dim: 2,
                n_layers: 2,
            },
            1,
            true,
        )
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = net();
        g.scale(100.0);
        let before = clip_global_norm(&mut g, 5.0);
        assert!(before > 5.0);
        assert!((g.global_norm() - 5.0).abs() < 1e-12);
        let mut small = net();
        small.scale(1e-3);
        let copy = small.clone();
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small, copy);
    }

    #[test]
    fn first_adam_step_moves_by_lr_times_sign() {
        let mut p = net();
        let start = p.clone();
        let mut g = net();
        g.scale(3.0);
        let mut st = OptimizerState::new(Optimizer::default(), &p);
        st.update(&mut p, &g, 0.01);
        for ((a, b), g) in p.tensors().iter().zip(start.tensors()).zip(g.tensors()) {
            for ((a, b), g) in a.iter().zip(b).zip(g) {
                if *g != 0.0 {
                    assert!(((b - a) - 0.01 * g.signum()).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn sgd_step() {
        let mut p = net();
        let start = p.clone();
        let g = net();
        OptimizerState::new(Optimizer::Sgd, &p).update(&mut p, &g, 0.5);
        for ((a, b), g) in p.tensors().iter().zip(start.tensors()).zip(g.tensors()) {
            for ((a, b), g) in a.iter().zip(b).zip(g) {
                assert!((a - (b - 0.5 * g)).abs() < 1e-15);
            }
        }
    }
}
