mod common;

use common::*;
use flowcast::nn::{gru_step, lstm_step, rnn_step, CellKind, NetworkDims, NetworkParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn row(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap()
}

#[test]
fn cells_match_scalar_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let hp: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cp: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let rp = random_cell(CellKind::SimpleRnn, 5, 3, &mut rng);
        let gp = random_cell(CellKind::Gru, 5, 3, &mut rng);
        let lp = random_cell(CellKind::Lstm, 5, 3, &mut rng);

        let h = rnn_step(&rp, row(&x).view(), row(&hp).view()).unwrap();
        assert!(max_gap(h.as_slice().unwrap(), &scalar_rnn(&rp, &x, &hp)) < 1e-12);

        let h = gru_step(&gp, row(&x).view(), row(&hp).view()).unwrap();
        assert!(max_gap(h.as_slice().unwrap(), &scalar_gru(&gp, &x, &hp)) < 1e-12);

        let (h, c) = lstm_step(&lp, row(&x).view(), row(&hp).view(), row(&cp).view()).unwrap();
        let (hs, cs) = scalar_lstm(&lp, &x, &hp, &cp);
        assert!(max_gap(h.as_slice().unwrap(), &hs) < 1e-12);
        assert!(max_gap(c.as_slice().unwrap(), &cs) < 1e-12);
        assert!(h.iter().all(|v| v.abs() < 1.0));
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for kind in CellKind::ALL {
        let check = gradient_check(kind, 6, 4, 4, 21);
        assert!(check.first_failure.is_none(), "{kind:?}: {:?}", check.first_failure);
    }
}

#[test]
fn odd_shape_gradients_match() {
    // odd sizes catch transposed gate blocks that square shapes would hide
    for kind in CellKind::ALL {
        let check = gradient_check(kind, 3, 5, 2, 5);
        assert!(check.first_failure.is_none(), "{kind:?}: {:?}", check.first_failure);
    }
}

#[test]
fn parameter_count_ordering() {
    let counts: Vec<usize> = CellKind::ALL
        .iter()
        .map(|&kind| {
            NetworkParams::zeros(NetworkDims {
                kind,
                input_dim: 68,
                hidden_dim: 128,
                output_dim: 64,
                n_layers: 2,
            })
            .recurrent_param_count()
        })
        .collect();
    assert!(counts[0] < counts[1] && counts[1] < counts[2]);
    assert_eq!(counts[1], 3 * counts[0]);
    assert_eq!(counts[2], 4 * counts[0]);
}
