//! Reverse-mode gradients against central finite differences on every
//! network shape used in the repo.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use softquad::nn::{Gradients, Mlp};

/// Scalar loss: 0.5‖f(x) − y‖² summed over the batch.
fn loss(mlp: &Mlp<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let out = mlp.forward(x).unwrap();
    0.5 * (out - y).norm_squared()
}

fn analytic_grads(mlp: &Mlp<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Gradients<f64> {
    let (out, tape) = mlp.forward_cached(x).unwrap();
    let upstream = out - y;
    mlp.backward(&tape, &upstream).unwrap().0
}

/// Max relative error between analytic and central-difference gradients,
/// with an absolute floor so near-zero entries do not blow up the ratio.
fn grad_check(widths: &[usize], seed: u64, batch: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mlp: Mlp<f64> = Mlp::new(widths, &mut rng).unwrap();
    // nonzero biases so their gradients are exercised off the init point
    for l in &mut mlp.layers {
        for b in l.bias.iter_mut() {
            *b = 0.05;
        }
    }
    let x = DMatrix::from_fn(widths[0], batch, |r, c| {
        ((r * 31 + c * 17) as f64 * 0.173).sin()
    });
    let y = DMatrix::from_fn(*widths.last().unwrap(), batch, |r, c| {
        ((r * 13 + c * 7) as f64 * 0.311).cos()
    });
    let grads = analytic_grads(&mlp, &x, &y);

    let h = 1e-6;
    let mut max_rel: f64 = 0.0;
    let mut check = |analytic: f64, plus: f64, minus: f64| {
        let fd = (plus - minus) / (2.0 * h);
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3);
        if rel > max_rel {
            max_rel = rel;
        }
    };
    for l in 0..mlp.layers.len() {
        // sample a strided subset of weights to keep runtime low
        let n = mlp.layers[l].weight.len();
        let stride = (n / 40).max(1);
        for i in (0..n).step_by(stride) {
            let orig = mlp.layers[l].weight[i];
            mlp.layers[l].weight[i] = orig + h;
            let plus = loss(&mlp, &x, &y);
            mlp.layers[l].weight[i] = orig - h;
            let minus = loss(&mlp, &x, &y);
            mlp.layers[l].weight[i] = orig;
            check(grads.weights[l][i], plus, minus);
        }
        for i in 0..mlp.layers[l].bias.len() {
            let orig = mlp.layers[l].bias[i];
            mlp.layers[l].bias[i] = orig + h;
            let plus = loss(&mlp, &x, &y);
            mlp.layers[l].bias[i] = orig - h;
            let minus = loss(&mlp, &x, &y);
            mlp.layers[l].bias[i] = orig;
            check(grads.biases[l][i], plus, minus);
        }
    }
    max_rel
}

#[test]
fn gradcheck_tactile_shape() {
    let err = grad_check(&[3, 32, 32, 1], 101, 8);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn gradcheck_actor_shape() {
    let err = grad_check(&[136, 256, 256, 16], 102, 4);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn gradcheck_critic_shape() {
    let err = grad_check(&[152, 256, 256, 1], 103, 4);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mlp: Mlp<f64> = Mlp::new(&[5, 16, 2], &mut rng).unwrap();
    let x0 = DVector::from_fn(5, |i, _| (i as f64 * 0.41).cos());
    let y = DMatrix::zeros(2, 1);
    let xm = DMatrix::from_column_slice(5, 1, x0.as_slice());
    let (out, tape) = mlp.forward_cached(&xm).unwrap();
    let (_, input_grad) = mlp.backward(&tape, &(out - &y)).unwrap();

    let h = 1e-6;
    for i in 0..5 {
        let mut xp = xm.clone();
        xp[(i, 0)] += h;
        let mut xn = xm.clone();
        xn[(i, 0)] -= h;
        let fd = (loss(&mlp, &xp, &y) - loss(&mlp, &xn, &y)) / (2.0 * h);
        let rel = (input_grad[(i, 0)] - fd).abs() / fd.abs().max(1e-6);
        assert!(rel < 1e-4, "input grad {i}: rel {rel}");
    }
}
