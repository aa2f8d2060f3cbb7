//! Central finite-difference checks of every hand-derived backward pass.
//!
//! Each check draws random layer shapes, parameters and inputs, builds a scalar loss on top
//! of the layer, and compares the analytic gradient of every parameter (and input) with
//! `(L(θ+h) − L(θ−h)) / 2h`. The error measure is
//! `|analytic − numeric| / max(|analytic|, |numeric|, GRAD_FLOOR)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    dense_backward, dense_forward, dropout_backward, dropout_forward_rng, lstm_backward,
    lstm_forward, one_hot, softmax_cross_entropy, Activation, DenseLayer, LstmLayer, Matrix,
    GATES,
};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
pub const GRAD_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: &'static str,
    pub trials: usize,
    pub checked_values: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

struct Tracker {
    max: f64,
    count: usize,
}

impl Tracker {
    fn new() -> Self {
        Tracker { max: 0.0, count: 0 }
    }

    fn compare(&mut self, analytic: &[f64], numeric: &[f64]) {
        assert_eq!(analytic.len(), numeric.len());
        for (a, n) in analytic.iter().zip(numeric) {
            self.max = self.max.max(rel_error(*a, *n));
            self.count += 1;
        }
    }
}

/// Central differences of `loss` with respect to the `count` scalars reachable via `slot`.
fn numeric_grad<T: Clone>(
    base: &T,
    count: usize,
    step: f64,
    slot: impl Fn(&mut T, usize) -> &mut f64,
    loss: impl Fn(&T) -> f64,
) -> Vec<f64> {
    (0..count)
        .map(|i| {
            let mut plus = base.clone();
            *slot(&mut plus, i) += step;
            let mut minus = base.clone();
            *slot(&mut minus, i) -= step;
            (loss(&plus) - loss(&minus)) / (2.0 * step)
        })
        .collect()
}

fn random_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

fn random_vec<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn weighted_sum(y: &Matrix, r: &Matrix) -> f64 {
    y.as_slice().iter().zip(r.as_slice()).map(|(a, b)| a * b).sum()
}

/// Dense layers (ReLU and Linear) under the loss `Σ Y∘R`.
pub fn check_dense(trials: usize, seed: u64, step: f64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tracker::new();
    for trial in 0..trials {
        let (batch, inputs, outputs) = (
            rng.random_range(1..6),
            rng.random_range(1..9),
            rng.random_range(1..7),
        );
        let activation = if trial % 2 == 0 { Activation::Relu } else { Activation::Linear };
        // Redraw until no pre-activation sits near the ReLU kink.
        let (layer, x) = loop {
            let mut layer = DenseLayer::he_uniform(inputs, outputs, activation, 1.0, &mut rng);
            layer.bias = random_vec(outputs, 0.5, &mut rng);
            let x = random_matrix(batch, inputs, 1.5, &mut rng);
            let z = layer.pre_activation(&x).expect("shape");
            if activation != Activation::Relu || z.as_slice().iter().all(|v| v.abs() > 1e-3) {
                break (layer, x);
            }
        };
        let r = random_matrix(batch, outputs, 1.0, &mut rng);
        let (_, cache) = layer.forward_with_cache(&x).expect("shape");
        let (dx, grads) = dense_backward(&layer, &cache, &r).expect("shape");

        let loss = |l: &DenseLayer| weighted_sum(&dense_forward(l, &x).expect("shape"), &r);
        let nw = numeric_grad(&layer, inputs * outputs, step, |l, i| &mut l.weights.as_mut_slice()[i], loss);
        t.compare(grads.weights.as_slice(), &nw);
        let nb = numeric_grad(&layer, outputs, step, |l, i| &mut l.bias[i], loss);
        t.compare(&grads.bias, &nb);
        let nx = numeric_grad(&x, batch * inputs, step, |m, i| &mut m.as_mut_slice()[i], |m| {
            weighted_sum(&dense_forward(&layer, m).expect("shape"), &r)
        });
        t.compare(dx.as_slice(), &nx);
    }
    GradCheckReport {
        name: "dense",
        trials,
        checked_values: t.count,
        max_rel_error: t.max,
        tolerance: DEFAULT_TOLERANCE,
    }
}

/// Softmax cross-entropy gradient with respect to the logits.
pub fn check_softmax_cross_entropy(trials: usize, seed: u64, step: f64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tracker::new();
    for _ in 0..trials {
        let (batch, classes) = (rng.random_range(1..6), rng.random_range(2..7));
        let logits = random_matrix(batch, classes, 3.0, &mut rng);
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
        let targets = one_hot(&labels, classes);
        let (_, dlogits) = softmax_cross_entropy(&logits, &targets).expect("valid");
        let n = numeric_grad(&logits, batch * classes, step, |m, i| &mut m.as_mut_slice()[i], |m| {
            softmax_cross_entropy(m, &targets).expect("valid").0
        });
        t.compare(dlogits.as_slice(), &n);
    }
    GradCheckReport {
        name: "softmax_cross_entropy",
        trials,
        checked_values: t.count,
        max_rel_error: t.max,
        tolerance: DEFAULT_TOLERANCE,
    }
}

#[derive(Clone)]
struct TwoLayer {
    hidden: DenseLayer,
    output: DenseLayer,
}

/// ReLU layer → inverted dropout (mask held fixed) → softmax layer → cross-entropy.
pub fn check_dropout_composed(trials: usize, seed: u64, step: f64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tracker::new();
    for _ in 0..trials {
        let (batch, inputs, hidden, classes) = (
            rng.random_range(1..5),
            rng.random_range(1..7),
            rng.random_range(2..8),
            rng.random_range(2..5),
        );
        let rate = rng.random_range(0.1..0.5);
        let (net, x) = loop {
            let mut h = DenseLayer::he_uniform(inputs, hidden, Activation::Relu, 1.0, &mut rng);
            h.bias = random_vec(hidden, 0.5, &mut rng);
            let x = random_matrix(batch, inputs, 1.5, &mut rng);
            if h.pre_activation(&x).expect("shape").as_slice().iter().all(|v| v.abs() > 1e-3) {
                let mut o = DenseLayer::he_uniform(hidden, classes, Activation::Softmax, 1.0, &mut rng);
                o.bias = random_vec(classes, 0.5, &mut rng);
                break (TwoLayer { hidden: h, output: o }, x);
            }
        };
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
        let targets = one_hot(&labels, classes);
        let (_, mask) = dropout_forward_rng(&Matrix::zeros(batch, hidden), rate, true, &mut rng).expect("rate");

        let forward_loss = |n: &TwoLayer| {
            let a = dense_forward(&n.hidden, &x).expect("shape");
            let d = dropout_backward(&a, &mask).expect("shape"); // elementwise a∘mask
            let z = n.output.pre_activation(&d).expect("shape");
            softmax_cross_entropy(&z, &targets).expect("valid").0
        };

        let (a, hcache) = net.hidden.forward_with_cache(&x).expect("shape");
        let d = dropout_backward(&a, &mask).expect("shape");
        let (_, ocache) = net.output.forward_with_cache(&d).expect("shape");
        let (_, dlogits) = softmax_cross_entropy(&ocache.pre_activation, &targets).expect("valid");
        let (dd, ograds) = dense_backward(&net.output, &ocache, &dlogits).expect("shape");
        let da = dropout_backward(&dd, &mask).expect("shape");
        let (_, hgrads) = dense_backward(&net.hidden, &hcache, &da).expect("shape");

        let n = numeric_grad(&net, hidden * inputs, step, |m, i| &mut m.hidden.weights.as_mut_slice()[i], forward_loss);
        t.compare(hgrads.weights.as_slice(), &n);
        let n = numeric_grad(&net, hidden, step, |m, i| &mut m.hidden.bias[i], forward_loss);
        t.compare(&hgrads.bias, &n);
        let n = numeric_grad(&net, classes * hidden, step, |m, i| &mut m.output.weights.as_mut_slice()[i], forward_loss);
        t.compare(ograds.weights.as_slice(), &n);
        let n = numeric_grad(&net, classes, step, |m, i| &mut m.output.bias[i], forward_loss);
        t.compare(&ograds.bias, &n);
    }
    GradCheckReport {
        name: "dropout_composed",
        trials,
        checked_values: t.count,
        max_rel_error: t.max,
        tolerance: DEFAULT_TOLERANCE,
    }
}

/// Scalar at position `i` of LSTM block `block` (0..4 W, 4..8 U, 8..12 b, gate order i f g o).
fn lstm_slot(layer: &mut LstmLayer, block: usize, i: usize) -> &mut f64 {
    match block / GATES {
        0 => &mut layer.w[block % GATES].as_mut_slice()[i],
        1 => &mut layer.u[block % GATES].as_mut_slice()[i],
        _ => &mut layer.b[block % GATES][i],
    }
}

/// Full BPTT over random sequences under the loss `Σ h_last∘r`.
pub fn check_lstm(trials: usize, seed: u64, step: f64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tracker::new();
    for trial in 0..trials {
        // The first trial is the canonical length-5, hidden-4 configuration.
        let (inputs, hidden, len) = if trial == 0 {
            (3, 4, 5)
        } else {
            (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..8))
        };
        let mut layer = LstmLayer::xavier(inputs, hidden, &mut rng);
        for b in layer.b.iter_mut() {
            for v in b.iter_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
        }
        let seq: Vec<Vec<f64>> = (0..len).map(|_| random_vec(inputs, 1.5, &mut rng)).collect();
        let r = random_vec(hidden, 1.0, &mut rng);
        let loss = |l: &LstmLayer, s: &[Vec<f64>]| -> f64 {
            let (h, _) = lstm_forward(l, s).expect("shape");
            h.iter().zip(&r).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = lstm_forward(&layer, &seq).expect("shape");
        let (grads, dxs) = lstm_backward(&layer, &cache, &r).expect("shape");

        for block in 0..3 * GATES {
            let (analytic, count) = match block / GATES {
                0 => (grads.w[block % GATES].as_slice(), hidden * inputs),
                1 => (grads.u[block % GATES].as_slice(), hidden * hidden),
                _ => (grads.b[block % GATES].as_slice(), hidden),
            };
            let n = numeric_grad(&layer, count, step, |l, i| lstm_slot(l, block, i), |l| loss(l, &seq));
            t.compare(analytic, &n);
        }
        let flat: Vec<f64> = dxs.concat();
        let n = numeric_grad(&seq, len * inputs, step, |s, i| &mut s[i / inputs][i % inputs], |s| loss(&layer, s));
        t.compare(&flat, &n);
    }
    GradCheckReport {
        name: "lstm",
        trials,
        checked_values: t.count,
        max_rel_error: t.max,
        tolerance: DEFAULT_TOLERANCE,
    }
}

/// All four checks with the default step.
pub fn run_all(trials: usize, seed: u64) -> Vec<GradCheckReport> {
    vec![
        check_dense(trials, seed, DEFAULT_STEP),
        check_softmax_cross_entropy(trials, seed.wrapping_add(1), DEFAULT_STEP),
        check_dropout_composed(trials, seed.wrapping_add(2), DEFAULT_STEP),
        check_lstm(trials, seed.wrapping_add(3), DEFAULT_STEP),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes() {
        for report in run_all(20, 2024) {
            assert!(report.passed(), "{report:?}");
            assert!(report.checked_values > 0);
        }
    }

    #[test]
    fn softmax_ce_at_smaller_step() {
        let r = check_softmax_cross_entropy(20, 8, 1e-6);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // Sanity check of the harness itself: a perturbed analytic value must be flagged.
        assert!(rel_error(1.0, 1.0 + 1e-3) > DEFAULT_TOLERANCE);
        assert!(rel_error(0.5, 0.5) == 0.0);
    }
}
