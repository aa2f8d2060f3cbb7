//! Single-layer LSTM, sequence-to-one, with full backpropagation through time.
//!
//! Gate blocks are stored in the order input (i), forget (f), candidate (g), output (o):
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g) o = σ(W_o x + U_o h + b_o)
//! c' = f∘c + i∘g                h' = o∘tanh(c')
//! ```

use rand::Rng;

use super::{Matrix, NumericsError};

pub const GATES: usize = 4;
pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CANDIDATE: usize = 2;
pub const GATE_OUTPUT: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// hidden×input, one per gate.
    pub w: [Matrix; GATES],
    /// hidden×hidden, one per gate.
    pub u: [Matrix; GATES],
    pub b: [Vec<f64>; GATES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub w: [Matrix; GATES],
    pub u: [Matrix; GATES],
    pub b: [Vec<f64>; GATES],
}

/// Per-timestep values needed by the backward pass.
#[derive(Debug, Clone)]
pub struct LstmStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: [Vec<f64>; GATES],
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    pub steps: Vec<LstmStep>,
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl LstmLayer {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        LstmLayer {
            w: std::array::from_fn(|_| Matrix::zeros(hidden, inputs)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }

    /// Xavier-uniform gate blocks, forget-gate bias 1, other biases 0.
    pub fn xavier<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(inputs, hidden);
        let lw = (6.0 / (inputs + hidden) as f64).sqrt();
        let lu = (6.0 / (2 * hidden) as f64).sqrt();
        for g in 0..GATES {
            for v in layer.w[g].as_mut_slice() {
                *v = rng.random_range(-lw..=lw);
            }
            for v in layer.u[g].as_mut_slice() {
                *v = rng.random_range(-lu..=lu);
            }
        }
        layer.b[GATE_FORGET].fill(1.0);
        layer
    }

    pub fn inputs(&self) -> usize {
        self.w[0].cols()
    }

    pub fn hidden(&self) -> usize {
        self.w[0].rows()
    }

    pub fn param_count(&self) -> usize {
        GATES * (self.hidden() * self.inputs() + self.hidden() * self.hidden() + self.hidden())
    }

    fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
        let n = self.hidden();
        let mut gates: [Vec<f64>; GATES] = std::array::from_fn(|_| vec![0.0; n]);
        for (k, gate) in gates.iter_mut().enumerate() {
            self.w[k].mul_vec(x, gate);
            self.u[k].add_mul_vec(h_prev, gate);
            for (z, b) in gate.iter_mut().zip(&self.b[k]) {
                *z += b;
                *z = if k == GATE_CANDIDATE { z.tanh() } else { sigmoid(*z) };
            }
        }
        let mut c = vec![0.0; n];
        let mut tanh_c = vec![0.0; n];
        for j in 0..n {
            c[j] = gates[GATE_FORGET][j] * c_prev[j] + gates[GATE_INPUT][j] * gates[GATE_CANDIDATE][j];
            tanh_c[j] = c[j].tanh();
        }
        LstmStep {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            c,
            tanh_c,
        }
    }
}

impl LstmStep {
    fn h(&self) -> Vec<f64> {
        self.gates[GATE_OUTPUT]
            .iter()
            .zip(&self.tanh_c)
            .map(|(o, t)| o * t)
            .collect()
    }
}

/// Runs the sequence from zero initial state and returns the final hidden state.
pub fn lstm_forward<S: AsRef<[f64]>>(
    layer: &LstmLayer,
    sequence: &[S],
) -> Result<(Vec<f64>, LstmCache), NumericsError> {
    if sequence.is_empty() {
        return Err(NumericsError::EmptySequence);
    }
    let n = layer.hidden();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut steps = Vec::with_capacity(sequence.len());
    for x in sequence {
        let x = x.as_ref();
        if x.len() != layer.inputs() {
            return Err(NumericsError::ShapeMismatch(format!(
                "LSTM expects {} inputs per step, got {}",
                layer.inputs(),
                x.len()
            )));
        }
        let step = layer.step(x, &h, &c);
        h = step.h();
        c = step.c.clone();
        steps.push(step);
    }
    Ok((h, LstmCache { steps }))
}

/// Backpropagates `dh_last` through every timestep. Returns parameter gradients and the
/// gradient with respect to each input vector.
pub fn lstm_backward(
    layer: &LstmLayer,
    cache: &LstmCache,
    dh_last: &[f64],
) -> Result<(LstmGrads, Vec<Vec<f64>>), NumericsError> {
    let n = layer.hidden();
    if dh_last.len() != n {
        return Err(NumericsError::ShapeMismatch(format!(
            "dh has length {}, hidden size is {n}",
            dh_last.len()
        )));
    }
    let mut grads = LstmGrads {
        w: std::array::from_fn(|_| Matrix::zeros(n, layer.inputs())),
        u: std::array::from_fn(|_| Matrix::zeros(n, n)),
        b: std::array::from_fn(|_| vec![0.0; n]),
    };
    let mut dx_all = vec![Vec::new(); cache.steps.len()];
    let mut dh = dh_last.to_vec();
    let mut dc = vec![0.0; n];
    let mut dz: [Vec<f64>; GATES] = std::array::from_fn(|_| vec![0.0; n]);

    for (t, s) in cache.steps.iter().enumerate().rev() {
        let [gi, gf, gg, go] = &s.gates;
        for j in 0..n {
            let d_o = dh[j] * s.tanh_c[j];
            dc[j] += dh[j] * go[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
            let d_i = dc[j] * gg[j];
            let d_g = dc[j] * gi[j];
            let d_f = dc[j] * s.c_prev[j];
            dz[GATE_INPUT][j] = d_i * gi[j] * (1.0 - gi[j]);
            dz[GATE_FORGET][j] = d_f * gf[j] * (1.0 - gf[j]);
            dz[GATE_CANDIDATE][j] = d_g * (1.0 - gg[j] * gg[j]);
            dz[GATE_OUTPUT][j] = d_o * go[j] * (1.0 - go[j]);
            dc[j] *= gf[j];
        }
        let mut dh_prev = vec![0.0; n];
        let mut dx = vec![0.0; layer.inputs()];
        for k in 0..GATES {
            grads.w[k].add_outer(&dz[k], &s.x);
            grads.u[k].add_outer(&dz[k], &s.h_prev);
            for (b, d) in grads.b[k].iter_mut().zip(&dz[k]) {
                *b += d;
            }
            layer.u[k].add_transposed_mul_vec(&dz[k], &mut dh_prev);
            layer.w[k].add_transposed_mul_vec(&dz[k], &mut dx);
        }
        dx_all[t] = dx;
        dh = dh_prev;
    }
    Ok((grads, dx_all))
}
