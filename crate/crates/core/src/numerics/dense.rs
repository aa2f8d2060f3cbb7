use rand::Rng;

use super::{softmax_rows, Matrix, NumericsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softmax,
    Linear,
}

/// Fully connected layer, `W` is out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Values kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Matrix,
    pub pre_activation: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Uniform weights in `±scale·sqrt(6 / fan_in)`, zero bias.
    pub fn he_uniform<R: Rng>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let limit = scale * (6.0 / inputs as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs, activation);
        for w in layer.weights.as_mut_slice() {
            *w = rng.random_range(-limit..=limit);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    pub fn pre_activation(&self, x: &Matrix) -> Result<Matrix, NumericsError> {
        let mut z = x.matmul_transposed(&self.weights)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    pub fn forward_with_cache(&self, x: &Matrix) -> Result<(Matrix, DenseCache), NumericsError> {
        let z = self.pre_activation(x)?;
        let y = activate(self.activation, &z);
        Ok((
            y,
            DenseCache {
                input: x.clone(),
                pre_activation: z,
            },
        ))
    }
}

fn activate(activation: Activation, z: &Matrix) -> Matrix {
    match activation {
        Activation::Relu => z.map(relu),
        Activation::Linear => z.clone(),
        Activation::Softmax => softmax_rows(z),
    }
}

#[inline]
pub fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// `act(X·Wᵀ + b)` over a batch of row vectors.
pub fn dense_forward(layer: &DenseLayer, x: &Matrix) -> Result<Matrix, NumericsError> {
    Ok(activate(layer.activation, &layer.pre_activation(x)?))
}

/// Backward pass. For `Softmax` layers `d_out` must already be the gradient with respect to
/// the logits (as produced by [`super::softmax_cross_entropy`]); for `Relu` and `Linear` it is
/// the gradient with respect to the layer output.
pub fn dense_backward(
    layer: &DenseLayer,
    cache: &DenseCache,
    d_out: &Matrix,
) -> Result<(Matrix, DenseGrads), NumericsError> {
    if d_out.shape() != cache.pre_activation.shape() {
        return Err(NumericsError::ShapeMismatch(format!(
            "upstream gradient {:?} vs layer output {:?}",
            d_out.shape(),
            cache.pre_activation.shape()
        )));
    }
    let mut dz = d_out.clone();
    if layer.activation == Activation::Relu {
        for (g, &z) in dz
            .as_mut_slice()
            .iter_mut()
            .zip(cache.pre_activation.as_slice())
        {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
    }
    let dw = dz.transposed_matmul(&cache.input)?;
    let mut db = vec![0.0; layer.outputs()];
    for i in 0..dz.rows() {
        for (b, g) in db.iter_mut().zip(dz.row(i)) {
            *b += g;
        }
    }
    let dx = dz.matmul(&layer.weights)?;
    Ok((dx, DenseGrads { weights: dw, bias: db }))
}
