use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelError, NetworkSpec};
use crate::features::Standardizer;
use crate::numerics::{
    argmax, dense_backward, dropout_backward, dropout_forward_rng, lstm_backward, lstm_forward,
    softmax_rows, Activation, DenseCache, DenseLayer, LstmCache, LstmLayer, Matrix, NumericsError,
    ParamBlock, ParamKind, GATES,
};

/// Scale applied to the He-uniform limit of the softmax layer so that a fresh network
/// predicts close to the uniform distribution.
pub const OUTPUT_INIT_SCALE: f64 = 0.1;

/// An optional LSTM first layer, ReLU dense hidden layers, and a softmax output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    lstm: Option<LstmLayer>,
    /// Hidden ReLU layers followed by the softmax output layer.
    dense: Vec<DenseLayer>,
    standardizer: Option<Standardizer>,
}

/// A mini-batch in the network's input form (already standardized).
#[derive(Debug, Clone, Copy)]
pub enum Batch<'a> {
    /// batch×16 averaged feature vectors.
    Vectors(&'a Matrix),
    /// One sequence of 16-vectors per example.
    Sequences(&'a [&'a [[f64; 16]]]),
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        match self {
            Batch::Vectors(m) => m.rows(),
            Batch::Sequences(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dropout used during a training forward pass.
pub struct DropoutCtx<'r, R: Rng> {
    pub rate: f64,
    pub rng: &'r mut R,
}

/// Forward values kept for the backward pass.
pub struct ForwardCache {
    lstm: Vec<LstmCache>,
    lstm_mask: Option<Matrix>,
    dense: Vec<(DenseCache, Option<Matrix>)>,
}

/// Builds a network with seeded initialization: He-uniform dense layers, Xavier-uniform
/// LSTM blocks with forget bias 1, zero biases elsewhere, output layer scaled by
/// [`OUTPUT_INIT_SCALE`].
pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Network, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev = spec.input_size;
    let mut lstm = None;
    let mut dense = Vec::new();
    for (k, &h) in spec.hidden_sizes.iter().enumerate() {
        if k == 0 && spec.first_hidden_is_lstm {
            lstm = Some(LstmLayer::xavier(prev, h, &mut rng));
        } else {
            dense.push(DenseLayer::he_uniform(prev, h, Activation::Relu, 1.0, &mut rng));
        }
        prev = h;
    }
    dense.push(DenseLayer::he_uniform(
        prev,
        spec.output_size,
        Activation::Softmax,
        OUTPUT_INIT_SCALE,
        &mut rng,
    ));
    Ok(Network {
        spec: spec.clone(),
        lstm,
        dense,
        standardizer: None,
    })
}

impl Network {
    /// Assembles a network from explicit layers, checking that shapes chain.
    pub fn from_layers(
        spec: NetworkSpec,
        lstm: Option<LstmLayer>,
        dense: Vec<DenseLayer>,
        standardizer: Option<Standardizer>,
    ) -> Result<Network, ModelError> {
        spec.validate()?;
        let mismatch = |why: &str| Err(ModelError::InvalidSpec(format!("{}: {why}", spec.name)));
        if lstm.is_some() != spec.first_hidden_is_lstm {
            return mismatch("LSTM layer presence disagrees with the spec");
        }
        let expected_dense = spec.hidden_sizes.len() + 1 - usize::from(spec.first_hidden_is_lstm);
        if dense.len() != expected_dense {
            return mismatch("wrong number of dense layers");
        }
        let mut prev = spec.input_size;
        let mut widths = spec.hidden_sizes.iter().copied();
        if let Some(l) = &lstm {
            let h = widths.next().unwrap_or(0);
            if l.inputs() != prev || l.hidden() != h {
                return mismatch("LSTM layer shape");
            }
            prev = h;
        }
        for (k, layer) in dense.iter().enumerate() {
            let out = widths.next().unwrap_or(spec.output_size);
            let last = k + 1 == dense.len();
            let act = if last { Activation::Softmax } else { Activation::Relu };
            if layer.inputs() != prev || layer.outputs() != out || layer.activation != act {
                return mismatch("dense layer shape or activation");
            }
            prev = out;
        }
        Ok(Network {
            spec,
            lstm,
            dense,
            standardizer,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn lstm(&self) -> Option<&LstmLayer> {
        self.lstm.as_ref()
    }

    pub fn dense_layers(&self) -> &[DenseLayer] {
        &self.dense
    }

    pub fn is_recurrent(&self) -> bool {
        self.lstm.is_some()
    }

    pub fn output_size(&self) -> usize {
        self.spec.output_size
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    pub fn set_standardizer(&mut self, s: Option<Standardizer>) {
        self.standardizer = s;
    }

    /// Zeroes the softmax layer so every input maps to the uniform distribution.
    pub fn zero_output_layer(&mut self) {
        if let Some(out) = self.dense.last_mut() {
            out.weights.as_mut_slice().fill(0.0);
            out.bias.fill(0.0);
        }
    }

    pub fn param_count(&self) -> usize {
        self.lstm.as_ref().map_or(0, LstmLayer::param_count)
            + self.dense.iter().map(DenseLayer::param_count).sum::<usize>()
    }

    /// Parameter blocks in storage order: LSTM `W_i W_f W_g W_o U_i U_f U_g U_o b_i b_f b_g b_o`,
    /// then `W`, `b` of each dense layer from input to output.
    pub fn param_blocks_mut(&mut self) -> Vec<ParamBlock<'_>> {
        let mut blocks = Vec::new();
        if let Some(l) = &mut self.lstm {
            for w in l.w.iter_mut() {
                blocks.push(ParamBlock { values: w.as_mut_slice(), kind: ParamKind::Weight });
            }
            for u in l.u.iter_mut() {
                blocks.push(ParamBlock { values: u.as_mut_slice(), kind: ParamKind::Weight });
            }
            for b in l.b.iter_mut() {
                blocks.push(ParamBlock { values: b.as_mut_slice(), kind: ParamKind::Bias });
            }
        }
        for d in &mut self.dense {
            blocks.push(ParamBlock { values: d.weights.as_mut_slice(), kind: ParamKind::Weight });
            blocks.push(ParamBlock { values: d.bias.as_mut_slice(), kind: ParamKind::Bias });
        }
        blocks
    }

    /// Read-only counterpart of [`Network::param_blocks_mut`].
    pub fn param_blocks(&self) -> Vec<(&[f64], ParamKind)> {
        let mut blocks: Vec<(&[f64], ParamKind)> = Vec::new();
        if let Some(l) = &self.lstm {
            blocks.extend(l.w.iter().map(|w| (w.as_slice(), ParamKind::Weight)));
            blocks.extend(l.u.iter().map(|u| (u.as_slice(), ParamKind::Weight)));
            blocks.extend(l.b.iter().map(|b| (b.as_slice(), ParamKind::Bias)));
        }
        for d in &self.dense {
            blocks.push((d.weights.as_slice(), ParamKind::Weight));
            blocks.push((d.bias.as_slice(), ParamKind::Bias));
        }
        blocks
    }

    /// All parameters concatenated in storage order.
    pub fn params_flat(&self) -> Vec<f64> {
        self.param_blocks().iter().flat_map(|(b, _)| b.iter().copied()).collect()
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.param_count() {
            return Err(ModelError::CorruptModelFile(format!(
                "{} parameters for a network with {}",
                values.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for block in self.param_blocks_mut() {
            let n = block.values.len();
            block.values.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `½ Σ w²` over weight blocks.
    pub fn l2_norm_sq_half(&self) -> f64 {
        self.param_blocks()
            .iter()
            .filter(|(_, k)| *k == ParamKind::Weight)
            .flat_map(|(b, _)| b.iter())
            .map(|w| 0.5 * w * w)
            .sum()
    }

    /// Logits (pre-softmax) for a batch, with optional training-time dropout.
    pub fn forward<R: Rng>(
        &self,
        batch: Batch<'_>,
        mut dropout: Option<DropoutCtx<'_, R>>,
    ) -> Result<(Matrix, ForwardCache), NumericsError> {
        let mut cache = ForwardCache {
            lstm: Vec::new(),
            lstm_mask: None,
            dense: Vec::with_capacity(self.dense.len()),
        };
        let mut x = match (batch, &self.lstm) {
            (Batch::Vectors(m), None) => m.clone(),
            (Batch::Sequences(seqs), Some(lstm)) => {
                let mut h_rows = Matrix::zeros(seqs.len(), lstm.hidden());
                for (i, seq) in seqs.iter().enumerate() {
                    let (h, c) = lstm_forward(lstm, seq)?;
                    h_rows.row_mut(i).copy_from_slice(&h);
                    cache.lstm.push(c);
                }
                self.maybe_dropout(h_rows, &mut dropout, |m| cache.lstm_mask = m)?
            }
            (Batch::Vectors(_), Some(_)) => {
                return Err(NumericsError::ShapeMismatch(
                    "recurrent network needs sequence input".into(),
                ))
            }
            (Batch::Sequences(_), None) => {
                return Err(NumericsError::ShapeMismatch(
                    "feed-forward network needs averaged vector input".into(),
                ))
            }
        };
        let last = self.dense.len() - 1;
        for (k, layer) in self.dense.iter().enumerate() {
            if k == last {
                let z = layer.pre_activation(&x)?;
                cache.dense.push((
                    DenseCache {
                        input: x,
                        pre_activation: z.clone(),
                    },
                    None,
                ));
                return Ok((z, cache));
            }
            let (a, dc) = layer.forward_with_cache(&x)?;
            let mut mask = None;
            x = self.maybe_dropout(a, &mut dropout, |m| mask = m)?;
            cache.dense.push((dc, mask));
        }
        unreachable!("network always ends with an output layer")
    }

    fn maybe_dropout<R: Rng>(
        &self,
        a: Matrix,
        dropout: &mut Option<DropoutCtx<'_, R>>,
        store: impl FnOnce(Option<Matrix>),
    ) -> Result<Matrix, NumericsError> {
        match dropout {
            Some(ctx) if ctx.rate > 0.0 => {
                let (y, mask) = dropout_forward_rng(&a, ctx.rate, true, ctx.rng)?;
                store(Some(mask));
                Ok(y)
            }
            _ => {
                store(None);
                Ok(a)
            }
        }
    }

    /// Gradients of every parameter block (storage order) given `dlogits`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &Matrix,
    ) -> Result<Vec<Vec<f64>>, NumericsError> {
        let mut dense_grads = Vec::with_capacity(self.dense.len());
        let mut d = dlogits.clone();
        for (layer, (dc, mask)) in self.dense.iter().zip(&cache.dense).rev() {
            if let Some(mask) = mask {
                d = dropout_backward(&d, mask)?;
            }
            let (dx, g) = dense_backward(layer, dc, &d)?;
            dense_grads.push(g);
            d = dx;
        }
        dense_grads.reverse();

        let mut out = Vec::new();
        if let Some(lstm) = &self.lstm {
            if let Some(mask) = &cache.lstm_mask {
                d = dropout_backward(&d, mask)?;
            }
            let mut acc: Option<Vec<Vec<f64>>> = None;
            for (i, c) in cache.lstm.iter().enumerate() {
                let (g, _) = lstm_backward(lstm, c, d.row(i))?;
                let blocks: Vec<&[f64]> = g
                    .w
                    .iter()
                    .chain(g.u.iter())
                    .map(Matrix::as_slice)
                    .chain(g.b.iter().map(Vec::as_slice))
                    .collect();
                match &mut acc {
                    None => acc = Some(blocks.iter().map(|b| b.to_vec()).collect()),
                    Some(a) => {
                        for (dst, src) in a.iter_mut().zip(&blocks) {
                            for (x, y) in dst.iter_mut().zip(src.iter()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let acc = acc.unwrap_or_else(|| {
                let h = lstm.hidden();
                let mut v = vec![vec![0.0; h * lstm.inputs()]; GATES];
                v.extend(vec![vec![0.0; h * h]; GATES]);
                v.extend(vec![vec![0.0; h]; GATES]);
                v
            });
            out.extend(acc);
        }
        for g in dense_grads {
            out.push(g.weights.as_slice().to_vec());
            out.push(g.bias);
        }
        Ok(out)
    }

    /// Class probabilities for a batch (no dropout).
    pub fn predict_proba(&self, batch: Batch<'_>) -> Result<Matrix, NumericsError> {
        let (z, _) = self.forward::<ChaCha8Rng>(batch, None)?;
        Ok(softmax_rows(&z))
    }

    /// Arg-max class per example, lowest index on ties.
    pub fn predict(&self, batch: Batch<'_>) -> Result<Vec<usize>, NumericsError> {
        let p = self.predict_proba(batch)?;
        Ok((0..p.rows()).map(|i| argmax(p.row(i))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{registry, registry_lookup};
    use crate::numerics::{one_hot, softmax_cross_entropy};

    fn tiny_spec(lstm: bool) -> NetworkSpec {
        NetworkSpec {
            name: "tiny".into(),
            input_size: 16,
            hidden_sizes: vec![5, 3],
            first_hidden_is_lstm: lstm,
            output_size: 4,
            l2_enabled: false,
            dropout_rate: 0.0,
            learning_rate: 0.1,
            epochs: 1,
        }
    }

    #[test]
    fn rn2_1_parameter_enumeration() {
        let n = build(&registry_lookup("RN2-1").unwrap(), 0).unwrap();
        assert_eq!(n.param_count(), 789);
        assert_eq!(n.params_flat().len(), 789);
    }

    #[test]
    fn rnr2_1_lstm_block_count() {
        let n = build(&registry_lookup("RNR2-1").unwrap(), 0).unwrap();
        assert_eq!(n.lstm().unwrap().param_count(), 4200);
    }

    #[test]
    fn build_is_deterministic() {
        let spec = registry_lookup("RN2-1").unwrap();
        let a = build(&spec, 17).unwrap();
        let b = build(&spec, 17).unwrap();
        let bits = |n: &Network| n.params_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&build(&spec, 18).unwrap()));
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let n = build(&tiny_spec(true), 1).unwrap();
        assert!(n.lstm().unwrap().b[crate::numerics::GATE_FORGET].iter().all(|&b| b == 1.0));
    }

    #[test]
    fn zero_output_layer_gives_ln_c() {
        for lstm in [false, true] {
            let mut spec = tiny_spec(lstm);
            for c in [2, 4] {
                spec.output_size = c;
                let mut n = build(&spec, 3).unwrap();
                n.zero_output_layer();
                let seqs_data: Vec<Vec<[f64; 16]>> =
                    (0..5).map(|i| vec![[i as f64 * 0.3 - 0.5; 16]; 3 + i]).collect();
                let seqs: Vec<&[[f64; 16]]> = seqs_data.iter().map(|s| s.as_slice()).collect();
                let x = Matrix::from_vec(5, 16, (0..80).map(|i| (i as f64).sin()).collect()).unwrap();
                let batch = if lstm { Batch::Sequences(&seqs) } else { Batch::Vectors(&x) };
                let (z, _) = n.forward::<ChaCha8Rng>(batch, None).unwrap();
                let (loss, _) = softmax_cross_entropy(&z, &one_hot(&[0, 1, 0, 1, 1], c)).unwrap();
                assert!((loss - (c as f64).ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn input_kind_must_match() {
        let n = build(&tiny_spec(false), 0).unwrap();
        let seq = [[0.0; 16]];
        let seqs: Vec<&[[f64; 16]]> = vec![&seq];
        assert!(n.predict(Batch::Sequences(&seqs)).is_err());
        let r = build(&tiny_spec(true), 0).unwrap();
        assert!(r.predict(Batch::Vectors(&Matrix::zeros(1, 16))).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        for lstm in [false, true] {
            let mut spec = tiny_spec(lstm);
            spec.dropout_rate = 0.0;
            let net = build(&spec, 9).unwrap();
            let seqs_data: Vec<Vec<[f64; 16]>> = (0..3)
                .map(|i| (0..2 + i).map(|t| std::array::from_fn(|k| ((k * 7 + t * 3 + i) as f64 * 0.37).sin())).collect())
                .collect();
            let seqs: Vec<&[[f64; 16]]> = seqs_data.iter().map(|s| s.as_slice()).collect();
            let x = Matrix::from_vec(3, 16, (0..48).map(|i| (i as f64 * 0.71).cos()).collect()).unwrap();
            let batch = if lstm { Batch::Sequences(&seqs) } else { Batch::Vectors(&x) };
            let targets = one_hot(&[0, 3, 1], 4);
            let loss_of = |n: &Network| {
                let (z, _) = n.forward::<ChaCha8Rng>(batch, None).unwrap();
                softmax_cross_entropy(&z, &targets).unwrap().0
            };
            let (z, cache) = net.forward::<ChaCha8Rng>(batch, None).unwrap();
            let (_, dz) = softmax_cross_entropy(&z, &targets).unwrap();
            let analytic: Vec<f64> = net.backward(&cache, &dz).unwrap().concat();
            let base = net.params_flat();
            let h = 1e-5;
            for i in (0..base.len()).step_by(7) {
                let mut p = base.clone();
                p[i] += h;
                let mut plus = net.clone();
                plus.set_params_flat(&p).unwrap();
                p[i] -= 2.0 * h;
                let mut minus = net.clone();
                minus.set_params_flat(&p).unwrap();
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-4);
                assert!(err < 1e-5, "param {i}: {numeric} vs {}", analytic[i]);
            }
        }
    }

    #[test]
    fn registry_outputs_are_distributions() {
        for (_, spec) in registry() {
            let net = build(&spec, 5).unwrap();
            assert_eq!(net.param_count(), spec.param_count(), "{}", spec.name);
            let x: [f64; 16] = std::array::from_fn(|k| (k as f64 * 0.4).sin());
            let p = if spec.first_hidden_is_lstm {
                let seq = [x, x, x];
                let seqs: Vec<&[[f64; 16]]> = vec![&seq];
                net.predict_proba(Batch::Sequences(&seqs)).unwrap()
            } else {
                net.predict_proba(Batch::Vectors(&Matrix::from_vec(1, 16, x.to_vec()).unwrap())).unwrap()
            };
            assert_eq!(p.cols(), spec.output_size);
            assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
