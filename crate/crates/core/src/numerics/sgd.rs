use super::NumericsError;

/// Weights receive the L2 term; biases do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// A mutable view of one parameter block.
#[derive(Debug)]
pub struct ParamBlock<'a> {
    pub values: &'a mut [f64],
    pub kind: ParamKind,
}

/// Plain constant-rate gradient descent: `p ← p − lr·(g + λ·p)` for weights,
/// `p ← p − lr·g` for biases.
pub fn sgd_step(
    params: &mut [ParamBlock<'_>],
    grads: &[&[f64]],
    learning_rate: f64,
    l2_lambda: f64,
) -> Result<(), NumericsError> {
    if params.len() != grads.len() {
        return Err(NumericsError::ShapeMismatch(format!(
            "{} parameter blocks, {} gradient blocks",
            params.len(),
            grads.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.values.len() != g.len() {
            return Err(NumericsError::ShapeMismatch(format!(
                "block {k}: {} parameters, {} gradients",
                p.values.len(),
                g.len()
            )));
        }
    }
    for (p, g) in params.iter_mut().zip(grads) {
        let decay = match p.kind {
            ParamKind::Weight => l2_lambda,
            ParamKind::Bias => 0.0,
        };
        for (v, &gv) in p.values.iter_mut().zip(g.iter()) {
            *v -= learning_rate * (gv + decay * *v);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_fixed_point() {
        let mut w = vec![0.3, -1.2];
        let mut b = vec![0.5];
        let before = (w.clone(), b.clone());
        let mut blocks = [
            ParamBlock { values: &mut w, kind: ParamKind::Weight },
            ParamBlock { values: &mut b, kind: ParamKind::Bias },
        ];
        sgd_step(&mut blocks, &[&[0.0, 0.0], &[0.0]], 0.1, 0.0).unwrap();
        assert_eq!((w, b), before);
    }

    #[test]
    fn scalar_decay_step() {
        let mut p = vec![1.0];
        let mut blocks = [ParamBlock { values: &mut p, kind: ParamKind::Weight }];
        sgd_step(&mut blocks, &[&[0.0]], 0.1, 1.0).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn decay_shrinks_every_weight_but_not_biases() {
        let mut w = vec![0.7, -2.0, 1e-3, -5.0];
        let mut b = vec![0.5, -0.5];
        let before = w.clone();
        let mut blocks = [
            ParamBlock { values: &mut w, kind: ParamKind::Weight },
            ParamBlock { values: &mut b, kind: ParamKind::Bias },
        ];
        sgd_step(&mut blocks, &[&[0.0; 4], &[0.0; 2]], 0.05, 1e-3).unwrap();
        for (a, z) in w.iter().zip(&before) {
            assert!(a.abs() < z.abs());
        }
        assert_eq!(b, vec![0.5, -0.5]);
    }

    #[test]
    fn quadratic_bowl_converges_monotonically() {
        // loss ½‖p‖², gradient p
        let mut p = vec![3.0, -4.0, 1.5];
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let g = p.clone();
            let mut blocks = [ParamBlock { values: &mut p, kind: ParamKind::Weight }];
            sgd_step(&mut blocks, &[&g], 0.1, 0.0).unwrap();
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < last);
            last = norm;
        }
        // ‖p₀‖·0.9¹⁰⁰
        let expect = (9.0f64 + 16.0 + 2.25).sqrt() * 0.9f64.powi(100);
        assert!((last - expect).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![1.0, 2.0];
        let mut blocks = [ParamBlock { values: &mut p, kind: ParamKind::Weight }];
        assert!(sgd_step(&mut blocks, &[&[0.0]], 0.1, 0.0).is_err());
        assert!(sgd_step(&mut blocks, &[], 0.1, 0.0).is_err());
    }
}
