use super::{Matrix, NumericsError};

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean cross-entropy of softmax(logits) against one-hot targets, and its gradient with
/// respect to the logits: `(softmax(logits) - targets) / batch`.
pub fn softmax_cross_entropy(
    logits: &Matrix,
    targets: &Matrix,
) -> Result<(f64, Matrix), NumericsError> {
    if logits.shape() != targets.shape() {
        return Err(NumericsError::ShapeMismatch(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    if logits.cols() < 2 {
        return Err(NumericsError::ShapeMismatch("need at least 2 classes".into()));
    }
    let batch = logits.rows();
    let mut grad = Matrix::zeros(batch, logits.cols());
    let mut loss = 0.0;
    for i in 0..batch {
        let t = targets.row(i);
        let hot = one_hot_index(t).ok_or(NumericsError::InvalidTarget(i))?;
        let z = logits.row(i);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        // -log softmax[hot] = log Σexp(z - max) - (z[hot] - max)
        loss += log_sum - (z[hot] - max);
        let g = grad.row_mut(i);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = (((z[k] - max) - log_sum).exp() - t[k]) / batch as f64;
        }
    }
    Ok((loss / batch as f64, grad))
}

fn one_hot_index(row: &[f64]) -> Option<usize> {
    let mut hot = None;
    for (k, &v) in row.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(k);
        } else if v != 0.0 {
            return None;
        }
    }
    hot
}

/// Builds a batch×classes one-hot matrix.
pub fn one_hot(classes: &[usize], n_classes: usize) -> Matrix {
    let mut m = Matrix::zeros(classes.len(), n_classes);
    for (i, &c) in classes.iter().enumerate() {
        m[(i, c)] = 1.0;
    }
    m
}

/// Lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}
