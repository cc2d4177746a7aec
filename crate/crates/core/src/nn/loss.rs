//! Temperature softmax, KL divergence and cross-entropy, each with a batch form that
//! also returns the gradient w.r.t. the network output.

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

/// Floor applied to probabilities before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("temperature must be positive, got {t}")))
    }
}

/// `log softmax(logits / t)`, computed with max subtraction.
pub fn log_softmax_t(logits: &[f64], t: f64) -> Result<Vec<f64>> {
    check_temperature(t)?;
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|&z| (z - max) / t).collect();
    let lse = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    Ok(shifted.into_iter().map(|s| s - lse).collect())
}

pub fn softmax_t(logits: &[f64], t: f64) -> Result<Vec<f64>> {
    check_temperature(t)?;
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| ((z - max) / t).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

/// `KL(p || q) = sum p_i ln(p_i / q_i)` with `q` clamped at [`LOG_CLAMP`]; zero-mass
/// terms of `p` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let kl = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.max(LOG_CLAMP).ln()))
        .sum::<f64>();
    // rounding can leave a tiny negative value for p == q
    Ok(kl.max(0.0))
}

/// `-ln softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(invalid(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let log_p = log_softmax_t(logits, 1.0)?;
    Ok(-log_p[label])
}

/// Mean cross-entropy over a batch and its gradient `(softmax - onehot) / batch`.
pub fn cross_entropy_batch(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let n = labels.len() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        if label >= row.len() {
            return Err(invalid(format!("label {label} out of range")));
        }
        let log_p = log_softmax_t(row, 1.0)?;
        total -= log_p[label];
        for (g, lp) in grad.row_mut(i).iter_mut().zip(&log_p) {
            *g = lp.exp() / n;
        }
        grad[(i, label)] -= 1.0 / n;
    }
    Ok((total / n, grad))
}

/// Distillation loss: batch mean of `KL(softmax(student/T) || softmax(teacher/T))` and its
/// gradient w.r.t. the student logits. The teacher side is constant.
///
/// With `p = softmax(z/T)` and `d_j = ln p_j - ln q_j` the per-sample gradient is
/// `p_j (d_j - KL) / T`. `scale_t2` multiplies loss and gradient by `T^2`.
pub fn distillation_batch(
    student: &Matrix,
    teacher: &Matrix,
    t: f64,
    scale_t2: bool,
) -> Result<(f64, Matrix)> {
    if student.shape() != teacher.shape() {
        return Err(Error::Shape(format!(
            "student logits {:?} vs teacher logits {:?}",
            student.shape(),
            teacher.shape()
        )));
    }
    if student.rows() == 0 {
        return Err(Error::Empty("batch"));
    }
    check_temperature(t)?;
    let n = student.rows() as f64;
    let factor = if scale_t2 { t * t } else { 1.0 };
    let mut grad = Matrix::zeros(student.rows(), student.cols());
    let mut total = 0.0;
    for i in 0..student.rows() {
        let log_p = log_softmax_t(student.row(i), t)?;
        let log_q: Vec<f64> = log_softmax_t(teacher.row(i), t)?
            .into_iter()
            .map(|l| l.max(LOG_CLAMP.ln()))
            .collect();
        let diff: Vec<f64> = log_p.iter().zip(&log_q).map(|(a, b)| a - b).collect();
        let kl: f64 = log_p.iter().zip(&diff).map(|(lp, d)| lp.exp() * d).sum();
        total += kl;
        for ((g, lp), d) in grad.row_mut(i).iter_mut().zip(&log_p).zip(&diff) {
            *g = factor * lp.exp() * (d - kl) / (t * n);
        }
    }
    Ok((factor * total.max(0.0) / n, grad))
}

/// Mean over rows of the summed squared error, gradient `2 (out - target) / batch`.
pub fn squared_error_batch(output: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if output.shape() != target.shape() {
        return Err(Error::Shape("output and target shapes differ".into()));
    }
    let n = output.rows().max(1) as f64;
    let mut grad = Matrix::zeros(output.rows(), output.cols());
    let mut total = 0.0;
    for ((g, o), y) in grad.data_mut().iter_mut().zip(output.data()).zip(target.data()) {
        total += (o - y) * (o - y);
        *g = 2.0 * (o - y) / n;
    }
    Ok((total / n, grad))
}
