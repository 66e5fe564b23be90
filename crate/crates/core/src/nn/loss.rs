use super::Matrix;
use crate::{Error, Result};

/// Mean over every entry of `(prediction - target)²` and its gradient
/// `2 (prediction - target) / (rows * cols)`.
pub fn mse_loss(prediction: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if prediction.shape() != target.shape() {
        return Err(Error::dim(
            "mse_loss",
            format!("{:?}", target.shape()),
            format!("{:?}", prediction.shape()),
        ));
    }
    let count = prediction.data().len();
    if count == 0 {
        return Err(Error::InvalidInput("mse_loss on an empty batch".into()));
    }
    let scale = 2.0 / count as f64;
    let mut grad = Matrix::zeros(prediction.rows(), prediction.cols());
    let mut sum = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(prediction.data()).zip(target.data()) {
        let diff = p - t;
        sum += diff * diff;
        *g = scale * diff;
    }
    let loss = sum / count as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("mse_loss"));
    }
    Ok((loss, grad))
}

/// Mean negative log-likelihood of a softmax over each row of `logits`.
///
/// Uses the max-shifted log-sum-exp so large logits never overflow.
/// The gradient is `(softmax - onehot) / rows`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::dim(
            "softmax_cross_entropy",
            format!("{} labels", logits.rows()),
            labels.len(),
        ));
    }
    if logits.rows() == 0 {
        return Err(Error::InvalidInput("softmax_cross_entropy on an empty batch".into()));
    }
    let classes = logits.cols();
    if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::InvalidInput(format!(
            "label {bad} at row {i} is outside 0..{classes}"
        )));
    }
    let n = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), classes);
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_sum = max + sum_exp.ln();
        total += log_sum - row[label];
        for (g, &z) in grad.row_mut(r).iter_mut().zip(row) {
            *g = (z - log_sum).exp() / n;
        }
        grad.row_mut(r)[label] -= 1.0 / n;
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("softmax_cross_entropy"));
    }
    Ok((loss, grad))
}

/// Row-wise softmax probabilities.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_cases() {
        let p = Matrix::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (loss, grad) = mse_loss(&p, &p).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));

        let (loss, _) = mse_loss(&Matrix::filled(1, 2, 1.0), &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(loss, 1.0);

        assert!(matches!(
            mse_loss(&p, &Matrix::zeros(1, 4)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn mse_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = Matrix::from_vec(3, 5, (0..15).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let t = Matrix::from_vec(3, 5, (0..15).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut sum = 0.0;
        for i in 0..15 {
            sum += (p.data()[i] - t.data()[i]).powi(2);
        }
        let (loss, grad) = mse_loss(&p, &t).unwrap();
        assert!((loss - sum / 15.0).abs() < 1e-12);
        for i in 0..15 {
            assert!((grad.data()[i] - 2.0 * (p.data()[i] - t.data()[i]) / 15.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let (loss, _) = softmax_cross_entropy(&Matrix::zeros(3, 4), &[0, 1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_logit_is_stable() {
        let logits = Matrix::from_vec(1, 3, vec![1000.0, 0.0, -5.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.is_finite());
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            softmax_cross_entropy(&Matrix::zeros(1, 3), &[3]),
            Err(Error::InvalidInput(_))
        ));
    }
}
