//! Loss functions for the adversarial objectives: sigmoid GAN losses,
//! softmax cross entropy, and KL divergence from the uniform distribution.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Axis};

/// Discriminator and generator losses from discriminator probabilities.
/// loss_d = mean(-ln d_real - ln(1 - d_fake)); the generator loss is the
/// minimax form mean(ln(1 - d_fake)) as written in the objective.
pub fn gan_losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64)> {
    check_probs(d_real)?;
    check_probs(d_fake)?;
    let n_r = d_real.len() as f64;
    let n_f = d_fake.len() as f64;
    let loss_d = -d_real.iter().map(|p| p.ln()).sum::<f64>() / n_r
        - d_fake.iter().map(|p| (1.0 - p).ln()).sum::<f64>() / n_f;
    let loss_g = d_fake.iter().map(|p| (1.0 - p).ln()).sum::<f64>() / n_f;
    Ok((loss_d, loss_g))
}

/// Non-saturating generator loss mean(-ln d_fake).
pub fn gan_loss_g_non_saturating(d_fake: &[f64]) -> Result<f64> {
    check_probs(d_fake)?;
    Ok(-d_fake.iter().map(|p| p.ln()).sum::<f64>() / d_fake.len() as f64)
}

fn check_probs(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid_argument("empty probability slice"));
    }
    if p.iter().any(|&v| !(0.0 < v && v < 1.0)) {
        return Err(Error::invalid_argument(
            "discriminator outputs must be probabilities in (0, 1)",
        ));
    }
    Ok(())
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross entropy of one-hot targets against softmax(logits), with the
/// gradient w.r.t. logits: (softmax - onehot) / batch.
pub fn cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>)> {
    let batch = logits.nrows();
    if targets.len() != batch {
        return Err(Error::invalid_argument("target/batch length mismatch"));
    }
    let classes = logits.ncols();
    if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::invalid_argument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let probs = softmax(logits);
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (r, &t) in targets.iter().enumerate() {
        loss -= probs[[r, t]].max(1e-300).ln();
        grad[[r, t]] -= 1.0;
    }
    grad.mapv_inplace(|v| v / batch as f64);
    Ok((loss / batch as f64, grad))
}

/// Mean KL(uniform || softmax(logits)) over the batch, with the gradient
/// w.r.t. logits: (softmax - uniform) / batch.
pub fn kl_uniform(logits: &Array2<f64>) -> (f64, Array2<f64>) {
    let batch = logits.nrows();
    let classes = logits.ncols();
    let u = 1.0 / classes as f64;
    let probs = softmax(logits);
    let mut loss = 0.0;
    for row in probs.rows() {
        for &q in row {
            loss += u * (u / q.max(1e-300)).ln();
        }
    }
    let grad = (&probs - u) / batch as f64;
    (loss / batch as f64, grad)
}

/// Fraction of rows whose argmax equals the target label.
pub fn accuracy(logits: &Array2<f64>, targets: &[usize]) -> f64 {
    let correct = logits
        .axis_iter(Axis(0))
        .zip(targets)
        .filter(|(row, &t)| argmax(row) == t)
        .count();
    correct as f64 / targets.len().max(1) as f64
}

pub fn argmax(row: &ndarray::ArrayView1<f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in row.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// One-hot encode a label.
pub fn one_hot(idx: usize, classes: usize) -> Array1<f64> {
    let mut v = Array1::zeros(classes);
    v[idx] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn untrained_discriminator_values() {
        let (d, g) = gan_losses(&[0.5, 0.5], &[0.5]).unwrap();
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((g - (-(2f64.ln()))).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_loss_vanishes() {
        let (d, _) = gan_losses(&[1.0 - 1e-12], &[1e-12]).unwrap();
        assert!(d < 1e-10);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(gan_losses(&[1.0], &[0.5]).is_err());
        assert!(gan_losses(&[0.5], &[0.0]).is_err());
        assert!(gan_losses(&[-0.1], &[0.5]).is_err());
    }

    #[test]
    fn ce_of_uniform_is_log_c() {
        let logits = Array2::zeros((3, 4));
        let (loss, _) = cross_entropy(&logits, &[0, 1, 2]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_uniform_of_uniform_is_zero() {
        let logits = Array2::from_elem((2, 8), 3.5);
        let (loss, grad) = kl_uniform(&logits);
        assert!(loss.abs() < 1e-12);
        assert!(grad.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn kl_uniform_direct_summation_oracle() {
        // q = (0.7, 0.1, 0.1, 0.1) via logits = ln q
        let q: [f64; 4] = [0.7, 0.1, 0.1, 0.1];
        let logits = Array2::from_shape_vec((1, 4), q.iter().map(|v| v.ln()).collect()).unwrap();
        let (loss, _) = kl_uniform(&logits);
        let oracle: f64 = q.iter().map(|&qk| 0.25 * (0.25 / qk).ln()).sum();
        assert!((loss - oracle).abs() < 1e-12);
        // 0.25 ln(0.25/0.7) + 0.75 ln(0.25/0.1) = 0.42981...
        assert!((loss - 0.4298).abs() < 5e-4, "{loss}");
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let logits = array![[0.3, -0.7, 1.2], [0.0, 0.1, -0.2]];
        let targets = [2usize, 0];
        let (_, grad) = cross_entropy(&logits, &targets).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut lp = logits.clone();
                lp[[i, j]] += h;
                let mut lm = logits.clone();
                lm[[i, j]] -= h;
                let fd = (cross_entropy(&lp, &targets).unwrap().0
                    - cross_entropy(&lm, &targets).unwrap().0)
                    / (2.0 * h);
                assert!((grad[[i, j]] - fd).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let logits = array![[0.5, -1.0, 0.2, 0.9]];
        let (_, grad) = kl_uniform(&logits);
        let h = 1e-6;
        for j in 0..4 {
            let mut lp = logits.clone();
            lp[[0, j]] += h;
            let mut lm = logits.clone();
            lm[[0, j]] -= h;
            let fd = (kl_uniform(&lp).0 - kl_uniform(&lm).0) / (2.0 * h);
            assert!((grad[[0, j]] - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn ce_rejects_bad_labels() {
        let logits = Array2::zeros((1, 3));
        assert!(cross_entropy(&logits, &[3]).is_err());
    }
}
