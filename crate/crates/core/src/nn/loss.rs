//! Softmax cross-entropy over class logits.

use crate::error::{Error, Result};
use crate::nn::kernels::softmax_xent_slices;
use crate::nn::tensor::Tensor;

/// Mean negative log-likelihood of the labels under softmax(logits), with the
/// usual max-subtraction for numeric stability, plus the logit gradient
/// (softmax - onehot) / batch.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    let (bsz, classes) = logits.dims2()?;
    if labels.len() != bsz {
        return Err(Error::Validation(format!(
            "{} labels for batch of {bsz}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Validation(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let (loss, grad) = softmax_xent_slices(logits.data(), bsz, classes, labels);
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite cross-entropy loss".into()));
    }
    Ok((loss, Tensor::from_vec(&[bsz, classes], grad)?))
}

/// Softmax probabilities for a (batch, classes) logit tensor.
pub fn softmax_probs(logits: &Tensor) -> Result<Tensor> {
    let (bsz, classes) = logits.dims2()?;
    let mut out = Tensor::zeros(&[bsz, classes]);
    let ldat = logits.data();
    let odat = out.data_mut();
    for b in 0..bsz {
        let row = &ldat[b * classes..][..classes];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut denom = 0.0f32;
        for &v in row {
            denom += (v - max).exp();
        }
        for c in 0..classes {
            odat[b * classes + c] = (row[c] - max).exp() / denom;
        }
    }
    Ok(out)
}

/// Positive-class probability from a two-logit pair.
pub fn prob_positive(logit_neg: f32, logit_pos: f32) -> f32 {
    let max = logit_neg.max(logit_pos);
    let en = (logit_neg - max).exp();
    let ep = (logit_pos - max).exp();
    ep / (en + ep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln2() {
        let logits = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        let (loss, grad) = softmax_xent(&logits, &[0]).unwrap();
        assert!((loss - std::f32::consts::LN_2).abs() < 1e-6);
        assert!((grad.data()[0] - (-0.5)).abs() < 1e-6);
        assert!((grad.data()[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn extreme_logits_do_not_overflow() {
        let logits = Tensor::from_vec(&[1, 2], vec![1000.0, 0.0]).unwrap();
        let (loss, _) = softmax_xent(&logits, &[0]).unwrap();
        assert!(loss.is_finite());
        assert!(loss.abs() < 1e-6);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let logits = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        assert!(softmax_xent(&logits, &[2]).is_err());
    }

    #[test]
    fn shift_invariance() {
        let logits = Tensor::from_vec(&[2, 2], vec![0.3, -0.8, 1.2, 0.1]).unwrap();
        let shifted = Tensor::from_vec(&[2, 2], vec![100.3, 99.2, 101.2, 100.1]).unwrap();
        let (a, _) = softmax_xent(&logits, &[0, 1]).unwrap();
        let (b, _) = softmax_xent(&shifted, &[0, 1]).unwrap();
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let vals = vec![0.3f32, -0.8, 1.2, 0.1, -0.4, 0.9];
        let labels = [1usize, 0, 1];
        let logits = Tensor::from_vec(&[3, 2], vals.clone()).unwrap();
        let (_, grad) = softmax_xent(&logits, &labels).unwrap();
        let eps = 1e-3f32;
        for k in 0..vals.len() {
            let mut plus = vals.clone();
            plus[k] += eps;
            let mut minus = vals.clone();
            minus[k] -= eps;
            let (lp, _) =
                softmax_xent(&Tensor::from_vec(&[3, 2], plus).unwrap(), &labels).unwrap();
            let (lm, _) =
                softmax_xent(&Tensor::from_vec(&[3, 2], minus).unwrap(), &labels).unwrap();
            let numeric = (lp - lm) / (2.0 * eps);
            assert!(
                (numeric - grad.data()[k]).abs() < 1e-3,
                "component {k}: numeric {numeric} analytic {}",
                grad.data()[k]
            );
        }
    }

    #[test]
    fn prob_positive_is_stable() {
        assert!((prob_positive(0.0, 0.0) - 0.5).abs() < 1e-7);
        assert!(prob_positive(-1000.0, 1000.0) > 0.999);
        assert!(prob_positive(1000.0, -1000.0) < 1e-3);
    }
}
