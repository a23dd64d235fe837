//! Softmax cross-entropy over row-stochastic (possibly soft) targets.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax with the usual max-subtraction stabilization.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    let mut out = Tensor::zeros(&[b, c]);
    for i in 0..b {
        let row = &logits.data()[i * c..(i + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - m).exp();
        }
        let orow = &mut out.data_mut()[i * c..(i + 1) * c];
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - m).exp() / denom;
        }
    }
    out
}

/// Mean cross-entropy between `softmax(logits)` and soft targets, computed via
/// log-sum-exp. Returns the loss and `grad_logits = (softmax - target) / B`.
pub fn softmax_cross_entropy(logits: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 || target.shape() != logits.shape() {
        return Err(Error::shape(format!(
            "softmax_cross_entropy expects matching [B,C] logits/target, got {:?}/{:?}",
            logits.shape(),
            target.shape()
        )));
    }
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    for i in 0..b {
        let row = &target.data()[i * c..(i + 1) * c];
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "target row {i} sums to {sum}, expected 1 within 1e-6"
            )));
        }
        if row.iter().any(|&v| v < 0.0) {
            return Err(Error::validation(format!(
                "target row {i} has a negative entry"
            )));
        }
    }
    let mut grad = Tensor::zeros(&[b, c]);
    let mut loss = 0.0;
    let inv_b = 1.0 / b as f64;
    for i in 0..b {
        let row = &logits.data()[i * c..(i + 1) * c];
        let trow = &target.data()[i * c..(i + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - m).exp();
        }
        let lse = m + denom.ln();
        let grow = &mut grad.data_mut()[i * c..(i + 1) * c];
        for j in 0..c {
            let logp = row[j] - lse;
            loss -= trow[j] * logp;
            grow[j] = ((row[j] - lse).exp() - trow[j]) * inv_b;
        }
    }
    Ok((loss * inv_b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn uniform_logits_one_hot_target_gives_ln_c() {
        let logits = Tensor::zeros(&[1, 10]);
        let mut target = Tensor::zeros(&[1, 10]);
        target.data_mut()[3] = 1.0;
        let (loss, _) = softmax_cross_entropy(&logits, &target).unwrap();
        assert!((loss - 10.0_f64.ln()).abs() < 1e-12, "{loss} vs ln 10");
    }

    #[test]
    fn stationary_when_target_equals_softmax() {
        let mut rng = SeededRng::new(14);
        let logits = Tensor::randn(&[4, 6], 1.0, &mut rng);
        let target = softmax_rows(&logits);
        let (_, grad) = softmax_cross_entropy(&logits, &target).unwrap();
        assert!(grad.data().iter().all(|&g| g.abs() <= 1e-12));
    }

    #[test]
    fn grad_rows_sum_to_zero() {
        let mut rng = SeededRng::new(15);
        for _ in 0..100 {
            let b = 1 + rng.below(4);
            let c = 2 + rng.below(8);
            let logits = Tensor::randn(&[b, c], 2.0, &mut rng);
            // Random stochastic target rows.
            let mut target = Tensor::zeros(&[b, c]);
            for i in 0..b {
                let mut row: Vec<f64> = (0..c).map(|_| rng.uniform() + 1e-3).collect();
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
                target.data_mut()[i * c..(i + 1) * c].copy_from_slice(&row);
            }
            let (_, grad) = softmax_cross_entropy(&logits, &target).unwrap();
            for i in 0..b {
                let s: f64 = grad.data()[i * c..(i + 1) * c].iter().sum();
                assert!(s.abs() <= 1e-10, "row sum {s}");
            }
        }
    }

    #[test]
    fn rejects_non_stochastic_target() {
        let logits = Tensor::zeros(&[1, 3]);
        let target = Tensor::from_vec(vec![1, 3], vec![0.5, 0.5, 0.5]).unwrap();
        assert!(matches!(
            softmax_cross_entropy(&logits, &target),
            Err(Error::Validation(_))
        ));
        let target = Tensor::from_vec(vec![1, 3], vec![1.2, -0.2, 0.0]).unwrap();
        assert!(matches!(
            softmax_cross_entropy(&logits, &target),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn large_logits_stay_finite() {
        let logits = Tensor::from_vec(vec![1, 3], vec![1000.0, -1000.0, 0.0]).unwrap();
        let mut target = Tensor::zeros(&[1, 3]);
        target.data_mut()[0] = 1.0;
        let (loss, grad) = softmax_cross_entropy(&logits, &target).unwrap();
        assert!(loss.is_finite());
        assert!(grad.is_finite());
    }
}
