//! Classification losses measured in bits (base-2 logs).

use ndarray::Axis;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Matrix;

/// Row-wise softmax with max subtraction for stability.
pub fn softmax<F: Scalar>(logits: &Matrix<F>) -> Matrix<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean over rows of `-log2 softmax(logits)[label]`. Always >= 0.
pub fn softmax_cross_entropy_bits<F: Scalar>(logits: &Matrix<F>, labels: &[usize]) -> Result<F> {
    if logits.nrows() != labels.len() {
        return Err(Error::shape(format!(
            "{} logit rows vs {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::input("cross-entropy over an empty batch"));
    }
    let classes = logits.ncols();
    let mut total_bits = F::zero();
    for (row, &label) in logits.rows().into_iter().zip(labels) {
        if label >= classes {
            return Err(Error::input(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let sum_exp = row.iter().map(|&v| (v - max).exp()).fold(F::zero(), |a, b| a + b);
        // -ln softmax[label] = logsumexp - logit[label], converted to bits
        // per row so exact cases stay exact.
        let nats = max + sum_exp.ln() - row[label];
        total_bits = total_bits + nats / F::ln2();
    }
    let mean_bits = total_bits / F::from_f64(labels.len() as f64);
    // Rounding can push a mathematically zero loss a hair negative.
    Ok(mean_bits.max(F::zero()))
}

/// Fraction of rows whose argmax matches the label. Ties break to the lowest
/// class index.
pub fn accuracy<F: Scalar>(logits: &Matrix<F>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() != labels.len() {
        return Err(Error::shape(format!(
            "{} logit rows vs {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::input("accuracy over an empty batch"));
    }
    let mut hits = 0usize;
    for (row, &label) in logits.axis_iter(Axis(0)).zip(labels) {
        let mut best = 0usize;
        let mut best_val = row[0];
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > best_val {
                best = j;
                best_val = v;
            }
        }
        if best == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix64;

    #[test]
    fn uniform_two_class_costs_one_bit() {
        let logits = Matrix64::zeros((1, 2));
        let loss = softmax_cross_entropy_bits(&logits, &[0]).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_costs_nothing() {
        let logits = Matrix64::from_shape_vec((1, 2), vec![1000.0, 0.0]).unwrap();
        let loss = softmax_cross_entropy_bits(&logits, &[0]).unwrap();
        assert!(loss.abs() < 1e-9);
    }

    #[test]
    fn uniform_ten_class_costs_log2_ten() {
        let logits = Matrix64::zeros((3, 10));
        for label in [0usize, 4, 9] {
            let loss = softmax_cross_entropy_bits(&logits, &[label, label, label]).unwrap();
            assert!((loss - 10f64.log2()).abs() < 1e-12);
        }
    }

    #[test]
    fn label_out_of_range() {
        let logits = Matrix64::zeros((1, 2));
        assert!(matches!(
            softmax_cross_entropy_bits(&logits, &[2]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn row_count_mismatch() {
        let logits = Matrix64::zeros((2, 2));
        assert!(matches!(
            softmax_cross_entropy_bits(&logits, &[0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Matrix64::from_shape_vec((2, 3), vec![1.0, -2.0, 0.5, 800.0, 799.0, -800.0])
            .unwrap();
        let p = softmax(&logits);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn accuracy_breaks_ties_low() {
        // Constant logits: every row argmaxes to class 0.
        let logits = Matrix64::zeros((4, 2));
        let acc = accuracy(&logits, &[0, 1, 0, 1]).unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let logits =
            Matrix64::from_shape_vec((3, 3), vec![1.0, 2.0, 0.0, 5.0, 1.0, 1.0, 0.0, 0.0, 4.0])
                .unwrap();
        assert_eq!(accuracy(&logits, &[1, 0, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&logits, &[0, 0, 2]).unwrap(), 2.0 / 3.0);
    }
}
