//! Forward operations with analytic gradients: activations and the
//! teacher-forcing cross-entropy objective.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    SoftmaxLastDim,
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub fn activation<F: Scalar>(x: &Tensor<F>, kind: Activation) -> Tensor<F> {
    match kind {
        Activation::Relu => x.map(|v| if v > F::zero() { v } else { F::zero() }),
        Activation::Sigmoid => x.map(sigmoid),
        Activation::SoftmaxLastDim => softmax_lastdim(x),
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_lastdim<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let mut out = x.clone();
    let rows = x.rows();
    for i in 0..rows {
        softmax_row(out.row_mut(i));
    }
    out
}

pub fn softmax_row<F: Scalar>(row: &mut [F]) {
    let mut max = F::neg_infinity();
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Backward through a row softmax: given p = softmax(s) and dL/dp,
/// dL/ds_j = p_j * (dp_j - sum_k dp_k p_k).
pub fn softmax_backward_row<F: Scalar>(p: &[F], dp: &[F]) -> Vec<F> {
    let inner = crate::tensor::dot(dp, p);
    p.iter()
        .zip(dp.iter())
        .map(|(&pj, &dj)| pj * (dj - inner))
        .collect()
}

/// Mean negative log-softmax of the target ids.
///
/// Returns the scalar loss and dL/dlogits (already divided by the number of
/// positions).
pub fn cross_entropy<F: Scalar>(logits: &Tensor<F>, targets: &[usize]) -> Result<(F, Tensor<F>)> {
    let (l, v) = (logits.rows(), logits.cols());
    if targets.len() != l {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} logit rows vs {} targets", l, targets.len()),
        ));
    }
    let mut grad = Tensor::zeros(&[l, v]);
    let mut loss = F::zero();
    let inv_l = F::one() / F::of(l as f64);
    for (i, &t) in targets.iter().enumerate() {
        if t >= v {
            return Err(Error::Argument(format!(
                "target id {t} out of range for vocab {v}"
            )));
        }
        let row = logits.row(i);
        let mut max = F::neg_infinity();
        for &x in row {
            if x > max {
                max = x;
            }
        }
        let mut sum = F::zero();
        for &x in row {
            sum += (x - max).exp();
        }
        let log_z = max + sum.ln();
        loss += log_z - row[t];
        let g = grad.row_mut(i);
        for (j, &x) in row.iter().enumerate() {
            g[j] = ((x - log_z).exp()) * inv_l;
        }
        g[t] -= inv_l;
    }
    Ok((loss * inv_l, grad))
}

/// Per-position negative log-likelihoods, the building block of perplexity.
pub fn token_nll<F: Scalar>(logits: &Tensor<F>, targets: &[usize]) -> Result<Vec<F>> {
    let (l, v) = (logits.rows(), logits.cols());
    if targets.len() != l {
        return Err(Error::shape(
            "token_nll",
            format!("{} logit rows vs {} targets", l, targets.len()),
        ));
    }
    let mut out = Vec::with_capacity(l);
    for (i, &t) in targets.iter().enumerate() {
        if t >= v {
            return Err(Error::Argument(format!(
                "target id {t} out of range for vocab {v}"
            )));
        }
        let row = logits.row(i);
        let mut max = F::neg_infinity();
        for &x in row {
            if x > max {
                max = x;
            }
        }
        let mut sum = F::zero();
        for &x in row {
            sum += (x - max).exp();
        }
        out.push(max + sum.ln() - row[t]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_sign_cases() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = activation(&x, Activation::Relu);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let x = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let y = activation(&x, Activation::Sigmoid);
        assert_eq!(y.data()[0], 0.5);
    }

    #[test]
    fn sigmoid_stays_in_open_unit_interval() {
        // Beyond |x| ~ 36 the result rounds to exactly 0.0/1.0 in f64, so we
        // test the full representable range and check saturation separately.
        for &v in &[-30.0, -1.0, 0.0, 1.0, 30.0] {
            let s = sigmoid(v);
            assert!(s > 0.0 && s < 1.0, "sigmoid({v}) = {s}");
        }
        assert!(sigmoid(-700.0f64) >= 0.0 && sigmoid(700.0f64) <= 1.0);
    }

    #[test]
    fn softmax_uniform_on_constant_rows() {
        let x = Tensor::<f64>::from_vec(&[1, 3], vec![4.2, 4.2, 4.2]).unwrap();
        let y = softmax_lastdim(&x);
        for &p in y.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let data: Vec<f64> = (0..12).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let x = Tensor::from_vec(&[3, 4], data).unwrap();
            let y = softmax_lastdim(&x);
            for i in 0..3 {
                let s: f64 = y.row(i).iter().sum();
                assert!((s - 1.0).abs() <= 1e-12);
                assert!(y.row(i).iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_v() {
        let logits = Tensor::<f64>::zeros(&[2, 4]);
        let (loss, _) = cross_entropy(&logits, &[1, 3]).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_one_hot_limit() {
        // loss -> 0 as the target logit grows.
        let mut prev = f64::INFINITY;
        for &mag in &[1.0, 5.0, 20.0, 60.0] {
            let mut logits = Tensor::zeros(&[1, 4]);
            logits.set(0, 2, mag);
            let (loss, _) = cross_entropy(&logits, &[2]).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_target() {
        let logits = Tensor::<f64>::zeros(&[1, 4]);
        assert!(matches!(
            cross_entropy(&logits, &[4]),
            Err(crate::error::Error::Argument(_))
        ));
    }

    #[test]
    fn cross_entropy_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let logits = Tensor::from_vec(&[2, 4], data).unwrap();
        let targets = [3usize, 0];
        let (_, grad) = cross_entropy(&logits, &targets).unwrap();
        let h = 1e-5;
        for idx in 0..8 {
            let mut plus = logits.clone();
            plus.data_mut()[idx] += h;
            let mut minus = logits.clone();
            minus.data_mut()[idx] -= h;
            let (lp, _) = cross_entropy(&plus, &targets).unwrap();
            let (lm, _) = cross_entropy(&minus, &targets).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grad.data()[idx];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                (analytic - numeric).abs() / denom < 1e-6,
                "coord {idx}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }
}
