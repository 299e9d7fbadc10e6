use super::{FeatureMap, Real};
use crate::{Error, Result};

pub fn relu_forward<T: Real>(input: &FeatureMap<T>) -> FeatureMap<T> {
    let data = input.data().iter().map(|&v| relu(v)).collect();
    FeatureMap::from_parts(input.channels(), input.frames(), data)
}

/// Passes the upstream gradient where the forward input was positive.
pub fn relu_backward<T: Real>(input: &FeatureMap<T>, upstream: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    if input.channels() != upstream.channels() || input.frames() != upstream.frames() {
        return Err(Error::Dimension(format!(
            "relu upstream gradient {}x{} does not match input {}x{}",
            upstream.channels(),
            upstream.frames(),
            input.channels(),
            input.frames()
        )));
    }
    let mut grad = upstream.clone();
    relu_mask_in_place(input.data(), grad.data_mut());
    Ok(grad)
}

#[inline]
pub(crate) fn relu<T: Real>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

pub(crate) fn relu_mask_in_place<T: Real>(pre_activation: &[T], grad: &mut [T]) {
    for (g, &x) in grad.iter_mut().zip(pre_activation) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Numerically stable softmax (max logit subtracted before exponentiating).
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    if logits.len() < 2 {
        return Err(Error::Input(format!(
            "softmax needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("softmax received a non-finite logit".into()));
    }
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let exps: Vec<f64> = logits.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| T::of(e / total)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward_and_backward() {
        let x = FeatureMap::new(1, 3, vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let g = FeatureMap::new(1, 3, vec![5.0, 5.0, 5.0]).unwrap();
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0f64, 0.0, 0.0]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[2.0f64.ln(), 0.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_bad_logits() {
        assert!(matches!(softmax(&[1.0f32]), Err(Error::Input(_))));
        assert!(matches!(softmax(&[1.0f32, f32::INFINITY]), Err(Error::Numeric(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_sums_to_one_and_is_shift_invariant(
                logits in proptest::collection::vec(-30.0f64..30.0, 2..12),
                shift in -50.0f64..50.0,
            ) {
                let p = softmax(&logits).unwrap();
                let total: f64 = p.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-6);
                let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
                let q = softmax(&shifted).unwrap();
                for (a, b) in p.iter().zip(&q) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            #[test]
            fn softmax_f32_sums_to_one(logits in proptest::collection::vec(-20.0f32..20.0, 2..12)) {
                let p = softmax(&logits).unwrap();
                let total: f64 = p.iter().map(|&v| f64::from(v)).sum();
                prop_assert!((total - 1.0).abs() < 1e-6);
            }
        }
    }
}
