//! Forward and backward passes for convolutional, ReLU, pooling, and
//! fully-connected layers, plus the softmax cross-entropy loss.
//!
//! Layer parameters are read-shared during forward/backward; every backward
//! returns freshly allocated gradients shaped like the parameters plus the
//! gradient with respect to the layer input.

mod conv;
mod fc;
mod loss;
mod pool;

pub use conv::{conv_backward, conv_forward, ConvGrads, ConvParams};
pub use fc::{fc_backward, fc_forward, FcGrads, FcParams};
pub use loss::softmax_cross_entropy;
pub use pool::{pool_backward, pool_forward, PoolKind, PoolSpec, SwitchMap};

use crate::error::{Error, Result};
use crate::volume::Volume;

/// `max(0, x)` elementwise; shape preserved.
pub fn relu_forward(input: &Volume) -> Volume {
    let (h, w, d) = input.shape();
    let data = input.data().iter().map(|&x| x.max(0.0)).collect();
    Volume::from_vec(h, w, d, data).expect("relu preserves shape and finiteness")
}

/// Routes `upstream` through where the forward input was strictly positive.
/// The subgradient at exactly zero is taken as zero.
pub fn relu_backward(input: &Volume, upstream: &Volume) -> Result<Volume> {
    if !input.same_shape(upstream) {
        return Err(Error::Shape(format!(
            "relu backward: input {:?} vs upstream {:?}",
            input.shape(),
            upstream.shape()
        )));
    }
    let (h, w, d) = input.shape();
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &u)| if x > 0.0 { u } else { 0.0 })
        .collect();
    Volume::from_vec(h, w, d, data)
}

#[cfg(test)]
mod relu_tests {
    use super::*;
    use crate::test_util::random_volume;
    use proptest::prelude::*;

    #[test]
    fn forward_all_negative_is_zero() {
        let v = Volume::new(2, 2, 1, -3.5).unwrap();
        assert!(relu_forward(&v).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn forward_all_positive_is_identity() {
        let v = Volume::new(2, 2, 1, 1.25).unwrap();
        assert_eq!(relu_forward(&v), v);
    }

    #[test]
    fn forward_definition() {
        let v = Volume::from_vec(1, 1, 3, vec![-1.0, 0.0, 3.0]).unwrap();
        assert_eq!(relu_forward(&v).data(), &[0.0, 0.0, 3.0]);
    }

    #[test]
    fn backward_positive_passes_upstream() {
        let input = Volume::new(2, 2, 1, 2.0).unwrap();
        let upstream = Volume::from_vec(2, 2, 1, vec![1.0, -2.0, 3.0, -4.0]).unwrap();
        assert_eq!(relu_backward(&input, &upstream).unwrap(), upstream);
    }

    #[test]
    fn backward_negative_blocks_upstream() {
        let input = Volume::new(2, 2, 1, -2.0).unwrap();
        let upstream = Volume::new(2, 2, 1, 5.0).unwrap();
        let grad = relu_backward(&input, &upstream).unwrap();
        assert!(grad.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn backward_rejects_shape_mismatch() {
        let input = Volume::zeros(2, 2, 1).unwrap();
        let upstream = Volume::zeros(2, 1, 2).unwrap();
        assert!(matches!(
            relu_backward(&input, &upstream),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn backward_matches_finite_differences_away_from_kink() {
        // d/dx sum(w . relu(x)) via central differences, skipping any
        // element within 1e-3 of the nondifferentiable point.
        let input = random_volume(3, 3, 2, 11, -1.0, 1.0);
        let weights = random_volume(3, 3, 2, 12, -1.0, 1.0);
        let upstream = weights.clone();
        let analytic = relu_backward(&input, &upstream).unwrap();
        let eps = 1e-5;
        for i in 0..input.len() {
            if input.data()[i].abs() <= 1e-3 {
                continue;
            }
            let mut plus = input.clone();
            plus.data_mut()[i] += eps;
            let mut minus = input.clone();
            minus.data_mut()[i] -= eps;
            let loss = |v: &Volume| -> f64 {
                relu_forward(v)
                    .data()
                    .iter()
                    .zip(weights.data())
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let a = analytic.data()[i];
            let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-8);
            assert!(rel < 1e-6, "element {i}: fd {fd} vs analytic {a}");
        }
    }

    proptest! {
        #[test]
        fn relu_is_idempotent(raw in proptest::collection::vec(-50.0f64..50.0, 1..64)) {
            let n = raw.len();
            let v = Volume::from_vec(1, 1, n, raw).unwrap();
            let once = relu_forward(&v);
            prop_assert_eq!(relu_forward(&once), once);
        }
    }
}
