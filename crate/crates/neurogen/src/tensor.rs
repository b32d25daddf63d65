//! Dense tensors and the statistical kernels the growth procedure needs.
//!
//! Values are `f32`; reductions accumulate in `f64` and round once at the
//! end. All reductions walk their input in index order.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("{op}: length mismatch ({left} vs {right})")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },
}

/// Dense value array with shape metadata, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        let expected: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            expected,
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Arithmetic mean. `f64` accumulator, index order.
pub fn mean(values: &[f32]) -> Result<f32, TensorError> {
    if values.is_empty() {
        return Err(TensorError::Empty { op: "mean" });
    }
    let sum: f64 = values.iter().map(|&v| v as f64).sum();
    Ok((sum / values.len() as f64) as f32)
}

/// Population standard deviation: sqrt of the mean squared deviation,
/// dividing by N (no Bessel correction).
pub fn std_dev(values: &[f32]) -> Result<f32, TensorError> {
    if values.is_empty() {
        return Err(TensorError::Empty { op: "std_dev" });
    }
    let n = values.len() as f64;
    let avg: f64 = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let sum_sq: f64 = values
        .iter()
        .map(|&v| {
            let d = avg - v as f64;
            d * d
        })
        .sum();
    Ok((sum_sq / n).sqrt() as f32)
}

/// Mean squared error between two equal-length vectors.
pub fn mse(a: &[f32], b: &[f32]) -> Result<f32, TensorError> {
    if a.len() != b.len() {
        return Err(TensorError::LengthMismatch {
            op: "mse",
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(TensorError::Empty { op: "mse" });
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok((sum / a.len() as f64) as f32)
}

pub fn tanh_inplace(values: &mut [f32]) {
    for v in values {
        *v = v.tanh();
    }
}

/// Derivative of tanh expressed through its output: 1 - tanh(x)^2.
pub fn tanh_prime_from_output(y: f32) -> f32 {
    1.0 - y * y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_hand_values() {
        assert_eq!(mean(&[1.0, 2.0, 3.0, 4.0, 10.0]).unwrap(), 4.0);
        assert_eq!(mean(&[2.5; 7]).unwrap(), 2.5);
        assert_eq!(mean(&[0.0]).unwrap(), 0.0);
        assert_eq!(mean(&[]), Err(TensorError::Empty { op: "mean" }));
    }

    #[test]
    fn std_dev_hand_values() {
        // deviations from 4: 3,2,1,0,6 -> sum of squares 50, /5 = 10
        let got = std_dev(&[1.0, 2.0, 3.0, 4.0, 10.0]).unwrap();
        assert!((got - 10.0f64.sqrt() as f32).abs() < 1e-6);
        assert_eq!(std_dev(&[3.25; 9]).unwrap(), 0.0);
        assert_eq!(std_dev(&[-2.5, 2.5]).unwrap(), 2.5);
        assert_eq!(std_dev(&[]), Err(TensorError::Empty { op: "std_dev" }));
    }

    #[test]
    fn mse_hand_values() {
        assert_eq!(mse(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 4.0);
        assert_eq!(mse(&[0.5, -1.0], &[0.5, -1.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0], &[3.0]).unwrap(), 9.0);
        assert!(matches!(
            mse(&[1.0], &[1.0, 2.0]),
            Err(TensorError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mse_symmetric_nonnegative() {
        let a = [0.3, -0.7, 1.2, 0.0];
        let b = [0.1, 0.4, -0.2, 2.0];
        assert_eq!(mse(&a, &b), mse(&b, &a));
        assert!(mse(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn tanh_basics() {
        let mut v = [0.0f32, 20.0, -20.0];
        tanh_inplace(&mut v);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 1.0).abs() < 1e-6);
        assert!((v[2] + 1.0).abs() < 1e-6);
        assert_eq!(tanh_prime_from_output(0.0), 1.0);
    }

    // The derivative formula against a central difference of f64 tanh.
    #[test]
    fn tanh_derivative_matches_finite_differences() {
        let mut rng = crate::rng::Rng::new(9);
        let h = 1e-6f64;
        for _ in 0..1000 {
            let x = (rng.next_f32() as f64) * 10.0 - 5.0;
            let fd = ((x + h).tanh() - (x - h).tanh()) / (2.0 * h);
            let y = x.tanh();
            let formula = 1.0 - y * y;
            let rel = (formula - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-6, "x={x}: formula {formula} vs fd {fd}");
        }
    }

    #[test]
    fn tensor_shape_checks() {
        let t = Tensor::new(vec![2, 3], vec![0.0; 6]);
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.len(), 6);
        assert!(t.all_finite());
    }

    #[test]
    #[should_panic(expected = "does not match shape")]
    fn tensor_rejects_bad_length() {
        Tensor::new(vec![2, 2], vec![0.0; 3]);
    }

    mod reduction_properties {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mse_symmetric_nonnegative_zero_iff_equal(
                pairs in prop::collection::vec((-10.0f32..10.0, -10.0f32..10.0), 1..50)
            ) {
                let a: Vec<f32> = pairs.iter().map(|p| p.0).collect();
                let b: Vec<f32> = pairs.iter().map(|p| p.1).collect();
                let ab = mse(&a, &b).unwrap();
                prop_assert_eq!(ab, mse(&b, &a).unwrap());
                prop_assert!(ab >= 0.0);
                prop_assert_eq!(ab == 0.0, a == b);
            }

            #[test]
            fn mean_lies_between_extremes(values in prop::collection::vec(-10.0f32..10.0, 1..50)) {
                let m = mean(&values).unwrap();
                let lo = values.iter().cloned().fold(f32::INFINITY, f32::min);
                let hi = values.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                prop_assert!(m >= lo - 1e-4 && m <= hi + 1e-4);
            }
        }
    }

    #[test]
    fn std_dev_zero_iff_constant() {
        let mut rng = crate::rng::Rng::new(3);
        for _ in 0..200 {
            let n = 1 + rng.below(20);
            let vals: Vec<f32> = (0..n).map(|_| rng.uniform(2.0)).collect();
            let sd = std_dev(&vals).unwrap();
            let constant = vals.iter().all(|&v| v == vals[0]);
            if constant {
                assert_eq!(sd, 0.0);
            } else {
                assert!(sd > 0.0);
            }
        }
    }
}
