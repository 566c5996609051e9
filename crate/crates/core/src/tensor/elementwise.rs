//! Element-wise maps and binary operations.

use super::{Element, Tensor};
use crate::error::{Error, Result};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

/// Logistic sigmoid. Branches on sign so `exp` only ever sees a
/// non-positive argument.
#[inline]
pub fn sigmoid_scalar<T: Element>(x: T) -> T {
    let e = (-x.abs()).exp();
    let r = T::one() / (T::one() + e);
    if x >= T::zero() {
        r
    } else {
        e * r
    }
}

/// Fixed-parameter scalar maps applied element-wise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Sigmoid,
    Relu,
    LeakyRelu {
        alpha: f64,
    },
    Elu {
        alpha: f64,
    },
    Selu,
    Softplus,
    /// `x·σ(x)`.
    Sil,
}

impl Unary {
    #[inline]
    pub fn apply<T: Element>(self, x: T) -> T {
        let zero = T::zero();
        match self {
            Unary::Sigmoid => sigmoid_scalar(x),
            Unary::Relu => {
                if x > zero {
                    x
                } else {
                    zero
                }
            }
            Unary::LeakyRelu { alpha } => {
                if x > zero {
                    x
                } else {
                    T::from_f64_lossy(alpha) * x
                }
            }
            Unary::Elu { alpha } => {
                if x > zero {
                    x
                } else {
                    T::from_f64_lossy(alpha) * x.exp_m1()
                }
            }
            Unary::Selu => {
                let lambda = T::from_f64_lossy(SELU_LAMBDA);
                if x > zero {
                    lambda * x
                } else {
                    lambda * T::from_f64_lossy(SELU_ALPHA) * x.exp_m1()
                }
            }
            Unary::Softplus => x.max(zero) + (-x.abs()).exp().ln_1p(),
            Unary::Sil => x * sigmoid_scalar(x),
        }
    }

    /// Derivative with respect to the input, evaluated at `x`.
    #[inline]
    pub fn derivative<T: Element>(self, x: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self {
            Unary::Sigmoid => {
                let s = sigmoid_scalar(x);
                s * (one - s)
            }
            Unary::Relu => {
                if x > zero {
                    one
                } else {
                    zero
                }
            }
            Unary::LeakyRelu { alpha } => {
                if x > zero {
                    one
                } else {
                    T::from_f64_lossy(alpha)
                }
            }
            Unary::Elu { alpha } => {
                if x > zero {
                    one
                } else {
                    T::from_f64_lossy(alpha) * x.exp()
                }
            }
            Unary::Selu => {
                let lambda = T::from_f64_lossy(SELU_LAMBDA);
                if x > zero {
                    lambda
                } else {
                    lambda * T::from_f64_lossy(SELU_ALPHA) * x.exp()
                }
            }
            Unary::Softplus => sigmoid_scalar(x),
            Unary::Sil => {
                let s = sigmoid_scalar(x);
                s * (one + x * (one - s))
            }
        }
    }
}

fn zip_with<T: Element>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(Tensor::from_parts(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect::<Vec<_>>(),
    ))
}

pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn sub<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("sub", a, b, |x, y| x - y)
}

pub fn mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("mul", a, b, |x, y| x * y)
}

pub fn scale<T: Element>(a: &Tensor<T>, factor: T) -> Tensor<T> {
    a.map(|v| v * factor)
}

pub fn sigmoid<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    a.map(sigmoid_scalar)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        let s = sigmoid_scalar(-1e6f64);
        assert!((0.0..f64::EPSILON).contains(&s));
        assert_eq!(sigmoid_scalar(1e6f64), 1.0);
        // 1/(1+e^-1)
        assert!((sigmoid_scalar(1.0f64) - 0.731_058_578_6).abs() < 1e-10);
        assert!(sigmoid_scalar(-1e6f32).is_finite());
    }

    #[test]
    fn binary_ops_require_equal_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[3, 2]);
        let err = add(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[3, 2]"), "{err}");
        assert!(mul(&a, &b).is_err());
        assert!(sub(&a, &a).is_ok());
    }

    #[test]
    fn scale_and_mul() {
        let a = Tensor::<f64>::from_f64(&[3], &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(scale(&a, 2.0).data(), &[2.0, -4.0, 6.0]);
        assert_eq!(mul(&a, &a).unwrap().data(), &[1.0, 4.0, 9.0]);
    }

    #[test]
    fn unary_derivatives_match_central_differences() {
        let maps = [
            Unary::Sigmoid,
            Unary::Relu,
            Unary::LeakyRelu { alpha: 0.01 },
            Unary::Elu { alpha: 1.0 },
            Unary::Selu,
            Unary::Softplus,
            Unary::Sil,
        ];
        let h = 1e-6;
        for f in maps {
            for &x in &[-3.7f64, -1.2, -0.3, 0.4, 1.1, 2.9] {
                let fd = (f.apply(x + h) - f.apply(x - h)) / (2.0 * h);
                let an = f.derivative(x);
                assert!((fd - an).abs() < 1e-8, "{f:?} at {x}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((Unary::Softplus.apply(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(Unary::Softplus.apply(1000.0f64), 1000.0);
        assert!(Unary::Softplus.apply(-1000.0f64) >= 0.0);
    }
}
