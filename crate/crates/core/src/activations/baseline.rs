use crate::error::{Error, Result};
use crate::tensor::elementwise::sigmoid_scalar;
use crate::tensor::{Element, Tensor, Unary};

/// The fixed-form activations the gate unit is benchmarked against, with
/// their customary default parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum BaselineActivation {
    Relu,
    LeakyRelu {
        alpha: f64,
    },
    Elu {
        alpha: f64,
    },
    Selu,
    Softplus,
    Sil,
    /// `x·σ(βx)`, β trainable.
    Swish {
        beta: f64,
    },
    /// One slope per channel, trainable.
    Prelu {
        alpha: Vec<f64>,
    },
}

impl BaselineActivation {
    pub const LEAKY_RELU_ALPHA: f64 = 0.01;
    pub const ELU_ALPHA: f64 = 1.0;
    pub const SWISH_BETA: f64 = 1.0;
    pub const PRELU_ALPHA: f64 = 0.25;

    pub fn leaky_relu() -> Self {
        BaselineActivation::LeakyRelu {
            alpha: Self::LEAKY_RELU_ALPHA,
        }
    }

    pub fn elu() -> Self {
        BaselineActivation::Elu {
            alpha: Self::ELU_ALPHA,
        }
    }

    pub fn swish() -> Self {
        BaselineActivation::Swish {
            beta: Self::SWISH_BETA,
        }
    }

    pub fn prelu(channels: usize) -> Self {
        BaselineActivation::Prelu {
            alpha: vec![Self::PRELU_ALPHA; channels],
        }
    }

    /// The equivalent fixed map, for activations without per-channel state.
    pub fn as_unary(&self) -> Option<Unary> {
        match *self {
            BaselineActivation::Relu => Some(Unary::Relu),
            BaselineActivation::LeakyRelu { alpha } => Some(Unary::LeakyRelu { alpha }),
            BaselineActivation::Elu { alpha } => Some(Unary::Elu { alpha }),
            BaselineActivation::Selu => Some(Unary::Selu),
            BaselineActivation::Softplus => Some(Unary::Softplus),
            BaselineActivation::Sil => Some(Unary::Sil),
            BaselineActivation::Swish { .. } | BaselineActivation::Prelu { .. } => None,
        }
    }
}

/// Applies a baseline activation element-wise. For PReLU the channel axis
/// is axis 1 (axis 0 for vectors).
pub fn baseline_forward<T: Element>(a: &BaselineActivation, x: &Tensor<T>) -> Result<Tensor<T>> {
    if let Some(f) = a.as_unary() {
        return Ok(x.map(|v| f.apply(v)));
    }
    match a {
        BaselineActivation::Swish { beta } => {
            if !beta.is_finite() {
                return Err(Error::NonFinite("swish beta".into()));
            }
            let b = T::from_f64_lossy(*beta);
            Ok(x.map(|v| v * sigmoid_scalar(b * v)))
        }
        BaselineActivation::Prelu { alpha } => {
            let shape = x.shape();
            let (channels, inner) = match shape.len() {
                0 => (1, 1),
                1 => (shape[0], 1),
                _ => (shape[1], shape[2..].iter().product()),
            };
            if alpha.len() != channels {
                return Err(Error::shape("prelu", shape, &[alpha.len()]));
            }
            let a: Vec<T> = alpha.iter().map(|&v| T::from_f64_lossy(v)).collect();
            let data: Vec<T> = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if v > T::zero() {
                        v
                    } else {
                        a[(i / inner) % channels] * v
                    }
                })
                .collect();
            Tensor::new(shape, data)
        }
        _ => unreachable!("fixed maps handled above"),
    }
}
