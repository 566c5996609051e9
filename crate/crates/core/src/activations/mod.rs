//! Activation functions: the weighted sigmoid gate unit and the baselines
//! it is compared against.

mod baseline;
mod wig;

pub use baseline::{baseline_forward, BaselineActivation};
pub use wig::{
    fuse_reparameterize, fused_forward, scalar_wig, scalar_wig_derivative, unfused_forward,
    wig_conv_forward, wig_conv_on_tape, wig_dense_forward, wig_dense_jacobian, wig_dense_on_tape,
    GatedOutput, WigConvParams, WigDenseParams,
};

use std::fmt;
use std::str::FromStr;

/// Registry of activation names accepted in network specs and CLI flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Relu,
    LeakyRelu,
    Elu,
    Selu,
    Softplus,
    Sil,
    Prelu,
    Swish,
    Wig,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 9] = [
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::Elu,
        ActivationKind::Selu,
        ActivationKind::Softplus,
        ActivationKind::Sil,
        ActivationKind::Prelu,
        ActivationKind::Swish,
        ActivationKind::Wig,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::Elu => "elu",
            ActivationKind::Selu => "selu",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Sil => "sil",
            ActivationKind::Prelu => "prelu",
            ActivationKind::Swish => "swish",
            ActivationKind::Wig => "wig",
        }
    }

    /// Whether the activation owns trainable parameters.
    pub fn is_parametric(self) -> bool {
        matches!(
            self,
            ActivationKind::Prelu | ActivationKind::Swish | ActivationKind::Wig
        )
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ActivationKind::ALL.iter().map(|k| k.name()).collect();
                format!(
                    "unknown activation `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trips_names() {
        for k in ActivationKind::ALL {
            assert_eq!(k.name().parse::<ActivationKind>().unwrap(), k);
        }
        assert!("ReLU".parse::<ActivationKind>().is_err());
        assert!("gelu".parse::<ActivationKind>().is_err());
    }
}
