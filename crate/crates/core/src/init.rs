//! Parameter initialization: He-normal weights and scaled-identity gates.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::activations::{WigConvParams, WigDenseParams};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Gate scale used by [`InitPolicy::transfer`] when none is given.
pub const DEFAULT_TRANSFER_SCALE: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    /// Gates start as SiL (`s = 1`).
    Scratch,
    /// Gates start close to ReLU so that a trained ReLU network can be
    /// converted in place.
    Transfer,
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Scratch => "scratch",
            InitMode::Transfer => "transfer",
        })
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scratch" => Ok(InitMode::Scratch),
            "transfer" => Ok(InitMode::Transfer),
            other => Err(Error::Config(format!(
                "unknown init mode `{other}` (expected scratch or transfer)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitPolicy {
    mode: InitMode,
    gate_scale: f64,
}

impl Default for InitPolicy {
    fn default() -> Self {
        Self::scratch()
    }
}

impl InitPolicy {
    pub fn scratch() -> Self {
        InitPolicy {
            mode: InitMode::Scratch,
            gate_scale: 1.0,
        }
    }

    pub fn transfer(gate_scale: f64) -> Result<Self> {
        Self::new(InitMode::Transfer, gate_scale)
    }

    pub fn new(mode: InitMode, gate_scale: f64) -> Result<Self> {
        match mode {
            InitMode::Scratch if gate_scale != 1.0 => Err(Error::Config(format!(
                "scratch init requires gate_scale = 1, got {gate_scale}"
            ))),
            InitMode::Transfer if !(gate_scale.is_finite() && gate_scale >= 1.0) => {
                Err(Error::Config(format!(
                    "transfer init requires gate_scale >= 1, got {gate_scale}"
                )))
            }
            _ => Ok(InitPolicy { mode, gate_scale }),
        }
    }

    pub fn mode(&self) -> InitMode {
        self.mode
    }

    pub fn gate_scale(&self) -> f64 {
        self.gate_scale
    }
}

/// I.i.d. Gaussian with mean 0 and std `sqrt(2 / fan_in)`.
pub fn init_weights<T: Element, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(Error::Config(
            "init_weights: fan_in must be at least 1".into(),
        ));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| T::from_f64_lossy(normal.sample(rng)))
        .collect();
    Tensor::new(shape, data)
}

fn check_scale(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "gate scale must be finite and > 0, got {s}"
        )))
    }
}

/// Dense gate `W_g = sI`, `b_g = 0`.
pub fn dense_gate_identity<T: Element>(features: usize, s: f64) -> Result<WigDenseParams<T>> {
    check_scale(s)?;
    let s = T::from_f64_lossy(s);
    let w = Tensor::from_fn(&[features, features], |i| {
        if i / features == i % features {
            s
        } else {
            T::zero()
        }
    });
    WigDenseParams::new(w, Tensor::zeros(&[features]))
}

/// Convolutional analogue of `sI`: each output channel's own-channel slice
/// has `s` at the centre tap and every other tap is 0.
pub fn conv_gate_identity<T: Element>(
    channels: usize,
    kernel: usize,
    s: f64,
) -> Result<WigConvParams<T>> {
    check_scale(s)?;
    if kernel.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "gate kernel size must be odd, got {kernel}"
        )));
    }
    let k = Tensor::from_parts(
        vec![channels, channels, kernel, kernel],
        delta_kernel(channels, kernel, T::from_f64_lossy(s)),
    );
    WigConvParams::new(k, Tensor::zeros(&[channels]))
}

pub(crate) fn delta_kernel<T: Element>(channels: usize, kernel: usize, s: T) -> Vec<T> {
    let plane = kernel * kernel;
    let centre = (kernel / 2) * kernel + kernel / 2;
    let mut data = vec![T::zero(); channels * channels * plane];
    for c in 0..channels {
        data[(c * channels + c) * plane + centre] = s;
    }
    data
}

/// Gate parameters that can be reset to the scaled identity.
pub trait ScaledIdentity: Sized {
    fn scaled_identity(&self, s: f64) -> Result<Self>;
}

impl<T: Element> ScaledIdentity for WigDenseParams<T> {
    fn scaled_identity(&self, s: f64) -> Result<Self> {
        dense_gate_identity(self.features(), s)
    }
}

impl<T: Element> ScaledIdentity for WigConvParams<T> {
    fn scaled_identity(&self, s: f64) -> Result<Self> {
        conv_gate_identity(self.channels(), self.kernel_size(), s)
    }
}

/// Resets gate parameters to `W_g = sI` (or the delta kernel) and zero bias.
pub fn init_gate<P: ScaledIdentity>(p: &P, s: f64) -> Result<P> {
    p.scaled_identity(s)
}
