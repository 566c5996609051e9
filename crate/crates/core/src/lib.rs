//! Weighted sigmoid gate (WiG) activations and the small deep-learning
//! stack needed to train and certify them.
//!
//! * [`tensor`]: row-major tensors, gemm and convolution kernels, WIGT I/O
//! * [`autodiff`]: tape-based reverse-mode differentiation
//! * [`gradcheck`]: central finite differences
//! * [`activations`]: WiG (dense, convolutional, scalar) and baselines
//! * [`init`], [`layers`], [`optim`]: networks and their training
//! * [`data`], [`metrics`]: datasets, noise synthesis, PSNR/SSIM

pub mod activations;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod fsutil;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod metrics;
pub mod optim;
pub mod tensor;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use tensor::{Element, Padding, Precision, Tensor};
