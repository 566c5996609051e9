//! Layer catalogue, network specs and the reference topologies.

mod checkpoint;
mod network;
mod spec;

pub use checkpoint::{load_checkpoint, read_checkpoint_spec, save_checkpoint};
pub use network::{build_network, Forward, Mode, Network, Param, ParamRole};
pub use spec::{
    format_shape, receptive_field, reference_classifier, reference_denoiser, Dim, LayerSpec,
    LossKind, NetworkSpec, SampleShape, Scale, ShapeTrace, DEFAULT_GATE_KERNEL, DENOISER_DILATIONS,
};
