use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::{wig_conv_on_tape, wig_dense_on_tape, ActivationKind, BaselineActivation};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::init::{conv_gate_identity, dense_gate_identity, init_weights, InitPolicy};
use crate::tensor::{Element, Padding, Tensor, Unary};

use super::spec::{format_shape, Dim, LayerSpec, NetworkSpec, ShapeTrace};

/// What a parameter is, which decides whether weight decay touches it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    GateWeight,
    GateBias,
    /// PReLU slopes and the Swish β.
    Slope,
}

impl ParamRole {
    pub fn name(self) -> &'static str {
        match self {
            ParamRole::Weight => "weight",
            ParamRole::Bias => "bias",
            ParamRole::GateWeight => "gate_weight",
            ParamRole::GateBias => "gate_bias",
            ParamRole::Slope => "slope",
        }
    }

    pub fn decays(self) -> bool {
        matches!(self, ParamRole::Weight | ParamRole::GateWeight)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T: Element> {
    pub name: String,
    pub role: ParamRole,
    pub value: Tensor<T>,
}

#[derive(Clone, Copy, Debug)]
enum Act {
    Fixed(Unary),
    Swish { beta: usize },
    Prelu { alpha: usize },
    WigDense { weight: usize, bias: usize },
    WigConv { kernel: usize, bias: usize },
}

#[derive(Clone, Copy, Debug)]
enum Node {
    Dense {
        weight: usize,
        bias: usize,
    },
    Conv {
        weight: usize,
        bias: usize,
        stride: usize,
        dilation: usize,
        padding: Padding,
    },
    Act(Act),
    Dropout(f64),
    SpatialDropout(f64),
    SkipBegin,
    SkipEnd,
}

/// Whether stochastic layers are active.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

/// Handles produced by [`Network::forward_on_tape`].
#[derive(Clone, Debug)]
pub struct Forward {
    pub output: Var,
    /// One handle per parameter, in [`Network::params`] order.
    pub params: Vec<Var>,
    /// Gate masks of every WiG layer, for the sparsity penalty.
    pub gates: Vec<Var>,
}

/// A built network: the spec plus initialized parameters.
#[derive(Clone, Debug)]
pub struct Network<T: Element> {
    spec: NetworkSpec,
    trace: ShapeTrace,
    params: Vec<Param<T>>,
    nodes: Vec<Node>,
}

/// Builds `spec` with scratch-mode initialization.
pub fn build_network<T: Element>(spec: &NetworkSpec, seed: u64) -> Result<Network<T>> {
    Network::build(spec, seed, InitPolicy::scratch())
}

fn known(shape: &[Dim]) -> Vec<usize> {
    shape.iter().map(|d| d.known().unwrap_or(0)).collect()
}

impl<T: Element> Network<T> {
    pub fn build(spec: &NetworkSpec, seed: u64, policy: InitPolicy) -> Result<Self> {
        if spec.precision != T::PRECISION {
            return Err(Error::Config(format!(
                "spec declares {} parameters but the network was built at {}",
                spec.precision.name(),
                T::PRECISION.name()
            )));
        }
        let trace = spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params: Vec<Param<T>> = Vec::new();
        let mut nodes = Vec::with_capacity(spec.layers.len());
        let mut add = |name: String, role: ParamRole, value: Tensor<T>| {
            params.push(Param { name, role, value });
            params.len() - 1
        };
        for (i, layer) in spec.layers.iter().enumerate() {
            let input = known(trace.input_of(i));
            let prefix = format!("{i:02}.{}", layer.kind_name());
            let mut weights = |shape: &[usize], fan_in: usize, zero: bool| -> Result<Tensor<T>> {
                if zero {
                    Ok(Tensor::zeros(shape))
                } else {
                    init_weights(shape, fan_in, &mut rng)
                }
            };
            let node = match *layer {
                LayerSpec::Dense { units, zero_init } => {
                    let fan_in: usize = input.iter().product();
                    let w = weights(&[units, fan_in], fan_in, zero_init)?;
                    Node::Dense {
                        weight: add(format!("{prefix}.weight"), ParamRole::Weight, w),
                        bias: add(
                            format!("{prefix}.bias"),
                            ParamRole::Bias,
                            Tensor::zeros(&[units]),
                        ),
                    }
                }
                LayerSpec::Conv2d {
                    channels,
                    kernel,
                    stride,
                    dilation,
                    padding,
                    zero_init,
                } => {
                    let fan_in = input[0] * kernel * kernel;
                    let w = weights(&[channels, input[0], kernel, kernel], fan_in, zero_init)?;
                    Node::Conv {
                        weight: add(format!("{prefix}.weight"), ParamRole::Weight, w),
                        bias: add(
                            format!("{prefix}.bias"),
                            ParamRole::Bias,
                            Tensor::zeros(&[channels]),
                        ),
                        stride,
                        dilation,
                        padding,
                    }
                }
                LayerSpec::ConvPool { channels, kernel } => {
                    let out = channels.unwrap_or(input[0]);
                    let fan_in = input[0] * kernel * kernel;
                    let w = weights(&[out, input[0], kernel, kernel], fan_in, false)?;
                    Node::Conv {
                        weight: add(format!("{prefix}.weight"), ParamRole::Weight, w),
                        bias: add(
                            format!("{prefix}.bias"),
                            ParamRole::Bias,
                            Tensor::zeros(&[out]),
                        ),
                        stride: 2,
                        dilation: 1,
                        padding: Padding::Same,
                    }
                }
                LayerSpec::Activation { kind, gate_kernel } => {
                    let channels = input[0];
                    let act = match kind {
                        ActivationKind::Relu => Act::Fixed(Unary::Relu),
                        ActivationKind::LeakyRelu => {
                            Act::Fixed(BaselineActivation::leaky_relu().as_unary().expect("fixed"))
                        }
                        ActivationKind::Elu => {
                            Act::Fixed(BaselineActivation::elu().as_unary().expect("fixed"))
                        }
                        ActivationKind::Selu => Act::Fixed(Unary::Selu),
                        ActivationKind::Softplus => Act::Fixed(Unary::Softplus),
                        ActivationKind::Sil => Act::Fixed(Unary::Sil),
                        ActivationKind::Swish => Act::Swish {
                            beta: add(
                                format!("{prefix}.beta"),
                                ParamRole::Slope,
                                Tensor::full(
                                    &[1],
                                    T::from_f64_lossy(BaselineActivation::SWISH_BETA),
                                ),
                            ),
                        },
                        ActivationKind::Prelu => Act::Prelu {
                            alpha: add(
                                format!("{prefix}.alpha"),
                                ParamRole::Slope,
                                Tensor::full(
                                    &[channels],
                                    T::from_f64_lossy(BaselineActivation::PRELU_ALPHA),
                                ),
                            ),
                        },
                        ActivationKind::Wig if input.len() == 1 => {
                            let p = dense_gate_identity::<T>(channels, policy.gate_scale())?;
                            Act::WigDense {
                                weight: add(
                                    format!("{prefix}.gate_weight"),
                                    ParamRole::GateWeight,
                                    p.gate_weight().clone(),
                                ),
                                bias: add(
                                    format!("{prefix}.gate_bias"),
                                    ParamRole::GateBias,
                                    p.gate_bias().clone(),
                                ),
                            }
                        }
                        ActivationKind::Wig => {
                            let p = conv_gate_identity::<T>(
                                channels,
                                gate_kernel,
                                policy.gate_scale(),
                            )?;
                            Act::WigConv {
                                kernel: add(
                                    format!("{prefix}.gate_weight"),
                                    ParamRole::GateWeight,
                                    p.gate_kernel().clone(),
                                ),
                                bias: add(
                                    format!("{prefix}.gate_bias"),
                                    ParamRole::GateBias,
                                    p.gate_bias().clone(),
                                ),
                            }
                        }
                    };
                    Node::Act(act)
                }
                LayerSpec::Dropout { rate } => Node::Dropout(rate),
                LayerSpec::SpatialDropout { rate } => Node::SpatialDropout(rate),
                LayerSpec::SkipBegin => Node::SkipBegin,
                LayerSpec::SkipEnd => Node::SkipEnd,
            };
            nodes.push(node);
        }
        let net = Network {
            spec: spec.clone(),
            trace,
            params,
            nodes,
        };
        log::debug!("built network with {} parameters", net.param_count());
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &ShapeTrace {
        &self.trace
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn param_values(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Replaces all parameter values; shapes must match exactly.
    pub fn set_param_values(&mut self, values: Vec<Tensor<T>>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, v) in self.params.iter().zip(&values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Config(format!(
                    "parameter {}: expected shape {:?}, got {:?}",
                    p.name,
                    p.value.shape(),
                    v.shape()
                )));
            }
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = v;
        }
        Ok(())
    }

    /// Copies every parameter of `other` whose name and shape match one of
    /// ours; returns how many were copied.
    pub fn copy_params_from(&mut self, other: &Network<T>) -> usize {
        let mut copied = 0;
        for p in &mut self.params {
            if let Some(q) = other
                .params
                .iter()
                .find(|q| q.name == p.name && q.value.shape() == p.value.shape())
            {
                p.value = q.value.clone();
                copied += 1;
            }
        }
        copied
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let want = &self.trace.input;
        let ok = shape.len() == want.len() + 1
            && shape[0] > 0
            && shape[1..]
                .iter()
                .zip(want)
                .all(|(&s, d)| d.known().is_none_or(|k| k == s));
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension {
                op: "forward",
                msg: format!("input {shape:?} does not match [B,{}]", format_shape(want)),
            })
        }
    }

    /// Records the forward pass of a batch `input: [B, ...]`. Parameters are
    /// differentiable leaves when `trainable`, constants otherwise.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        mode: &mut Mode<'_>,
        trainable: bool,
    ) -> Result<Forward> {
        self.check_input(tape.shape(input)?)?;
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        let mut gates = Vec::new();
        let mut skips = Vec::new();
        let mut x = input;
        for node in &self.nodes {
            x = match *node {
                Node::Dense { weight, bias } => {
                    let shape = tape.shape(x)?;
                    if shape.len() != 2 {
                        let b = shape[0];
                        let rest = shape[1..].iter().product();
                        x = tape.reshape(x, &[b, rest])?;
                    }
                    tape.linear(x, params[weight], Some(params[bias]))?
                }
                Node::Conv {
                    weight,
                    bias,
                    stride,
                    dilation,
                    padding,
                } => tape.conv2d(
                    x,
                    params[weight],
                    Some(params[bias]),
                    stride,
                    dilation,
                    padding,
                )?,
                Node::Act(act) => match act {
                    Act::Fixed(f) => tape.unary(x, f)?,
                    Act::Swish { beta } => tape.swish(x, params[beta])?,
                    Act::Prelu { alpha } => tape.prelu(x, params[alpha])?,
                    Act::WigDense { weight, bias } => {
                        let g = wig_dense_on_tape(tape, x, params[weight], params[bias])?;
                        gates.push(g.gate);
                        g.output
                    }
                    Act::WigConv { kernel, bias } => {
                        let g = wig_conv_on_tape(tape, x, params[kernel], params[bias])?;
                        gates.push(g.gate);
                        g.output
                    }
                },
                Node::Dropout(rate) | Node::SpatialDropout(rate) => match mode {
                    Mode::Train(rng) if rate > 0.0 => {
                        let shape = tape.shape(x)?;
                        let group = match node {
                            Node::SpatialDropout(_) if shape.len() == 4 => shape[2] * shape[3],
                            _ => 1,
                        };
                        let mask =
                            dropout_mask::<T>(shape.iter().product(), group, rate, &mut **rng);
                        tape.mul_mask(x, mask)?
                    }
                    _ => x,
                },
                Node::SkipBegin => {
                    skips.push(x);
                    x
                }
                Node::SkipEnd => {
                    let saved = skips.pop().expect("validated nesting");
                    tape.add(x, saved)?
                }
            };
        }
        Ok(Forward {
            output: x,
            params,
            gates,
        })
    }

    /// Eval-mode forward of a batch; reads no randomness.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let out = self
            .forward_on_tape(&mut tape, x, &mut Mode::Eval, false)?
            .output;
        Ok(tape.value(out)?.clone())
    }

    /// Forward of a batch in the given mode.
    pub fn forward(&self, input: &Tensor<T>, mode: &mut Mode<'_>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let out = self.forward_on_tape(&mut tape, x, mode, false)?.output;
        Ok(tape.value(out)?.clone())
    }

    /// Mean of every WiG gate element over an eval-mode pass, or `None`
    /// when the network has no gates.
    pub fn mean_gate(&self, input: &Tensor<T>) -> Result<Option<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let fwd = self.forward_on_tape(&mut tape, x, &mut Mode::Eval, false)?;
        let (mut sum, mut count) = (0.0, 0usize);
        for g in &fwd.gates {
            let v = tape.value(*g)?;
            sum += v.sum().to_f64_lossy();
            count += v.numel();
        }
        Ok((count > 0).then(|| sum / count as f64))
    }
}

/// Inverted-dropout mask: consecutive runs of `group` elements are kept or
/// dropped together, and kept elements are scaled by `1 / (1 - rate)`.
fn dropout_mask<T: Element>(
    len: usize,
    group: usize,
    rate: f64,
    rng: &mut dyn RngCore,
) -> Arc<[T]> {
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mut mask = Vec::with_capacity(len);
    for _ in 0..len / group {
        let v = if rng.random::<f64>() < rate {
            T::zero()
        } else {
            keep
        };
        mask.extend(std::iter::repeat_n(v, group));
    }
    mask.into()
}
