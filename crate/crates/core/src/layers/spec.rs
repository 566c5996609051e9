//! Declarative network descriptions and their text format.
//!
//! ```text
//! input shape=1,*,*
//! loss kind=mse
//! precision value=f32
//! skip_begin
//! conv2d channels=32 kernel=3 dilation=2
//! activation name=wig gate_kernel=1
//! conv2d channels=1 kernel=3
//! skip_end
//! ```
//!
//! `*` marks a free spatial extent. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::tensor::{Padding, Precision};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    CategoricalCrossEntropy,
    Mse,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::CategoricalCrossEntropy => "categorical_cross_entropy",
            LossKind::Mse => "mse",
        }
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "categorical_cross_entropy" => Ok(LossKind::CategoricalCrossEntropy),
            "mse" => Ok(LossKind::Mse),
            other => Err(format!("unknown loss `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Dense {
        units: usize,
        zero_init: bool,
    },
    Conv2d {
        channels: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        padding: Padding,
        zero_init: bool,
    },
    Activation {
        kind: ActivationKind,
        /// Gate kernel size when a WiG follows a convolution.
        gate_kernel: usize,
    },
    Dropout {
        rate: f64,
    },
    /// Drops whole channels.
    SpatialDropout {
        rate: f64,
    },
    /// Strided convolution used in place of pooling: SAME padding,
    /// stride 2, channel count preserved unless given.
    ConvPool {
        channels: Option<usize>,
        kernel: usize,
    },
    SkipBegin,
    /// Adds the tensor saved by the matching `SkipBegin`.
    SkipEnd,
}

pub const DEFAULT_GATE_KERNEL: usize = 3;

impl LayerSpec {
    pub fn conv(channels: usize, kernel: usize, dilation: usize) -> Self {
        LayerSpec::Conv2d {
            channels,
            kernel,
            stride: 1,
            dilation,
            padding: Padding::Same,
            zero_init: false,
        }
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense {
            units,
            zero_init: false,
        }
    }

    pub fn activation(kind: ActivationKind, gate_kernel: usize) -> Self {
        LayerSpec::Activation { kind, gate_kernel }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Activation { .. } => "activation",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::SpatialDropout { .. } => "spatial_dropout",
            LayerSpec::ConvPool { .. } => "conv_pool",
            LayerSpec::SkipBegin => "skip_begin",
            LayerSpec::SkipEnd => "skip_end",
        }
    }

    fn parse(kind: &str, args: &mut Args) -> std::result::Result<Self, String> {
        let layer = match kind {
            "dense" => LayerSpec::Dense {
                units: args.required("units")?,
                zero_init: args.zero_init()?,
            },
            "conv2d" => LayerSpec::Conv2d {
                channels: args.required("channels")?,
                kernel: args.optional("kernel")?.unwrap_or(3),
                stride: args.optional("stride")?.unwrap_or(1),
                dilation: args.optional("dilation")?.unwrap_or(1),
                padding: args.optional("padding")?.unwrap_or(Padding::Same),
                zero_init: args.zero_init()?,
            },
            "activation" => LayerSpec::Activation {
                kind: args.required("name")?,
                gate_kernel: args.optional("gate_kernel")?.unwrap_or(DEFAULT_GATE_KERNEL),
            },
            "dropout" => LayerSpec::Dropout {
                rate: args.required("rate")?,
            },
            "spatial_dropout" => LayerSpec::SpatialDropout {
                rate: args.required("rate")?,
            },
            "conv_pool" => LayerSpec::ConvPool {
                channels: args.optional("channels")?,
                kernel: args.optional("kernel")?.unwrap_or(3),
            },
            "skip_begin" => LayerSpec::SkipBegin,
            "skip_end" => LayerSpec::SkipEnd,
            other => return Err(format!("unknown layer kind `{other}`")),
        };
        Ok(layer)
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let init = |z: bool| if z { " init=zeros" } else { "" };
        match *self {
            LayerSpec::Dense { units, zero_init } => {
                write!(f, "dense units={units}{}", init(zero_init))
            }
            LayerSpec::Conv2d {
                channels,
                kernel,
                stride,
                dilation,
                padding,
                zero_init,
            } => write!(
                f,
                "conv2d channels={channels} kernel={kernel} stride={stride} \
                 dilation={dilation} padding={padding}{}",
                init(zero_init)
            ),
            LayerSpec::Activation { kind, gate_kernel } => {
                write!(f, "activation name={kind} gate_kernel={gate_kernel}")
            }
            LayerSpec::Dropout { rate } => write!(f, "dropout rate={rate}"),
            LayerSpec::SpatialDropout { rate } => write!(f, "spatial_dropout rate={rate}"),
            LayerSpec::ConvPool { channels, kernel } => {
                write!(f, "conv_pool kernel={kernel}")?;
                match channels {
                    Some(c) => write!(f, " channels={c}"),
                    None => Ok(()),
                }
            }
            LayerSpec::SkipBegin | LayerSpec::SkipEnd => f.write_str(self.kind_name()),
        }
    }
}

/// One extent of a per-sample shape. Free extents carry an identity so
/// that a skip connection can tell whether two free extents agree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    Known(usize),
    Free(u32),
}

impl Dim {
    pub fn known(self) -> Option<usize> {
        match self {
            Dim::Known(n) => Some(n),
            Dim::Free(_) => None,
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Known(n) => write!(f, "{n}"),
            Dim::Free(_) => f.write_str("*"),
        }
    }
}

/// Shape of one sample (no batch axis).
pub type SampleShape = Vec<Dim>;

pub fn format_shape(shape: &[Dim]) -> String {
    shape
        .iter()
        .map(Dim::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    /// Per-sample input shape: `[N]` or `[C, H, W]`.
    pub input_shape: SampleShape,
    pub layers: Vec<LayerSpec>,
    pub loss: LossKind,
    pub precision: Precision,
}

/// Shapes flowing into and out of every layer, as inferred by
/// [`NetworkSpec::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeTrace {
    pub input: SampleShape,
    /// `outputs[i]` is the shape after layer `i`.
    pub outputs: Vec<SampleShape>,
}

impl ShapeTrace {
    pub fn output(&self) -> &SampleShape {
        self.outputs.last().unwrap_or(&self.input)
    }

    pub fn input_of(&self, layer: usize) -> &SampleShape {
        if layer == 0 {
            &self.input
        } else {
            &self.outputs[layer - 1]
        }
    }
}

fn conv_extent(
    dim: Dim,
    kernel: usize,
    stride: usize,
    dilation: usize,
    padding: Padding,
    fresh: &mut u32,
) -> std::result::Result<Dim, String> {
    let span = dilation * (kernel - 1) + 1;
    match (dim, padding) {
        (Dim::Known(n), Padding::Same) => Ok(Dim::Known(n.div_ceil(stride))),
        (Dim::Known(n), Padding::Valid) => {
            if span > n {
                return Err(format!("kernel span {span} exceeds input extent {n}"));
            }
            Ok(Dim::Known((n - span) / stride + 1))
        }
        (Dim::Free(id), Padding::Same) if stride == 1 => Ok(Dim::Free(id)),
        (Dim::Free(_), _) => {
            *fresh += 1;
            Ok(Dim::Free(*fresh))
        }
    }
}

impl NetworkSpec {
    pub fn new(input_shape: SampleShape, layers: Vec<LayerSpec>, loss: LossKind) -> Self {
        NetworkSpec {
            input_shape,
            layers,
            loss,
            precision: Precision::F32,
        }
    }

    /// Replaces every activation in the spec by `kind`.
    pub fn with_activation(mut self, kind: ActivationKind) -> Self {
        for layer in &mut self.layers {
            if let LayerSpec::Activation { kind: k, .. } = layer {
                *k = kind;
            }
        }
        self
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    /// Checks shapes, skip nesting and drop rates, returning the inferred
    /// per-layer shapes.
    pub fn validate(&self) -> Result<ShapeTrace> {
        let input = self.input_shape.clone();
        if !matches!(input.len(), 1 | 3) {
            return Err(Error::Config(format!(
                "input shape must be [N] or [C,H,W], got [{}]",
                format_shape(&input)
            )));
        }
        if !matches!(input[0], Dim::Known(n) if n > 0) {
            return Err(Error::Config(
                "the leading input extent must be fixed".into(),
            ));
        }
        let mut fresh = input
            .iter()
            .filter_map(|d| match d {
                Dim::Free(id) => Some(*id),
                Dim::Known(_) => None,
            })
            .max()
            .unwrap_or(0);
        let mut skips: Vec<(usize, SampleShape)> = Vec::new();
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let err = |msg: String| Error::Spec { layer: i, msg };
            let needs_map = |cur: &SampleShape| {
                if cur.len() == 3 {
                    Ok(())
                } else {
                    Err(err(format!(
                        "{} needs a [C,H,W] input, got [{}]",
                        layer.kind_name(),
                        format_shape(cur)
                    )))
                }
            };
            cur = match *layer {
                LayerSpec::Dense { units, .. } => {
                    if units == 0 {
                        return Err(err("dense units must be positive".into()));
                    }
                    if cur.iter().any(|d| d.known().is_none()) {
                        return Err(err(format!(
                            "dense needs a fixed input shape, got [{}]",
                            format_shape(&cur)
                        )));
                    }
                    vec![Dim::Known(units)]
                }
                LayerSpec::Conv2d {
                    channels,
                    kernel,
                    stride,
                    dilation,
                    padding,
                    ..
                } => {
                    needs_map(&cur)?;
                    if channels == 0 || kernel == 0 || stride == 0 || dilation == 0 {
                        return Err(err(
                            "channels, kernel, stride and dilation must be positive".into(),
                        ));
                    }
                    let h = conv_extent(cur[1], kernel, stride, dilation, padding, &mut fresh)
                        .map_err(err)?;
                    let w = conv_extent(cur[2], kernel, stride, dilation, padding, &mut fresh)
                        .map_err(err)?;
                    vec![Dim::Known(channels), h, w]
                }
                LayerSpec::ConvPool { channels, kernel } => {
                    needs_map(&cur)?;
                    if kernel == 0 || channels == Some(0) {
                        return Err(err("conv_pool kernel and channels must be positive".into()));
                    }
                    let h = conv_extent(cur[1], kernel, 2, 1, Padding::Same, &mut fresh)
                        .map_err(err)?;
                    let w = conv_extent(cur[2], kernel, 2, 1, Padding::Same, &mut fresh)
                        .map_err(err)?;
                    vec![channels.map_or(cur[0], Dim::Known), h, w]
                }
                LayerSpec::Activation { kind, gate_kernel } => {
                    if kind == ActivationKind::Wig && cur.len() == 3 && gate_kernel % 2 == 0 {
                        return Err(err(format!("gate kernel must be odd, got {gate_kernel}")));
                    }
                    cur
                }
                LayerSpec::Dropout { rate } | LayerSpec::SpatialDropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(err(format!("drop rate must lie in [0, 1), got {rate}")));
                    }
                    cur
                }
                LayerSpec::SkipBegin => {
                    skips.push((i, cur.clone()));
                    cur
                }
                LayerSpec::SkipEnd => {
                    let Some((_, saved)) = skips.pop() else {
                        return Err(err("skip_end without a matching skip_begin".into()));
                    };
                    if saved != cur {
                        return Err(err(format!(
                            "skip_end adds [{}] to [{}]",
                            format_shape(&saved),
                            format_shape(&cur)
                        )));
                    }
                    cur
                }
            };
            outputs.push(cur.clone());
        }
        if let Some((i, _)) = skips.pop() {
            return Err(Error::Spec {
                layer: i,
                msg: "skip_begin is never closed".into(),
            });
        }
        let out = outputs.last().unwrap_or(&input);
        if self.loss == LossKind::CategoricalCrossEntropy
            && !(out.len() == 1 && matches!(out[0], Dim::Known(k) if k >= 2))
        {
            return Err(Error::Config(format!(
                "categorical_cross_entropy needs at least two output logits, got [{}]",
                format_shape(out)
            )));
        }
        Ok(ShapeTrace { input, outputs })
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input shape={}", format_shape(&self.input_shape))?;
        writeln!(f, "loss kind={}", self.loss.name())?;
        writeln!(f, "precision value={}", self.precision.name())?;
        for layer in &self.layers {
            writeln!(f, "{layer}")?;
        }
        Ok(())
    }
}

struct Args {
    values: BTreeMap<String, String>,
}

impl Args {
    fn parse(tokens: &[&str]) -> std::result::Result<Self, String> {
        let mut values = BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{tok}`"))?;
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(format!("duplicate key `{k}`"));
            }
        }
        Ok(Args { values })
    }

    fn optional<V: FromStr>(&mut self, key: &str) -> std::result::Result<Option<V>, String>
    where
        V::Err: fmt::Display,
    {
        self.values
            .remove(key)
            .map(|v| v.parse().map_err(|e| format!("{key}={v}: {e}")))
            .transpose()
    }

    fn required<V: FromStr>(&mut self, key: &str) -> std::result::Result<V, String>
    where
        V::Err: fmt::Display,
    {
        self.optional(key)?
            .ok_or_else(|| format!("missing `{key}`"))
    }

    fn zero_init(&mut self) -> std::result::Result<bool, String> {
        match self.values.remove("init").as_deref() {
            None | Some("he") => Ok(false),
            Some("zeros") => Ok(true),
            Some(other) => Err(format!("unknown init `{other}` (expected he or zeros)")),
        }
    }

    fn finish(self) -> std::result::Result<(), String> {
        match self.values.keys().next() {
            Some(k) => Err(format!("unexpected key `{k}`")),
            None => Ok(()),
        }
    }
}

fn parse_shape(s: &str) -> std::result::Result<SampleShape, String> {
    let mut free = 0;
    s.split(',')
        .map(|part| match part.trim() {
            "*" => {
                free += 1;
                Ok(Dim::Free(free))
            }
            n => match n.parse::<usize>() {
                Ok(v) if v > 0 => Ok(Dim::Known(v)),
                _ => Err(format!("bad extent `{n}`")),
            },
        })
        .collect()
}

impl FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut input = None;
        let mut loss = None;
        let mut precision = None;
        let mut layers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", lineno + 1));
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let mut args = Args::parse(&tokens[1..]).map_err(at)?;
            match tokens[0] {
                "input" => {
                    let shape: String = args.required("shape").map_err(at)?;
                    let shape = parse_shape(&shape).map_err(at)?;
                    if input.replace(shape).is_some() {
                        return Err(at("input declared twice".into()));
                    }
                }
                "loss" => {
                    let kind: LossKind = args.required("kind").map_err(at)?;
                    if loss.replace(kind).is_some() {
                        return Err(at("a network has exactly one loss".into()));
                    }
                }
                "precision" => {
                    let p: Precision = args.required("value").map_err(at)?;
                    if precision.replace(p).is_some() {
                        return Err(at("precision declared twice".into()));
                    }
                }
                kind => layers.push(LayerSpec::parse(kind, &mut args).map_err(at)?),
            }
            args.finish().map_err(at)?;
        }
        let spec = NetworkSpec {
            input_shape: input.ok_or_else(|| Error::Config("missing `input` line".into()))?,
            loss: loss.ok_or_else(|| Error::Config("missing `loss` line".into()))?,
            precision: precision.unwrap_or(Precision::F32),
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(format!("unknown scale `{other}` (expected desk or paper)")),
        }
    }
}

/// VGG-like classifier on `3×32×32` input: blocks of two 3×3 convolutions,
/// a stride-2 convolution in place of pooling and spatial dropout whose
/// rate grows with depth, followed by a dense head.
pub fn reference_classifier(
    scale: Scale,
    classes: usize,
    activation: ActivationKind,
) -> NetworkSpec {
    let (widths, convs, head, gate_kernel): (&[usize], usize, usize, usize) = match scale {
        Scale::Desk => (&[32, 64, 128], 2, 128, 1),
        Scale::Paper => (&[96, 192, 384], 3, 512, 3),
    };
    let rates = [0.1, 0.2, 0.3];
    let act = LayerSpec::activation(activation, gate_kernel);
    let mut layers = Vec::new();
    for (&c, &rate) in widths.iter().zip(&rates) {
        for _ in 0..convs {
            layers.push(LayerSpec::conv(c, 3, 1));
            layers.push(act);
        }
        layers.push(LayerSpec::ConvPool {
            channels: None,
            kernel: 3,
        });
        layers.push(LayerSpec::SpatialDropout { rate });
    }
    layers.extend([
        LayerSpec::dense(head),
        act,
        LayerSpec::Dropout { rate: 0.4 },
        LayerSpec::dense(classes),
    ]);
    NetworkSpec::new(
        vec![Dim::Known(3), Dim::Known(32), Dim::Known(32)],
        layers,
        LossKind::CategoricalCrossEntropy,
    )
}

/// Dilations of the hidden convolutions followed by the output
/// convolution of the reference denoiser.
pub const DENOISER_DILATIONS: [usize; 7] = [1, 2, 3, 4, 3, 2, 1];

/// Residual grayscale denoiser: seven dilated 3×3 convolutions (the last
/// one maps back to a single channel) wrapped in a skip connection, so the
/// network predicts the noise to remove.
pub fn reference_denoiser(scale: Scale, activation: ActivationKind) -> NetworkSpec {
    let (width, gate_kernel) = match scale {
        Scale::Desk => (32, 1),
        Scale::Paper => (64, 3),
    };
    let mut layers = vec![LayerSpec::SkipBegin];
    let last = DENOISER_DILATIONS.len() - 1;
    for (i, &d) in DENOISER_DILATIONS.iter().enumerate() {
        if i == last {
            layers.push(LayerSpec::conv(1, 3, d));
        } else {
            layers.push(LayerSpec::conv(width, 3, d));
            layers.push(LayerSpec::activation(activation, gate_kernel));
        }
    }
    layers.push(LayerSpec::SkipEnd);
    NetworkSpec::new(
        vec![Dim::Known(1), Dim::Free(1), Dim::Free(2)],
        layers,
        LossKind::Mse,
    )
}

/// Side length of the square region of input pixels that influences one
/// output pixel.
pub fn receptive_field(spec: &NetworkSpec) -> usize {
    let mut field = 1;
    let mut jump = 1;
    for layer in &spec.layers {
        let (kernel, stride, dilation) = match *layer {
            LayerSpec::Conv2d {
                kernel,
                stride,
                dilation,
                ..
            } => (kernel, stride, dilation),
            LayerSpec::ConvPool { kernel, .. } => (kernel, 2, 1),
            LayerSpec::Activation {
                kind: ActivationKind::Wig,
                gate_kernel,
            } => (gate_kernel, 1, 1),
            _ => continue,
        };
        field += dilation * (kernel - 1) * jump;
        jump *= stride;
    }
    field
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = "\
            # tiny residual net\n\
            input shape=1,*,*\n\
            loss kind=mse\n\
            precision value=f32\n\
            skip_begin\n\
            conv2d channels=32 kernel=3 dilation=2\n\
            activation name=wig gate_kernel=1   # gated\n\
            conv2d channels=1 kernel=3\n\
            skip_end\n";
        let spec: NetworkSpec = text.parse().unwrap();
        assert_eq!(spec.layers.len(), 5);
        assert_eq!(spec.loss, LossKind::Mse);
        assert_eq!(
            spec.layers[2],
            LayerSpec::Activation {
                kind: ActivationKind::Wig,
                gate_kernel: 1
            }
        );
        let again: NetworkSpec = spec.to_string().parse().unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn rejects_malformed_files() {
        let base = "input shape=4\nloss kind=mse\n";
        for bad in [
            "loss kind=mse\n",
            "input shape=4\n",
            "input shape=4\nloss kind=mse\nloss kind=mse\n",
            "input shape=4\nloss kind=hinge\n",
            "input shape=0\nloss kind=mse\n",
        ] {
            assert!(bad.parse::<NetworkSpec>().is_err(), "{bad}");
        }
        for layer in [
            "dense",
            "dense units=x",
            "dense units=3 colour=red",
            "dense units=3 init=ones",
            "pool size=2",
            "activation name=gelu",
            "dropout rate=1.0",
            "dropout rate=-0.1",
            "skip_end",
            "skip_begin",
            "conv2d channels=2",
        ] {
            let text = format!("{base}{layer}\n");
            assert!(text.parse::<NetworkSpec>().is_err(), "{layer}");
        }
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let spec = NetworkSpec::new(
            vec![Dim::Known(2), Dim::Known(8), Dim::Known(8)],
            vec![
                LayerSpec::conv(4, 3, 1),
                LayerSpec::SkipBegin,
                LayerSpec::ConvPool {
                    channels: None,
                    kernel: 3,
                },
                LayerSpec::SkipEnd,
            ],
            LossKind::Mse,
        );
        match spec.validate() {
            Err(Error::Spec { layer, .. }) => assert_eq!(layer, 3),
            other => panic!("{other:?}"),
        }
        let spec = NetworkSpec::new(
            vec![Dim::Known(2), Dim::Free(1), Dim::Free(2)],
            vec![LayerSpec::dense(3)],
            LossKind::Mse,
        );
        assert!(matches!(spec.validate(), Err(Error::Spec { layer: 0, .. })));
        let spec = NetworkSpec::new(
            vec![Dim::Known(5)],
            vec![LayerSpec::conv(4, 3, 1)],
            LossKind::Mse,
        );
        assert!(matches!(spec.validate(), Err(Error::Spec { layer: 0, .. })));
    }

    #[test]
    fn free_extents_track_identity_through_strides() {
        let spec = NetworkSpec::new(
            vec![Dim::Known(1), Dim::Free(1), Dim::Free(2)],
            vec![
                LayerSpec::SkipBegin,
                LayerSpec::ConvPool {
                    channels: None,
                    kernel: 3,
                },
                LayerSpec::SkipEnd,
            ],
            LossKind::Mse,
        );
        assert!(spec.validate().is_err());
    }

    #[test]
    fn desk_classifier_shapes() {
        for classes in [10, 100] {
            let spec = reference_classifier(Scale::Desk, classes, ActivationKind::Wig);
            let trace = spec.validate().unwrap();
            assert_eq!(trace.output(), &vec![Dim::Known(classes)]);
            let spatial: Vec<usize> = spec
                .layers
                .iter()
                .enumerate()
                .filter(|(_, l)| matches!(l, LayerSpec::ConvPool { .. }))
                .map(|(i, _)| trace.outputs[i][1].known().unwrap())
                .collect();
            assert_eq!(spatial, [16, 8, 4]);
        }
        let rates: Vec<f64> = reference_classifier(Scale::Desk, 10, ActivationKind::Relu)
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::SpatialDropout { rate } => Some(*rate),
                _ => None,
            })
            .collect();
        assert_eq!(rates, [0.1, 0.2, 0.3]);
        reference_classifier(Scale::Paper, 10, ActivationKind::Wig)
            .validate()
            .unwrap();
    }

    #[test]
    fn desk_denoiser_structure() {
        let spec = reference_denoiser(Scale::Desk, ActivationKind::Relu);
        let trace = spec.validate().unwrap();
        assert_eq!(trace.output(), &spec.input_shape);
        let convs = spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv2d { .. }))
            .count();
        assert_eq!(convs, 7);
        assert_eq!(
            receptive_field(&spec),
            1 + 2 * DENOISER_DILATIONS.iter().sum::<usize>()
        );
        assert_eq!(receptive_field(&spec), 33);
        reference_denoiser(Scale::Paper, ActivationKind::Wig)
            .validate()
            .unwrap();
    }

    #[test]
    fn activation_override_touches_every_slot() {
        let spec = reference_classifier(Scale::Desk, 10, ActivationKind::Wig)
            .with_activation(ActivationKind::Relu);
        assert!(spec.layers.iter().all(|l| !matches!(
            l,
            LayerSpec::Activation {
                kind: ActivationKind::Wig,
                ..
            }
        )));
    }
}
