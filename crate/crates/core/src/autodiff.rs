//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every forward operation appends a node holding its value and the
//! indices of its inputs. Because inputs must already be on the tape, the
//! node list is topologically ordered by construction and `backward` is a
//! single reverse sweep. Each [`Op`] variant has exactly one backward rule
//! in [`Tape::backward`].

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::elementwise::sigmoid_scalar;
use crate::tensor::kernels::{
    conv2d_forward, conv2d_grad_bias, conv2d_grad_input, conv2d_grad_kernel, split_batch,
};
use crate::tensor::{ConvGeometry, Element, Layout, Padding, Tensor, Unary};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a specific [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: usize,
}

enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Unary(usize, Unary),
    MatMul(usize, usize),
    Transpose(usize),
    /// `x · wᵀ (+ b)` with `x: [B, in]`, `w: [out, in]`.
    Linear {
        x: usize,
        w: usize,
        b: Option<usize>,
    },
    AddRowBias(usize, usize),
    Conv2d {
        input: usize,
        kernel: usize,
        bias: Option<usize>,
        geom: ConvGeometry,
        batch: usize,
    },
    Swish {
        x: usize,
        beta: usize,
    },
    PRelu {
        x: usize,
        alpha: usize,
    },
    Reshape(usize),
    Sum(usize),
    SumSquares(usize),
    MulMask(usize, Arc<[T]>),
    SoftmaxCrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Mse {
        pred: usize,
        target: Tensor<T>,
    },
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Recording of one forward computation.
pub struct Tape<T: Element> {
    id: u32,
    nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Channel index of flat element `i` for a tensor of `shape`, where the
/// channel axis is 0 for rank ≤ 1 and 1 otherwise.
fn channel_of(shape: &[usize], i: usize) -> usize {
    match shape.len() {
        0 | 1 => i,
        _ => {
            let inner: usize = shape[2..].iter().product();
            (i / inner) % shape[1]
        }
    }
}

fn channel_count(shape: &[usize]) -> usize {
    match shape.len() {
        0 => 1,
        1 => shape[0],
        _ => shape[1],
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Contract(format!(
                "value {v:?} was not recorded on this tape"
            )));
        }
        Ok(v.index)
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// Differentiable leaf (parameter or input under test).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: true,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// Leaf that never receives a gradient (data, targets).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: false,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>> {
        Ok(&self.nodes[self.index(v)?].value)
    }

    pub fn shape(&self, v: Var) -> Result<&[usize]> {
        Ok(self.value(v)?.shape())
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(&Tensor<T>, &Tensor<T>) -> Result<Tensor<T>>,
        op: impl FnOnce(usize, usize) -> Op<T>,
    ) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let value = f(&self.nodes[ia].value, &self.nodes[ib].value).map_err(|e| match e {
            Error::ShapeMismatch { lhs, rhs, .. } => Error::ShapeMismatch { op: name, lhs, rhs },
            e => e,
        })?;
        Ok(self.push(op(ia, ib), value, &[ia, ib]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", crate::tensor::add, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", crate::tensor::sub, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", crate::tensor::mul, Op::Mul)
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        let ia = self.index(a)?;
        let value = crate::tensor::scale(&self.nodes[ia].value, factor);
        Ok(self.push(Op::Scale(ia, factor), value, &[ia]))
    }

    pub fn unary(&mut self, a: Var, f: Unary) -> Result<Var> {
        let ia = self.index(a)?;
        let value = self.nodes[ia].value.map(|x| f.apply(x));
        Ok(self.push(Op::Unary(ia, f), value, &[ia]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "matmul", crate::tensor::matmul, Op::MatMul)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let x = &self.nodes[ia].value;
        let &[m, n] = x.shape() else {
            return Err(Error::dim(
                "transpose",
                format!("expected a matrix, got {:?}", x.shape()),
            ));
        };
        let d = x.data();
        let value = Tensor::from_fn(&[n, m], |i| d[(i % m) * n + i / m]);
        Ok(self.push(Op::Transpose(ia), value, &[ia]))
    }

    /// Affine map `x · wᵀ + b` over the rows of `x: [B, in]` with
    /// `w: [out, in]` and `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (ix, iw) = (self.index(x)?, self.index(w)?);
        let ib = b.map(|b| self.index(b)).transpose()?;
        let xs = self.nodes[ix].value.shape();
        let ws = self.nodes[iw].value.shape();
        let (&[rows, fan_in], &[fan_out, w_in]) = (xs, ws) else {
            return Err(Error::shape("linear", xs, ws));
        };
        if fan_in != w_in {
            return Err(Error::shape("linear", xs, ws));
        }
        if let Some(ib) = ib {
            let bs = self.nodes[ib].value.shape();
            if bs != [fan_out] {
                return Err(Error::shape("linear bias", bs, &[fan_out]));
            }
        }
        let mut out = vec![T::zero(); rows * fan_out];
        T::gemm(
            rows,
            fan_in,
            fan_out,
            self.nodes[ix].value.data(),
            Layout::Normal,
            self.nodes[iw].value.data(),
            Layout::Transposed,
            &mut out,
            false,
        );
        if let Some(ib) = ib {
            let bias = self.nodes[ib].value.data();
            for row in out.chunks_exact_mut(fan_out) {
                row.iter_mut().zip(bias).for_each(|(v, &b)| *v = *v + b);
            }
        }
        let value = Tensor::from_parts(vec![rows, fan_out], out);
        let mut inputs = vec![ix, iw];
        inputs.extend(ib);
        Ok(self.push(
            Op::Linear {
                x: ix,
                w: iw,
                b: ib,
            },
            value,
            &inputs,
        ))
    }

    /// Adds `b: [N]` to every row of `x: [B, N]`.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (ix, ib) = (self.index(x)?, self.index(b)?);
        let xs = self.nodes[ix].value.shape();
        let bs = self.nodes[ib].value.shape();
        if xs.len() != 2 || bs != [xs[1]] {
            return Err(Error::shape("add_row_bias", xs, bs));
        }
        let n = xs[1];
        let bias = self.nodes[ib].value.data();
        let data: Vec<T> = self.nodes[ix]
            .value
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bias[i % n])
            .collect();
        let value = Tensor::from_parts(xs.to_vec(), data);
        Ok(self.push(Op::AddRowBias(ix, ib), value, &[ix, ib]))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        dilation: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (ii, ik) = (self.index(input)?, self.index(kernel)?);
        let ib = bias.map(|b| self.index(b)).transpose()?;
        let (batch, chw, batched) = split_batch(self.nodes[ii].value.shape())?;
        let geom = ConvGeometry::new(
            &chw,
            self.nodes[ik].value.shape(),
            stride,
            dilation,
            padding,
        )?;
        if let Some(ib) = ib {
            let bs = self.nodes[ib].value.shape();
            if bs != [geom.out_channels] {
                return Err(Error::shape("conv2d bias", bs, &[geom.out_channels]));
            }
        }
        let out = conv2d_forward(
            self.nodes[ii].value.data(),
            batch,
            self.nodes[ik].value.data(),
            ib.map(|ib| self.nodes[ib].value.data()),
            &geom,
        );
        let mut shape = vec![geom.out_channels, geom.out_h, geom.out_w];
        if batched {
            shape.insert(0, batch);
        }
        let mut inputs = vec![ii, ik];
        inputs.extend(ib);
        Ok(self.push(
            Op::Conv2d {
                input: ii,
                kernel: ik,
                bias: ib,
                geom,
                batch,
            },
            Tensor::from_parts(shape, out),
            &inputs,
        ))
    }

    /// `x · σ(β x)` with a single-element trainable `beta`.
    pub fn swish(&mut self, x: Var, beta: Var) -> Result<Var> {
        let (ix, ibeta) = (self.index(x)?, self.index(beta)?);
        let b = self.nodes[ibeta].value.item()?;
        let value = self.nodes[ix].value.map(|v| v * sigmoid_scalar(b * v));
        Ok(self.push(Op::Swish { x: ix, beta: ibeta }, value, &[ix, ibeta]))
    }

    /// Parametric ReLU with one slope per channel (axis 1, or axis 0 for
    /// vectors).
    pub fn prelu(&mut self, x: Var, alpha: Var) -> Result<Var> {
        let (ix, ia) = (self.index(x)?, self.index(alpha)?);
        let shape = self.nodes[ix].value.shape().to_vec();
        let channels = channel_count(&shape);
        let alpha_t = &self.nodes[ia].value;
        if alpha_t.shape() != [channels] {
            return Err(Error::shape("prelu", &shape, alpha_t.shape()));
        }
        let a = alpha_t.data();
        let data: Vec<T> = self.nodes[ix]
            .value
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v > T::zero() {
                    v
                } else {
                    a[channel_of(&shape, i)] * v
                }
            })
            .collect();
        Ok(self.push(
            Op::PRelu { x: ix, alpha: ia },
            Tensor::from_parts(shape, data),
            &[ix, ia],
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.index(a)?;
        let value = self.nodes[ia].value.reshape(shape)?;
        Ok(self.push(Op::Reshape(ia), value, &[ia]))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let value = Tensor::scalar(self.nodes[ia].value.sum());
        Ok(self.push(Op::Sum(ia), value, &[ia]))
    }

    /// Squared L2 norm of all elements, as a scalar.
    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let s = self.nodes[ia]
            .value
            .data()
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v);
        Ok(self.push(Op::SumSquares(ia), Tensor::scalar(s), &[ia]))
    }

    /// Multiplies by a constant mask of the same element count.
    pub fn mul_mask(&mut self, a: Var, mask: Arc<[T]>) -> Result<Var> {
        let ia = self.index(a)?;
        let x = &self.nodes[ia].value;
        if mask.len() != x.numel() {
            return Err(Error::shape("mul_mask", x.shape(), &[mask.len()]));
        }
        let data: Vec<T> = x
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(&v, &m)| v * m)
            .collect();
        let value = Tensor::from_parts(x.shape().to_vec(), data);
        Ok(self.push(Op::MulMask(ia, mask), value, &[ia]))
    }

    /// Mean categorical cross-entropy of softmax(`logits: [B, K]`) against
    /// integer labels, using max-subtraction for stability.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let il = self.index(logits)?;
        let x = &self.nodes[il].value;
        let &[batch, classes] = x.shape() else {
            return Err(Error::dim(
                "cross_entropy",
                format!("logits must be [B, K], got {:?}", x.shape()),
            ));
        };
        if labels.len() != batch {
            return Err(Error::shape("cross_entropy", x.shape(), &[labels.len()]));
        }
        let (loss, probs) = crate::metrics::softmax_cross_entropy_raw(x.data(), classes, labels)?;
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits: il,
                labels: labels.to_vec(),
                probs,
            },
            Tensor::scalar(loss),
            &[il],
        ))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        let ip = self.index(pred)?;
        let p = &self.nodes[ip].value;
        if p.shape() != target.shape() {
            return Err(Error::shape("mse", p.shape(), target.shape()));
        }
        let n = T::from_usize(p.numel()).expect("element count fits");
        let s = p
            .data()
            .iter()
            .zip(target.data())
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
        Ok(self.push(
            Op::Mse {
                pred: ip,
                target: target.clone(),
            },
            Tensor::scalar(s / n),
            &[ip],
        ))
    }

    /// Reverse sweep from a single-element `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out = self.index(output)?;
        if self.nodes[out].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar output, got shape {:?}",
                self.nodes[out].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out] = Some(vec![T::one()]);

        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(&node.op, &node.value, &g, &mut grads);
            }
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
            leaves: self
                .nodes
                .iter()
                .map(|n| matches!(n.op, Op::Leaf))
                .collect(),
        })
    }

    fn wants(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn val(&self, i: usize) -> &[T] {
        self.nodes[i].value.data()
    }

    fn propagate(&self, op: &Op<T>, value: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let mut send = |i: usize, contrib: Vec<T>| {
            if !self.wants(i) {
                return;
            }
            match &mut grads[i] {
                slot @ None => *slot = Some(contrib),
                Some(acc) => acc.iter_mut().zip(contrib).for_each(|(a, c)| *a = *a + c),
            }
        };
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                if self.wants(*a) {
                    send(*a, g.iter().zip(vb).map(|(&gv, &y)| gv * y).collect());
                }
                if self.wants(*b) {
                    send(*b, g.iter().zip(va).map(|(&gv, &x)| gv * x).collect());
                }
            }
            Op::Scale(a, s) => send(*a, g.iter().map(|&v| v * *s).collect()),
            Op::Unary(a, f) => {
                let contrib = match f {
                    Unary::Sigmoid => g
                        .iter()
                        .zip(value.data())
                        .map(|(&gv, &y)| gv * y * (T::one() - y))
                        .collect(),
                    f => g
                        .iter()
                        .zip(self.val(*a))
                        .map(|(&gv, &x)| gv * f.derivative(x))
                        .collect(),
                };
                send(*a, contrib);
            }
            Op::MatMul(a, b) => {
                let sa = self.nodes[*a].value.shape();
                let (m, k) = (sa[0], sa[1]);
                let n = self.nodes[*b].value.shape()[1];
                if self.wants(*a) {
                    let mut ga = vec![T::zero(); m * k];
                    T::gemm(
                        m,
                        n,
                        k,
                        g,
                        Layout::Normal,
                        self.val(*b),
                        Layout::Transposed,
                        &mut ga,
                        false,
                    );
                    send(*a, ga);
                }
                if self.wants(*b) {
                    let mut gb = vec![T::zero(); k * n];
                    T::gemm(
                        k,
                        m,
                        n,
                        self.val(*a),
                        Layout::Transposed,
                        g,
                        Layout::Normal,
                        &mut gb,
                        false,
                    );
                    send(*b, gb);
                }
            }
            Op::Transpose(a) => {
                let s = self.nodes[*a].value.shape();
                let (m, n) = (s[0], s[1]);
                // g is [n, m]; element (r, c) of the input gets g[c, r].
                send(*a, (0..m * n).map(|i| g[(i % n) * m + i / n]).collect());
            }
            Op::Linear { x, w, b } => {
                let xs = self.nodes[*x].value.shape();
                let (rows, fan_in) = (xs[0], xs[1]);
                let fan_out = self.nodes[*w].value.shape()[0];
                if self.wants(*x) {
                    let mut gx = vec![T::zero(); rows * fan_in];
                    T::gemm(
                        rows,
                        fan_out,
                        fan_in,
                        g,
                        Layout::Normal,
                        self.val(*w),
                        Layout::Normal,
                        &mut gx,
                        false,
                    );
                    send(*x, gx);
                }
                if self.wants(*w) {
                    let mut gw = vec![T::zero(); fan_out * fan_in];
                    T::gemm(
                        fan_out,
                        rows,
                        fan_in,
                        g,
                        Layout::Transposed,
                        self.val(*x),
                        Layout::Normal,
                        &mut gw,
                        false,
                    );
                    send(*w, gw);
                }
                if let Some(b) = b {
                    let mut gb = vec![T::zero(); fan_out];
                    for row in g.chunks_exact(fan_out) {
                        gb.iter_mut().zip(row).for_each(|(a, &v)| *a = *a + v);
                    }
                    send(*b, gb);
                }
            }
            Op::AddRowBias(x, b) => {
                let n = self.nodes[*b].value.numel();
                send(*x, g.to_vec());
                let mut gb = vec![T::zero(); n];
                for row in g.chunks_exact(n) {
                    gb.iter_mut().zip(row).for_each(|(a, &v)| *a = *a + v);
                }
                send(*b, gb);
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                batch,
            } => {
                if self.wants(*input) {
                    send(
                        *input,
                        conv2d_grad_input(g, *batch, self.val(*kernel), geom),
                    );
                }
                if self.wants(*kernel) {
                    send(
                        *kernel,
                        conv2d_grad_kernel(g, self.val(*input), *batch, geom),
                    );
                }
                if let Some(b) = bias {
                    send(*b, conv2d_grad_bias(g, *batch, geom));
                }
            }
            Op::Swish { x, beta } => {
                let b = self.val(*beta)[0];
                let xs = self.val(*x);
                let mut gx = Vec::with_capacity(xs.len());
                let mut gbeta = T::zero();
                for (&gv, &v) in g.iter().zip(xs) {
                    let s = sigmoid_scalar(b * v);
                    let ds = s * (T::one() - s);
                    gx.push(gv * (s + b * v * ds));
                    gbeta = gbeta + gv * v * v * ds;
                }
                send(*x, gx);
                send(*beta, vec![gbeta]);
            }
            Op::PRelu { x, alpha } => {
                let shape = self.nodes[*x].value.shape();
                let a = self.val(*alpha);
                let xs = self.val(*x);
                let mut gx = Vec::with_capacity(xs.len());
                let mut ga = vec![T::zero(); a.len()];
                for (i, (&gv, &v)) in g.iter().zip(xs).enumerate() {
                    if v > T::zero() {
                        gx.push(gv);
                    } else {
                        let c = channel_of(shape, i);
                        gx.push(gv * a[c]);
                        ga[c] = ga[c] + gv * v;
                    }
                }
                send(*x, gx);
                send(*alpha, ga);
            }
            Op::Reshape(a) => send(*a, g.to_vec()),
            Op::Sum(a) => send(*a, vec![g[0]; self.nodes[*a].value.numel()]),
            Op::SumSquares(a) => {
                let two = T::one() + T::one();
                send(*a, self.val(*a).iter().map(|&v| two * v * g[0]).collect());
            }
            Op::MulMask(a, mask) => {
                send(
                    *a,
                    g.iter().zip(mask.iter()).map(|(&gv, &m)| gv * m).collect(),
                );
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let classes = self.nodes[*logits].value.shape()[1];
                let scale = g[0] / T::from_usize(labels.len()).expect("batch fits");
                let mut gl: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (row, &y) in labels.iter().enumerate() {
                    gl[row * classes + y] = gl[row * classes + y] - scale;
                }
                send(*logits, gl);
            }
            Op::Mse { pred, target } => {
                let n = T::from_usize(target.numel()).expect("element count fits");
                let k = (T::one() + T::one()) * g[0] / n;
                send(
                    *pred,
                    self.val(*pred)
                        .iter()
                        .zip(target.data())
                        .map(|(&p, &t)| k * (p - t))
                        .collect(),
                );
            }
        }
    }
}

/// Result of [`Tape::backward`]: the gradient of every leaf.
pub struct Gradients<T> {
    tape: u32,
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
    leaves: Vec<bool>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of the output with respect to `v`; exactly zero when `v`
    /// does not influence the output.
    pub fn wrt(&self, v: Var) -> Result<Tensor<T>> {
        if v.tape != self.tape || v.index >= self.grads.len() {
            return Err(Error::Contract(format!(
                "value {v:?} was not recorded on the differentiated tape"
            )));
        }
        if !self.leaves[v.index] {
            return Err(Error::Contract(format!(
                "gradients are kept only for leaves, {v:?} is an intermediate value"
            )));
        }
        let shape = &self.shapes[v.index];
        Ok(match &self.grads[v.index] {
            Some(g) => Tensor::from_parts(shape.clone(), g.clone()),
            None => Tensor::zeros(shape),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, max_relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-2.0..2.0))
    }

    /// Checks d(Σ r ⊙ f(x))/dx from the tape against central differences.
    fn certify(
        x: &Tensor<f64>,
        f: impl Fn(&mut Tape<f64>, Var) -> Result<Var>,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let probe_shape = {
            let mut t = Tape::new();
            let v = t.constant(x.clone());
            let y = f(&mut t, v).unwrap();
            t.shape(y).unwrap().to_vec()
        };
        let r = random(&probe_shape, rng);
        let scalar = |t: &mut Tape<f64>, v: Var| -> Result<Var> {
            let y = f(t, v)?;
            let rv = t.constant(r.clone());
            let p = t.mul(y, rv)?;
            t.sum(p)
        };
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let out = scalar(&mut tape, xv).unwrap();
        let analytic = tape.backward(out).unwrap().wrt(xv).unwrap();
        let numeric = finite_diff_grad(
            |z| {
                let mut t = Tape::new();
                let v = t.constant(z.clone());
                let o = scalar(&mut t, v)?;
                t.value(o)?.item()
            },
            x,
            1e-5,
        )
        .unwrap();
        max_relative_error(&analytic, &numeric).unwrap()
    }

    #[test]
    fn square_and_sigmoid_examples() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        assert_eq!(t.backward(y).unwrap().wrt(x).unwrap().item().unwrap(), 6.0);

        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::scalar(0.0));
        let y = t.sigmoid(x).unwrap();
        assert_eq!(t.backward(y).unwrap().wrt(x).unwrap().item().unwrap(), 0.25);
    }

    #[test]
    fn unused_leaf_gets_exact_zero() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::scalar(2.0));
        let unused = t.leaf(Tensor::full(&[3], 5.0));
        let y = t.scale(x, 4.0).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(unused).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn contract_errors() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::full(&[2], 1.0));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
        let mut other = Tape::<f64>::new();
        let foreign = other.leaf(Tensor::scalar(1.0));
        assert!(matches!(t.backward(foreign), Err(Error::Contract(_))));
        assert!(t.sigmoid(foreign).is_err());

        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::scalar(1.0));
        let mid = t.scale(x, 2.0).unwrap();
        let y = t.mul(mid, mid).unwrap();
        let g = t.backward(y).unwrap();
        assert!(matches!(g.wrt(mid), Err(Error::Contract(_))));
        assert_eq!(g.wrt(x).unwrap().item().unwrap(), 8.0);
    }

    #[test]
    fn leaf_used_many_times_sums_contributions() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::scalar(1.5));
        let a = t.add(x, x).unwrap();
        let b = t.add(a, x).unwrap();
        assert_eq!(t.backward(b).unwrap().wrt(x).unwrap().item().unwrap(), 3.0);
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for _ in 0..3 {
            let x = random(&[3, 4], &mut rng);
            let other = random(&[3, 4], &mut rng);
            let w = random(&[5, 4], &mut rng);
            let bvec = random(&[5], &mut rng);
            let rvec = random(&[4], &mut rng);
            let sq = random(&[4, 3], &mut rng);

            worst = worst.max(certify(
                &x,
                |t, v| {
                    let o = t.constant(other.clone());
                    t.add(v, o)
                },
                &mut rng,
            ));
            worst = worst.max(certify(
                &x,
                |t, v| {
                    let o = t.constant(other.clone());
                    t.sub(o, v)
                },
                &mut rng,
            ));
            worst = worst.max(certify(&x, |t, v| t.mul(v, v), &mut rng));
            worst = worst.max(certify(&x, |t, v| t.scale(v, -1.7), &mut rng));
            for f in [
                Unary::Sigmoid,
                Unary::Elu { alpha: 1.0 },
                Unary::Selu,
                Unary::Softplus,
                Unary::Sil,
            ] {
                worst = worst.max(certify(&x, |t, v| t.unary(v, f), &mut rng));
            }
            worst = worst.max(certify(
                &x,
                |t, v| {
                    let m = t.constant(sq.clone());
                    t.matmul(v, m)
                },
                &mut rng,
            ));
            worst = worst.max(certify(
                &sq,
                |t, v| {
                    let m = t.constant(x.clone());
                    t.matmul(m, v)
                },
                &mut rng,
            ));
            worst = worst.max(certify(&x, |t, v| t.transpose(v), &mut rng));
            worst = worst.max(certify(
                &x,
                |t, v| {
                    let wv = t.constant(w.clone());
                    let bv = t.constant(bvec.clone());
                    t.linear(v, wv, Some(bv))
                },
                &mut rng,
            ));
            worst = worst.max(certify(
                &w,
                |t, v| {
                    let xv = t.constant(x.clone());
                    t.linear(xv, v, None)
                },
                &mut rng,
            ));
            worst = worst.max(certify(
                &bvec,
                |t, v| {
                    let xv = t.constant(x.clone());
                    let wv = t.constant(w.clone());
                    t.linear(xv, wv, Some(v))
                },
                &mut rng,
            ));
            worst = worst.max(certify(
                &rvec,
                |t, v| {
                    let xv = t.constant(x.clone());
                    t.add_row_bias(xv, v)
                },
                &mut rng,
            ));
            worst = worst.max(certify(
                &x,
                |t, v| {
                    let bv = t.constant(Tensor::scalar(1.3));
                    t.swish(v, bv)
                },
                &mut rng,
            ));
            worst = worst.max(certify(
                &Tensor::scalar(0.7),
                |t, v| {
                    let xv = t.constant(x.clone());
                    t.swish(xv, v)
                },
                &mut rng,
            ));
            worst = worst.max(certify(
                &x,
                |t, v| {
                    let a = t.constant(Tensor::full(&[4], 0.25));
                    t.prelu(v, a)
                },
                &mut rng,
            ));
            worst = worst.max(certify(
                &rvec,
                |t, v| {
                    let xv = t.constant(x.clone());
                    t.prelu(xv, v)
                },
                &mut rng,
            ));
            worst = worst.max(certify(&x, |t, v| t.reshape(v, &[2, 6]), &mut rng));
            worst = worst.max(certify(&x, |t, v| t.sum_squares(v), &mut rng));
            worst = worst.max(certify(
                &x,
                |t, v| {
                    let m: Arc<[f64]> = (0..12).map(|i| (i % 3) as f64).collect();
                    t.mul_mask(v, m)
                },
                &mut rng,
            ));
            worst = worst.max(certify(
                &x,
                |t, v| t.softmax_cross_entropy(v, &[0, 3, 1]),
                &mut rng,
            ));
            worst = worst.max(certify(&x, |t, v| t.mse(v, &other), &mut rng));
        }
        assert!(worst < 1e-6, "max relative error {worst}");
    }

    #[test]
    fn conv_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&[2, 2, 6, 5], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        for &(stride, dil, pad) in &[
            (1, 1, Padding::Same),
            (2, 1, Padding::Same),
            (1, 2, Padding::Valid),
        ] {
            let e = certify(
                &x,
                |t, v| {
                    let kv = t.constant(k.clone());
                    let bv = t.constant(b.clone());
                    t.conv2d(v, kv, Some(bv), stride, dil, pad)
                },
                &mut rng,
            );
            assert!(e < 1e-6, "input grad {e}");
            let e = certify(
                &k,
                |t, v| {
                    let xv = t.constant(x.clone());
                    t.conv2d(xv, v, None, stride, dil, pad)
                },
                &mut rng,
            );
            assert!(e < 1e-6, "kernel grad {e}");
            let e = certify(
                &b,
                |t, v| {
                    let xv = t.constant(x.clone());
                    let kv = t.constant(k.clone());
                    t.conv2d(xv, kv, Some(v), stride, dil, pad)
                },
                &mut rng,
            );
            assert!(e < 1e-6, "bias grad {e}");
        }
    }

    #[test]
    fn prelu_channel_axis_for_feature_maps() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::full(&[1, 2, 2, 2], -1.0));
        let a = t.leaf(Tensor::from_f64(&[2], &[0.1, 0.5]).unwrap());
        let y = t.prelu(x, a).unwrap();
        assert_eq!(
            t.value(y).unwrap().data(),
            &[-0.1, -0.1, -0.1, -0.1, -0.5, -0.5, -0.5, -0.5]
        );
    }
}
