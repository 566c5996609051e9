//! The weighted sigmoid gate unit: `f(x) = x ⊙ σ(W_g x + b_g)`.
//!
//! Dense and convolutional forms, the closed-form Jacobian, and the
//! reparameterization that folds the preceding weighting matrix into the
//! gate.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::elementwise::sigmoid_scalar;
use crate::tensor::{conv2d, matmul, Element, Padding, Tensor};

/// Gate parameters of a dense unit over `N` features.
#[derive(Clone, Debug, PartialEq)]
pub struct WigDenseParams<T: Element> {
    gate_weight: Tensor<T>,
    gate_bias: Tensor<T>,
}

impl<T: Element> WigDenseParams<T> {
    pub fn new(gate_weight: Tensor<T>, gate_bias: Tensor<T>) -> Result<Self> {
        let ws = gate_weight.shape();
        if ws.len() != 2 || ws[0] != ws[1] {
            return Err(Error::dim(
                "wig_dense",
                format!("gate weight must be square, got {ws:?}"),
            ));
        }
        if gate_bias.shape() != [ws[0]] {
            return Err(Error::shape("wig_dense bias", gate_bias.shape(), &[ws[0]]));
        }
        Ok(WigDenseParams {
            gate_weight,
            gate_bias,
        })
    }

    pub fn features(&self) -> usize {
        self.gate_weight.shape()[0]
    }

    pub fn gate_weight(&self) -> &Tensor<T> {
        &self.gate_weight
    }

    pub fn gate_bias(&self) -> &Tensor<T> {
        &self.gate_bias
    }

    /// Gate pre-activation `W_g x + b_g` for a single vector.
    fn pre_activation(&self, x: &[T]) -> Vec<T> {
        let n = self.features();
        let w = self.gate_weight.data();
        let b = self.gate_bias.data();
        (0..n)
            .map(|i| {
                let dot = w[i * n..(i + 1) * n]
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &v)| acc + a * v);
                dot + b[i]
            })
            .collect()
    }
}

/// Gate parameters of a convolutional unit over `C` channels.
#[derive(Clone, Debug, PartialEq)]
pub struct WigConvParams<T: Element> {
    gate_kernel: Tensor<T>,
    gate_bias: Tensor<T>,
}

impl<T: Element> WigConvParams<T> {
    /// `gate_kernel: [C, C, k, k]` with odd `k`; `gate_bias: [C]` is
    /// broadcast over every pixel.
    pub fn new(gate_kernel: Tensor<T>, gate_bias: Tensor<T>) -> Result<Self> {
        let ks = gate_kernel.shape();
        if ks.len() != 4 || ks[0] != ks[1] || ks[2] != ks[3] || ks[2].is_multiple_of(2) {
            return Err(Error::dim(
                "wig_conv",
                format!("gate kernel must be [C, C, k, k] with odd k, got {ks:?}"),
            ));
        }
        if gate_bias.shape() != [ks[0]] {
            return Err(Error::shape("wig_conv bias", gate_bias.shape(), &[ks[0]]));
        }
        Ok(WigConvParams {
            gate_kernel,
            gate_bias,
        })
    }

    pub fn channels(&self) -> usize {
        self.gate_kernel.shape()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.gate_kernel.shape()[2]
    }

    pub fn gate_kernel(&self) -> &Tensor<T> {
        &self.gate_kernel
    }

    pub fn gate_bias(&self) -> &Tensor<T> {
        &self.gate_bias
    }
}

/// Dense gate unit on `x: [N]` or a batch `x: [B, N]` (parameters shared
/// across rows).
pub fn wig_dense_forward<T: Element>(x: &Tensor<T>, p: &WigDenseParams<T>) -> Result<Tensor<T>> {
    let n = p.features();
    let rows = match *x.shape() {
        [len] if len == n => 1,
        [b, len] if len == n => b,
        _ => return Err(Error::shape("wig_dense", x.shape(), p.gate_weight.shape())),
    };
    let mut out = Vec::with_capacity(rows * n);
    for row in x.data().chunks_exact(n) {
        let g = p.pre_activation(row);
        out.extend(row.iter().zip(&g).map(|(&v, &gv)| v * sigmoid_scalar(gv)));
    }
    Tensor::new(x.shape(), out)
}

/// `∂f_i/∂x_j = δ_ij σ(g_i) + x_i σ(g_i)(1 − σ(g_i)) (W_g)_ij` with
/// `g = W_g x + b_g`.
pub fn wig_dense_jacobian<T: Element>(x: &Tensor<T>, p: &WigDenseParams<T>) -> Result<Tensor<T>> {
    let n = p.features();
    if x.shape() != [n] {
        return Err(Error::shape("wig_dense_jacobian", x.shape(), &[n]));
    }
    let g = p.pre_activation(x.data());
    let w = p.gate_weight.data();
    let mut jac = vec![T::zero(); n * n];
    for i in 0..n {
        let s = sigmoid_scalar(g[i]);
        let row_scale = x.data()[i] * s * (T::one() - s);
        for j in 0..n {
            jac[i * n + j] = row_scale * w[i * n + j];
        }
        jac[i * n + i] = jac[i * n + i] + s;
    }
    Ok(Tensor::from_parts(vec![n, n], jac))
}

/// Convolutional gate unit `X ⊙ σ(w_g ∗ X + B_g)` on `[C, H, W]` or
/// `[B, C, H, W]`; the gate convolution is stride 1 with SAME padding so the
/// mask always matches `X`.
pub fn wig_conv_forward<T: Element>(x: &Tensor<T>, p: &WigConvParams<T>) -> Result<Tensor<T>> {
    let c = match *x.shape() {
        [c, _, _] | [_, c, _, _] => c,
        _ => {
            return Err(Error::dim(
                "wig_conv",
                format!("expected [C,H,W] or [B,C,H,W], got {:?}", x.shape()),
            ))
        }
    };
    if c != p.channels() {
        return Err(Error::dim(
            "wig_conv",
            format!("input has {c} channels, gate expects {}", p.channels()),
        ));
    }
    let pre = conv2d(x, &p.gate_kernel, Some(&p.gate_bias), 1, 1, Padding::Same)?;
    let data: Vec<T> = x
        .data()
        .iter()
        .zip(pre.data())
        .map(|(&v, &g)| v * sigmoid_scalar(g))
        .collect();
    Tensor::new(x.shape(), data)
}

/// Scalar unit `x·σ(wx + b)`.
pub fn scalar_wig(x: f64, w: f64, b: f64) -> f64 {
    x * sigmoid_scalar(w * x + b)
}

/// `d/dx [x·σ(wx + b)] = σ + w x σ (1 − σ)`.
pub fn scalar_wig_derivative(x: f64, w: f64, b: f64) -> f64 {
    let s = sigmoid_scalar(w * x + b);
    s + w * x * s * (1.0 - s)
}

/// Folds the weighting matrix `W` that precedes a bias-free gate unit into
/// the gate: returns `(W, V)` with `V = W_g·W`, so that
/// `f(Wx) = (Wx) ⊙ σ(Vx)`.
///
/// Rejects a nonzero gate bias: with biases the two forms are not
/// equivalent.
pub fn fuse_reparameterize<T: Element>(
    weight: &Tensor<T>,
    p: &WigDenseParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let n = p.features();
    if weight.shape() != [n, n] {
        return Err(Error::shape(
            "fuse_reparameterize",
            weight.shape(),
            p.gate_weight.shape(),
        ));
    }
    if p.gate_bias.data().iter().any(|&b| b != T::zero()) {
        return Err(Error::Contract(
            "fuse_reparameterize is only exact for a zero gate bias".into(),
        ));
    }
    let v = matmul(&p.gate_weight, weight)?;
    Ok((weight.clone(), v))
}

/// Weighting unit followed by the gate unit: `f(Wx)`.
pub fn unfused_forward<T: Element>(
    weight: &Tensor<T>,
    p: &WigDenseParams<T>,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    let n = p.features();
    let col = x.reshape(&[n, 1])?;
    let wx = matmul(weight, &col)?.reshape(&[n])?;
    wig_dense_forward(&wx, p)
}

/// Fused form `(Wx) ⊙ σ(Vx)`, both products taken from the raw input.
pub fn fused_forward<T: Element>(
    weight: &Tensor<T>,
    v: &Tensor<T>,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    let n = weight.shape()[0];
    let col = x.reshape(&[x.numel(), 1])?;
    let wx = matmul(weight, &col)?;
    let vx = matmul(v, &col)?;
    if vx.numel() != n {
        return Err(Error::shape("fused_forward", v.shape(), weight.shape()));
    }
    let data: Vec<T> = wx
        .data()
        .iter()
        .zip(vx.data())
        .map(|(&a, &g)| a * sigmoid_scalar(g))
        .collect();
    Tensor::new(&[n], data)
}

/// Output and gate mask of a taped gate unit.
#[derive(Clone, Copy, Debug)]
pub struct GatedOutput {
    pub output: Var,
    /// The `σ(·)` mask, kept for the sparsity penalty.
    pub gate: Var,
}

/// Taped dense gate unit on `x: [B, N]`.
pub fn wig_dense_on_tape<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    gate_weight: Var,
    gate_bias: Var,
) -> Result<GatedOutput> {
    let pre = tape.linear(x, gate_weight, Some(gate_bias))?;
    let gate = tape.sigmoid(pre)?;
    let output = tape.mul(x, gate)?;
    Ok(GatedOutput { output, gate })
}

/// Taped convolutional gate unit on `x: [B, C, H, W]`.
pub fn wig_conv_on_tape<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    gate_kernel: Var,
    gate_bias: Var,
) -> Result<GatedOutput> {
    let pre = tape.conv2d(x, gate_kernel, Some(gate_bias), 1, 1, Padding::Same)?;
    let gate = tape.sigmoid(pre)?;
    let output = tape.mul(x, gate)?;
    Ok(GatedOutput { output, gate })
}
