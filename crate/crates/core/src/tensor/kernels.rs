//! Matrix product and 2-D convolution kernels.
//!
//! Convolution follows the cross-correlation convention (the kernel is not
//! flipped) and is lowered to a gemm through an im2col buffer. The backward
//! kernels used by the tape live here as well so that forward and backward
//! share one geometry.

use super::{Element, Layout, Tensor};
use crate::error::{Error, Result};

/// Matrix product of `a: [m × k]` and `b: [k × n]`.
pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![T::zero(); m * n];
    T::gemm(
        m,
        k,
        n,
        a.data(),
        Layout::Normal,
        b.data(),
        Layout::Normal,
        &mut out,
        false,
    );
    Ok(Tensor::from_parts(vec![m, n], out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Zero padding so that the output extent is `ceil(input / stride)`.
    /// An odd total pad puts the extra row/column at the bottom/right.
    Same,
    Valid,
}

impl std::str::FromStr for Padding {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "same" => Ok(Padding::Same),
            "valid" => Ok(Padding::Valid),
            other => Err(format!("unknown padding `{other}`")),
        }
    }
}

impl std::fmt::Display for Padding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Padding::Same => "same",
            Padding::Valid => "valid",
        })
    }
}

/// Resolved shape arithmetic for one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

fn axis_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    dilation: usize,
    padding: Padding,
) -> Option<(usize, usize)> {
    let effective = dilation * (kernel - 1) + 1;
    match padding {
        Padding::Valid => {
            if effective > input {
                None
            } else {
                Some(((input - effective) / stride + 1, 0))
            }
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + effective).saturating_sub(input);
            Some((out, total / 2))
        }
    }
}

impl ConvGeometry {
    /// `input` is `[C_in, H, W]`, `kernel` is `[C_out, C_in, kH, kW]`.
    pub fn new(
        input: &[usize],
        kernel: &[usize],
        stride: usize,
        dilation: usize,
        padding: Padding,
    ) -> Result<Self> {
        if input.len() != 3 || kernel.len() != 4 {
            return Err(Error::shape("conv2d", input, kernel));
        }
        if stride == 0 || dilation == 0 {
            return Err(Error::dim(
                "conv2d",
                format!("stride ({stride}) and dilation ({dilation}) must be at least 1"),
            ));
        }
        if input[0] != kernel[1] {
            return Err(Error::dim(
                "conv2d",
                format!(
                    "input has {} channels but kernel {kernel:?} expects {}",
                    input[0], kernel[1]
                ),
            ));
        }
        let too_big = || {
            Error::dim(
                "conv2d",
                format!(
                    "kernel {kernel:?} with dilation {dilation} is larger than padded input {input:?}"
                ),
            )
        };
        let (out_h, pad_top) =
            axis_extent(input[1], kernel[2], stride, dilation, padding).ok_or_else(too_big)?;
        let (out_w, pad_left) =
            axis_extent(input[2], kernel[3], stride, dilation, padding).ok_or_else(too_big)?;
        Ok(ConvGeometry {
            in_channels: input[0],
            in_h: input[1],
            in_w: input[2],
            out_channels: kernel[0],
            kernel_h: kernel[2],
            kernel_w: kernel[3],
            stride,
            dilation,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.out_h * self.out_w
    }

    pub fn kernel_len(&self) -> usize {
        self.out_channels * self.patch_len()
    }

    /// Rows of the im2col matrix: `C_in · kH · kW`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// True when the im2col matrix is the input itself.
    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1
            && self.kernel_w == 1
            && self.stride == 1
            && self.pad_top == 0
            && self.pad_left == 0
    }

    /// Range of output columns whose tap at offset `off` lands inside the row.
    fn valid_columns(&self, off: isize) -> (usize, usize) {
        let s = self.stride as isize;
        let w = self.in_w as isize;
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        let hi = if w - 1 - off < 0 {
            0
        } else {
            ((w - 1 - off) / s + 1).min(self.out_w as isize)
        };
        let lo = lo.min(self.out_w as isize);
        (lo as usize, hi.max(lo) as usize)
    }
}

fn im2col<T: Element>(input: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let (h, w) = (g.in_h, g.in_w);
    let opix = g.out_pixels();
    for c in 0..g.in_channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst = &mut cols[row * opix..(row + 1) * opix];
                let col_off = (kj * g.dilation) as isize - g.pad_left as isize;
                let (lo, hi) = g.valid_columns(col_off);
                for oy in 0..g.out_h {
                    let drow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    let iy = (oy * g.stride + ki * g.dilation) as isize - g.pad_top as isize;
                    if iy < 0 || iy >= h as isize || lo >= hi {
                        drow.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    drow[..lo].fill(T::zero());
                    drow[hi..].fill(T::zero());
                    let start = (lo as isize * g.stride as isize + col_off) as usize;
                    if g.stride == 1 {
                        drow[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for (k, d) in drow[lo..hi].iter_mut().enumerate() {
                            *d = src[start + k * g.stride];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Element>(cols: &[T], g: &ConvGeometry, out: &mut [T]) {
    let (h, w) = (g.in_h, g.in_w);
    let opix = g.out_pixels();
    for c in 0..g.in_channels {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &cols[row * opix..(row + 1) * opix];
                let col_off = (kj * g.dilation) as isize - g.pad_left as isize;
                let (lo, hi) = g.valid_columns(col_off);
                if lo >= hi {
                    continue;
                }
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki * g.dilation) as isize - g.pad_top as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let srow = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    let drow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let start = (lo as isize * g.stride as isize + col_off) as usize;
                    if g.stride == 1 {
                        for (d, &v) in drow[start..start + (hi - lo)].iter_mut().zip(&srow[lo..hi])
                        {
                            *d = *d + v;
                        }
                    } else {
                        for (k, &v) in srow[lo..hi].iter().enumerate() {
                            drow[start + k * g.stride] = drow[start + k * g.stride] + v;
                        }
                    }
                }
            }
        }
    }
}

/// Batched forward pass over `batch` images stored back to back.
pub(crate) fn conv2d_forward<T: Element>(
    input: &[T],
    batch: usize,
    kernel: &[T],
    bias: Option<&[T]>,
    g: &ConvGeometry,
) -> Vec<T> {
    let (ilen, olen, opix) = (g.input_len(), g.output_len(), g.out_pixels());
    let mut out = vec![T::zero(); batch * olen];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.patch_len() * opix]
    };
    for b in 0..batch {
        let x = &input[b * ilen..(b + 1) * ilen];
        let y = &mut out[b * olen..(b + 1) * olen];
        let lowered: &[T] = if g.is_pointwise() {
            x
        } else {
            im2col(x, g, &mut cols);
            &cols
        };
        T::gemm(
            g.out_channels,
            g.patch_len(),
            opix,
            kernel,
            Layout::Normal,
            lowered,
            Layout::Normal,
            y,
            false,
        );
        if let Some(bias) = bias {
            for (row, &bv) in y.chunks_exact_mut(opix).zip(bias) {
                row.iter_mut().for_each(|v| *v = *v + bv);
            }
        }
    }
    out
}

/// Gradient with respect to the input.
pub(crate) fn conv2d_grad_input<T: Element>(
    grad_out: &[T],
    batch: usize,
    kernel: &[T],
    g: &ConvGeometry,
) -> Vec<T> {
    let (ilen, olen, opix) = (g.input_len(), g.output_len(), g.out_pixels());
    let mut grad_in = vec![T::zero(); batch * ilen];
    let mut dcols = vec![T::zero(); g.patch_len() * opix];
    for b in 0..batch {
        let dy = &grad_out[b * olen..(b + 1) * olen];
        let dx = &mut grad_in[b * ilen..(b + 1) * ilen];
        if g.is_pointwise() {
            T::gemm(
                g.patch_len(),
                g.out_channels,
                opix,
                kernel,
                Layout::Transposed,
                dy,
                Layout::Normal,
                dx,
                false,
            );
        } else {
            T::gemm(
                g.patch_len(),
                g.out_channels,
                opix,
                kernel,
                Layout::Transposed,
                dy,
                Layout::Normal,
                &mut dcols,
                false,
            );
            col2im(&dcols, g, dx);
        }
    }
    grad_in
}

/// Gradient with respect to the kernel, accumulated over the batch in
/// ascending image order.
pub(crate) fn conv2d_grad_kernel<T: Element>(
    grad_out: &[T],
    input: &[T],
    batch: usize,
    g: &ConvGeometry,
) -> Vec<T> {
    let (ilen, olen, opix) = (g.input_len(), g.output_len(), g.out_pixels());
    let mut grad_k = vec![T::zero(); g.kernel_len()];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.patch_len() * opix]
    };
    for b in 0..batch {
        let x = &input[b * ilen..(b + 1) * ilen];
        let dy = &grad_out[b * olen..(b + 1) * olen];
        let lowered: &[T] = if g.is_pointwise() {
            x
        } else {
            im2col(x, g, &mut cols);
            &cols
        };
        T::gemm(
            g.out_channels,
            opix,
            g.patch_len(),
            dy,
            Layout::Normal,
            lowered,
            Layout::Transposed,
            &mut grad_k,
            b > 0,
        );
    }
    grad_k
}

pub(crate) fn conv2d_grad_bias<T: Element>(
    grad_out: &[T],
    batch: usize,
    g: &ConvGeometry,
) -> Vec<T> {
    let (olen, opix) = (g.output_len(), g.out_pixels());
    let mut grad_b = vec![T::zero(); g.out_channels];
    for b in 0..batch {
        let dy = &grad_out[b * olen..(b + 1) * olen];
        for (gb, row) in grad_b.iter_mut().zip(dy.chunks_exact(opix)) {
            *gb = row.iter().fold(*gb, |acc, &v| acc + v);
        }
    }
    grad_b
}

/// Splits a rank-3 `[C, H, W]` or rank-4 `[B, C, H, W]` shape into
/// `(batch, [C, H, W])`.
pub(crate) fn split_batch(shape: &[usize]) -> Result<(usize, [usize; 3], bool)> {
    match *shape {
        [c, h, w] => Ok((1, [c, h, w], false)),
        [b, c, h, w] => Ok((b, [c, h, w], true)),
        _ => Err(Error::dim(
            "conv2d",
            format!("input must be [C,H,W] or [B,C,H,W], got {shape:?}"),
        )),
    }
}

/// 2-D cross-correlation of a `[C_in, H, W]` (or batched `[B, C_in, H, W]`)
/// input with a `[C_out, C_in, kH, kW]` kernel plus an optional per-channel
/// bias.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    dilation: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let (batch, chw, batched) = split_batch(input.shape())?;
    let g = ConvGeometry::new(&chw, kernel.shape(), stride, dilation, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.out_channels] {
            return Err(Error::shape("conv2d bias", b.shape(), &[g.out_channels]));
        }
    }
    let out = conv2d_forward(
        input.data(),
        batch,
        kernel.data(),
        bias.map(|b| b.data()),
        &g,
    );
    let mut shape = vec![g.out_channels, g.out_h, g.out_w];
    if batched {
        shape.insert(0, batch);
    }
    Ok(Tensor::from_parts(shape, out))
}
