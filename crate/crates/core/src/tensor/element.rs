use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Storage precision of a tensor, as recorded in the WIGT container.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn flag(self) -> u8 {
        match self {
            Precision::F32 => 0,
            Precision::F64 => 1,
        }
    }

    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(Precision::F32),
            1 => Some(Precision::F64),
            _ => None,
        }
    }

    pub fn byte_width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
        }
    }
}

/// Row/column layout of a gemm operand as stored in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Stored as the logical `rows × cols` matrix, row-major.
    Normal,
    /// Stored as the transpose (`cols × rows`, row-major) of the logical operand.
    Transposed,
}

impl Layout {
    fn strides(self, rows: usize, cols: usize) -> (usize, usize) {
        match self {
            Layout::Normal => (cols, 1),
            Layout::Transposed => (1, rows),
        }
    }
}

/// Real scalar type a [`Tensor`](super::Tensor) can hold.
///
/// `f64` routes every matrix product through the fixed-order reference
/// kernel, so its results are bit-reproducible and suitable for gradient
/// certification. `f32` uses a blocked SIMD gemm: deterministic for a given
/// build and machine, but with a different summation order, and therefore
/// never used for certification.
pub trait Element:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    const PRECISION: Precision;

    /// `c ← a·b` (or `c ← c + a·b` when `accumulate`), with `a` logically
    /// `m × k` and `b` logically `k × n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_layout: Layout,
        b: &[Self],
        b_layout: Layout,
        c: &mut [Self],
        accumulate: bool,
    );

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every float element")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float element converts to f64")
    }
}

/// Fixed-order matrix product: every output element is accumulated from
/// zero in ascending inner index, so results do not depend on blocking.
#[allow(clippy::too_many_arguments)]
pub fn reference_gemm<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_layout: Layout,
    b: &[T],
    b_layout: Layout,
    c: &mut [T],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (a_rs, a_cs) = a_layout.strides(m, k);
    if b_layout == Layout::Normal {
        // i-p-j order keeps the per-element summation order of the dot
        // product while walking rows of `b` contiguously.
        let mut acc = vec![T::zero(); n];
        for i in 0..m {
            acc.iter_mut().for_each(|v| *v = T::zero());
            for p in 0..k {
                let av = a[i * a_rs + p * a_cs];
                let brow = &b[p * n..(p + 1) * n];
                for (s, &bv) in acc.iter_mut().zip(brow) {
                    *s = *s + av * bv;
                }
            }
            let crow = &mut c[i * n..(i + 1) * n];
            if accumulate {
                crow.iter_mut().zip(&acc).for_each(|(cv, &s)| *cv = *cv + s);
            } else {
                crow.copy_from_slice(&acc);
            }
        }
    } else {
        let (b_rs, b_cs) = b_layout.strides(k, n);
        for i in 0..m {
            for j in 0..n {
                let mut s = T::zero();
                for p in 0..k {
                    s = s + a[i * a_rs + p * a_cs] * b[p * b_rs + j * b_cs];
                }
                let cv = &mut c[i * n + j];
                *cv = if accumulate { *cv + s } else { s };
            }
        }
    }
}

impl Element for f64 {
    const PRECISION: Precision = Precision::F64;

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_layout: Layout,
        b: &[Self],
        b_layout: Layout,
        c: &mut [Self],
        accumulate: bool,
    ) {
        reference_gemm(m, k, n, a, a_layout, b, b_layout, c, accumulate);
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Element for f32 {
    const PRECISION: Precision = Precision::F32;

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_layout: Layout,
        b: &[Self],
        b_layout: Layout,
        c: &mut [Self],
        accumulate: bool,
    ) {
        assert_eq!(a.len(), m * k, "gemm: lhs length");
        assert_eq!(b.len(), k * n, "gemm: rhs length");
        assert_eq!(c.len(), m * n, "gemm: output length");
        if m == 0 || n == 0 {
            return;
        }
        if k == 0 {
            if !accumulate {
                c.iter_mut().for_each(|v| *v = 0.0);
            }
            return;
        }
        let (a_rs, a_cs) = a_layout.strides(m, k);
        let (b_rs, b_cs) = b_layout.strides(k, n);
        let beta = if accumulate { 1.0 } else { 0.0 };
        // SAFETY: the asserts above guarantee every (row, col) addressed
        // through these strides lies inside the corresponding slice.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                a_rs as isize,
                a_cs as isize,
                b.as_ptr(),
                b_rs as isize,
                b_cs as isize,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}
