//! WIGT binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 4            | magic `WIGT`                              |
//! | 1            | format version (currently 1)              |
//! | 1            | rank `r`                                  |
//! | 4·r          | extents, `u32` each                       |
//! | 1            | precision flag: 0 = f32, 1 = f64          |
//! | n·width      | elements, row-major IEEE-754              |

use std::io::{Read, Write};

use super::{Element, Precision, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"WIGT";
pub const VERSION: u8 = 1;

pub fn encode<T: Element>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let rank = u8::try_from(t.rank())
        .map_err(|_| Error::Contract(format!("rank {} exceeds 255", t.rank())))?;
    let precision = T::PRECISION;
    let mut out = Vec::with_capacity(7 + 4 * t.rank() + t.numel() * precision.byte_width());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(rank);
    for &d in t.shape() {
        let d = u32::try_from(d)
            .map_err(|_| Error::Contract(format!("extent {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.push(precision.flag());
    for &v in t.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn write<T: Element, W: Write>(w: &mut W, t: &Tensor<T>) -> Result<()> {
    w.write_all(&encode(t)?)?;
    Ok(())
}

/// Tracks the absolute stream position so format errors can name the byte.
struct Cursor<'a, R> {
    inner: &'a mut R,
    offset: u64,
}

impl<R: Read> Cursor<'_, R> {
    fn take(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(self.offset, format!("truncated while reading {what}"))
            } else {
                Error::Io(e)
            }
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn byte(&mut self, what: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.take(&mut b, what)?;
        Ok(b[0])
    }
}

/// Reads one tensor, converting from the stored precision to `T`.
/// `offset` is the stream position of the record, used in error messages.
pub fn read_at<T: Element, R: Read>(r: &mut R, offset: u64) -> Result<Tensor<T>> {
    let mut cur = Cursor { inner: r, offset };
    let mut magic = [0u8; 4];
    cur.take(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::format(offset, format!("bad magic {magic:?}")));
    }
    let version = cur.byte("version")?;
    if version != VERSION {
        return Err(Error::format(
            offset + 4,
            format!("unsupported version {version}"),
        ));
    }
    let rank = cur.byte("rank")? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        cur.take(&mut b, "extent")?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let flag_at = cur.offset;
    let flag = cur.byte("precision flag")?;
    let precision = Precision::from_flag(flag)
        .ok_or_else(|| Error::format(flag_at, format!("unknown precision flag {flag}")))?;
    let n: usize = shape.iter().product();
    let width = precision.byte_width();
    let mut raw = vec![0u8; n * width];
    cur.take(&mut raw, "elements")?;
    let data: Vec<T> = match precision {
        Precision::F32 => raw
            .chunks_exact(4)
            .map(|c| T::from_f64_lossy(f32::read_le(c) as f64))
            .collect(),
        Precision::F64 => raw
            .chunks_exact(8)
            .map(|c| T::from_f64_lossy(f64::read_le(c)))
            .collect(),
    };
    Tensor::new(&shape, data).map_err(|e| Error::format(offset, e.to_string()))
}

pub fn read<T: Element, R: Read>(r: &mut R) -> Result<Tensor<T>> {
    read_at(r, 0)
}

pub fn decode<T: Element>(bytes: &[u8]) -> Result<Tensor<T>> {
    let mut slice = bytes;
    let t = read(&mut slice)?;
    if !slice.is_empty() {
        return Err(Error::format(
            (bytes.len() - slice.len()) as u64,
            "trailing bytes after tensor",
        ));
    }
    Ok(t)
}

/// Byte length of the record `encode` produces for a tensor of this shape.
pub fn encoded_len(shape: &[usize], precision: Precision) -> usize {
    7 + 4 * shape.len() + shape.iter().product::<usize>() * precision.byte_width()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::<f32>::from_f64(&[2, 1], &[1.0, -2.0]).unwrap();
        let bytes = encode(&t).unwrap();
        assert_eq!(&bytes[..4], b"WIGT");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 2);
        assert_eq!(&bytes[6..10], &2u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &1u32.to_le_bytes());
        assert_eq!(bytes[14], 0);
        assert_eq!(&bytes[15..19], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), encoded_len(&[2, 1], Precision::F32));
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::<f64>::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap();
        let bytes = encode(&t).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode::<f64>(&bad).is_err());
        let err = decode::<f64>(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        let mut bad = bytes.clone();
        bad[10] = 7;
        assert!(decode::<f64>(&bad).is_err());
        let mut nan = bytes.clone();
        nan[11..19].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode::<f64>(&nan).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_preserves_bits(
            shape in proptest::collection::vec(1usize..5, 0..4),
            seed in any::<u64>(),
        ) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n)
                .map(|i| ((seed.wrapping_add(i as u64) % 10_000) as f64 - 5_000.0) / 7.0)
                .collect();
            let t = Tensor::<f64>::new(&shape, data).unwrap();
            let back = decode::<f64>(&encode(&t).unwrap()).unwrap();
            prop_assert_eq!(&back, &t);
            let t32 = t.cast::<f32>();
            prop_assert_eq!(decode::<f32>(&encode(&t32).unwrap()).unwrap(), t32);
        }
    }
}
